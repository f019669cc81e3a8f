#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "psidiff/rng.hpp"

namespace psidiff {

// Which cutoff conditions the unsampled-mass estimate when the clean entry
// displaces the smallest sampled value: the smallest retained zero-mean value
// (default) or the displaced value itself.
enum class DisplacedCutoff { retained, displaced };

struct CurriculumParams {
    int K = 0;
    int k = 0;
    double tau = 1e-3;
    double alpha_bar = 0.0;
    double sigma = 1.0;
    DisplacedCutoff cutoff = DisplacedCutoff::retained;

    // sigma = sqrt(1 - alpha_bar^2)
    static CurriculumParams at(int K, int k, double tau, double alpha_bar);
    void validate() const;
};

// Top-k slice of the tempered softmax of w ~ N(alpha_bar e_o, sigma^2 I).
struct TopKDraw {
    std::vector<double> values;       // descending
    std::vector<int> indices;         // distinct, aligned with values
    std::vector<double> log_weights;  // values/tau - log_normalizer
    double log_normalizer = 0.0;
    double special_value = 0.0;  // the clean entry w_o
    // Sampled value pushed out of the top k by the clean entry (NaN if none).
    double displaced = std::numeric_limits<double>::quiet_NaN();
    bool delta = false;          // clean index is among `indices`

    double weight(std::size_t i) const;
    double normalizer() const;
};

// The k largest of m iid N(0, sigma^2) draws, descending, via the running
// product of U^{1/l} in log space.
std::vector<double> sample_top_order_stats(std::int64_t m, double sigma, int k, Rng& rng);

// X ~ N(0, sigma^2) conditioned on X < cutoff, by inverse CDF in log space.
double truncated_normal_below(double cutoff, double sigma, Rng& rng);

// k distinct integers from [0, n), uniform as a set and in random order.
std::vector<std::int64_t> floyd_sample(std::int64_t n, int k, Rng& rng);

// log E[exp(X/tau) | X < cutoff] for X ~ N(0, sigma^2).
double log_conditional_exp_mean(double cutoff, double sigma, double tau);

// Sparse path: O(k) memory. k == K draws every entry and is exact.
TopKDraw draw_sparse_softmax(const CurriculumParams& params, int o, Rng& rng);

// Draws the full latent w (length K) with the layout shared by the dense
// estimators: w_j = alpha_bar [j == o] + sigma * eps_j, j = 0..K-1.
void draw_gaussian_latent(int o, double alpha_bar, double sigma, Rng& rng, std::span<double> w);

// Dense path: materializes w and keeps the top k with the exact normalizer.
TopKDraw draw_dense_softmax(const CurriculumParams& params, int o, Rng& rng);
TopKDraw top_k_of(std::span<const double> w, int k, double tau, int o);

// sum_i weight_i * table[indices_i]; table is K x dim, row-major.
std::vector<double> curriculum_embed(const TopKDraw& draw, std::span<const double> table, int dim);

}  // namespace psidiff
