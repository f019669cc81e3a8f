#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace psidiff {

// Thrown when a computation degenerates (division by zero mass, non-finite
// intermediate, quadrature that fails to converge).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

// log Phi(x) for the standard normal CDF. Uses an asymptotic series in the far
// left tail so the result stays finite for any finite x.
double log_ndtr(double x);

// Standard normal CDF and density.
double ndtr(double x);
double normal_pdf(double x);

// Upper quantile: returns x with P(Z > x) = q, accurate for tiny q.
double normal_upper_quantile(double q);

double log_add_exp(double a, double b);
double log_sum_exp(std::span<const double> v);

// Pairwise (tree) summation; the result is independent of how the input was
// produced, so it doubles as a deterministic parallel reduction.
double pairwise_sum(std::span<const double> v);

// Renormalize in place; throws NumericalError when the mass is not positive.
void normalize(std::span<double> p);

bool is_simplex(std::span<const double> p, double tol = 1e-9);

double total_variation(std::span<const double> p, std::span<const double> q);

// Floors entries at `floor` and renormalizes.
void floor_and_normalize(std::span<double> p, double floor);

// Runs body(i) for i in [0, n) on up to `threads` workers with static chunking.
// Results must be written to per-index slots for determinism.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace psidiff
