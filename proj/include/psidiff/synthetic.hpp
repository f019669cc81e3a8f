#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psidiff/denoiser.hpp"
#include "psidiff/processes.hpp"
#include "psidiff/rng.hpp"

namespace psidiff {

enum class SourceKind { iid, markov };

// Small categorical data distribution with an exact probability function.
class SyntheticSource {
public:
    static SyntheticSource iid(std::vector<double> weights, int L);
    static SyntheticSource markov(std::vector<double> initial, std::vector<std::vector<double>> transition, int L);
    // Dirichlet(1) weights. `support` < K leaves the trailing categories empty
    // (useful for masked priors whose mask must carry no data mass).
    static SyntheticSource random_iid(int K, int L, Rng& rng, int support = 0);
    static SyntheticSource random_markov(int K, int L, Rng& rng, int support = 0);
    static SyntheticSource fixture(const std::string& name);
    static std::vector<std::string> fixture_names();

    SourceKind kind() const { return kind_; }
    int K() const { return K_; }
    int L() const { return L_; }
    const std::vector<double>& initial() const { return initial_; }
    const std::vector<std::vector<double>>& transition() const { return transition_; }

    double probability(std::span<const int> seq) const;
    std::vector<int> sample(Rng& rng) const;
    // Exact marginal distribution of position l.
    std::vector<double> marginal(int position) const;

    nlohmann::json to_json() const;
    static SyntheticSource from_json(const nlohmann::json& j);

private:
    SyntheticSource() = default;
    void validate() const;
    SourceKind kind_ = SourceKind::iid;
    int K_ = 0;
    int L_ = 0;
    std::vector<double> initial_;                  // iid weights or initial distribution
    std::vector<std::vector<double>> transition_;  // markov only
};

struct Distribution {
    std::vector<std::vector<int>> sequences;  // lexicographic order (base-K code)
    std::vector<double> probs;
};

// Exact distribution over all K^L sequences; rejects supports above 2^20.
Distribution enumerate_distribution(const SyntheticSource& source);

std::size_t sequence_code(std::span<const int> seq, int K);

// What the oracle reports per position.
//  posterior_mean: P(x^l | z_t).
//  reverse_exact: P(x^l | z_t) / q_t(z_t^l | x^l), renormalized. The reverse
//    posterior is a ratio of terms linear in x, so plugging this reweighted
//    simplex in reproduces the exact mixture sum_x P(x | z_t) q(z_s | z_t, x)
//    at every s < t. For the masked prior both targets coincide.
enum class OracleTarget { reverse_exact, posterior_mean };

// Exact oracle over the enumerated support, under independent per-position
// corruption with signal level alpha. The factored variant ignores
// cross-position evidence and is only exact for iid sources.
class BayesOracleDenoiser : public Denoiser {
public:
    BayesOracleDenoiser(const SyntheticSource& source, const Prior& prior, bool factored = false,
                        OracleTarget target = OracleTarget::reverse_exact);
    using Denoiser::predict;
    int vocab_size() const override { return prior_.K(); }
    void predict(std::span<const int> z, double t, double alpha, std::span<double> out) const override;
    bool factored() const { return factored_; }
    OracleTarget target() const { return target_; }

private:
    void predict_factored(std::span<const int> z, double alpha, std::span<double> out) const;
    void posterior(std::span<const int> z, double alpha, std::span<double> out) const;
    Prior prior_;
    int L_;
    bool factored_;
    OracleTarget target_;
    std::vector<std::vector<int>> support_;
    std::vector<double> support_probs_;
    std::vector<std::vector<double>> marginals_;
};

}  // namespace psidiff
