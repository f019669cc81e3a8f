#pragma once

#include <span>
#include <vector>

#include "psidiff/schedules.hpp"

namespace psidiff {

enum class PriorKind { uniform, masked };

// Limiting distribution pi of the forward process.
class Prior {
public:
    static Prior uniform(int K);
    // Masked prior with the mask at `mask_index` (defaults to the last category).
    static Prior masked(int K, int mask_index = -1);

    PriorKind kind() const { return kind_; }
    int K() const { return K_; }
    int mask() const { return mask_; }
    bool is_masked() const { return kind_ == PriorKind::masked; }

    double prob(int j) const;
    std::vector<double> probs() const;
    void check_token(int j) const;

private:
    Prior(PriorKind kind, int K, int mask) : kind_(kind), K_(K), mask_(mask) {}
    PriorKind kind_;
    int K_;
    int mask_;
};

std::vector<double> one_hot(int K, int index);

// Output spans have length K. Simplex inputs may be hard tokens encoded as one-hot.

// alpha * onehot(x) + (1 - alpha) * pi
void forward_marginal(const Prior& prior, int x, double alpha, std::span<double> out);
std::vector<double> forward_marginal(const Prior& prior, int x, double alpha);
void forward_marginal(const Prior& prior, std::span<const double> x, double alpha, std::span<double> out);

void mdm_posterior(const Prior& prior, std::span<const double> x, int z_t, double alpha_s, double alpha_t,
                   std::span<double> out);
void usdm_posterior(std::span<const double> x, int z_t, double alpha_s, double alpha_t, std::span<double> out);

// Reverse posterior q_{s|t} for either prior.
void reverse_posterior(const Prior& prior, std::span<const double> x, int z_t, double alpha_s, double alpha_t,
                       std::span<double> out);
std::vector<double> reverse_posterior(const Prior& prior, std::span<const double> x, int z_t, double alpha_s,
                                      double alpha_t);

// q_{0|t}: the clean-data posterior given z_t.
void q0t_posterior(const Prior& prior, std::span<const double> x, int z_t, double alpha_t, std::span<double> out);

// kappa * q_{s|t}(.|z_t, x) + (1 - kappa) * q_s(.|x)
void psi_posterior_true(const Prior& prior, int x, int z_t, double kappa, double alpha_s, double alpha_t,
                        std::span<double> out);
std::vector<double> psi_posterior_true(const Prior& prior, int x, int z_t, double kappa, double alpha_s,
                                       double alpha_t);

// kappa * q_{s|t}(.|z_t, x_theta) + (1 - kappa) * [alpha_s q_{0|t}(.|z_t, x_theta) + (1 - alpha_s) pi]
void psi_posterior_model(const Prior& prior, std::span<const double> x_theta, int z_t, double kappa,
                         double alpha_s, double alpha_t, std::span<double> out);
std::vector<double> psi_posterior_model(const Prior& prior, std::span<const double> x_theta, int z_t,
                                        double kappa, double alpha_s, double alpha_t);

// ReMDM posterior with remasking probability sigma (masked prior).
void remdm_posterior(const Prior& prior, std::span<const double> x, int z_t, double sigma, double alpha_s,
                     double alpha_t, std::span<double> out);
std::vector<double> remdm_posterior(const Prior& prior, std::span<const double> x, int z_t, double sigma,
                                    double alpha_s, double alpha_t);

// Model-side convention for masked priors: positions that are already
// unmasked keep their token, so x_theta is replaced by onehot(z) there.
void apply_carry_over(const Prior& prior, std::span<const int> z, std::span<double> x_theta);

// Per-step kappa values for a grid; kappas[i-1] belongs to the step t_i -> t_{i-1}.
std::vector<double> step_kappas(const TimeGrid& grid, const KappaSchedule& kappa);

// Exact marginals of the chain Psi_1 * prod Psi_{s|t}(.|., x) at every grid
// point, obtained by propagating the full distribution. Row i holds time t_i.
std::vector<std::vector<double>> psi_chain_marginals(const Prior& prior, int x, const TimeGrid& grid,
                                                     std::span<const double> kappas);

// Largest total-variation gap between the chain marginals and q_t(.|x), over
// every clean token x and every grid time.
double psi_marginal_deviation(const Prior& prior, const TimeGrid& grid, std::span<const double> kappas);

}  // namespace psidiff
