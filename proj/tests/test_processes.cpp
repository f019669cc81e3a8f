#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "psidiff/numerics.hpp"
#include "psidiff/processes.hpp"
#include "psidiff/rng.hpp"

using namespace psidiff;

namespace {

std::vector<Prior> priors_for(int K) { return {Prior::uniform(K), Prior::masked(K)}; }

// q(z_t = b | z_s = a) for the forward kernel between two signal levels.
double kernel(const Prior& prior, int a, int b, double alpha_s, double alpha_t) {
    const double r = alpha_t / alpha_s;
    return r * (a == b ? 1.0 : 0.0) + (1.0 - r) * prior.prob(b);
}

double marginal(const Prior& prior, int x, int z, double alpha) {
    return alpha * (x == z ? 1.0 : 0.0) + (1.0 - alpha) * prior.prob(z);
}

// Bayes rule over the intermediate state.
std::vector<double> bayes_posterior(const Prior& prior, int x, int z_t, double alpha_s, double alpha_t) {
    std::vector<double> p(prior.K());
    for (int j = 0; j < prior.K(); ++j) p[j] = kernel(prior, j, z_t, alpha_s, alpha_t) * marginal(prior, x, j, alpha_s);
    normalize(p);
    return p;
}

std::vector<double> random_simplex(int K, Rng& rng, int zero = -1) {
    std::vector<double> p(K);
    for (int j = 0; j < K; ++j) p[j] = j == zero ? 0.0 : -std::log(rng.uniform());
    normalize(p);
    return p;
}

// Plug-in uniform-prior posterior written out term by term.
std::vector<double> usdm_formula(std::span<const double> x, int z, double as, double at) {
    const int K = static_cast<int>(x.size());
    std::vector<double> out(K);
    const double den = K * at * x[z] + 1.0 - at;
    for (int j = 0; j < K; ++j) {
        const double zj = j == z ? 1.0 : 0.0;
        out[j] = (K * at * zj * x[j] + (at / as - at) * zj + (as - at) * x[j] + (as - at) * (1 - as) / (K * as)) / den;
    }
    return out;
}

}  // namespace

TEST(ForwardMarginal, InterpolatesTowardPrior) {
    for (const auto& prior : priors_for(4)) {
        const auto q = forward_marginal(prior, 1, 0.3);
        EXPECT_TRUE(is_simplex(q, 1e-14));
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(q[j], marginal(prior, 1, j, 0.3), 1e-15);
    }
    EXPECT_THROW(forward_marginal(Prior::uniform(3), 5, 0.5), std::invalid_argument);
}

TEST(ReversePosterior, MatchesBayesRuleForCleanTokens) {
    Rng rng(3);
    for (int K : {2, 3, 5}) {
        for (const auto& prior : priors_for(K)) {
            for (int trial = 0; trial < 50; ++trial) {
                const double as = 0.05 + 0.9 * rng.uniform();
                const double at = as * rng.uniform();
                for (int x = 0; x < K; ++x) {
                    if (prior.is_masked() && x == prior.mask()) continue;
                    for (int z = 0; z < K; ++z) {
                        if (marginal(prior, x, z, at) == 0.0) continue;
                        const auto got = reverse_posterior(prior, one_hot(K, x), z, as, at);
                        const auto want = bayes_posterior(prior, x, z, as, at);
                        for (int j = 0; j < K; ++j) ASSERT_NEAR(got[j], want[j], 1e-12);
                    }
                }
            }
        }
    }
}

TEST(ReversePosterior, UniformPluginMatchesClosedForm) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int K = 2 + static_cast<int>(rng.below(6));
        const double as = 0.01 + 0.98 * rng.uniform();
        const double at = as * rng.uniform();
        const auto x = random_simplex(K, rng);
        const int z = static_cast<int>(rng.below(K));
        std::vector<double> got(K);
        usdm_posterior(x, z, as, at, got);
        const auto want = usdm_formula(x, z, as, at);
        for (int j = 0; j < K; ++j) ASSERT_NEAR(got[j], want[j], 1e-12);
        EXPECT_TRUE(is_simplex(got, 1e-12));
    }
}

TEST(ReversePosterior, MaskedPriorIsLinearInPrediction) {
    const Prior prior = Prior::masked(4);
    Rng rng(6);
    const auto x = random_simplex(4, rng, prior.mask());
    const double as = 0.7;
    const double at = 0.2;
    std::vector<double> got(4);
    mdm_posterior(prior, x, prior.mask(), as, at, got);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(got[j], (as - at) * x[j] / (1 - at), 1e-15);
    EXPECT_NEAR(got[3], (1 - as) / (1 - at), 1e-15);
    mdm_posterior(prior, x, 1, as, at, got);
    EXPECT_EQ(got, one_hot(4, 1));
}

TEST(ReversePosterior, DegenerateSignalLevels) {
    const std::vector<double> x = {0.2, 0.8};
    std::vector<double> out(2);
    usdm_posterior(x, 0, 0.0, 0.0, out);
    EXPECT_NEAR(out[0], 0.5, 1e-15);
    EXPECT_THROW(usdm_posterior(x, 0, 0.0, 0.1, out), std::exception);
    EXPECT_THROW(reverse_posterior(Prior::uniform(2), x, 0, 0.2, 0.5), std::invalid_argument);
}

TEST(PsiPosterior, IsMixtureOfPosteriorAndMarginal) {
    Rng rng(8);
    for (const auto& prior : priors_for(4)) {
        const double as = 0.6;
        const double at = 0.25;
        const double kappa = 0.3;
        const int x = 1;
        for (int z : {1, 3}) {
            const auto psi = psi_posterior_true(prior, x, z, kappa, as, at);
            const auto post = bayes_posterior(prior, x, z, as, at);
            for (int j = 0; j < 4; ++j) {
                EXPECT_NEAR(psi[j], kappa * post[j] + (1 - kappa) * marginal(prior, x, j, as), 1e-14);
            }
        }
    }
}

TEST(PsiPosterior, PreservesMarginalsForArbitraryKappa) {
    Rng rng(9);
    for (int K : {2, 3, 4}) {
        for (const auto& prior : priors_for(K)) {
            for (int T : {2, 4, 8}) {
                const auto grid = make_time_grid(T, NoiseSchedule::log_linear(), KappaSchedule::constant(1.0));
                std::vector<double> kappas(T);
                for (double& k : kappas) k = rng.uniform();
                for (int x = 0; x < K; ++x) {
                    if (prior.is_masked() && x == prior.mask()) continue;
                    // Propagate the chain by hand from the prior.
                    std::vector<double> q = prior.probs();
                    for (int i = T; i >= 1; --i) {
                        std::vector<double> next(K, 0.0);
                        for (int z = 0; z < K; ++z) {
                            if (q[z] == 0.0) continue;
                            const auto step = psi_posterior_true(prior, x, z, kappas[i - 1], grid.alphas[i - 1],
                                                                 grid.alphas[i]);
                            for (int j = 0; j < K; ++j) next[j] += q[z] * step[j];
                        }
                        q = next;
                        for (int j = 0; j < K; ++j) ASSERT_NEAR(q[j], marginal(prior, x, j, grid.alphas[i - 1]), 1e-12);
                    }
                }
                EXPECT_LT(psi_marginal_deviation(prior, grid, kappas), 1e-12);
            }
        }
    }
}

TEST(PsiPosterior, RecoversRemaskingSampler) {
    const Prior prior = Prior::masked(5);
    const int m = prior.mask();
    Rng rng(10);
    for (int trial = 0; trial < 2000; ++trial) {
        const double as = 0.999 * rng.uniform();
        const double at = as * rng.uniform();
        const double smax = remdm_sigma_max(as, at);
        const double sigma = std::min(smax, 1.0 - as) * rng.uniform();
        const double kappa = 1.0 - sigma / (1.0 - as);
        auto x = random_simplex(5, rng, m);
        const int z = rng.uniform() < 0.5 ? m : static_cast<int>(rng.below(4));
        apply_carry_over(prior, std::span<const int>(&z, 1), x);
        const auto psi = psi_posterior_model(prior, x, z, kappa, as, at);
        const auto remdm = remdm_posterior(prior, x, z, sigma, as, at);
        for (int j = 0; j < 5; ++j) {
            double want;
            if (z != m) {
                want = (j == z ? 1.0 - sigma : 0.0) + (j == m ? sigma : 0.0);
            } else {
                want = j == m ? (1 - as - sigma * at) / (1 - at) : (as - (1 - sigma) * at) * x[j] / (1 - at);
            }
            ASSERT_NEAR(remdm[j], want, 1e-12);
            ASSERT_NEAR(psi[j], want, 1e-12);
        }
    }
}

TEST(PsiPosterior, RemaskingRejectsSigmaAboveBound) {
    const Prior prior = Prior::masked(3);
    const auto x = one_hot(3, 0);
    EXPECT_THROW(remdm_posterior(prior, x, 2, 0.9, 0.9, 0.5), std::invalid_argument);
}

TEST(CarryOver, PinsUnmaskedPositions) {
    const Prior prior = Prior::masked(3);
    const std::vector<int> z = {0, 2};
    std::vector<double> x = {0.2, 0.8, 0.0, 0.5, 0.5, 0.0};
    apply_carry_over(prior, z, x);
    EXPECT_EQ(x[0], 1.0);
    EXPECT_EQ(x[1], 0.0);
    EXPECT_EQ(x[3], 0.5);
    std::vector<double> u = {0.2, 0.8, 0.0};
    const std::vector<int> zu = {0};
    apply_carry_over(Prior::uniform(3), zu, u);
    EXPECT_EQ(u[1], 0.8);
}
