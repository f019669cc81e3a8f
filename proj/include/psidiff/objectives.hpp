#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "psidiff/curriculum.hpp"
#include "psidiff/denoiser.hpp"
#include "psidiff/duality.hpp"
#include "psidiff/processes.hpp"
#include "psidiff/schedules.hpp"
#include "psidiff/synthetic.hpp"

namespace psidiff {

// Floor applied to denoiser probabilities before any log or division.
inline constexpr double kProbabilityFloor = 1e-12;

struct LossContext {
    int K = 0;
    double alpha = 0.0;
    double alpha_prime = 0.0;
    double zeta = 0.0;  // (1 - alpha) / (K alpha + 1 - alpha)

    // alpha in (0, 1]; alpha = 1 is accepted as the clean limit.
    static LossContext make(int K, double alpha, double alpha_prime);
};

// Per-token integrand f of the uniform-prior NELBO. Its expectation over
// t ~ U[0,1] and z_t ~ q_t(.|x) is the continuous-time NELBO, which is >= 0
// and vanishes for a perfect denoiser.
double pointwise_loss(int z_t, std::span<const double> x_theta, const LossContext& ctx, int x);

// d f / d x_theta (treating the floor as inactive).
std::vector<double> pointwise_loss_gradient(int z_t, std::span<const double> x_theta, const LossContext& ctx, int x);

struct Estimate {
    double estimate = 0.0;
    double stderr = 0.0;
    std::size_t n_mc = 0;
    std::uint64_t seed = 0;
    std::vector<double> samples;  // per-sample values, kept when requested
};

struct McOptions {
    std::size_t n_mc = 100000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    bool keep_samples = false;
};

using AlphaFn = std::function<AlphaValue(double)>;

AlphaFn alpha_fn(const NoiseSchedule& schedule);
// alpha(t) = T(alpha_bar(t)), the discrete schedule induced by a Gaussian one.
AlphaFn induced_alpha_fn(const NoiseSchedule& gaussian, const TransformCache& cache);

// Uniform-prior NELBO with z_t ~ q_t(.|x) sampled directly.
Estimate nelbo_discrete(std::span<const int> x, const Denoiser& denoiser, const AlphaFn& schedule,
                        const McOptions& opts);

// Same NELBO with z_t = argmax(w_t), w_t ~ N(alpha_bar x, (1 - alpha_bar^2) I).
Estimate nelbo_gaussian_latents(std::span<const int> x, const Denoiser& denoiser, const NoiseSchedule& gaussian,
                                const TransformCache& cache, const McOptions& opts);

enum class CurriculumMode { sparse, dense };

struct CurriculumLossParams {
    int k = 2;
    double tau = 1e-3;
    double beta = 0.0;
    double gamma = 1.0;
    CurriculumMode mode = CurriculumMode::sparse;
};

// Curriculum objective: t ~ U[beta, gamma]; the denoiser sees the tempered
// softmax of w_t (sparse top-k or dense), targets use the hard argmax.
// Dense mode consumes randomness exactly like nelbo_gaussian_latents.
Estimate curriculum_loss(std::span<const int> x, const Denoiser& denoiser, const NoiseSchedule& gaussian,
                         const TransformCache& cache, const CurriculumLossParams& params, const McOptions& opts);

struct PsiBound {
    double reconstruction = 0.0;
    double prior_kl = 0.0;
    double diffusion_kl = 0.0;
    double total = 0.0;
};

// Finite-T bound on -log p_theta(x) for a single token under the Psi forward
// process, computed exactly. Requires K <= 8 and T <= 8.
PsiBound psi_nelbo_bound(int x, const Prior& prior, const TimeGrid& grid, const KappaSchedule& kappa,
                         const Denoiser& denoiser);

// Exact -log p_theta(x) of the single-token generative chain.
double model_nll(int x, const Prior& prior, const TimeGrid& grid, const KappaSchedule& kappa,
                 const Denoiser& denoiser);

struct TrainOptions {
    std::size_t steps = 20000;
    double learning_rate = 0.05;
    double grad_clip = 5.0;
    std::uint64_t seed = 0;
};

// SGD on the pointwise loss with data from `source`; returns the mean loss
// over the last 10% of steps.
double train_tabular_denoiser(TabularDenoiser& model, const SyntheticSource& source, const NoiseSchedule& schedule,
                              const TrainOptions& opts);

}  // namespace psidiff
