#pragma once

#include <span>
#include <vector>

#include "psidiff/denoiser.hpp"
#include "psidiff/processes.hpp"
#include "psidiff/rng.hpp"
#include "psidiff/schedules.hpp"

namespace psidiff {

struct SamplerConfig {
    int steps = 64;
    KappaSchedule kappa = KappaSchedule::constant(1.0);
    NoiseSchedule noise = NoiseSchedule::log_linear();
    double nucleus_p = 1.0;
    bool greedy_final = false;
    double guidance_gamma = 1.0;
    bool high_precision_logits = true;

    void validate() const;
};

// States from t = 1 down to t = 0.
struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<int>> states;

    const std::vector<int>& final_state() const { return states.back(); }
};

// Psi-sampler. With `unconditional` set and guidance_gamma != 1 the per-step
// posteriors are combined with classifier-free guidance.
Trajectory psi_sample(const Denoiser& denoiser, const Prior& prior, const SamplerConfig& config, int L, Rng& rng,
                      const Denoiser* unconditional = nullptr);

// Requires kappa == 1 everywhere.
Trajectory ancestral_sample(const Denoiser& denoiser, const Prior& prior, const SamplerConfig& config, int L,
                            Rng& rng, const Denoiser* unconditional = nullptr);

// Same draws as psi_sample without storing intermediate states.
std::vector<int> psi_sample_final(const Denoiser& denoiser, const Prior& prior, const SamplerConfig& config, int L,
                                  Rng& rng, const Denoiser* unconditional = nullptr);

std::vector<double> nucleus_filter(std::span<const double> probs, double p);
void nucleus_filter_inplace(std::span<double> probs, double p);

std::vector<double> cfg_combine(std::span<const double> cond, std::span<const double> uncond, double gamma);

// argmax_j (log p_j + Gumbel noise); zero-probability categories are never drawn.
int sample_gumbel(std::span<const double> probs, Rng& rng, bool high_precision);

}  // namespace psidiff
