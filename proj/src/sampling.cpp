#include "psidiff/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "psidiff/numerics.hpp"

namespace psidiff {

namespace {

constexpr double kGuidanceFloor = 1e-12;

void prepare(const Prior& prior, const SamplerConfig& config, std::span<const int> z, std::span<double> x_theta) {
    apply_carry_over(prior, z, x_theta);
    if (config.nucleus_p < 1.0) {
        const std::size_t K = prior.K();
        for (std::size_t l = 0; l < z.size(); ++l) nucleus_filter_inplace(x_theta.subspan(l * K, K), config.nucleus_p);
    }
}

std::vector<int> run(const Denoiser& denoiser, const Prior& prior, const SamplerConfig& config, int L, Rng& rng,
                     const Denoiser* unconditional, Trajectory* traj) {
    config.validate();
    require(L >= 1, "sampler: L must be positive");
    require(denoiser.vocab_size() == prior.K(), "sampler: denoiser and prior disagree on K");
    const bool guided = unconditional != nullptr && config.guidance_gamma != 1.0;
    if (guided) require(unconditional->vocab_size() == prior.K(), "sampler: unconditional model K mismatch");
    const int K = prior.K();
    const auto grid = make_time_grid(config.steps, config.noise, config.kappa);
    const auto kappas = step_kappas(grid, config.kappa);
    const int T = grid.steps();

    std::vector<int> z(L);
    for (int l = 0; l < L; ++l) z[l] = prior.is_masked() ? prior.mask() : static_cast<int>(rng.below(K));
    if (traj) {
        traj->times.assign(1, grid.times[T]);
        traj->states.assign(1, z);
    }
    std::vector<double> xt(static_cast<std::size_t>(L) * K);
    std::vector<double> xu(guided ? xt.size() : 0);
    std::vector<double> post(K);
    std::vector<double> post_u(guided ? K : 0);
    for (int i = T; i >= 1; --i) {
        const double t = grid.times[i];
        const double a_t = grid.alphas[i];
        const double a_s = grid.alphas[i - 1];
        const double kappa = kappas[i - 1];
        denoiser.predict(z, t, a_t, xt);
        prepare(prior, config, z, xt);
        if (guided) {
            unconditional->predict(z, t, a_t, xu);
            prepare(prior, config, z, xu);
        }
        for (int l = 0; l < L; ++l) {
            const auto row = std::span<const double>(xt).subspan(static_cast<std::size_t>(l) * K, K);
            psi_posterior_model(prior, row, z[l], kappa, a_s, a_t, post);
            if (guided) {
                const auto row_u = std::span<const double>(xu).subspan(static_cast<std::size_t>(l) * K, K);
                psi_posterior_model(prior, row_u, z[l], kappa, a_s, a_t, post_u);
                post = cfg_combine(post, post_u, config.guidance_gamma);
            }
            if (config.greedy_final && i == 1) {
                z[l] = static_cast<int>(std::max_element(post.begin(), post.end()) - post.begin());
            } else {
                z[l] = sample_gumbel(post, rng, config.high_precision_logits);
            }
        }
        if (traj) {
            traj->times.push_back(grid.times[i - 1]);
            traj->states.push_back(z);
        }
    }
    return z;
}

}  // namespace

void SamplerConfig::validate() const {
    require(steps >= 1, "sampler config: steps must be positive");
    require(nucleus_p > 0.0 && nucleus_p <= 1.0, "sampler config: nucleus_p must lie in (0,1]");
    require(guidance_gamma >= 0.0, "sampler config: guidance_gamma must be non-negative");
}

Trajectory psi_sample(const Denoiser& denoiser, const Prior& prior, const SamplerConfig& config, int L, Rng& rng,
                      const Denoiser* unconditional) {
    Trajectory traj;
    run(denoiser, prior, config, L, rng, unconditional, &traj);
    return traj;
}

Trajectory ancestral_sample(const Denoiser& denoiser, const Prior& prior, const SamplerConfig& config, int L,
                            Rng& rng, const Denoiser* unconditional) {
    require(config.kappa.kind() == KappaKind::constant && config.kappa.value() == 1.0,
            "ancestral_sample: kappa must be the constant 1");
    return psi_sample(denoiser, prior, config, L, rng, unconditional);
}

std::vector<int> psi_sample_final(const Denoiser& denoiser, const Prior& prior, const SamplerConfig& config, int L,
                                  Rng& rng, const Denoiser* unconditional) {
    return run(denoiser, prior, config, L, rng, unconditional, nullptr);
}

void nucleus_filter_inplace(std::span<double> probs, double p) {
    require(p > 0.0 && p <= 1.0, "nucleus_filter: p must lie in (0,1]");
    if (p >= 1.0) return;
    thread_local std::vector<int> order;
    order.resize(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
    double total = 0.0;
    for (double v : probs) total += v;
    double cum = 0.0;
    std::size_t keep = order.size();
    for (std::size_t i = 0; i < order.size(); ++i) {
        cum += probs[order[i]] / total;
        if (cum >= p - 1e-12) {
            keep = i + 1;
            break;
        }
    }
    for (std::size_t i = keep; i < order.size(); ++i) probs[order[i]] = 0.0;
    normalize(probs);
}

std::vector<double> nucleus_filter(std::span<const double> probs, double p) {
    std::vector<double> out(probs.begin(), probs.end());
    nucleus_filter_inplace(out, p);
    return out;
}

std::vector<double> cfg_combine(std::span<const double> cond, std::span<const double> uncond, double gamma) {
    require(cond.size() == uncond.size() && !cond.empty(), "cfg_combine: size mismatch");
    std::vector<double> logits(cond.size());
    for (std::size_t j = 0; j < cond.size(); ++j) {
        logits[j] = gamma * std::log(std::max(cond[j], kGuidanceFloor)) +
                    (1.0 - gamma) * std::log(std::max(uncond[j], kGuidanceFloor));
    }
    const double lse = log_sum_exp(logits);
    for (double& v : logits) v = std::exp(v - lse);
    return logits;
}

int sample_gumbel(std::span<const double> probs, Rng& rng, bool high_precision) {
    int best = -1;
    if (high_precision) {
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < probs.size(); ++j) {
            const double g = -std::log(-std::log(rng.uniform()));
            if (!(probs[j] > 0.0)) continue;
            const double score = std::log(probs[j]) + g;
            if (score > best_score) {
                best_score = score;
                best = static_cast<int>(j);
            }
        }
    } else {
        float best_score = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j < probs.size(); ++j) {
            const float u = std::min(static_cast<float>(rng.uniform()), std::nextafter(1.0f, 0.0f));
            const float g = -std::log(-std::log(u));
            if (!(probs[j] > 0.0)) continue;
            const float score = std::log(static_cast<float>(probs[j])) + g;
            if (score > best_score) {
                best_score = score;
                best = static_cast<int>(j);
            }
        }
    }
    if (best < 0) throw NumericalError("sample_gumbel: no category with positive probability");
    return best;
}

}  // namespace psidiff
