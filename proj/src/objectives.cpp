#include "psidiff/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "psidiff/numerics.hpp"

namespace psidiff {

namespace {

void check_finite(double v, const char* name) {
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "pointwise_loss: non-finite " << name;
        throw NumericalError(os.str());
    }
}

std::span<double> floored_copy(std::span<const double> x_theta) {
    thread_local std::vector<double> buf;
    buf.assign(x_theta.begin(), x_theta.end());
    floor_and_normalize(buf, kProbabilityFloor);
    return buf;
}

// Antithetic pairs over stratified times: pair p uses u in [p/P, (p+1)/P) and
// 1 - u. The standard error collapses adjacent strata.
template <class Fn>
Estimate stratified(const McOptions& opts, double beta, double gamma, bool parallel_ok, Fn&& value_at) {
    require(opts.n_mc >= 4 && opts.n_mc % 2 == 0, "estimator: n_mc must be an even number >= 4");
    require(beta >= 0.0 && beta < gamma && gamma <= 1.0, "estimator: need 0 <= beta < gamma <= 1");
    const std::size_t pairs = opts.n_mc / 2;
    std::vector<double> values(opts.n_mc);
    const Rng root(opts.seed);
    parallel_for(pairs, parallel_ok ? opts.threads : 1, [&](std::size_t p) {
        Rng rng = root.split(p);
        const double u = (static_cast<double>(p) + rng.uniform()) / static_cast<double>(pairs);
        values[2 * p] = value_at(beta + (gamma - beta) * u, rng);
        values[2 * p + 1] = value_at(beta + (gamma - beta) * (1.0 - u), rng);
    });
    Estimate e;
    e.n_mc = opts.n_mc;
    e.seed = opts.seed;
    e.estimate = pairwise_sum(values) / static_cast<double>(opts.n_mc);
    std::vector<double> diffs;
    diffs.reserve(pairs / 2 + 1);
    auto pair_mean = [&](std::size_t p) { return 0.5 * (values[2 * p] + values[2 * p + 1]); };
    for (std::size_t q = 0; q + 1 < pairs; q += 2) {
        const double d = pair_mean(q) - pair_mean(q + 1);
        diffs.push_back(d * d);
    }
    if (pairs % 2 == 1 && pairs >= 2) {
        const double d = pair_mean(pairs - 1) - pair_mean(pairs - 2);
        diffs.push_back(0.5 * d * d);
    }
    const double P = static_cast<double>(pairs);
    e.stderr = std::sqrt(pairwise_sum(diffs)) / P;
    if (opts.keep_samples) e.samples = std::move(values);
    return e;
}

void check_sequence(std::span<const int> x, int K) {
    require(!x.empty(), "estimator: empty sequence");
    for (int v : x) require(v >= 0 && v < K, "estimator: token out of range");
}

AlphaValue gaussian_to_discrete(const NoiseSchedule& gaussian, const TransformCache& cache, double t) {
    const auto g = gaussian.eval(t);
    const auto p = transform_point(cache, g.alpha, g.alpha_prime);
    return {std::clamp(p.value, 0.0, 1.0), p.derivative};
}

int argmax(std::span<const double> w) {
    return static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
}

double sequence_loss(std::span<const int> z, std::span<const double> x_theta, const LossContext& ctx,
                     std::span<const int> x) {
    double total = 0.0;
    const std::size_t K = ctx.K;
    for (std::size_t l = 0; l < x.size(); ++l) total += pointwise_loss(z[l], x_theta.subspan(l * K, K), ctx, x[l]);
    return total;
}

}  // namespace

LossContext LossContext::make(int K, double alpha, double alpha_prime) {
    require(K >= 2, "loss context: K must be at least 2");
    require(alpha > 0.0 && alpha <= 1.0, "loss context: alpha must lie in (0,1]");
    LossContext c;
    c.K = K;
    c.alpha = alpha;
    c.alpha_prime = alpha_prime;
    c.zeta = (1.0 - alpha) / (K * alpha + 1.0 - alpha);
    return c;
}

double pointwise_loss(int z_t, std::span<const double> x_theta, const LossContext& ctx, int x) {
    const int K = ctx.K;
    require(x_theta.size() == static_cast<std::size_t>(K), "pointwise_loss: x_theta size");
    require(z_t >= 0 && z_t < K && x >= 0 && x < K, "pointwise_loss: token out of range");
    const auto xt = floored_copy(x_theta);
    const double a = ctx.alpha;
    const double zeta = ctx.zeta;
    const bool same = z_t == x;
    auto xbt = [&](int j) { return K * a * xt[j] + 1.0 - a; };

    const double xbar_r = (same ? K * a : 0.0) + 1.0 - a;
    const double xbt_r = xbt(z_t);
    double sum_log = 0.0;
    for (int j = 0; j < K; ++j) sum_log += std::log(xbt_r / xbt(j));

    const double reciprocal = K / xbar_r - K / xbt_r;
    check_finite(reciprocal, "reciprocal term");
    const double spread = -(same ? zeta : 1.0) * sum_log;
    check_finite(spread, "log-ratio sum");
    double clean = 0.0;
    double entropy = 0.0;
    if (same) {
        entropy = zeta > 0.0 ? -(K - 1.0) * zeta * std::log(zeta) : 0.0;
    } else {
        clean = -K * a / (1.0 - a) * std::log(xbt_r / xbt(x));
        check_finite(clean, "clean-token log ratio");
        entropy = std::log(zeta) / zeta;
        check_finite(entropy, "zeta term");
    }
    const double value = ctx.alpha_prime / (K * a) * (reciprocal + spread + clean + entropy);
    check_finite(value, "total");
    return value;
}

std::vector<double> pointwise_loss_gradient(int z_t, std::span<const double> x_theta, const LossContext& ctx,
                                            int x) {
    const int K = ctx.K;
    require(x_theta.size() == static_cast<std::size_t>(K), "pointwise_loss_gradient: x_theta size");
    const double a = ctx.alpha;
    require(a < 1.0, "pointwise_loss_gradient: alpha must be < 1");
    const bool same = z_t == x;
    std::vector<double> xbt(K);
    for (int j = 0; j < K; ++j) xbt[j] = K * a * std::max(x_theta[j], kProbabilityFloor) + 1.0 - a;
    const double A = same ? ctx.zeta : 1.0;
    const double B = same ? 0.0 : K * a / (1.0 - a);
    const double c = ctx.alpha_prime / (K * a);
    std::vector<double> g(K);
    for (int m = 0; m < K; ++m) {
        double d = A / xbt[m];
        if (m == z_t) d += K / (xbt[m] * xbt[m]) - A * K / xbt[m] - B / xbt[m];
        if (m == x) d += B / xbt[m];
        g[m] = c * K * a * d;
    }
    return g;
}

AlphaFn alpha_fn(const NoiseSchedule& schedule) {
    return [schedule](double t) { return schedule.eval(t); };
}

AlphaFn induced_alpha_fn(const NoiseSchedule& gaussian, const TransformCache& cache) {
    return [gaussian, &cache](double t) { return gaussian_to_discrete(gaussian, cache, t); };
}

Estimate nelbo_discrete(std::span<const int> x, const Denoiser& denoiser, const AlphaFn& schedule,
                        const McOptions& opts) {
    const int K = denoiser.vocab_size();
    check_sequence(x, K);
    const std::size_t L = x.size();
    return stratified(opts, 0.0, 1.0, denoiser.thread_safe(), [&](double t, Rng& rng) {
        const auto av = schedule(t);
        const auto ctx = LossContext::make(K, av.alpha, av.alpha_prime);
        std::vector<int> z(L);
        for (std::size_t l = 0; l < L; ++l) {
            z[l] = rng.uniform() < av.alpha ? x[l] : static_cast<int>(rng.below(K));
        }
        std::vector<double> xt(L * K);
        denoiser.predict(z, t, av.alpha, xt);
        return sequence_loss(z, xt, ctx, x);
    });
}

Estimate nelbo_gaussian_latents(std::span<const int> x, const Denoiser& denoiser, const NoiseSchedule& gaussian,
                                const TransformCache& cache, const McOptions& opts) {
    const int K = denoiser.vocab_size();
    require(cache.K == K, "nelbo_gaussian_latents: cache built for a different K");
    check_sequence(x, K);
    const std::size_t L = x.size();
    return stratified(opts, 0.0, 1.0, denoiser.thread_safe(), [&](double t, Rng& rng) {
        const auto g = gaussian.eval(t);
        const double sigma = std::sqrt(1.0 - g.alpha * g.alpha);
        const auto av = gaussian_to_discrete(gaussian, cache, t);
        const auto ctx = LossContext::make(K, av.alpha, av.alpha_prime);
        std::vector<int> z(L);
        std::vector<double> w(K);
        for (std::size_t l = 0; l < L; ++l) {
            draw_gaussian_latent(x[l], g.alpha, sigma, rng, w);
            z[l] = argmax(w);
        }
        std::vector<double> xt(L * K);
        denoiser.predict(z, t, av.alpha, xt);
        return sequence_loss(z, xt, ctx, x);
    });
}

Estimate curriculum_loss(std::span<const int> x, const Denoiser& denoiser, const NoiseSchedule& gaussian,
                         const TransformCache& cache, const CurriculumLossParams& params, const McOptions& opts) {
    const int K = denoiser.vocab_size();
    require(cache.K == K, "curriculum_loss: cache built for a different K");
    require(params.k >= 1 && params.k <= K, "curriculum_loss: need 1 <= k <= K");
    require(params.tau > 0.0, "curriculum_loss: tau must be positive");
    check_sequence(x, K);
    const std::size_t L = x.size();
    return stratified(opts, params.beta, params.gamma, denoiser.thread_safe(), [&](double t, Rng& rng) {
        const auto g = gaussian.eval(t);
        const double sigma = std::sqrt(1.0 - g.alpha * g.alpha);
        const auto av = gaussian_to_discrete(gaussian, cache, t);
        const auto ctx = LossContext::make(K, av.alpha, av.alpha_prime);
        std::vector<int> z(L);
        std::vector<std::vector<int>> idx(L);
        std::vector<std::vector<double>> wts(L);
        std::vector<SoftToken> soft(L);
        for (std::size_t l = 0; l < L; ++l) {
            if (params.mode == CurriculumMode::dense) {
                std::vector<double> w(K);
                draw_gaussian_latent(x[l], g.alpha, sigma, rng, w);
                z[l] = argmax(w);
                idx[l].resize(K);
                wts[l].resize(K);
                for (int j = 0; j < K; ++j) {
                    idx[l][j] = j;
                    wts[l][j] = w[j] / params.tau;
                }
                const double lse = log_sum_exp(wts[l]);
                for (double& v : wts[l]) v = std::exp(v - lse);
            } else {
                CurriculumParams cp;
                cp.K = K;
                cp.k = params.k;
                cp.tau = params.tau;
                cp.alpha_bar = g.alpha;
                cp.sigma = sigma;
                auto d = draw_sparse_softmax(cp, x[l], rng);
                z[l] = d.indices[0];
                idx[l] = std::move(d.indices);
                wts[l].resize(d.log_weights.size());
                for (std::size_t i = 0; i < wts[l].size(); ++i) wts[l][i] = std::exp(d.log_weights[i]);
            }
            soft[l] = SoftToken{idx[l], wts[l]};
        }
        std::vector<double> xt(L * K);
        denoiser.predict_soft(soft, t, av.alpha, xt);
        return sequence_loss(z, xt, ctx, x);
    });
}

namespace {

constexpr int kMaxEnumK = 8;
constexpr int kMaxEnumT = 8;

double kl(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] > 0.0) s += p[j] * std::log(p[j] / q[j]);
    }
    return s;
}

// Model posterior row for a single token z at step (s, t).
std::vector<double> model_step(const Prior& prior, const Denoiser& denoiser, int z, double t, double kappa,
                               double alpha_s, double alpha_t) {
    const int zs[] = {z};
    auto xt = denoiser.predict(zs, t, alpha_t);
    apply_carry_over(prior, zs, xt);
    floor_and_normalize(xt, kProbabilityFloor);
    auto row = psi_posterior_model(prior, xt, z, kappa, alpha_s, alpha_t);
    floor_and_normalize(row, kProbabilityFloor);
    return row;
}

double reconstruction_prob(const Prior& prior, const Denoiser& denoiser, int z0, double alpha0, int x) {
    const int zs[] = {z0};
    auto xt = denoiser.predict(zs, 0.0, alpha0);
    apply_carry_over(prior, zs, xt);
    floor_and_normalize(xt, kProbabilityFloor);
    return xt[x];
}

void check_enumerable(const Prior& prior, const TimeGrid& grid, const Denoiser& denoiser, int x) {
    require(prior.K() <= kMaxEnumK && grid.steps() <= kMaxEnumT, "psi bound: instance too large for enumeration");
    require(denoiser.vocab_size() == prior.K(), "psi bound: denoiser K mismatch");
    prior.check_token(x);
}

}  // namespace

PsiBound psi_nelbo_bound(int x, const Prior& prior, const TimeGrid& grid, const KappaSchedule& kappa,
                         const Denoiser& denoiser) {
    check_enumerable(prior, grid, denoiser, x);
    const int K = prior.K();
    const int T = grid.steps();
    const auto kappas = step_kappas(grid, kappa);
    PsiBound b;
    b.prior_kl = kl(forward_marginal(prior, x, grid.alphas[T]), prior.probs());
    std::vector<double> truth(K);
    for (int i = T; i >= 1; --i) {
        const double a_t = grid.alphas[i];
        const double a_s = grid.alphas[i - 1];
        const auto q = forward_marginal(prior, x, a_t);
        for (int z = 0; z < K; ++z) {
            if (q[z] == 0.0) continue;
            psi_posterior_true(prior, x, z, kappas[i - 1], a_s, a_t, truth);
            const auto model = model_step(prior, denoiser, z, grid.times[i], kappas[i - 1], a_s, a_t);
            b.diffusion_kl += q[z] * kl(truth, model);
        }
    }
    const auto q0 = forward_marginal(prior, x, grid.alphas[0]);
    for (int z = 0; z < K; ++z) {
        if (q0[z] == 0.0) continue;
        b.reconstruction -= q0[z] * std::log(reconstruction_prob(prior, denoiser, z, grid.alphas[0], x));
    }
    b.total = b.reconstruction + b.prior_kl + b.diffusion_kl;
    return b;
}

double model_nll(int x, const Prior& prior, const TimeGrid& grid, const KappaSchedule& kappa,
                 const Denoiser& denoiser) {
    check_enumerable(prior, grid, denoiser, x);
    const int K = prior.K();
    const int T = grid.steps();
    const auto kappas = step_kappas(grid, kappa);
    std::vector<double> p = prior.probs();
    for (int i = T; i >= 1; --i) {
        std::vector<double> next(K, 0.0);
        for (int z = 0; z < K; ++z) {
            if (p[z] == 0.0) continue;
            const auto row =
                model_step(prior, denoiser, z, grid.times[i], kappas[i - 1], grid.alphas[i - 1], grid.alphas[i]);
            for (int j = 0; j < K; ++j) next[j] += p[z] * row[j];
        }
        p = std::move(next);
    }
    double px = 0.0;
    for (int z = 0; z < K; ++z) {
        if (p[z] > 0.0) px += p[z] * reconstruction_prob(prior, denoiser, z, grid.alphas[0], x);
    }
    return -std::log(px);
}

double train_tabular_denoiser(TabularDenoiser& model, const SyntheticSource& source, const NoiseSchedule& schedule,
                              const TrainOptions& opts) {
    const int K = model.vocab_size();
    const int L = model.length();
    require(source.K() == K && source.L() == L, "train_tabular_denoiser: source shape mismatch");
    Rng rng(opts.seed);
    const std::size_t tail_start = opts.steps - opts.steps / 10;
    double tail_sum = 0.0;
    std::size_t tail_n = 0;
    std::vector<int> z(L);
    std::vector<double> xt(static_cast<std::size_t>(L) * K);
    for (std::size_t step = 0; step < opts.steps; ++step) {
        const auto x = source.sample(rng);
        const double t = rng.uniform();
        const auto av = schedule.eval(t);
        if (av.alpha >= 1.0) continue;
        const auto ctx = LossContext::make(K, av.alpha, av.alpha_prime);
        for (int l = 0; l < L; ++l) z[l] = rng.uniform() < av.alpha ? x[l] : static_cast<int>(rng.below(K));
        model.predict(z, t, av.alpha, xt);
        double loss = 0.0;
        for (int l = 0; l < L; ++l) {
            const auto row = std::span<const double>(xt).subspan(static_cast<std::size_t>(l) * K, K);
            loss += pointwise_loss(z[l], row, ctx, x[l]);
            const auto g = pointwise_loss_gradient(z[l], row, ctx, x[l]);
            double inner = 0.0;
            for (int j = 0; j < K; ++j) inner += row[j] * g[j];
            std::vector<double> grad(K);
            double norm = 0.0;
            for (int j = 0; j < K; ++j) {
                grad[j] = row[j] * (g[j] - inner);
                norm += grad[j] * grad[j];
            }
            norm = std::sqrt(norm);
            const double scale = norm > opts.grad_clip ? opts.grad_clip / norm : 1.0;
            auto logits = model.logits(l, z[l], model.bucket(t));
            for (int j = 0; j < K; ++j) logits[j] -= opts.learning_rate * scale * grad[j];
        }
        if (step >= tail_start) {
            tail_sum += loss;
            ++tail_n;
        }
    }
    return tail_n ? tail_sum / static_cast<double>(tail_n) : 0.0;
}

}  // namespace psidiff
