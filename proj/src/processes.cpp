#include "psidiff/processes.hpp"

#include <algorithm>
#include <cmath>

#include "psidiff/numerics.hpp"

namespace psidiff {

namespace {

std::vector<double>& scratch(std::size_t slot, std::size_t n) {
    thread_local std::vector<double> buffers[3];
    auto& b = buffers[slot];
    if (b.size() < n) b.resize(n);
    return b;
}

void check_pair(double alpha_s, double alpha_t) {
    require(alpha_t >= 0.0 && alpha_t <= alpha_s && alpha_s <= 1.0,
            "posterior: need 0 <= alpha_t <= alpha_s <= 1");
}

template <class Real>
void usdm_kernel(std::span<const double> x, int z_t, Real alpha_s, Real alpha_t, std::span<double> out) {
    const Real K = static_cast<Real>(x.size());
    const Real a_ts = alpha_t / alpha_s;
    const Real offset = (1 - a_ts) * (1 - alpha_s) / K;
    const Real denom = K * alpha_t * static_cast<Real>(x[z_t]) + 1 - alpha_t;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const Real xj = x[j];
        Real num = (alpha_s - alpha_t) * xj + offset;
        if (static_cast<int>(j) == z_t) num += K * alpha_t * xj + (a_ts - alpha_t);
        out[j] = static_cast<double>(num / denom);
    }
}

}  // namespace

Prior Prior::uniform(int K) {
    require(K >= 2, "prior: K must be at least 2");
    return Prior(PriorKind::uniform, K, -1);
}

Prior Prior::masked(int K, int mask_index) {
    require(K >= 2, "prior: K must be at least 2");
    if (mask_index < 0) mask_index = K - 1;
    require(mask_index < K, "prior: mask index out of range");
    return Prior(PriorKind::masked, K, mask_index);
}

double Prior::prob(int j) const {
    if (kind_ == PriorKind::uniform) return 1.0 / K_;
    return j == mask_ ? 1.0 : 0.0;
}

std::vector<double> Prior::probs() const {
    std::vector<double> p(K_);
    for (int j = 0; j < K_; ++j) p[j] = prob(j);
    return p;
}

void Prior::check_token(int j) const { require(j >= 0 && j < K_, "token index out of range"); }

std::vector<double> one_hot(int K, int index) {
    require(index >= 0 && index < K, "one_hot: index out of range");
    std::vector<double> v(K, 0.0);
    v[index] = 1.0;
    return v;
}

void forward_marginal(const Prior& prior, int x, double alpha, std::span<double> out) {
    prior.check_token(x);
    require(alpha >= 0.0 && alpha <= 1.0, "forward_marginal: alpha must lie in [0,1]");
    require(out.size() == static_cast<std::size_t>(prior.K()), "forward_marginal: output size");
    for (int j = 0; j < prior.K(); ++j) out[j] = (1.0 - alpha) * prior.prob(j);
    out[x] += alpha;
}

std::vector<double> forward_marginal(const Prior& prior, int x, double alpha) {
    std::vector<double> out(prior.K());
    forward_marginal(prior, x, alpha, out);
    return out;
}

void forward_marginal(const Prior& prior, std::span<const double> x, double alpha, std::span<double> out) {
    require(alpha >= 0.0 && alpha <= 1.0, "forward_marginal: alpha must lie in [0,1]");
    for (int j = 0; j < prior.K(); ++j) out[j] = alpha * x[j] + (1.0 - alpha) * prior.prob(j);
}

void mdm_posterior(const Prior& prior, std::span<const double> x, int z_t, double alpha_s, double alpha_t,
                   std::span<double> out) {
    require(prior.is_masked(), "mdm_posterior: prior must be masked");
    require(x.size() == static_cast<std::size_t>(prior.K()) && out.size() == x.size(), "mdm_posterior: size");
    prior.check_token(z_t);
    check_pair(alpha_s, alpha_t);
    if (z_t != prior.mask()) {
        // Unmasked tokens never change on the reverse path.
        std::fill(out.begin(), out.end(), 0.0);
        out[z_t] = 1.0;
        return;
    }
    if (alpha_t >= 1.0) throw NumericalError("mdm_posterior: alpha_t = 1 makes the posterior degenerate");
    const double wx = (alpha_s - alpha_t) / (1.0 - alpha_t);
    const double wm = (1.0 - alpha_s) / (1.0 - alpha_t);
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = wx * x[j];
    out[prior.mask()] += wm;
    normalize(out);
}

void usdm_posterior(std::span<const double> x, int z_t, double alpha_s, double alpha_t, std::span<double> out) {
    require(x.size() >= 2 && out.size() == x.size(), "usdm_posterior: size");
    require(z_t >= 0 && static_cast<std::size_t>(z_t) < x.size(), "usdm_posterior: token out of range");
    check_pair(alpha_s, alpha_t);
    if (alpha_s == 0.0) {
        if (alpha_t != 0.0) throw std::invalid_argument("usdm_posterior: alpha_s = 0");
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(x.size()));
        return;
    }
    const double denom = static_cast<double>(x.size()) * alpha_t * x[z_t] + 1.0 - alpha_t;
    if (denom < 1e-300) {
        usdm_kernel<long double>(x, z_t, alpha_s, alpha_t, out);
    } else {
        usdm_kernel<double>(x, z_t, alpha_s, alpha_t, out);
    }
    normalize(out);
}

void reverse_posterior(const Prior& prior, std::span<const double> x, int z_t, double alpha_s, double alpha_t,
                       std::span<double> out) {
    if (prior.is_masked()) {
        mdm_posterior(prior, x, z_t, alpha_s, alpha_t, out);
    } else {
        usdm_posterior(x, z_t, alpha_s, alpha_t, out);
    }
}

std::vector<double> reverse_posterior(const Prior& prior, std::span<const double> x, int z_t, double alpha_s,
                                      double alpha_t) {
    std::vector<double> out(prior.K());
    reverse_posterior(prior, x, z_t, alpha_s, alpha_t, out);
    return out;
}

void q0t_posterior(const Prior& prior, std::span<const double> x, int z_t, double alpha_t, std::span<double> out) {
    if (prior.is_masked()) {
        prior.check_token(z_t);
        std::copy(x.begin(), x.end(), out.begin());
        normalize(out);
        return;
    }
    usdm_posterior(x, z_t, 1.0, alpha_t, out);
}

void psi_posterior_true(const Prior& prior, int x, int z_t, double kappa, double alpha_s, double alpha_t,
                        std::span<double> out) {
    require(kappa >= 0.0 && kappa <= 1.0, "psi_posterior: kappa must lie in [0,1]");
    const auto xo = one_hot(prior.K(), x);
    forward_marginal(prior, x, alpha_s, out);
    if (kappa == 0.0) return;
    auto& q = scratch(0, prior.K());
    const std::span<double> qs(q.data(), prior.K());
    reverse_posterior(prior, xo, z_t, alpha_s, alpha_t, qs);
    for (int j = 0; j < prior.K(); ++j) out[j] = kappa * qs[j] + (1.0 - kappa) * out[j];
    normalize(out);
}

std::vector<double> psi_posterior_true(const Prior& prior, int x, int z_t, double kappa, double alpha_s,
                                       double alpha_t) {
    std::vector<double> out(prior.K());
    psi_posterior_true(prior, x, z_t, kappa, alpha_s, alpha_t, out);
    return out;
}

void psi_posterior_model(const Prior& prior, std::span<const double> x_theta, int z_t, double kappa,
                         double alpha_s, double alpha_t, std::span<double> out) {
    require(kappa >= 0.0 && kappa <= 1.0, "psi_posterior: kappa must lie in [0,1]");
    require(x_theta.size() == static_cast<std::size_t>(prior.K()) && out.size() == x_theta.size(),
            "psi_posterior_model: size");
    const std::size_t K = x_theta.size();
    auto& a = scratch(0, K);
    auto& b = scratch(1, K);
    const std::span<double> q_st(a.data(), K);
    const std::span<double> q_0t(b.data(), K);
    if (kappa > 0.0) {
        reverse_posterior(prior, x_theta, z_t, alpha_s, alpha_t, q_st);
    } else {
        std::fill(q_st.begin(), q_st.end(), 0.0);
    }
    if (kappa < 1.0) {
        q0t_posterior(prior, x_theta, z_t, alpha_t, q_0t);
    } else {
        std::fill(q_0t.begin(), q_0t.end(), 0.0);
    }
    for (std::size_t j = 0; j < K; ++j) {
        const double fwd = alpha_s * q_0t[j] + (1.0 - alpha_s) * prior.prob(static_cast<int>(j));
        out[j] = kappa * q_st[j] + (1.0 - kappa) * fwd;
    }
    normalize(out);
}

std::vector<double> psi_posterior_model(const Prior& prior, std::span<const double> x_theta, int z_t,
                                        double kappa, double alpha_s, double alpha_t) {
    std::vector<double> out(prior.K());
    psi_posterior_model(prior, x_theta, z_t, kappa, alpha_s, alpha_t, out);
    return out;
}

void remdm_posterior(const Prior& prior, std::span<const double> x, int z_t, double sigma, double alpha_s,
                     double alpha_t, std::span<double> out) {
    require(prior.is_masked(), "remdm_posterior: prior must be masked");
    require(x.size() == static_cast<std::size_t>(prior.K()) && out.size() == x.size(), "remdm_posterior: size");
    prior.check_token(z_t);
    check_pair(alpha_s, alpha_t);
    require(sigma >= 0.0 && sigma <= remdm_sigma_max(alpha_s, alpha_t) + 1e-15,
            "remdm_posterior: sigma outside [0, sigma_max]");
    const int m = prior.mask();
    if (z_t != m) {
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = (1.0 - sigma) * x[j];
        out[m] += sigma;
    } else {
        if (alpha_t >= 1.0) throw NumericalError("remdm_posterior: alpha_t = 1 makes the posterior degenerate");
        const double wx = (alpha_s - (1.0 - sigma) * alpha_t) / (1.0 - alpha_t);
        const double wm = (1.0 - alpha_s - sigma * alpha_t) / (1.0 - alpha_t);
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = wx * x[j];
        out[m] += wm;
    }
    for (double& v : out) v = std::max(v, 0.0);
    normalize(out);
}

std::vector<double> remdm_posterior(const Prior& prior, std::span<const double> x, int z_t, double sigma,
                                    double alpha_s, double alpha_t) {
    std::vector<double> out(prior.K());
    remdm_posterior(prior, x, z_t, sigma, alpha_s, alpha_t, out);
    return out;
}

void apply_carry_over(const Prior& prior, std::span<const int> z, std::span<double> x_theta) {
    if (!prior.is_masked()) return;
    const std::size_t K = prior.K();
    require(x_theta.size() == z.size() * K, "apply_carry_over: size mismatch");
    for (std::size_t l = 0; l < z.size(); ++l) {
        if (z[l] == prior.mask()) continue;
        auto row = x_theta.subspan(l * K, K);
        std::fill(row.begin(), row.end(), 0.0);
        row[z[l]] = 1.0;
    }
}

std::vector<double> step_kappas(const TimeGrid& grid, const KappaSchedule& kappa) {
    std::vector<double> out(grid.steps());
    for (int i = 1; i <= grid.steps(); ++i) {
        out[i - 1] = kappa.eval(grid.times[i], grid.alphas[i - 1], grid.alphas[i]);
    }
    return out;
}

std::vector<std::vector<double>> psi_chain_marginals(const Prior& prior, int x, const TimeGrid& grid,
                                                     std::span<const double> kappas) {
    const int T = grid.steps();
    const int K = prior.K();
    require(kappas.size() == static_cast<std::size_t>(T), "psi_chain_marginals: one kappa per step");
    std::vector<std::vector<double>> rows(T + 1, std::vector<double>(K, 0.0));
    rows[T] = prior.probs();
    std::vector<double> step(K);
    for (int i = T; i >= 1; --i) {
        auto& next = rows[i - 1];
        for (int z = 0; z < K; ++z) {
            const double pz = rows[i][z];
            if (pz == 0.0) continue;
            psi_posterior_true(prior, x, z, kappas[i - 1], grid.alphas[i - 1], grid.alphas[i], step);
            for (int j = 0; j < K; ++j) next[j] += pz * step[j];
        }
    }
    return rows;
}

double psi_marginal_deviation(const Prior& prior, const TimeGrid& grid, std::span<const double> kappas) {
    double worst = 0.0;
    for (int x = 0; x < prior.K(); ++x) {
        if (prior.is_masked() && x == prior.mask()) continue;
        const auto rows = psi_chain_marginals(prior, x, grid, kappas);
        for (int i = 0; i <= grid.steps(); ++i) {
            const auto q = forward_marginal(prior, x, grid.alphas[i]);
            worst = std::max(worst, total_variation(rows[i], q));
        }
    }
    return worst;
}

}  // namespace psidiff
