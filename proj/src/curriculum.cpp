#include "psidiff/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "psidiff/numerics.hpp"

namespace psidiff {

namespace {

// log of sum(exp(values/tau)) + sum(exp(extra)) without a temporary buffer.
double log_normalizer(std::span<const double> values, double tau, std::span<const double> extra) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) m = std::max(m, v / tau);
    for (double e : extra) m = std::max(m, e);
    double s = 0.0;
    for (double v : values) s += std::exp(v / tau - m);
    for (double e : extra) s += std::exp(e - m);
    return m + std::log(s);
}

// Distinct indices from [0, K) \ {o}, in uniformly random order.
std::vector<int> indices_excluding(int K, int o, int count, Rng& rng) {
    auto picks = floyd_sample(K - 1, count, rng);
    std::shuffle(picks.begin(), picks.end(), rng.engine());
    std::vector<int> out(count);
    for (int i = 0; i < count; ++i) out[i] = static_cast<int>(picks[i] >= o ? picks[i] + 1 : picks[i]);
    return out;
}

void finish(TopKDraw& d, double tau) {
    d.log_weights.resize(d.values.size());
    for (std::size_t i = 0; i < d.values.size(); ++i) d.log_weights[i] = d.values[i] / tau - d.log_normalizer;
}

}  // namespace

CurriculumParams CurriculumParams::at(int K, int k, double tau, double alpha_bar) {
    CurriculumParams p;
    p.K = K;
    p.k = k;
    p.tau = tau;
    p.alpha_bar = alpha_bar;
    p.sigma = std::sqrt(std::max(0.0, 1.0 - alpha_bar * alpha_bar));
    p.validate();
    return p;
}

void CurriculumParams::validate() const {
    require(K >= 2, "curriculum: K must be at least 2");
    require(k >= 1 && k <= K, "curriculum: need 1 <= k <= K");
    require(tau > 0.0, "curriculum: tau must be positive");
    require(alpha_bar >= 0.0 && alpha_bar < 1.0, "curriculum: alpha_bar must lie in [0,1)");
    require(sigma > 0.0, "curriculum: sigma must be positive");
    require(std::abs(alpha_bar * alpha_bar + sigma * sigma - 1.0) <= 1e-12,
            "curriculum: alpha_bar^2 + sigma^2 must equal 1");
}

double TopKDraw::weight(std::size_t i) const { return std::exp(log_weights.at(i)); }

double TopKDraw::normalizer() const { return std::exp(log_normalizer); }

std::vector<double> sample_top_order_stats(std::int64_t m, double sigma, int k, Rng& rng) {
    require(k >= 1 && k <= m, "sample_top_order_stats: need 1 <= k <= m");
    require(sigma > 0.0, "sample_top_order_stats: sigma must be positive");
    std::vector<double> values(k);
    double log_v = 0.0;
    for (int i = 0; i < k; ++i) {
        log_v += std::log(rng.uniform()) / static_cast<double>(m - i);
        const double upper_mass = -std::expm1(log_v);
        if (!(upper_mass > 0.0) || !(upper_mass < 1.0)) {
            throw NumericalError("sample_top_order_stats: quantile argument underflow");
        }
        values[i] = sigma * normal_upper_quantile(upper_mass);
    }
    return values;
}

std::vector<std::int64_t> floyd_sample(std::int64_t n, int k, Rng& rng) {
    require(k >= 1 && k <= n, "floyd_sample: need 1 <= k <= n");
    std::vector<std::int64_t> s(k);
    for (int t = 0; t < k; ++t) {
        const std::int64_t hi = n - k + t;
        const auto j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi + 1)));
        const bool seen = std::find(s.begin(), s.begin() + t, j) != s.begin() + t;
        s[t] = seen ? hi : j;
    }
    // Floyd's insertion order is biased toward small values first; the picks
    // are matched to ranks, so shuffle to make the order exchangeable too.
    for (int t = k - 1; t > 0; --t)
        std::swap(s[t], s[rng.below(static_cast<std::uint64_t>(t) + 1)]);
    return s;
}

double truncated_normal_below(double cutoff, double sigma, Rng& rng) {
    require(sigma > 0.0, "truncated_normal_below: sigma must be positive");
    const double log_p = std::log(rng.uniform()) + log_ndtr(cutoff / sigma);
    if (log_p < -std::numbers::ln2) return -sigma * normal_upper_quantile(std::exp(log_p));
    return sigma * normal_upper_quantile(-std::expm1(log_p));
}

double log_conditional_exp_mean(double cutoff, double sigma, double tau) {
    require(sigma > 0.0 && tau > 0.0, "conditional_exp_mean: sigma and tau must be positive");
    require(!std::isnan(cutoff) && cutoff > -std::numeric_limits<double>::infinity(),
            "conditional_exp_mean: cutoff must be > -inf");
    const double v = sigma * sigma / (2.0 * tau * tau) - log_ndtr(cutoff / sigma) +
                     log_ndtr((cutoff - sigma * sigma / tau) / sigma);
    if (!std::isfinite(v)) throw NumericalError("conditional_exp_mean: non-finite result");
    return v;
}

TopKDraw draw_sparse_softmax(const CurriculumParams& p, int o, Rng& rng) {
    p.validate();
    require(o >= 0 && o < p.K, "draw_sparse_softmax: clean index out of range");
    const int K = p.K;
    const int k = p.k;
    TopKDraw d;
    const int drawn = std::min(k, K - 1);
    std::vector<double> top = sample_top_order_stats(K - 1, p.sigma, drawn, rng);
    const double w_o = p.alpha_bar + p.sigma * rng.normal();
    d.special_value = w_o;

    if (k == K) {
        // Every entry is simulated; nothing to approximate.
        const int r = static_cast<int>(std::count_if(top.begin(), top.end(), [&](double v) { return v > w_o; }));
        std::vector<int> others = indices_excluding(K, o, K - 1, rng);
        d.values.reserve(K);
        d.indices.reserve(K);
        d.values.assign(top.begin(), top.begin() + r);
        d.values.push_back(w_o);
        d.values.insert(d.values.end(), top.begin() + r, top.end());
        d.indices.assign(others.begin(), others.begin() + r);
        d.indices.push_back(o);
        d.indices.insert(d.indices.end(), others.begin() + r, others.end());
        d.delta = true;
        d.log_normalizer = log_normalizer(d.values, p.tau, {});
        finish(d, p.tau);
        return d;
    }

    if (w_o > top[k - 1]) {
        // The clean entry enters the top k and displaces the k-th value.
        const int r = static_cast<int>(std::count_if(top.begin(), top.end(), [&](double v) { return v > w_o; }));
        double cutoff = top[k - 1];
        if (p.cutoff == DisplacedCutoff::retained) cutoff = k >= 2 ? top[k - 2] : w_o;
        const double log_mu = log_conditional_exp_mean(cutoff, p.sigma, p.tau);
        std::vector<int> others = indices_excluding(K, o, k - 1, rng);
        d.values.reserve(k);
        d.indices.reserve(k);
        d.values.assign(top.begin(), top.begin() + r);
        d.values.push_back(w_o);
        d.values.insert(d.values.end(), top.begin() + r, top.begin() + (k - 1));
        d.indices.assign(others.begin(), others.begin() + r);
        d.indices.push_back(o);
        d.indices.insert(d.indices.end(), others.begin() + r, others.end());
        d.delta = true;
        d.displaced = top[k - 1];
        const double unsampled[] = {std::log(static_cast<double>(K - k)) + log_mu};
        d.log_normalizer = log_normalizer(d.values, p.tau, unsampled);
    } else {
        const double log_mu = log_conditional_exp_mean(top[k - 1], p.sigma, p.tau);
        d.values = std::move(top);
        d.indices = indices_excluding(K, o, k, rng);
        d.delta = false;
        const int rest = K - k - 1;
        if (rest > 0) {
            const double extra[] = {w_o / p.tau, std::log(static_cast<double>(rest)) + log_mu};
            d.log_normalizer = log_normalizer(d.values, p.tau, extra);
        } else {
            const double extra[] = {w_o / p.tau};
            d.log_normalizer = log_normalizer(d.values, p.tau, extra);
        }
    }
    finish(d, p.tau);
    return d;
}

void draw_gaussian_latent(int o, double alpha_bar, double sigma, Rng& rng, std::span<double> w) {
    require(o >= 0 && static_cast<std::size_t>(o) < w.size(), "draw_gaussian_latent: clean index out of range");
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = sigma * rng.normal();
    w[o] += alpha_bar;
}

TopKDraw top_k_of(std::span<const double> w, int k, double tau, int o) {
    const int K = static_cast<int>(w.size());
    require(k >= 1 && k <= K, "top_k_of: need 1 <= k <= K");
    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        return w[a] > w[b] || (w[a] == w[b] && a < b);
    });
    TopKDraw d;
    d.values.resize(k);
    d.indices.assign(order.begin(), order.begin() + k);
    for (int i = 0; i < k; ++i) d.values[i] = w[d.indices[i]];
    d.special_value = w[o];
    d.delta = std::find(d.indices.begin(), d.indices.end(), o) != d.indices.end();
    d.log_normalizer = log_normalizer(w, tau, {});
    finish(d, tau);
    return d;
}

TopKDraw draw_dense_softmax(const CurriculumParams& p, int o, Rng& rng) {
    p.validate();
    std::vector<double> w(p.K);
    draw_gaussian_latent(o, p.alpha_bar, p.sigma, rng, w);
    return top_k_of(w, p.k, p.tau, o);
}

std::vector<double> curriculum_embed(const TopKDraw& draw, std::span<const double> table, int dim) {
    require(dim >= 1 && table.size() % dim == 0, "curriculum_embed: table size must be a multiple of dim");
    const auto rows = static_cast<std::int64_t>(table.size() / dim);
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < draw.indices.size(); ++i) {
        const int idx = draw.indices[i];
        if (idx < 0 || idx >= rows) throw std::out_of_range("curriculum_embed: index outside the embedding table");
        const double wgt = draw.weight(i);
        for (int c = 0; c < dim; ++c) out[c] += wgt * table[static_cast<std::size_t>(idx) * dim + c];
    }
    return out;
}

}  // namespace psidiff
