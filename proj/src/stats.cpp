#include "psidiff/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "psidiff/numerics.hpp"

namespace psidiff {

std::vector<double> empirical_distribution(std::span<const std::size_t> codes, std::size_t n_categories) {
    std::vector<double> p(n_categories, 0.0);
    for (auto c : codes) {
        require(c < n_categories, "empirical_distribution: code out of range");
        p[c] += 1.0;
    }
    if (!codes.empty()) {
        for (double& v : p) v /= static_cast<double>(codes.size());
    }
    return p;
}

TvEstimate tv_with_stderr(std::span<const double> empirical, std::span<const double> truth, std::size_t n) {
    require(n > 0, "tv_with_stderr: no samples");
    TvEstimate e;
    e.tv = total_variation(empirical, truth);
    double se = 0.0;
    for (double p : truth) se += std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    e.stderr = 0.5 * se;
    return e;
}

double unigram_entropy(std::span<const std::vector<int>> samples, int K) {
    std::vector<double> counts(K, 0.0);
    double total = 0.0;
    for (const auto& s : samples) {
        for (int v : s) {
            require(v >= 0 && v < K, "unigram_entropy: token out of range");
            counts[v] += 1.0;
            total += 1.0;
        }
    }
    if (total == 0.0) return 0.0;
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) h -= (c / total) * std::log(c / total);
    }
    return h;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double ks_critical_value(std::size_t n, std::size_t m, double alpha) {
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    return std::sqrt(-0.5 * std::log(alpha / 2.0) * (nn + mm) / (nn * mm));
}

double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf) {
    require(!a.empty(), "ks_one_sample: empty sample");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double f = cdf(a[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

double ks_critical_value(std::size_t n, double alpha) {
    return std::sqrt(-0.5 * std::log(alpha / 2.0) / static_cast<double>(n));
}

ChiSquared chi_squared_test(std::span<const double> observed, std::span<const double> expected) {
    require(observed.size() == expected.size() && observed.size() >= 2, "chi_squared_test: bad sizes");
    ChiSquared r;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        require(expected[i] > 0.0, "chi_squared_test: expected counts must be positive");
        const double d = observed[i] - expected[i];
        r.statistic += d * d / expected[i];
    }
    r.dof = static_cast<double>(observed.size() - 1);
    r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(r.dof), r.statistic));
    return r;
}

double quantile(std::vector<double> v, double q) {
    require(!v.empty() && q >= 0.0 && q <= 1.0, "quantile: bad input");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace psidiff
