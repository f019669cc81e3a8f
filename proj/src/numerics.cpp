#include "psidiff/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

#include <boost/math/special_functions/erf.hpp>

namespace psidiff {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Asymptotic expansion of log Phi(x) for x << 0:
// Phi(x) ~ phi(x)/|x| * sum_n (-1)^n (2n-1)!! / x^{2n}.
double log_ndtr_left_tail(double x) {
    const double x2 = x * x;
    double term = 1.0;
    double sum = 1.0;
    for (int n = 1; n <= 12; ++n) {
        term *= -(2.0 * n - 1.0) / x2;
        sum += term;
    }
    return -0.5 * x2 - kLogSqrt2Pi - std::log(-x) + std::log(sum);
}

}  // namespace

double log_ndtr(double x) {
    if (std::isnan(x)) throw NumericalError("log_ndtr: NaN argument");
    if (x == std::numeric_limits<double>::infinity()) return 0.0;
    if (x == -std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
    if (x > 0.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
    if (x > -35.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    return log_ndtr_left_tail(x);
}

double ndtr(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

double normal_upper_quantile(double q) {
    if (!(q > 0.0) || !(q < 1.0)) throw NumericalError("normal_upper_quantile: argument outside (0,1)");
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

double log_add_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

void normalize(std::span<double> p) {
    double s = 0.0;
    for (double x : p) s += x;
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericalError("normalize: total mass is not positive");
    for (double& x : p) x /= s;
}

bool is_simplex(std::span<const double> p, double tol) {
    double s = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) return false;
        s += x;
    }
    return std::abs(s - 1.0) <= tol;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    require(p.size() == q.size(), "total_variation: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

void floor_and_normalize(std::span<double> p, double floor) {
    for (double& x : p) x = std::max(x, floor);
    normalize(p);
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = n * w / workers;
        const std::size_t hi = n * (w + 1) / workers;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace psidiff
