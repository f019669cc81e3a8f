#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace psidiff {

// Empirical frequencies of `codes` over [0, n_categories).
std::vector<double> empirical_distribution(std::span<const std::size_t> codes, std::size_t n_categories);

struct TvEstimate {
    double tv = 0.0;
    double stderr = 0.0;
};

// TV between an empirical distribution from n draws and the truth. The
// standard error is the sum of per-category binomial errors, halved.
TvEstimate tv_with_stderr(std::span<const double> empirical, std::span<const double> truth, std::size_t n);

// Entropy (nats) of the pooled token frequencies.
double unigram_entropy(std::span<const std::vector<int>> samples, int K);

double ks_two_sample(std::vector<double> a, std::vector<double> b);
// Asymptotic critical value sqrt(-ln(alpha/2) (n+m) / (2nm)).
double ks_critical_value(std::size_t n, std::size_t m, double alpha);
double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf);
double ks_critical_value(std::size_t n, double alpha);

// Pearson chi-squared statistic and upper-tail p-value.
struct ChiSquared {
    double statistic = 0.0;
    double dof = 0.0;
    double p_value = 0.0;
};
ChiSquared chi_squared_test(std::span<const double> observed, std::span<const double> expected);

double quantile(std::vector<double> v, double q);

}  // namespace psidiff
