#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace psidiff {

// Precomputed state for the Gaussian-to-discrete signal map
//   T(a) = K/(K-1) * [ int phi(z - nu) Phi(z)^{K-1} dz - 1/K ],  nu = a / sqrt(1 - a^2).
struct TransformCache {
    static constexpr int kFormatVersion = 1;
    static constexpr int kPolyDegree = 9;

    int K = 0;
    int n_terms = 0;
    // M_n = int z^n phi(z) Phi(z)^{K-1} dz for n = 0..n_terms; I_n is M_{n+1}.
    std::vector<double> moments;
    // c_0..c_9, evaluated as sum c_j a^j.
    std::vector<double> poly;
    double poly_max_abs_error = 0.0;
    // Largest a on a 1e-3 grid where the truncated series is converged.
    double series_ceiling = 0.0;
    // Above the ceiling: Chebyshev coefficients in u = 1/nu over
    // [0, 1/nu(series_ceiling)] for the map and for (1 - a^2)^{3/2} dT/da,
    // interpolated from quadrature.
    static constexpr int kTailNodes = 48;
    std::vector<double> tail_value;
    std::vector<double> tail_slope;

    double M(int n) const { return moments.at(n); }
    double I(int n) const { return moments.at(n + 1); }
};

TransformCache build_transform_cache(int K, int n_terms = 150);

// Direct adaptive quadrature; independent of any cache.
double transform_quadrature(int K, double alpha_bar);
// d/dt of the map by quadrature, given alpha_bar'(t).
double transform_derivative_quadrature(int K, double alpha_bar, double alpha_bar_prime);

// Series in cached moments. Throws NumericalError above the series ceiling.
double transform_series(const TransformCache& cache, double alpha_bar);
double transform_derivative(const TransformCache& cache, double alpha_bar, double alpha_bar_prime);

double transform_polynomial(const TransformCache& cache, double alpha_bar);

// Series below the ceiling, the tail interpolant above it; valid on [0,1].
double transform(const TransformCache& cache, double alpha_bar);
double transform_dt(const TransformCache& cache, double alpha_bar, double alpha_bar_prime);

struct TransformPoint {
    double value;
    double derivative;  // d/dt, given alpha_bar'(t)
};
// transform and transform_dt from one series evaluation.
TransformPoint transform_point(const TransformCache& cache, double alpha_bar, double alpha_bar_prime);

// Magnitude of the last retained series term relative to the partial sum.
double series_tail_ratio(const TransformCache& cache, double alpha_bar);

// Sidecar file (text, versioned). Serialization round-trips exactly.
std::string serialize_cache(const TransformCache& cache);
TransformCache parse_cache(const std::string& text);
void save_cache(const TransformCache& cache, const std::filesystem::path& path);
TransformCache load_cache(const std::filesystem::path& path);

// Loads the sidecar when it matches (K, n_terms); otherwise builds and writes it.
TransformCache load_or_build_cache(const std::filesystem::path& path, int K, int n_terms, bool* reused = nullptr);

}  // namespace psidiff
