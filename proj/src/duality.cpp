#include "psidiff/duality.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "psidiff/numerics.hpp"

namespace psidiff {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kQuadTol = 1e-13;
constexpr double kHalfWidth = 14.0;
constexpr int kFitNodes = 2048;
constexpr double kTailTolerance = 1e-14;

// Integrates over unit-length pieces of [a, b] with adaptive Gauss-Kronrod.
template <class F>
double integrate(F f, double a, double b, const char* what) {
    using boost::math::quadrature::gauss_kronrod;
    double total = 0.0;
    double total_l1 = 0.0;
    double total_err = 0.0;
    for (double lo = a; lo < b; lo += 1.0) {
        const double hi = std::min(b, lo + 1.0);
        double err = 0.0;
        double l1 = 0.0;
        total += gauss_kronrod<double, 61>::integrate(f, lo, hi, 12, kQuadTol, &err, &l1);
        total_err += err;
        total_l1 += l1;
    }
    if (total_err > 1e-10 * std::max(total_l1, 1e-300) && total_err > 1e-300) {
        std::ostringstream os;
        os << what << ": quadrature did not converge (error estimate " << total_err << ", L1 " << total_l1 << ")";
        throw NumericalError(os.str());
    }
    return total;
}

double phi_pow(int K, double z) { return std::exp((K - 1.0) * log_ndtr(z)); }

double nu_of(double alpha_bar) { return alpha_bar / std::sqrt(1.0 - alpha_bar * alpha_bar); }

void check_alpha_bar(double alpha_bar) {
    require(alpha_bar >= 0.0 && alpha_bar <= 1.0, "transform: alpha_bar must lie in [0,1]");
}

double moment(int K, int n) {
    const double upper = std::sqrt(static_cast<double>(n)) + kHalfWidth;
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    auto f = [&](double z) {
        if (z <= 0.0) return n == 0 ? normal_pdf(0.0) * (phi_pow(K, z) + phi_pow(K, -z)) : 0.0;
        const double w = std::exp(n * std::log(z) - 0.5 * z * z - kLogSqrt2Pi);
        return w * (phi_pow(K, z) + sign * phi_pow(K, -z));
    };
    return integrate(f, 0.0, upper, "build_transform_cache");
}

struct SeriesSums {
    double value;
    double slope;
    double last_term;
};

SeriesSums series_sums(const TransformCache& c, double alpha_bar) {
    const double nu = nu_of(alpha_bar);
    SeriesSums s{0.0, 0.0, 0.0};
    if (nu == 0.0) {
        s.value = c.M(0);
        s.slope = c.I(0);
        return s;
    }
    // w_n = nu^n exp(-nu^2/2) / n!, by recurrence; below the ceiling nu < 8
    // so the leading factor stays well inside double range.
    double w = std::exp(-0.5 * nu * nu);
    for (int n = 0; n < c.n_terms; ++n) {
        if (n > 0) w *= nu / n;
        const double term = w * c.M(n);
        s.value += term;
        s.slope += w * (c.I(n) - nu * c.M(n));
        if (n == c.n_terms - 1) s.last_term = std::max(std::abs(term), std::abs(w * c.I(n)));
    }
    return s;
}

double scale(int K) { return static_cast<double>(K) / (K - 1.0); }

// The tail is interpolated in u = 1/nu on [0, 1/nu(ceiling)], where the map
// is smooth; in alpha_bar it has a square-root singularity at 1.
double tail_coordinate(const TransformCache& c, double alpha_bar) {
    const double u_max = 1.0 / nu_of(c.series_ceiling);
    const double u = std::sqrt(1.0 - alpha_bar * alpha_bar) / alpha_bar;
    return 2.0 * u / u_max - 1.0;
}

double clenshaw(const std::vector<double>& coef, double x) {
    double b1 = 0.0;
    double b2 = 0.0;
    for (std::size_t j = coef.size(); j-- > 1;) {
        const double b0 = 2.0 * x * b1 - b2 + coef[j];
        b2 = b1;
        b1 = b0;
    }
    return x * b1 - b2 + coef[0];
}

std::vector<double> chebyshev_fit(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<double> coef(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += values[i] * std::cos(std::numbers::pi * j * (i + 0.5) / n);
        }
        coef[j] = (j == 0 ? 1.0 : 2.0) * sum / n;
    }
    return coef;
}

void build_tail(TransformCache& c) {
    const int n = TransformCache::kTailNodes;
    std::vector<double> values(n);
    std::vector<double> slopes(n);
    for (int i = 0; i < n; ++i) {
        const double x = std::cos(std::numbers::pi * (i + 0.5) / n);
        const double u = 0.5 * (x + 1.0) / nu_of(c.series_ceiling);
        const double a = 1.0 / std::sqrt(1.0 + u * u);
        values[i] = transform_quadrature(c.K, a);
        slopes[i] = transform_derivative_quadrature(c.K, a, 1.0) * std::pow(1.0 - a * a, 1.5);
    }
    c.tail_value = chebyshev_fit(values);
    c.tail_slope = chebyshev_fit(slopes);
}


void write_double(std::ostream& os, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, res.ptr - buf);
}

double read_double(std::istream& is) {
    std::string tok;
    if (!(is >> tok)) throw std::runtime_error("transform cache: truncated file");
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw std::runtime_error("transform cache: bad number '" + tok + "'");
    }
    return v;
}

void expect(std::istream& is, const std::string& word) {
    std::string tok;
    if (!(is >> tok) || tok != word) throw std::runtime_error("transform cache: expected '" + word + "'");
}

void write_list(std::ostream& os, const char* name, const std::vector<double>& v) {
    os << name << ' ' << v.size();
    for (double x : v) {
        os << ' ';
        write_double(os, x);
    }
    os << '\n';
}

std::vector<double> read_list(std::istream& is, const char* name, std::size_t expected) {
    expect(is, name);
    std::size_t count = 0;
    is >> count;
    if (!is || count != expected) throw std::runtime_error(std::string("transform cache: bad size for ") + name);
    std::vector<double> v(count);
    for (auto& x : v) x = read_double(is);
    return v;
}

}  // namespace

double transform_quadrature(int K, double alpha_bar) {
    require(K >= 2, "transform: K must be at least 2");
    check_alpha_bar(alpha_bar);
    if (alpha_bar >= 1.0) return 1.0;
    const double nu = nu_of(alpha_bar);
    auto f = [&](double u) { return normal_pdf(u) * phi_pow(K, u + nu); };
    const double mass = integrate(f, -kHalfWidth, kHalfWidth, "transform_quadrature");
    return scale(K) * (mass - 1.0 / K);
}

double transform_derivative_quadrature(int K, double alpha_bar, double alpha_bar_prime) {
    require(K >= 2, "transform: K must be at least 2");
    check_alpha_bar(alpha_bar);
    if (alpha_bar >= 1.0 || alpha_bar_prime == 0.0) return 0.0;
    const double nu = nu_of(alpha_bar);
    auto f = [&](double u) { return u * normal_pdf(u) * phi_pow(K, u + nu); };
    const double slope = integrate(f, -kHalfWidth, kHalfWidth, "transform_derivative_quadrature");
    return scale(K) * slope * alpha_bar_prime / std::pow(1.0 - alpha_bar * alpha_bar, 1.5);
}

double series_tail_ratio(const TransformCache& cache, double alpha_bar) {
    check_alpha_bar(alpha_bar);
    if (alpha_bar >= 1.0) return std::numeric_limits<double>::infinity();
    const auto s = series_sums(cache, alpha_bar);
    if (!std::isfinite(s.value) || !std::isfinite(s.last_term)) return std::numeric_limits<double>::infinity();
    return s.last_term / std::max(s.value, 1e-300);
}

double transform_series(const TransformCache& cache, double alpha_bar) {
    check_alpha_bar(alpha_bar);
    if (alpha_bar > cache.series_ceiling) {
        std::ostringstream os;
        os << "transform_series: alpha_bar " << alpha_bar << " exceeds the usable ceiling " << cache.series_ceiling
           << " for K=" << cache.K << ", " << cache.n_terms << " terms";
        throw NumericalError(os.str());
    }
    const auto s = series_sums(cache, alpha_bar);
    return scale(cache.K) * (s.value - 1.0 / cache.K);
}

double transform_derivative(const TransformCache& cache, double alpha_bar, double alpha_bar_prime) {
    check_alpha_bar(alpha_bar);
    if (alpha_bar_prime == 0.0) return 0.0;
    if (alpha_bar > cache.series_ceiling) {
        std::ostringstream os;
        os << "transform_derivative: alpha_bar " << alpha_bar << " exceeds the usable ceiling "
           << cache.series_ceiling;
        throw NumericalError(os.str());
    }
    const auto s = series_sums(cache, alpha_bar);
    return scale(cache.K) * s.slope * alpha_bar_prime / std::pow(1.0 - alpha_bar * alpha_bar, 1.5);
}

double transform_polynomial(const TransformCache& cache, double alpha_bar) {
    check_alpha_bar(alpha_bar);
    double v = 0.0;
    for (auto it = cache.poly.rbegin(); it != cache.poly.rend(); ++it) v = v * alpha_bar + *it;
    return v;
}

TransformPoint transform_point(const TransformCache& cache, double alpha_bar, double alpha_bar_prime) {
    check_alpha_bar(alpha_bar);
    if (alpha_bar >= 1.0) return {1.0, 0.0};
    if (alpha_bar <= cache.series_ceiling) {
        const auto s = series_sums(cache, alpha_bar);
        const double d = alpha_bar_prime == 0.0 ? 0.0
                                                : scale(cache.K) * s.slope * alpha_bar_prime /
                                                      std::pow(1.0 - alpha_bar * alpha_bar, 1.5);
        return {scale(cache.K) * (s.value - 1.0 / cache.K), d};
    }
    if (cache.tail_value.empty()) {
        return {transform_quadrature(cache.K, alpha_bar),
                transform_derivative_quadrature(cache.K, alpha_bar, alpha_bar_prime)};
    }
    const double x = tail_coordinate(cache, alpha_bar);
    return {clenshaw(cache.tail_value, x),
            clenshaw(cache.tail_slope, x) * alpha_bar_prime / std::pow(1.0 - alpha_bar * alpha_bar, 1.5)};
}

double transform(const TransformCache& cache, double alpha_bar) { return transform_point(cache, alpha_bar, 0.0).value; }

double transform_dt(const TransformCache& cache, double alpha_bar, double alpha_bar_prime) {
    return transform_point(cache, alpha_bar, alpha_bar_prime).derivative;
}

TransformCache build_transform_cache(int K, int n_terms) {
    require(K >= 2, "build_transform_cache: K must be at least 2");
    require(n_terms >= 1, "build_transform_cache: n_terms must be positive");
    TransformCache c;
    c.K = K;
    c.n_terms = n_terms;
    c.moments.resize(n_terms + 1);
    for (int n = 0; n <= n_terms; ++n) c.moments[n] = moment(K, n);

    c.series_ceiling = 1.0;
    for (int j = 0; j <= 1000; ++j) {
        const double a = j * 1e-3;
        if (!(series_tail_ratio(c, a) < kTailTolerance)) {
            c.series_ceiling = (j - 1) * 1e-3;
            break;
        }
    }
    if (c.series_ceiling < 0.0) throw NumericalError("build_transform_cache: series does not converge at 0");
    build_tail(c);

    std::vector<double> nodes(kFitNodes);
    std::vector<double> targets(kFitNodes);
    for (int j = 0; j < kFitNodes; ++j) {
        nodes[j] = 0.5 * (1.0 - std::cos(std::numbers::pi * (j + 0.5) / kFitNodes));
        targets[j] = transform(c, nodes[j]);
    }
    const int deg = TransformCache::kPolyDegree;
    Eigen::MatrixXd A(kFitNodes, deg + 1);
    Eigen::VectorXd b(kFitNodes);
    for (int j = 0; j < kFitNodes; ++j) {
        double p = 1.0;
        for (int d = 0; d <= deg; ++d) {
            A(j, d) = p;
            p *= nodes[j];
        }
        b(j) = targets[j];
    }
    const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
    c.poly.assign(coef.data(), coef.data() + deg + 1);

    double worst = 0.0;
    for (int j = 0; j < kFitNodes; ++j) worst = std::max(worst, std::abs(transform_polynomial(c, nodes[j]) - targets[j]));
    for (int j = 0; j <= 1000; ++j) {
        const double a = j * 1e-3;
        worst = std::max(worst, std::abs(transform_polynomial(c, a) - transform(c, a)));
    }
    c.poly_max_abs_error = worst;
    return c;
}

std::string serialize_cache(const TransformCache& c) {
    std::ostringstream os;
    os << "psidiff-transform-cache " << TransformCache::kFormatVersion << '\n';
    os << "K " << c.K << '\n';
    os << "n_terms " << c.n_terms << '\n';
    os << "series_ceiling ";
    write_double(os, c.series_ceiling);
    os << "\npoly_max_abs_error ";
    write_double(os, c.poly_max_abs_error);
    os << "\npoly " << c.poly.size();
    for (double v : c.poly) {
        os << ' ';
        write_double(os, v);
    }
    os << '\n';
    write_list(os, "tail_value", c.tail_value);
    write_list(os, "tail_slope", c.tail_slope);
    os << "moments " << c.moments.size() << '\n';
    for (double v : c.moments) {
        write_double(os, v);
        os << '\n';
    }
    os << "end\n";
    return os.str();
}

TransformCache parse_cache(const std::string& text) {
    std::istringstream is(text);
    TransformCache c;
    int version = 0;
    expect(is, "psidiff-transform-cache");
    if (!(is >> version) || version != TransformCache::kFormatVersion) {
        throw std::runtime_error("transform cache: unsupported format version");
    }
    expect(is, "K");
    is >> c.K;
    expect(is, "n_terms");
    is >> c.n_terms;
    expect(is, "series_ceiling");
    c.series_ceiling = read_double(is);
    expect(is, "poly_max_abs_error");
    c.poly_max_abs_error = read_double(is);
    std::size_t count = 0;
    expect(is, "poly");
    is >> count;
    if (count != TransformCache::kPolyDegree + 1) throw std::runtime_error("transform cache: bad polynomial size");
    c.poly.resize(count);
    for (auto& v : c.poly) v = read_double(is);
    c.tail_value = read_list(is, "tail_value", TransformCache::kTailNodes);
    c.tail_slope = read_list(is, "tail_slope", TransformCache::kTailNodes);
    expect(is, "moments");
    is >> count;
    if (!is || c.K < 2 || c.n_terms < 1 || count != static_cast<std::size_t>(c.n_terms) + 1) {
        throw std::runtime_error("transform cache: header does not match moment count");
    }
    c.moments.resize(count);
    for (auto& v : c.moments) v = read_double(is);
    expect(is, "end");
    return c;
}

void save_cache(const TransformCache& cache, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write transform cache: " + path.string());
    out << serialize_cache(cache);
    if (!out) throw std::runtime_error("failed writing transform cache: " + path.string());
}

TransformCache load_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read transform cache: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_cache(buf.str());
}

TransformCache load_or_build_cache(const std::filesystem::path& path, int K, int n_terms, bool* reused) {
    if (reused) *reused = false;
    if (std::filesystem::exists(path)) {
        auto c = load_cache(path);
        if (c.K == K && c.n_terms == n_terms) {
            if (reused) *reused = true;
            return c;
        }
    }
    auto c = build_transform_cache(K, n_terms);
    save_cache(c, path);
    return c;
}

}  // namespace psidiff
