#pragma once

#include <string>
#include <vector>

namespace psidiff {

struct AlphaValue {
    double alpha;
    double alpha_prime;
};

enum class NoiseKind { log_linear, cosine };

// Signal level alpha(t) on t in [0,1]. The same type serves the discrete
// process and the Gaussian side (alpha_bar, with sigma = sqrt(1 - alpha_bar^2)).
class NoiseSchedule {
public:
    static NoiseSchedule log_linear(double eps = 1e-5);
    static NoiseSchedule cosine();

    AlphaValue eval(double t) const;
    double alpha(double t) const { return eval(t).alpha; }

    NoiseKind kind() const { return kind_; }
    double eps() const { return eps_; }
    std::string name() const;

private:
    NoiseSchedule(NoiseKind kind, double eps) : kind_(kind), eps_(eps) {}
    NoiseKind kind_;
    double eps_;
};

enum class KappaKind { constant, cap, rescale, loop, window };

// Corrector strength kappa(t, alpha_s, alpha_t) in [0,1]. The cap, rescale and
// loop kinds are parameterized by a remasking probability sigma and converted
// with kappa = 1 - sigma / (1 - alpha_s).
class KappaSchedule {
public:
    static KappaSchedule constant(double kappa);
    static KappaSchedule cap(double eta);
    static KappaSchedule rescale(double eta);
    // sigma = min(eta, sigma_max) while t lies in (t_off, t_on]; outside the window the step is
    // a plain ancestral step. Pair with make_time_grid, which holds alpha fixed
    // across the window.
    static KappaSchedule loop(double eta, double t_on, double t_off);
    // kappa = value inside (t_off, t_on], 1 elsewhere.
    static KappaSchedule window(double value, double t_on, double t_off);

    double eval(double t, double alpha_s, double alpha_t) const;
    // Remasking probability implied by the schedule (cap, rescale, loop).
    double sigma(double t, double alpha_s, double alpha_t) const;
    bool in_window(double t) const { return t > t_off_ && t <= t_on_; }

    KappaKind kind() const { return kind_; }
    double value() const { return value_; }
    double eta() const { return eta_; }
    double t_on() const { return t_on_; }
    double t_off() const { return t_off_; }
    std::string name() const;

private:
    KappaSchedule(KappaKind kind, double value, double eta, double t_on, double t_off)
        : kind_(kind), value_(value), eta_(eta), t_on_(t_on), t_off_(t_off) {}
    KappaKind kind_;
    double value_;
    double eta_;
    double t_on_;
    double t_off_;
};

// Upper bound on the ReMDM remasking probability.
double remdm_sigma_max(double alpha_s, double alpha_t);

// Discretization t_i = i/T with the signal level at every grid point.
// alphas[T] is pinned to 0 so the chain starts exactly at the prior. For loop
// schedules alpha follows a piecewise-linear path: 0 -> alpha(t_on) on
// [t_on, 1], constant on [t_off, t_on], then up to 1 at t = 0.
struct TimeGrid {
    std::vector<double> times;
    std::vector<double> alphas;

    int steps() const { return static_cast<int>(times.size()) - 1; }
};

TimeGrid make_time_grid(int steps, const NoiseSchedule& noise, const KappaSchedule& kappa);

}  // namespace psidiff
