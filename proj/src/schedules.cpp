#include "psidiff/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "psidiff/numerics.hpp"

namespace psidiff {

NoiseSchedule NoiseSchedule::log_linear(double eps) {
    require(eps > 0.0 && eps < 0.5, "log-linear schedule: eps must lie in (0, 0.5)");
    return NoiseSchedule(NoiseKind::log_linear, eps);
}

NoiseSchedule NoiseSchedule::cosine() { return NoiseSchedule(NoiseKind::cosine, 0.0); }

AlphaValue NoiseSchedule::eval(double t) const {
    require(t >= 0.0 && t <= 1.0, "eval_alpha: t must lie in [0,1]");
    switch (kind_) {
    case NoiseKind::log_linear: {
        const double a = 1.0 - t;
        if (a > 1.0 - eps_) return {1.0 - eps_, 0.0};
        if (a < eps_) return {eps_, 0.0};
        return {a, -1.0};
    }
    case NoiseKind::cosine: {
        const double c = std::cos(0.5 * std::numbers::pi * t);
        return {c * c, -0.5 * std::numbers::pi * std::sin(std::numbers::pi * t)};
    }
    }
    return {0.0, 0.0};
}

std::string NoiseSchedule::name() const {
    return kind_ == NoiseKind::log_linear ? "log-linear" : "cosine";
}

KappaSchedule KappaSchedule::constant(double kappa) {
    require(kappa >= 0.0 && kappa <= 1.0, "kappa schedule: constant must lie in [0,1]");
    return KappaSchedule(KappaKind::constant, kappa, 0.0, 0.0, 0.0);
}

KappaSchedule KappaSchedule::cap(double eta) {
    require(eta >= 0.0 && eta <= 1.0, "kappa schedule: eta must lie in [0,1]");
    return KappaSchedule(KappaKind::cap, 1.0, eta, 0.0, 0.0);
}

KappaSchedule KappaSchedule::rescale(double eta) {
    require(eta >= 0.0 && eta <= 1.0, "kappa schedule: eta must lie in [0,1]");
    return KappaSchedule(KappaKind::rescale, 1.0, eta, 0.0, 0.0);
}

KappaSchedule KappaSchedule::loop(double eta, double t_on, double t_off) {
    require(eta >= 0.0 && eta <= 1.0, "kappa schedule: eta must lie in [0,1]");
    require(t_off > 0.0 && t_on > t_off && t_on < 1.0, "kappa schedule: need 0 < t_off < t_on < 1");
    return KappaSchedule(KappaKind::loop, 1.0, eta, t_on, t_off);
}

KappaSchedule KappaSchedule::window(double value, double t_on, double t_off) {
    require(value >= 0.0 && value <= 1.0, "kappa schedule: window value must lie in [0,1]");
    require(t_on > t_off && t_off >= 0.0 && t_on <= 1.0, "kappa schedule: need 0 <= t_off < t_on <= 1");
    return KappaSchedule(KappaKind::window, value, 0.0, t_on, t_off);
}

double remdm_sigma_max(double alpha_s, double alpha_t) {
    if (alpha_t <= 0.0) return 1.0;
    return std::min(1.0, (1.0 - alpha_s) / alpha_t);
}

double KappaSchedule::sigma(double t, double alpha_s, double alpha_t) const {
    switch (kind_) {
    case KappaKind::cap:
        return std::min(eta_, remdm_sigma_max(alpha_s, alpha_t));
    case KappaKind::rescale:
        return eta_ * remdm_sigma_max(alpha_s, alpha_t);
    case KappaKind::loop:
        return in_window(t) ? std::min(eta_, remdm_sigma_max(alpha_s, alpha_t)) : 0.0;
    case KappaKind::constant:
    case KappaKind::window:
        return (1.0 - eval(t, alpha_s, alpha_t)) * (1.0 - alpha_s);
    }
    return 0.0;
}

double KappaSchedule::eval(double t, double alpha_s, double alpha_t) const {
    require(alpha_t >= 0.0 && alpha_t <= alpha_s && alpha_s <= 1.0,
            "eval_kappa: need 0 <= alpha_t <= alpha_s <= 1");
    double kappa = 1.0;
    switch (kind_) {
    case KappaKind::constant:
        kappa = value_;
        break;
    case KappaKind::window:
        kappa = in_window(t) ? value_ : 1.0;
        break;
    case KappaKind::cap:
    case KappaKind::rescale:
    case KappaKind::loop: {
        const double s = sigma(t, alpha_s, alpha_t);
        if (s == 0.0) return 1.0;
        if (alpha_s >= 1.0) throw NumericalError("eval_kappa: alpha_s = 1 with nonzero sigma");
        kappa = 1.0 - s / (1.0 - alpha_s);
        break;
    }
    }
    return std::clamp(kappa, 0.0, 1.0);
}

std::string KappaSchedule::name() const {
    std::ostringstream os;
    switch (kind_) {
    case KappaKind::constant:
        os << "constant(" << value_ << ")";
        break;
    case KappaKind::cap:
        os << "cap(" << eta_ << ")";
        break;
    case KappaKind::rescale:
        os << "rescale(" << eta_ << ")";
        break;
    case KappaKind::loop:
        os << "loop(" << eta_ << ";" << t_on_ << ";" << t_off_ << ")";
        break;
    case KappaKind::window:
        os << "window(" << value_ << ";" << t_on_ << ";" << t_off_ << ")";
        break;
    }
    return os.str();
}

TimeGrid make_time_grid(int steps, const NoiseSchedule& noise, const KappaSchedule& kappa) {
    require(steps >= 1, "time grid: steps must be positive");
    TimeGrid grid;
    grid.times.resize(steps + 1);
    grid.alphas.resize(steps + 1);
    const double t_on = kappa.t_on();
    const double t_off = kappa.t_off();
    const double alpha_on = kappa.kind() == KappaKind::loop ? noise.alpha(t_on) : 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        grid.times[i] = t;
        if (kappa.kind() != KappaKind::loop) {
            grid.alphas[i] = noise.alpha(t);
        } else if (t > t_on) {
            grid.alphas[i] = std::min(alpha_on, alpha_on * (1.0 - t) / (1.0 - t_on));
        } else if (t >= t_off) {
            grid.alphas[i] = alpha_on;
        } else {
            grid.alphas[i] = std::max(alpha_on, alpha_on + (1.0 - alpha_on) * (t_off - t) / t_off);
        }
    }
    grid.alphas[steps] = 0.0;
    return grid;
}

}  // namespace psidiff
