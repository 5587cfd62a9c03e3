#pragma once

// Adaptive Dormand-Prince 5(4) integrator with the classic fourth-order
// continuous extension, sampling the solution on a uniform output grid.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nes/errors.hpp"

namespace nes {

struct IntegratorConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = 1.0;
    double dense_output_dt = 0.01;

    void validate() const {
        if (!(rel_tol > 0 && rel_tol <= 1e-2)) throw DomainError("rel_tol must lie in (0, 1e-2]");
        if (!(abs_tol > 0 && abs_tol <= 1e-2)) throw DomainError("abs_tol must lie in (0, 1e-2]");
        if (!(max_step > 0)) throw DomainError("max_step must be positive");
        if (!(dense_output_dt > 0)) throw DomainError("dense_output_dt must be positive");
    }

    /// Same tolerances, storing only the end points.
    IntegratorConfig endpoints_only(double span) const {
        IntegratorConfig c = *this;
        c.dense_output_dt = span;
        return c;
    }
};

struct OdeSolution {
    std::vector<double> t;
    std::vector<Eigen::VectorXd> y;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
};

namespace detail {

// Butcher tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
// Fifth minus embedded fourth order weights.
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output.
inline constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                        d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                        d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

inline double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1,
                         const IntegratorConfig& cfg) {
    double acc = 0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
        const double r = err(i) / sc;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(err.size(), 1)));
}

}  // namespace detail

/// Integrates y' = f(t, y) over [t0, t1] and samples at t0 + i * dense_output_dt (and t1).
/// `f` has signature void(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy).
template <class F>
OdeSolution integrate_ode(F&& f, Eigen::VectorXd y0, double t0, double t1, const IntegratorConfig& cfg) {
    using namespace detail;
    cfg.validate();
    if (!(t1 > t0)) throw DomainError("integrate_ode: need t1 > t0");
    const Eigen::Index n = y0.size();

    OdeSolution sol;
    const double dt_out = cfg.dense_output_dt;
    const auto n_out = static_cast<std::size_t>(std::floor((t1 - t0) / dt_out * (1.0 + 1e-12)));
    sol.t.reserve(n_out + 2);
    sol.y.reserve(n_out + 2);
    sol.t.push_back(t0);
    sol.y.push_back(y0);
    std::size_t next_out = 1;
    auto out_time = [&](std::size_t i) { return t0 + static_cast<double>(i) * dt_out; };

    Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), y1(n), err(n);
    Eigen::VectorXd r2(n), r3(n), r4(n), r5(n);
    f(t0, y0, k1);

    // Initial step (Hairer, Norsett & Wanner).
    double h;
    {
        const auto scale = [&](const Eigen::VectorXd& v) {
            double s = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double sc = cfg.abs_tol + cfg.rel_tol * std::abs(y0(i));
                s += (v(i) / sc) * (v(i) / sc);
            }
            return std::sqrt(s / static_cast<double>(std::max<Eigen::Index>(n, 1)));
        };
        const double dnf = scale(k1), dny = scale(y0);
        double h0 = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
        h0 = std::min(h0, cfg.max_step);
        ytmp = y0 + h0 * k1;
        f(t0 + h0, ytmp, k2);
        const double der2 = scale(k2 - k1) / h0;
        const double der12 = std::max(der2, dnf);
        const double h1 = der12 <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / der12, 0.2);
        h = std::min({100 * h0, h1, cfg.max_step, t1 - t0});
    }

    double t = t0;
    Eigen::VectorXd y = std::move(y0);
    bool last_rejected = false;
    while (t < t1) {
        if (t + h > t1) h = t1 - t;
        if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)))
            throw StiffnessError("step size underflow at t = " + std::to_string(t), t);

        ytmp = y + h * (a21 * k1);
        f(t + c2 * h, ytmp, k2);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        f(t + c3 * h, ytmp, k3);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        f(t + c4 * h, ytmp, k4);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        f(t + c5 * h, ytmp, k5);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        f(t + h, ytmp, k6);
        y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        f(t + h, y1, k7);
        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        const double en = error_norm(err, y, y1, cfg);
        if (!std::isfinite(en)) {
            h *= 0.2;
            last_rejected = true;
            ++sol.rejected_steps;
            continue;
        }
        if (en <= 1.0) {
            const double t_new = t + h;
            // Dense output between t and t_new.
            if (next_out <= n_out && out_time(next_out) <= t_new) {
                r2 = y1 - y;
                r3 = h * k1 - r2;
                r4 = r2 - h * k7 - r3;
                r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                while (next_out <= n_out && out_time(next_out) <= t_new) {
                    const double ts = out_time(next_out);
                    const double th = (ts - t) / h;
                    const double th1 = 1.0 - th;
                    sol.t.push_back(ts);
                    sol.y.push_back(y + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5))));
                    ++next_out;
                }
            }
            t = t_new;
            y = y1;
            k1 = k7;
            ++sol.accepted_steps;
            double fac = en == 0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            if (last_rejected) fac = std::min(fac, 1.0);
            h = std::min(h * fac, cfg.max_step);
            last_rejected = false;
        } else {
            h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
            last_rejected = true;
            ++sol.rejected_steps;
        }
    }
    if (sol.t.back() < t1 - 1e-12 * std::max(1.0, std::abs(t1))) {
        sol.t.push_back(t1);
        sol.y.push_back(y);
    } else {
        sol.t.back() = t1;
        sol.y.back() = y;
    }
    return sol;
}

}  // namespace nes
