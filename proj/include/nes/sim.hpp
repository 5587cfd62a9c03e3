#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "nes/errors.hpp"
#include "nes/model.hpp"
#include "nes/ode.hpp"

namespace nes {

struct TimeSpan {
    double start = 0;
    double end = 0;
};

/// Default evaluation horizons: nominal damping and the weakly damped primary.
inline constexpr double kNominalHorizon = 50.0;
inline constexpr double kLowDampingHorizon = 130.0;

struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    NondimParams params;
    // Energy dissipated since span.start per channel (ground, primary, attachment), 2-zeta
    // coefficients, integrated alongside the motion. May be empty for hand-built trajectories.
    std::vector<std::array<double, 3>> dissipated;
};

/// Largest initial displacement or velocity; states are integrated divided by this, so the
/// absolute tolerance is relative to the impulse size.
inline double amplitude_scale(const State& ic) {
    const double s = ic.flat().cwiseAbs().maxCoeff();
    return s > 0 ? s : 1.0;
}

/// Integrates the motion together with the three cumulative dissipation integrals.
inline Trajectory integrate(const NondimParams& params, const State& ic, TimeSpan span, const IntegratorConfig& cfg) {
    params.validate();
    if (ic.dof() != 3) throw DomainError("integrate: expected a three-mass initial state");
    const double scale = amplitude_scale(ic);
    Eigen::VectorXd motion(6), dmotion(6);
    auto f = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        motion = scale * y.head(6);
        rhs_flat(params, motion, dmotion);
        const DissipationPower pw = dissipation_power(params, State::from_flat(motion));
        dy.resize(9);
        dy << dmotion / scale, Eigen::Vector3d(pw.ground, pw.primary, pw.attachment) / (scale * scale);
    };
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(9);
    y0.head(6) = ic.flat() / scale;
    OdeSolution sol = integrate_ode(f, y0, span.start, span.end, cfg);
    Trajectory traj;
    traj.params = params;
    traj.times = std::move(sol.t);
    traj.states.reserve(sol.y.size());
    traj.dissipated.reserve(sol.y.size());
    const double s2 = scale * scale;
    for (const auto& y : sol.y) {
        traj.states.push_back(State::from_flat(scale * y.head(6)));
        traj.dissipated.push_back({s2 * y(6), s2 * y(7), s2 * y(8)});
    }
    return traj;
}

/// Only the state at span.end.
inline State final_state(const NondimParams& params, const State& ic, TimeSpan span, const IntegratorConfig& cfg) {
    params.validate();
    const double scale = amplitude_scale(ic);
    auto f = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        rhs_flat(params, scale * y, dy);
        dy /= scale;
    };
    OdeSolution sol =
        integrate_ode(f, ic.flat() / scale, span.start, span.end, cfg.endpoints_only(span.end - span.start));
    return State::from_flat(scale * sol.y.back());
}

inline State chain_final_state(const ChainParams& params, const State& ic, TimeSpan span, const IntegratorConfig& cfg) {
    params.validate();
    const double scale = amplitude_scale(ic);
    auto f = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        chain_rhs_flat(params, scale * y, dy);
        dy /= scale;
    };
    OdeSolution sol =
        integrate_ode(f, ic.flat() / scale, span.start, span.end, cfg.endpoints_only(span.end - span.start));
    return State::from_flat(scale * sol.y.back());
}

struct EnergyTrace {
    std::vector<double> times;
    std::vector<double> primary_fraction;
    std::vector<double> nes_fraction;
    // Cumulative dissipated energy per channel, normalized by the starting energy.
    std::vector<double> diss_ground;
    std::vector<double> diss_primary;
    std::vector<double> diss_attachment;
};

/// Energy fractions relative to the energy at the first sample. Dissipation comes from the
/// integrated channels when present, otherwise from trapezoidal quadrature of the sampled power.
inline EnergyTrace energy_trace(const Trajectory& traj,
                                DissipationConvention conv = DissipationConvention::energy_consistent) {
    if (traj.states.empty()) throw DomainError("energy_trace: empty trajectory");
    const auto& p = traj.params;
    const double e_start = total_energy(p, traj.states.front());
    if (!(e_start > 0)) throw DomainError("energy_trace: zero starting energy");

    const std::size_t n = traj.states.size();
    EnergyTrace tr;
    tr.times = traj.times;
    tr.primary_fraction.resize(n);
    tr.nes_fraction.resize(n);
    tr.diss_ground.assign(n, 0.0);
    tr.diss_primary.assign(n, 0.0);
    tr.diss_attachment.assign(n, 0.0);

    const bool integrated = traj.dissipated.size() == n;
    const double scale = (conv == DissipationConvention::energy_consistent ? 1.0 : 0.5) / e_start;
    DissipationPower prev = dissipation_power(p, traj.states[0], conv);
    for (std::size_t i = 0; i < n; ++i) {
        const State& s = traj.states[i];
        tr.primary_fraction[i] = primary_energy(p, s) / e_start;
        tr.nes_fraction[i] = nes_energy(p, s) / e_start;
        if (integrated) {
            tr.diss_ground[i] = scale * (traj.dissipated[i][0] - traj.dissipated[0][0]);
            tr.diss_primary[i] = scale * (traj.dissipated[i][1] - traj.dissipated[0][1]);
            tr.diss_attachment[i] = scale * (traj.dissipated[i][2] - traj.dissipated[0][2]);
            continue;
        }
        if (i == 0) continue;
        const DissipationPower cur = dissipation_power(p, s, conv);
        const double half_dt = 0.5 * (traj.times[i] - traj.times[i - 1]) / e_start;
        tr.diss_ground[i] = tr.diss_ground[i - 1] + half_dt * (prev.ground + cur.ground);
        tr.diss_primary[i] = tr.diss_primary[i - 1] + half_dt * (prev.primary + cur.primary);
        tr.diss_attachment[i] = tr.diss_attachment[i - 1] + half_dt * (prev.attachment + cur.attachment);
        prev = cur;
    }
    return tr;
}

/// E_primary(tau_eval) / E_start after an impulse v0 on mass 1.
inline double primary_fraction_at(const NondimParams& params, double v0, double tau_eval, const IntegratorConfig& cfg) {
    if (v0 == 0) throw DomainError("primary_fraction_at: zero impulse");
    const State end = final_state(params, State::impulse(v0), {0.0, tau_eval}, cfg);
    return primary_energy(params, end) / (0.5 * v0 * v0);
}

inline double chain_primary_fraction_at(const ChainParams& params, double v0, double tau_eval,
                                        const IntegratorConfig& cfg) {
    if (v0 == 0) throw DomainError("chain_primary_fraction_at: zero impulse");
    const auto dof = static_cast<Eigen::Index>(params.n) + 1;
    const State end = chain_final_state(params, State::impulse(v0, dof), {0.0, tau_eval}, cfg);
    return chain_primary_energy(params, end) / (0.5 * v0 * v0);
}

struct ThresholdOptions {
    double drop_criterion = 0.2;  // primary fraction below which energy transfer counts as triggered
    double resolution = 1e-3;
    IntegratorConfig integrator{};
};

/// Smallest impulse whose primary fraction at tau_eval drops below the criterion, refined by
/// bisection between the last grid point above and the first below. Empty if never met.
inline std::optional<double> detect_threshold(const NondimParams& params, const std::vector<double>& v_grid,
                                              double tau_eval, const ThresholdOptions& opt = {}) {
    if (v_grid.empty()) throw DomainError("detect_threshold: empty velocity grid");
    for (std::size_t i = 1; i < v_grid.size(); ++i)
        if (!(v_grid[i] > v_grid[i - 1])) throw DomainError("detect_threshold: velocity grid must be ascending");
    if (!(tau_eval > 0)) throw DomainError("detect_threshold: tau_eval must be positive");

    auto triggered = [&](double v) { return primary_fraction_at(params, v, tau_eval, opt.integrator) < opt.drop_criterion; };

    for (std::size_t i = 0; i < v_grid.size(); ++i) {
        if (!triggered(v_grid[i])) continue;
        if (i == 0) return v_grid[0];
        double lo = v_grid[i - 1], hi = v_grid[i];
        while (hi - lo > opt.resolution) {
            const double mid = 0.5 * (lo + hi);
            if (triggered(mid)) hi = mid;
            else lo = mid;
        }
        return hi;
    }
    return std::nullopt;
}

}  // namespace nes
