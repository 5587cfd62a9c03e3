#pragma once

// Complexification-averaging reduction of the primary + NES system.
//
//   full (6 real)  ->  slow flow u in C^3  ->  super-slow z1, z2 (4 real)
//                 ->  2-D system in z2 with z1 eliminated analytically
//                 ->  undamped Hamiltonian in z2 = x + j y with averaged forcing.
//
// Slow variables: u1 = phi1 - phi2, u2 = phi2 - phi3, u3 = phi1 + mu phi2 + eps phi3, with
// phi_i = (x_i' + j w x_i) e^{-j w tau}. Super-slow scaling u = sqrt(eps) z.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "nes/errors.hpp"
#include "nes/model.hpp"
#include "nes/ode.hpp"
#include "nes/sim.hpp"

namespace nes {

using cplx = std::complex<double>;
inline constexpr cplx kJ{0.0, 1.0};

struct AveragingWindow {
    double start = 0.0;
    double end = kNominalHorizon;

    double length() const { return end - start; }
};

struct ReductionOptions {
    std::optional<double> omega;  // overrides the in-phase closed form
    AveragingWindow window{};
};

/// In-phase resonance frequency from (1 + mu + eps) w^2 = 1.
inline double fast_frequency(const NondimParams& p) { return 1.0 / std::sqrt(1.0 + p.mu + p.eps); }

inline double resolve_omega(const NondimParams& p, const ReductionOptions& opt) {
    const double w = opt.omega.value_or(fast_frequency(p));
    if (!(w > 0)) throw DomainError("fast frequency must be positive");
    return w;
}

struct ComplexSeries {
    std::vector<double> times;
    std::vector<Eigen::VectorXcd> values;

    std::vector<double> abs_of(Eigen::Index component) const {
        std::vector<double> out;
        out.reserve(values.size());
        for (const auto& v : values) out.push_back(std::abs(v(component)));
        return out;
    }
};

/// Integrates a complex system by splitting into real and imaginary parts.
/// `f` has signature void(double tau, const Eigen::VectorXcd& z, Eigen::VectorXcd& dz).
template <class F>
ComplexSeries integrate_complex(F&& f, const Eigen::VectorXcd& z0, TimeSpan span, const IntegratorConfig& cfg) {
    const Eigen::Index n = z0.size();
    Eigen::VectorXd y0(2 * n);
    y0 << z0.real(), z0.imag();
    Eigen::VectorXcd z(n), dz(n);
    auto real_rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        z.real() = y.head(n);
        z.imag() = y.tail(n);
        f(t, z, dz);
        dy.resize(2 * n);
        dy << dz.real(), dz.imag();
    };
    OdeSolution sol = integrate_ode(real_rhs, y0, span.start, span.end, cfg);
    ComplexSeries out;
    out.times = std::move(sol.t);
    out.values.reserve(sol.y.size());
    for (const auto& y : sol.y) {
        Eigen::VectorXcd v(n);
        v.real() = y.head(n);
        v.imag() = y.tail(n);
        out.values.push_back(std::move(v));
    }
    return out;
}

// -- slow flow -----------------------------------------------------------------

struct SlowModel {
    double omega = 0;
    double mu = 0, eps = 0;
    Eigen::Matrix3cd c;  // u' + c u + nonlinear = 0
    double g1 = 0;       // 3C / (8 mu w^3), gain of |u2|^2 u2 in the u1 equation
    double g2 = 0;       // 3C (mu + eps) / (8 mu eps w^3), gain in the u2 equation
};

inline SlowModel slow_model(const NondimParams& p, double omega) {
    p.validate();
    if (!(omega > 0)) throw DomainError("slow_model: omega must be positive");
    const double mu = p.mu, eps = p.eps, k12 = p.k12, z1 = p.zeta1, z12 = p.zeta12, z3 = p.zeta3;
    const double C = p.C();
    const double w = omega, w2 = w * w, D = 1.0 + eps + mu;
    const cplx j = kJ;

    const cplx N1 = mu + 2.0 * j * mu * z1 * w + 2.0 * j * z12 * w + 2.0 * j * mu * z12 * w - mu * w2;
    const cplx c11 = -j *
                     (mu * mu + k12 * (1.0 + mu) * D + 2.0 * j * mu * mu * z1 * w + 2.0 * j * z12 * w +
                      4.0 * j * mu * z12 * w + 2.0 * j * mu * mu * z12 * w - mu * w2 - mu * mu * w2 + eps * N1) /
                     (2.0 * mu * D * w);
    const cplx c12 = (-2.0 * (1.0 + mu) * z3 * w + eps * (-2.0 * z3 * w + mu * (-j + 2.0 * z1 * w))) / (2.0 * mu * D * w);
    const cplx c13 = (-j + 2.0 * z1 * w) / (2.0 * D * w);
    const cplx c21 = j * (k12 + 2.0 * j * z12 * w) / (2.0 * mu * w);
    const cplx c22 = z3 / eps + z3 / mu + j * w / 2.0;
    const cplx c31 = (eps + mu) * (-j + 2.0 * z1 * w) / (2.0 * D * w);
    const cplx c32 = eps * (-j + 2.0 * z1 * w) / (2.0 * D * w);
    const cplx c33 = (2.0 * z1 * w + j * (-1.0 + D * w2)) / (2.0 * D * w);

    SlowModel m;
    m.omega = w;
    m.mu = mu;
    m.eps = eps;
    m.c << c11, c12, c13, c21, c22, cplx{0.0}, c31, c32, c33;
    m.g1 = 3.0 * C / (8.0 * mu * w * w2);
    m.g2 = 3.0 * C * (mu + eps) / (8.0 * mu * eps * w * w2);
    return m;
}

inline Eigen::Vector3cd slow_rhs(const SlowModel& m, const Eigen::Vector3cd& u) {
    Eigen::Vector3cd du = -(m.c * u);
    const cplx cubic = std::norm(u(1)) * u(1);
    du(0) -= kJ * m.g1 * cubic;
    du(1) += kJ * m.g2 * cubic;
    return du;
}

/// Slow-variable state right after an impulse v0 on mass 1.
inline Eigen::Vector3cd slow_ic(double v0) { return {cplx{v0}, cplx{0.0}, cplx{v0}}; }

inline ComplexSeries integrate_slow(const SlowModel& m, const Eigen::Vector3cd& u0, TimeSpan span,
                                   const IntegratorConfig& cfg) {
    auto f = [&m](double, const Eigen::VectorXcd& u, Eigen::VectorXcd& du) {
        du = slow_rhs(m, Eigen::Vector3cd(u));
    };
    return integrate_complex(f, Eigen::VectorXcd(u0), span, cfg);
}

struct EnvelopeSeries {
    std::vector<double> times;
    std::vector<Eigen::Vector3cd> phi;
    std::vector<Eigen::Vector3cd> u;

    std::vector<double> abs_u(Eigen::Index component) const {
        std::vector<double> out;
        out.reserve(u.size());
        for (const auto& v : u) out.push_back(std::abs(v(component)));
        return out;
    }
};

/// Complex envelopes of a full-order trajectory, for comparison against the slow flow.
inline EnvelopeSeries envelope_from_full(const Trajectory& traj, double omega) {
    const double mu = traj.params.mu, eps = traj.params.eps;
    EnvelopeSeries env;
    env.times = traj.times;
    env.phi.reserve(traj.states.size());
    env.u.reserve(traj.states.size());
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const State& s = traj.states[i];
        const cplx rot = std::exp(-kJ * omega * traj.times[i]);
        Eigen::Vector3cd phi;
        for (Eigen::Index k = 0; k < 3; ++k) phi(k) = (s.v(k) + kJ * omega * s.x(k)) * rot;
        env.phi.push_back(phi);
        env.u.emplace_back(phi(0) - phi(1), phi(1) - phi(2), phi(0) + mu * phi(1) + eps * phi(2));
    }
    return env;
}

// -- super-slow flow -------------------------------------------------------------

struct SuperSlowModel {
    cplx chat11, chat13, chat21, chat22;
    cplx c31;        // carried over from the slow flow
    double c33 = 0;  // zeta1 / (1 + mu + eps), using (1 + mu + eps) w^2 = 1
    double omega = 0, C = 0, eps = 0;

    double cubic_gain() const { return 3.0 * C / (8.0 * omega * omega * omega); }
};

inline SuperSlowModel superslow_model(const NondimParams& p, double omega) {
    const SlowModel slow = slow_model(p, omega);
    const double mu = p.mu, eps = p.eps, k12 = p.k12, w = omega, D = 1.0 + mu + eps;
    const cplx j = kJ;
    SuperSlowModel m;
    m.chat11 = -j * mu / (2.0 * w * D) + j * w / 2.0 + (p.zeta12 - j * k12 / (2.0 * w)) * (1.0 + 1.0 / mu);
    m.chat13 = -j / (2.0 * D * w);
    m.chat21 = j * (k12 + 2.0 * j * p.zeta12 * w) / (2.0 * mu * w);
    m.chat22 = p.zeta3 / eps + j * w / 2.0;
    m.c31 = slow.c(2, 0);
    m.c33 = p.zeta1 / D;
    m.omega = w;
    m.C = p.C();
    m.eps = eps;
    return m;
}

/// (z1', z2') of the four-dimensional super-slow system; z3_0 = u3(0) / sqrt(eps).
inline std::pair<cplx, cplx> superslow4_rhs(const SuperSlowModel& m, cplx z1, cplx z2, double tau, cplx z3_0) {
    const cplx dz1 = -m.chat11 * z1 - m.chat13 * (z3_0 * std::exp(-m.c33 * tau) - m.c31 * z1 * tau);
    const cplx dz2 = -m.chat21 * z1 - m.chat22 * z2 + kJ * m.cubic_gain() * std::norm(z2) * z2;
    return {dz1, dz2};
}

/// Super-slow initial values after an impulse v0 on mass 1: z = u / sqrt(eps).
struct SuperSlowIc {
    cplx z1, z2, z3;
};

inline SuperSlowIc superslow_ic(double v0, double eps) {
    const double s = std::sqrt(eps);
    return {cplx{v0 / s}, cplx{0.0}, cplx{v0 / s}};
}

inline ComplexSeries integrate_superslow4(const SuperSlowModel& m, cplx z1_0, cplx z2_0, cplx z3_0, TimeSpan span,
                                          const IntegratorConfig& cfg) {
    auto f = [&](double tau, const Eigen::VectorXcd& z, Eigen::VectorXcd& dz) {
        const auto [d1, d2] = superslow4_rhs(m, z(0), z(1), tau, z3_0);
        dz.resize(2);
        dz << d1, d2;
    };
    Eigen::VectorXcd z0(2);
    z0 << z1_0, z2_0;
    return integrate_complex(f, z0, span, cfg);
}

/// Closed-form z1(tau): complementary Gaussian-envelope part plus a slowly varying particular part.
inline cplx z1_analytic(const SuperSlowModel& m, double tau, cplx z1_0, cplx z3_0) {
    const cplx k = m.chat13 * m.c31;
    auto amplitude = [&](double t) {
        const cplx den = m.chat11 - k * t - m.c33;
        if (std::abs(den) < 1e-8) throw SingularityError("z1_analytic: particular-solution denominator vanishes");
        return -m.chat13 * z3_0 / den;
    };
    const cplx zc0 = z1_0 - amplitude(0.0);
    return zc0 * std::exp(-m.chat11 * tau + k * tau * tau / 2.0) + amplitude(tau) * std::exp(-m.c33 * tau);
}

/// The 2-D system: z2 driven by the closed-form z1.
inline cplx reduced2_rhs(const SuperSlowModel& m, cplx z2, double tau, cplx z1_0, cplx z3_0) {
    return -m.chat21 * z1_analytic(m, tau, z1_0, z3_0) - m.chat22 * z2 + kJ * m.cubic_gain() * std::norm(z2) * z2;
}

inline ComplexSeries integrate_reduced2(const SuperSlowModel& m, cplx z2_0, cplx z1_0, cplx z3_0, TimeSpan span,
                                        const IntegratorConfig& cfg) {
    auto f = [&](double tau, const Eigen::VectorXcd& z, Eigen::VectorXcd& dz) {
        dz.resize(1);
        dz(0) = reduced2_rhs(m, z(0), tau, z1_0, z3_0);
    };
    Eigen::VectorXcd z0(1);
    z0 << z2_0;
    return integrate_complex(f, z0, span, cfg);
}

/// sqrt(sum (a - b)^2 / sum a^2), the RMS mismatch of b relative to the reference a.
inline double relative_rms_mismatch(const std::vector<double>& reference, const std::vector<double>& approx) {
    if (reference.size() != approx.size() || reference.empty())
        throw DomainError("relative_rms_mismatch: series lengths differ or are empty");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        num += (reference[i] - approx[i]) * (reference[i] - approx[i]);
        den += reference[i] * reference[i];
    }
    if (!(den > 0)) throw DomainError("relative_rms_mismatch: zero reference series");
    return std::sqrt(num / den);
}

// -- averaged forcing C1, C2 ----------------------------------------------------

/// Every symbol of the conservative forcing z3(0) (C1 + j C2) at one tau.
struct ForcingTerms {
    double C1 = 0, C2 = 0;
    double alpha = 0, beta = 0;
    double A1 = 0, A2 = 0, Ap2 = 0;
    double a = 0, b = 0;
};

inline ForcingTerms c1c2(const NondimParams& p, double omega, double tau) {
    const double mu = p.mu, eps = p.eps, k12 = p.k12, w = omega, D = 1.0 + mu + eps;
    ForcingTerms f;
    f.alpha = mu / (8.0 * w * w * D * D);
    f.beta = mu / (2.0 * w * D) - w / 2.0 + k12 / (2.0 * w) * (1.0 + 1.0 / mu);
    f.a = mu * tau / (2.0 * w * D);
    f.b = -mu - k12 * (1.0 + mu) / mu * D + w * w * D;
    const double r2 = f.a * f.a + f.b * f.b;
    f.A1 = f.b / r2;
    f.A2 = f.a / r2;
    f.Ap2 = 1.0 - mu / (-mu * mu - k12 * (1.0 + mu) * D + w * w * mu * D);
    const double gain = k12 / (2.0 * mu * w);
    const double env = std::exp(-f.alpha * tau * tau);
    f.C1 = -gain * (env * (-f.Ap2 * std::sin(f.beta * tau)) - f.A2);
    f.C2 = -gain * (env * (f.Ap2 * std::cos(f.beta * tau)) + f.A1);
    return f;
}

struct MeanForcing {
    double Chat1 = 0, Chat2 = 0;
    AveragingWindow window;

    double norm2() const { return Chat1 * Chat1 + Chat2 * Chat2; }
};

/// Window averages of C1, C2 by the trapezoidal rule (step <= 1% of the window and <= 0.005).
inline MeanForcing mean_c1c2(const NondimParams& p, double omega, AveragingWindow window) {
    const double len = window.length();
    if (!(len >= 0)) throw DomainError("mean_c1c2: window end precedes start");
    if (len == 0) {
        const auto f = c1c2(p, omega, window.start);
        return {f.C1, f.C2, window};
    }
    const auto n = static_cast<std::size_t>(std::max(100.0, std::ceil(len / 0.005)));
    const double h = len / static_cast<double>(n);
    double s1 = 0, s2 = 0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double wgt = (i == 0 || i == n) ? 0.5 : 1.0;
        const auto f = c1c2(p, omega, window.start + h * static_cast<double>(i));
        s1 += wgt * f.C1;
        s2 += wgt * f.C2;
    }
    return {s1 * h / len, s2 * h / len, window};
}

// -- conservative super-slow system -------------------------------------------------

struct HamiltonianModel {
    double omega = 0;
    double C = 0;
    double Chat1 = 0, Chat2 = 0;
    double z3_0 = 0;

    double cubic_gain() const { return 3.0 * C / (8.0 * omega * omega * omega); }
    double chat_norm2() const { return Chat1 * Chat1 + Chat2 * Chat2; }

    void validate() const {
        if (!(chat_norm2() > 0)) throw DomainError("degenerate averaged forcing: Chat1^2 + Chat2^2 = 0");
        if (!(C > 0)) throw DomainError("cubic stiffness must be positive");
        if (!(omega > 0)) throw DomainError("omega must be positive");
    }
};

inline HamiltonianModel hamiltonian_model(const NondimParams& p, double omega, const MeanForcing& forcing, double z3_0) {
    return {omega, p.C(), forcing.Chat1, forcing.Chat2, z3_0};
}

inline double hamiltonian(const HamiltonianModel& hm, cplx z2) {
    const double r2 = std::norm(z2);
    const cplx h = hm.omega / 4.0 * r2 - hm.cubic_gain() * r2 * r2 / 4.0 -
                   hm.z3_0 * hm.Chat2 * (z2 + std::conj(z2)) / 2.0 - hm.z3_0 * kJ * hm.Chat1 * (z2 - std::conj(z2)) / 2.0;
    return h.real();
}

/// Which cubic term multiplies the y' equation. The time-dependent form as printed uses y; the
/// averaged form (and the Hamiltonian) use x.
enum class CubicTermForm { hamiltonian_consistent, as_printed_time_dependent };

inline std::pair<double, double> ham_rhs(const HamiltonianModel& hm, double x, double y,
                                         CubicTermForm form = CubicTermForm::hamiltonian_consistent) {
    const double g = hm.cubic_gain() * (x * x + y * y);
    const double dx = hm.omega * y / 2.0 - g * y + hm.z3_0 * hm.Chat1;
    const double cubic_y = form == CubicTermForm::hamiltonian_consistent ? g * x : g * y;
    const double dy = -hm.omega * x / 2.0 + cubic_y + hm.z3_0 * hm.Chat2;
    return {dx, dy};
}

/// a = |z2|^2 turning-point function of the h = 0 level through the origin.
inline double f_of_a(const HamiltonianModel& hm, double a) {
    const double k = hm.cubic_gain() / 4.0;  // 3C / (32 w^3)
    const double g = hm.omega * a / 4.0 - k * a * a;
    return hm.z3_0 * hm.z3_0 * a - g * g / hm.chat_norm2();
}

inline double f_prime(const HamiltonianModel& hm, double a) {
    const double k = hm.cubic_gain() / 4.0;
    const double g = hm.omega * a / 4.0 - k * a * a;
    const double dg = hm.omega / 4.0 - 2.0 * k * a;
    return hm.z3_0 * hm.z3_0 - 2.0 * g * dg / hm.chat_norm2();
}

/// Location of the saddle that becomes a double root of f in the critical case: w / (12 k).
inline double saddle_amplitude(const HamiltonianModel& hm) { return hm.omega / (3.0 * hm.cubic_gain()); }

/// All real non-negative roots of f(a) = 0, ascending; a double root is listed once.
inline std::vector<double> fixed_points(const HamiltonianModel& hm) {
    hm.validate();
    const double k = hm.cubic_gain() / 4.0;
    const double w4 = hm.omega / 4.0;
    // f(a) = a (z3^2 - q(a) / S) with q(a) = a (w/4 - k a)^2.
    auto q = [&](double a) { return a * (w4 - k * a) * (w4 - k * a); };
    const double target = hm.z3_0 * hm.z3_0 * hm.chat_norm2();
    const double a_max = w4 / (3.0 * k);  // local maximum of q
    const double a_zero = w4 / k;         // double zero of q
    const double q_max = q(a_max);

    auto bisect = [&](double lo, double hi, bool increasing) {
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            if ((q(mid) < target) == increasing) lo = mid;
            else hi = mid;
        }
        return 0.5 * (lo + hi);
    };

    std::vector<double> roots{0.0};
    if (target == 0) {
        roots.push_back(a_zero);
        return roots;
    }
    const double rel = (target - q_max) / q_max;
    if (std::abs(rel) <= 1e-10) {
        roots.push_back(a_max);
    } else if (rel < 0) {
        roots.push_back(bisect(0.0, a_max, true));
        roots.push_back(bisect(a_max, a_zero, false));
    }
    // Beyond the double zero q grows without bound; bracket the last crossing.
    double hi = 2.0 * a_zero;
    while (q(hi) < target) hi *= 2.0;
    roots.push_back(bisect(a_zero, hi, true));
    std::sort(roots.begin(), roots.end());
    return roots;
}

/// z3(0) at which two roots of f merge.
inline double z3_critical(double omega, double C, double Chat1, double Chat2) {
    const double s = Chat1 * Chat1 + Chat2 * Chat2;
    if (!(s > 0)) throw DomainError("z3_critical: degenerate averaged forcing");
    if (!(C > 0)) throw DomainError("z3_critical: cubic stiffness must be positive");
    return omega * omega * omega / 9.0 * std::sqrt(2.0 / (C * s));
}

inline double v_critical(const NondimParams& p, const ReductionOptions& opt = {}) {
    const double w = resolve_omega(p, opt);
    const MeanForcing m = mean_c1c2(p, w, opt.window);
    return std::sqrt(p.eps) * z3_critical(w, p.C(), m.Chat1, m.Chat2);
}

struct CriticalReport {
    double omega = 0;
    AveragingWindow window;
    double Chat1 = 0, Chat2 = 0;
    double z3_cr = 0;
    double v_cr = 0;
    std::vector<double> roots;  // f(a) = 0 at z3_cr
    double double_root = 0;
    double f_prime_at_double_root = 0;
};

inline CriticalReport critical_analysis(const NondimParams& p, const ReductionOptions& opt = {}) {
    p.validate();
    CriticalReport r;
    r.omega = resolve_omega(p, opt);
    r.window = opt.window;
    const MeanForcing m = mean_c1c2(p, r.omega, opt.window);
    r.Chat1 = m.Chat1;
    r.Chat2 = m.Chat2;
    r.z3_cr = z3_critical(r.omega, p.C(), m.Chat1, m.Chat2);
    r.v_cr = std::sqrt(p.eps) * r.z3_cr;
    const HamiltonianModel hm = hamiltonian_model(p, r.omega, m, r.z3_cr);
    r.roots = fixed_points(hm);
    r.double_root = saddle_amplitude(hm);
    r.f_prime_at_double_root = f_prime(hm, r.double_root);
    return r;
}

// -- homoclinic capture ------------------------------------------------------------

struct HomoclinicOptions {
    double displacement = 1e-4;  // offset of the start from the origin, along the initial flow
    double horizon = kNominalHorizon;
    double neighborhood = 0.05;  // radius in a = |z2|^2 around the saddle
    IntegratorConfig integrator{1e-12, 1e-14, 0.5, 0.01};
};

struct HomoclinicReport {
    double saddle_a = 0;
    bool entered = false;
    double entry_time = 0;
    bool stays = false;  // remains in the neighborhood from entry to the horizon
    bool captured() const { return entered && stays; }
    double min_a = 0, max_a = 0;
    bool backward_reaches_saddle = false;  // inner loop closes in reverse time
    double backward_return_distance = 0;   // |start - (forward then backward integration)|
    bool returns_to_start = false;
    std::vector<double> times;
    std::vector<double> xs, ys;  // forward orbit
};

inline HomoclinicReport homoclinic_check(const HamiltonianModel& hm, const HomoclinicOptions& opt = {}) {
    hm.validate();
    HomoclinicReport r;
    r.saddle_a = saddle_amplitude(hm);
    const double s = std::sqrt(hm.chat_norm2());
    Eigen::VectorXd start(2);
    start << opt.displacement * hm.Chat1 / s, opt.displacement * hm.Chat2 / s;

    auto fwd = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        const auto [dx, dyy] = ham_rhs(hm, y(0), y(1));
        dy.resize(2);
        dy << dx, dyy;
    };
    auto bwd = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        fwd(t, y, dy);
        dy = -dy;
    };

    const OdeSolution f = integrate_ode(fwd, start, 0.0, opt.horizon, opt.integrator);
    r.min_a = std::numeric_limits<double>::infinity();
    r.max_a = 0.0;
    std::optional<std::size_t> entry;
    bool left_after_entry = false;
    for (std::size_t i = 0; i < f.y.size(); ++i) {
        const double a = f.y[i].squaredNorm();
        r.min_a = std::min(r.min_a, a);
        r.max_a = std::max(r.max_a, a);
        const bool inside = std::abs(a - r.saddle_a) < opt.neighborhood;
        if (inside && !entry) entry = i;
        if (entry && !inside) left_after_entry = true;
        r.times.push_back(f.t[i]);
        r.xs.push_back(f.y[i](0));
        r.ys.push_back(f.y[i](1));
    }
    r.entered = entry.has_value();
    if (entry) r.entry_time = f.t[*entry];
    r.stays = r.entered && !left_after_entry;

    const OdeSolution b = integrate_ode(bwd, start, 0.0, opt.horizon, opt.integrator);
    for (const auto& y : b.y)
        if (std::abs(y.squaredNorm() - r.saddle_a) < opt.neighborhood) r.backward_reaches_saddle = true;

    const OdeSolution back = integrate_ode(bwd, f.y.back(), 0.0, opt.horizon,
                                           opt.integrator.endpoints_only(opt.horizon));
    r.backward_return_distance = (back.y.back() - start).norm();
    r.returns_to_start = r.backward_return_distance < 10.0 * opt.displacement;
    return r;
}

// -- N-DOF chain slow flow -----------------------------------------------------------

/// In-phase frequency of the chain, sum(mu_i) + eps = 1 / w^2.
inline double chain_fast_frequency(const ChainParams& c) {
    double m = c.eps;
    for (double x : c.mu) m += x;
    return 1.0 / std::sqrt(m);
}

/// Slow flow of an n-mass chain with the NES on mass n, in u_1..u_{n+1} (0-based: 0..n).
/// Linear block u_p = (u_1..u_{n-2}, u_{n+1}); nonlinear pair (u_{n-1}, u_n).
struct NdofSlowSystem {
    std::size_t n = 0;
    double omega = 0;
    Eigen::MatrixXcd c;  // full (n+1) x (n+1) coefficient matrix, u' + c u + nonlinear = 0
    std::vector<Eigen::Index> linear_indices;
    Eigen::MatrixXcd Abar;     // (n-1) x (n-1)
    Eigen::VectorXcd d1bar;    // coupling of u_{n-1} into the linear block
    Eigen::RowVectorXcd d2bar; // linear block into the u_{n-1} equation
    Eigen::RowVectorXcd d3bar; // linear block into the u_n equation
    cplx c_aa, c_ab, c_ba, c_bb;  // (n-1, n-1), (n-1, n), (n, n-1), (n, n) in 1-based indices
    double g1 = 0, g2 = 0;

    Eigen::Index idx_a() const { return static_cast<Eigen::Index>(n) - 2; }  // u_{n-1}
    Eigen::Index idx_b() const { return static_cast<Eigen::Index>(n) - 1; }  // u_n
};

inline NdofSlowSystem ndof_slow_system(const ChainParams& chain, double omega) {
    chain.validate();
    if (chain.n < 2) throw DomainError("ndof_slow_system: need at least two primary masses");
    if (!is_nes(chain.attachment)) throw DomainError("ndof_slow_system: attachment must be a cubic NES");
    if (!(omega > 0)) throw DomainError("ndof_slow_system: omega must be positive");
    const double C = attachment_stiffness(chain.attachment);
    const auto n = static_cast<Eigen::Index>(chain.n);
    const Eigen::Index dof = n + 1;
    const double w = omega;

    // Averaged phi equations: M phi' + L phi + nonlinear = 0, L = Z + j w/2 M - j/(2w) K.
    Eigen::VectorXd mass(dof);
    for (Eigen::Index i = 0; i < n; ++i) mass(i) = chain.mu[static_cast<std::size_t>(i)];
    mass(n) = chain.eps;
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(dof, dof), K = Eigen::MatrixXd::Zero(dof, dof);
    Z(0, 0) += chain.zeta[0];
    K(0, 0) += 1.0;
    auto couple = [](Eigen::MatrixXd& m, Eigen::Index i, Eigen::Index j, double v) {
        m(i, i) += v;
        m(j, j) += v;
        m(i, j) -= v;
        m(j, i) -= v;
    };
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        couple(Z, i, i + 1, chain.zeta[static_cast<std::size_t>(i) + 1]);
        couple(K, i, i + 1, chain.k[static_cast<std::size_t>(i)]);
    }
    couple(Z, n - 1, n, chain.zeta[chain.n]);
    const Eigen::MatrixXcd L = Z.cast<cplx>() + kJ * (w / 2.0) * Eigen::MatrixXcd(mass.asDiagonal()) -
                               kJ / (2.0 * w) * K.cast<cplx>();

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(dof, dof);
    for (Eigen::Index i = 0; i < n; ++i) {
        T(i, i) = 1.0;
        T(i, i + 1) = -1.0;
    }
    T.row(n) = mass.transpose();
    T(n, 0) = 1.0;

    NdofSlowSystem s;
    s.n = chain.n;
    s.omega = w;
    const Eigen::MatrixXcd Minv_L = mass.cwiseInverse().cast<cplx>().asDiagonal() * L;
    s.c = T.cast<cplx>() * Minv_L * T.inverse().cast<cplx>();

    const double mu_n = chain.mu.back();
    s.g1 = 3.0 * C / (8.0 * mu_n * w * w * w);
    s.g2 = 3.0 * C * (mu_n + chain.eps) / (8.0 * mu_n * chain.eps * w * w * w);

    for (Eigen::Index i = 0; i + 2 < n; ++i) s.linear_indices.push_back(i);
    s.linear_indices.push_back(n);
    const auto m = static_cast<Eigen::Index>(s.linear_indices.size());
    const Eigen::Index ia = s.idx_a(), ib = s.idx_b();
    s.Abar.resize(m, m);
    s.d1bar.resize(m);
    s.d2bar.resize(m);
    s.d3bar.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index gi = s.linear_indices[static_cast<std::size_t>(r)];
        for (Eigen::Index q = 0; q < m; ++q) s.Abar(r, q) = s.c(gi, s.linear_indices[static_cast<std::size_t>(q)]);
        s.d1bar(r) = s.c(gi, ia);
        s.d2bar(r) = s.c(ia, gi);
        s.d3bar(r) = s.c(ib, gi);
    }
    s.c_aa = s.c(ia, ia);
    s.c_ab = s.c(ia, ib);
    s.c_ba = s.c(ib, ia);
    s.c_bb = s.c(ib, ib);
    return s;
}

/// Untruncated slow flow.
inline Eigen::VectorXcd ndof_full_rhs(const NdofSlowSystem& s, const Eigen::VectorXcd& u) {
    Eigen::VectorXcd du = -(s.c * u);
    const cplx ub = u(s.idx_b());
    const cplx cubic = std::norm(ub) * ub;
    du(s.idx_a()) -= kJ * s.g1 * cubic;
    du(s.idx_b()) += kJ * s.g2 * cubic;
    return du;
}

/// Slow flow with the O(eps) couplings of u_n into the linear block dropped.
inline Eigen::VectorXcd ndof_rhs(const NdofSlowSystem& s, const Eigen::VectorXcd& u) {
    const Eigen::Index ia = s.idx_a(), ib = s.idx_b();
    const auto m = static_cast<Eigen::Index>(s.linear_indices.size());
    Eigen::VectorXcd up(m);
    for (Eigen::Index r = 0; r < m; ++r) up(r) = u(s.linear_indices[static_cast<std::size_t>(r)]);
    const cplx cubic = std::norm(u(ib)) * u(ib);

    Eigen::VectorXcd du(u.size());
    du(ia) = -(s.c_aa * u(ia) + s.c_ab * u(ib) + (s.d2bar * up)(0) + kJ * s.g1 * cubic);
    du(ib) = -(s.c_ba * u(ia) + s.c_bb * u(ib) + (s.d3bar * up)(0) - kJ * s.g2 * cubic);
    const Eigen::VectorXcd dup = -(s.Abar * up + s.d1bar * u(ia));
    for (Eigen::Index r = 0; r < m; ++r) du(s.linear_indices[static_cast<std::size_t>(r)]) = dup(r);
    return du;
}

/// Initial slow state after an impulse v0 on mass 1: u_1 = u_{n+1} = v0.
inline Eigen::VectorXcd ndof_ic(std::size_t n, double v0) {
    Eigen::VectorXcd u = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n) + 1);
    u(0) = v0;
    u(static_cast<Eigen::Index>(n)) = v0;
    return u;
}

}  // namespace nes
