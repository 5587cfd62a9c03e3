#pragma once

// Spring-mass-damper chains with a cubic (NES) or linear (TMD) end attachment.
//
// Everything here is nondimensional: time is scaled by sqrt(kappa1 / M1), masses
// by M1, stiffnesses by kappa1 and dampings by 2 sqrt(M1 kappa1).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "nes/errors.hpp"

namespace nes {

/// Dimensional parameters of the two-mass primary with an attachment on mass 2.
struct PhysicalParams {
    double M1 = 0, M2 = 0, M3 = 0;               // kg
    double kappa1 = 0, kappa12 = 0, kappa3 = 0;  // N/m (kappa3: N/m^3 for the cubic spring)
    double b1 = 0, b12 = 0, b3 = 0;              // N s/m

    /// The reference system used throughout (M1 = 2200 kg, ...).
    static PhysicalParams table1() {
        return {2200.0, 1400.0, 70.0, 5.2e5, 1.3e6, 2.6e5, 5.0e2, 1.0e3, 50.0};
    }

    /// Reference masses and stiffnesses with the weakly damped primary (b1 = b12 = 50, b3 = 130).
    static PhysicalParams table1_low_damping() {
        auto p = table1();
        p.b1 = 50.0;
        p.b12 = 50.0;
        p.b3 = 130.0;
        return p;
    }

    void validate() const {
        if (!(M1 > 0 && M2 > 0 && M3 > 0)) throw DomainError("masses must be positive");
        if (!(kappa1 > 0 && kappa12 > 0 && kappa3 > 0)) throw DomainError("stiffnesses must be positive");
        if (!(b1 >= 0 && b12 >= 0 && b3 >= 0)) throw DomainError("dampings must be non-negative");
    }
};

struct CubicNes {
    double C = 0;  // cubic stiffness kappa3 / kappa1
};

struct LinearTmd {
    double k_tmd = 0;  // linear stiffness k / kappa1
};

using Attachment = std::variant<CubicNes, LinearTmd>;

enum class AttachmentType { cubic_nes, linear_tmd };

inline bool is_nes(const Attachment& a) { return std::holds_alternative<CubicNes>(a); }

/// C for a NES, k_tmd for a TMD.
inline double attachment_stiffness(const Attachment& a) {
    return std::visit([](const auto& v) {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, CubicNes>) return v.C;
        else return v.k_tmd;
    }, a);
}

inline Attachment with_stiffness(const Attachment& a, double stiffness) {
    if (is_nes(a)) return CubicNes{stiffness};
    return LinearTmd{stiffness};
}

/// Spring force exerted through the attachment for relative displacement dx = x_attach_host - x_attach.
inline double coupling_force(const Attachment& a, double dx) {
    if (const auto* nes = std::get_if<CubicNes>(&a)) return nes->C * dx * dx * dx;
    return std::get<LinearTmd>(a).k_tmd * dx;
}

/// Potential energy stored in the attachment spring.
inline double coupling_energy(const Attachment& a, double dx) {
    if (const auto* nes = std::get_if<CubicNes>(&a)) return 0.25 * nes->C * dx * dx * dx * dx;
    return 0.5 * std::get<LinearTmd>(a).k_tmd * dx * dx;
}

struct NondimParams {
    double mu = 0;      // M2 / M1
    double eps = 0;     // M3 / M1
    double zeta1 = 0;   // ground damper on mass 1
    double zeta12 = 0;  // damper between masses 1 and 2
    double zeta3 = 0;   // attachment damper
    double k12 = 0;     // kappa12 / kappa1
    Attachment attachment = CubicNes{0};

    void validate() const {
        if (!(mu > 0)) throw DomainError("mu must be positive");
        if (!(eps > 0)) throw DomainError("eps must be positive");
        if (!(zeta1 >= 0 && zeta12 >= 0 && zeta3 >= 0)) throw DomainError("damping ratios must be non-negative");
        if (!(k12 > 0)) throw DomainError("k12 must be positive");
        if (!(attachment_stiffness(attachment) > 0)) throw DomainError("attachment stiffness must be positive");
    }

    /// Cubic stiffness; throws if the attachment is a TMD.
    double C() const {
        if (const auto* nes = std::get_if<CubicNes>(&attachment)) return nes->C;
        throw DomainError("attachment is not a cubic NES");
    }
};

struct Nondimensionalized {
    NondimParams params;
    double time_scale = 0;  // sqrt(kappa1 / M1): tau = time_scale * t
};

inline Nondimensionalized nondimensionalize(const PhysicalParams& p,
                                            AttachmentType type = AttachmentType::cubic_nes) {
    p.validate();
    const double damping_scale = 2.0 * std::sqrt(p.M1 * p.kappa1);
    NondimParams n;
    n.mu = p.M2 / p.M1;
    n.eps = p.M3 / p.M1;
    n.zeta1 = p.b1 / damping_scale;
    n.zeta12 = p.b12 / damping_scale;
    n.zeta3 = p.b3 / damping_scale;
    n.k12 = p.kappa12 / p.kappa1;
    const double ratio = p.kappa3 / p.kappa1;
    if (type == AttachmentType::cubic_nes) n.attachment = CubicNes{ratio};
    else n.attachment = LinearTmd{ratio};
    return {n, std::sqrt(p.kappa1 / p.M1)};
}

/// Positions and velocities; the last entry of each is the attachment.
struct State {
    Eigen::VectorXd x;
    Eigen::VectorXd v;

    State() = default;
    State(Eigen::VectorXd x_, Eigen::VectorXd v_) : x(std::move(x_)), v(std::move(v_)) {
        if (x.size() != v.size()) throw DomainError("State: x and v lengths differ");
    }

    static State zero(Eigen::Index dof) { return {Eigen::VectorXd::Zero(dof), Eigen::VectorXd::Zero(dof)}; }

    /// Impulse on the first mass: x = 0, v = (v0, 0, ..., 0).
    static State impulse(double v0, Eigen::Index dof = 3) {
        State s = zero(dof);
        s.v(0) = v0;
        return s;
    }

    Eigen::Index dof() const { return x.size(); }

    /// Stacked [x; v] used by the integrator.
    Eigen::VectorXd flat() const {
        Eigen::VectorXd y(2 * dof());
        y << x, v;
        return y;
    }

    static State from_flat(const Eigen::VectorXd& y) {
        const Eigen::Index n = y.size() / 2;
        return {y.head(n), y.tail(n)};
    }
};

// -- three-mass system ---------------------------------------------------------

/// Accelerations of the 2-DOF primary + attachment; y = [x1 x2 x3 v1 v2 v3].
template <class In, class Out>
inline void rhs_flat(const NondimParams& p, const In& y, Out& dy) {
    const double x1 = y[0], x2 = y[1], x3 = y[2];
    const double v1 = y[3], v2 = y[4], v3 = y[5];
    const double f = coupling_force(p.attachment, x2 - x3);
    dy[0] = v1;
    dy[1] = v2;
    dy[2] = v3;
    dy[3] = -(2.0 * p.zeta1 * v1 + 2.0 * p.zeta12 * (v1 - v2) + x1 + p.k12 * (x1 - x2));
    dy[4] = -(2.0 * p.zeta12 * (v2 - v1) + 2.0 * p.zeta3 * (v2 - v3) + p.k12 * (x2 - x1) + f) / p.mu;
    dy[5] = -(2.0 * p.zeta3 * (v3 - v2) - f) / p.eps;
}

/// Time derivative (x', v') = (v, a).
inline State rhs(const NondimParams& p, const State& s) {
    if (s.dof() != 3) throw DomainError("rhs: expected a three-mass state");
    const Eigen::VectorXd y = s.flat();
    Eigen::VectorXd dy(6);
    rhs_flat(p, y, dy);
    return State::from_flat(dy);
}

// -- n-mass chain ----------------------------------------------------------------

/// Chain of n primary masses with the attachment on mass n.
struct ChainParams {
    std::size_t n = 0;
    std::vector<double> mu;    // size n, mu[0] = 1
    std::vector<double> zeta;  // size n + 1: zeta[0] grounds mass 1, zeta[i] couples i and i+1, zeta[n] the attachment
    std::vector<double> k;     // size n - 1: k[i-1] couples masses i and i+1
    double eps = 0;
    Attachment attachment = CubicNes{0};

    void validate() const {
        if (n < 1) throw DomainError("chain needs at least one primary mass");
        if (mu.size() != n || zeta.size() != n + 1 || k.size() != n - 1)
            throw DomainError("chain parameter vectors have inconsistent sizes");
        for (double m : mu)
            if (!(m > 0)) throw DomainError("chain masses must be positive");
        for (double z : zeta)
            if (!(z >= 0)) throw DomainError("chain dampings must be non-negative");
        for (double kk : k)
            if (!(kk > 0)) throw DomainError("chain stiffnesses must be positive");
        if (!(eps > 0)) throw DomainError("eps must be positive");
        if (!(attachment_stiffness(attachment) > 0)) throw DomainError("attachment stiffness must be positive");
    }
};

inline ChainParams to_chain(const NondimParams& p) {
    ChainParams c;
    c.n = 2;
    c.mu = {1.0, p.mu};
    c.zeta = {p.zeta1, p.zeta12, p.zeta3};
    c.k = {p.k12};
    c.eps = p.eps;
    c.attachment = p.attachment;
    return c;
}

inline void chain_rhs_flat(const ChainParams& p, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    const auto n = static_cast<Eigen::Index>(p.n);
    const Eigen::Index dof = n + 1;
    if (y.size() != 2 * dof) throw DomainError("chain_rhs: state length does not match chain size");
    dy.resize(2 * dof);
    auto x = y.head(dof);
    auto v = y.tail(dof);
    Eigen::VectorXd force = Eigen::VectorXd::Zero(dof);

    force(0) -= 2.0 * p.zeta[0] * v(0) + x(0);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double f = 2.0 * p.zeta[static_cast<std::size_t>(i) + 1] * (v(i) - v(i + 1)) +
                         p.k[static_cast<std::size_t>(i)] * (x(i) - x(i + 1));
        force(i) -= f;
        force(i + 1) += f;
    }
    const double fa = 2.0 * p.zeta[p.n] * (v(n - 1) - v(n)) + coupling_force(p.attachment, x(n - 1) - x(n));
    force(n - 1) -= fa;
    force(n) += fa;

    dy.head(dof) = v;
    for (Eigen::Index i = 0; i < n; ++i) dy(dof + i) = force(i) / p.mu[static_cast<std::size_t>(i)];
    dy(dof + n) = force(n) / p.eps;
}

inline State chain_rhs(const ChainParams& p, const State& s) {
    if (s.dof() != static_cast<Eigen::Index>(p.n) + 1) throw DomainError("chain_rhs: state length does not match chain size");
    Eigen::VectorXd dy;
    chain_rhs_flat(p, s.flat(), dy);
    return State::from_flat(dy);
}

/// Energy in the primary masses (springs between primary masses included).
inline double chain_primary_energy(const ChainParams& p, const State& s) {
    double e = 0.5 * s.x(0) * s.x(0);
    for (std::size_t i = 0; i < p.n; ++i) e += 0.5 * p.mu[i] * s.v(static_cast<Eigen::Index>(i)) * s.v(static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i + 1 < p.n; ++i) {
        const double d = s.x(static_cast<Eigen::Index>(i)) - s.x(static_cast<Eigen::Index>(i) + 1);
        e += 0.5 * p.k[i] * d * d;
    }
    return e;
}

inline double chain_attachment_energy(const ChainParams& p, const State& s) {
    const auto n = static_cast<Eigen::Index>(p.n);
    return 0.5 * p.eps * s.v(n) * s.v(n) + coupling_energy(p.attachment, s.x(n - 1) - s.x(n));
}

// -- modal data ----------------------------------------------------------------

struct ModalData {
    std::array<double, 2> frequencies{};                    // ascending
    std::array<std::array<double, 2>, 2> mode_shapes{};  // unit norm, first entry >= 0
    bool degenerate = false;                             // a (near) rigid-body mode is present
};

/// Undamped modes of the two-mass primary: det(K - w^2 M) = 0.
inline ModalData modal_analysis(const NondimParams& p) {
    if (!(p.mu > 0) || !(p.k12 > 0)) throw DomainError("modal_analysis: mu and k12 must be positive");
    const double mu = p.mu, k = p.k12;
    // mu l^2 - (mu (1 + k) + k) l + k = 0
    const double b = mu * (1.0 + k) + k;
    const double disc = std::sqrt(b * b - 4.0 * mu * k);
    const double l_hi = (b + disc) / (2.0 * mu);
    const double l_lo = k / (mu * l_hi);  // product of roots, avoids cancellation
    ModalData m;
    const std::array<double, 2> lambdas{l_lo, l_hi};
    for (std::size_t i = 0; i < 2; ++i) {
        const double l = lambdas[i];
        m.frequencies[i] = std::sqrt(l);
        // Null vector of K - l M from whichever row is better conditioned.
        double a1 = k, a2 = 1.0 + k - l;
        const double r1 = std::hypot(a1, a2);
        double c1 = k - mu * l, c2 = k;
        if (std::hypot(c1, c2) > r1) {
            a1 = c1;
            a2 = c2;
        }
        const double norm = std::hypot(a1, a2);
        double s1 = a1 / norm, s2 = a2 / norm;
        if (s1 < 0 || (s1 == 0 && s2 < 0)) {
            s1 = -s1;
            s2 = -s2;
        }
        m.mode_shapes[i] = {s1, s2};
    }
    m.degenerate = m.frequencies[0] < 1e-4 * m.frequencies[1];
    return m;
}

// -- energies --------------------------------------------------------------------

inline double primary_energy(const NondimParams& p, const State& s) {
    const double x1 = s.x(0), x2 = s.x(1), v1 = s.v(0), v2 = s.v(1);
    return 0.5 * (x1 * x1 + v1 * v1) + 0.5 * p.mu * v2 * v2 + 0.5 * p.k12 * (x1 - x2) * (x1 - x2);
}

/// Kinetic energy of the attachment mass plus the energy in its spring.
inline double nes_energy(const NondimParams& p, const State& s) {
    const double v3 = s.v(2);
    return 0.5 * p.eps * v3 * v3 + coupling_energy(p.attachment, s.x(1) - s.x(2));
}

inline double total_energy(const NondimParams& p, const State& s) { return primary_energy(p, s) + nes_energy(p, s); }

/// Coefficient convention for the dissipated power. `energy_consistent` (2 zeta) balances the
/// equations of motion exactly; `as_printed` uses zeta alone, as in the slow-variable integrand.
enum class DissipationConvention { energy_consistent, as_printed };

struct DissipationPower {
    double ground = 0;      // zeta1 channel, v1^2
    double primary = 0;     // zeta12 channel, (v1 - v2)^2
    double attachment = 0;  // zeta3 channel, (v2 - v3)^2

    double sum() const { return ground + primary + attachment; }
};

inline DissipationPower dissipation_power(const NondimParams& p, const State& s,
                                          DissipationConvention conv = DissipationConvention::energy_consistent) {
    const double c = conv == DissipationConvention::energy_consistent ? 2.0 : 1.0;
    const double v1 = s.v(0), v2 = s.v(1), v3 = s.v(2);
    return {c * p.zeta1 * v1 * v1, c * p.zeta12 * (v1 - v2) * (v1 - v2), c * p.zeta3 * (v2 - v3) * (v2 - v3)};
}

}  // namespace nes
