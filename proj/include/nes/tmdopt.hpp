#pragma once

// Lyapunov-equation energy-dissipation cost for linear tuned-mass dampers.
//
// For q' = A q with A Hurwitz and weight Q, the integral of q^T Q q over [0, inf)
// equals q0^T P q0 where A^T P + P A = -Q.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nes/errors.hpp"
#include "nes/model.hpp"
#include "nes/parallel.hpp"

namespace nes {

inline constexpr double kHurwitzTolerance = 1e-12;

struct LyapunovProblem {
    Eigen::MatrixXd A;
    Eigen::MatrixXd Q;
    Eigen::MatrixXd P;  // filled by solve()
    double J = 0;       // q0^T P q0 after solve()
};

inline double max_real_eigenvalue(const Eigen::MatrixXd& A) {
    const Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    return es.eigenvalues().real().maxCoeff();
}

inline bool is_hurwitz(const Eigen::MatrixXd& A, double tol = kHurwitzTolerance) {
    return max_real_eigenvalue(A) < -tol;
}

inline double lyapunov_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& P) {
    return (A.transpose() * P + P * A + Q).cwiseAbs().rowwise().sum().maxCoeff();
}

/// Solves A^T P + P A = -Q for symmetric P. The Kronecker-sum system is assembled on the
/// n(n+1)/2 upper-triangular unknowns only.
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || Q.rows() != n || Q.cols() != n) throw DomainError("solve_lyapunov: dimension mismatch");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
        throw DomainError("solve_lyapunov: Q must be symmetric");
    if (!is_hurwitz(A)) throw StabilityError("solve_lyapunov: state matrix is not Hurwitz");

    const Eigen::Index m = n * (n + 1) / 2;
    auto index = [n](Eigen::Index i, Eigen::Index j) {
        if (i > j) std::swap(i, j);
        return i * n - i * (i - 1) / 2 + (j - i);
    };
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const Eigen::Index row = index(i, j);
            // (A^T P)_ij + (P A)_ij = sum_k A_ki P_kj + P_ik A_kj
            for (Eigen::Index k = 0; k < n; ++k) {
                K(row, index(k, j)) += A(k, i);
                K(row, index(i, k)) += A(k, j);
            }
            rhs(row) = -0.5 * (Q(i, j) + Q(j, i));
        }
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    Eigen::VectorXd p = lu.solve(rhs);
    p += lu.solve(rhs - K * p);  // one step of iterative refinement

    Eigen::MatrixXd P(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) P(i, j) = P(j, i) = p(index(i, j));

    const double qn = Q.cwiseAbs().rowwise().sum().maxCoeff();
    if (lyapunov_residual(A, Q, P) > 1e-10 * std::max(qn, 1e-300))
        throw SingularityError("solve_lyapunov: residual bound not met");
    return P;
}

inline void solve(LyapunovProblem& problem, const Eigen::VectorXd& q0) {
    problem.P = solve_lyapunov(problem.A, problem.Q);
    problem.J = q0.dot(problem.P * q0);
}

// -- single-mass primary ------------------------------------------------------------

struct TmdDesign1 {
    double eps = 0;    // absorber to primary mass ratio
    double zeta1 = 0;  // primary damping
    double zeta2 = 0;  // absorber damping
    double kappa = 0;  // absorber to primary stiffness ratio

    void validate() const {
        if (!(eps > 0)) throw DomainError("TMD mass ratio must be positive");
        if (!(kappa > 0)) throw DomainError("TMD stiffness ratio must be positive");
        if (!(zeta1 >= 0 && zeta2 >= 0)) throw DomainError("damping ratios must be non-negative");
    }
};

/// State q = (x1, x2, x1', x2').
inline Eigen::Matrix4d build_A(const TmdDesign1& d) {
    d.validate();
    const double e = d.eps, z1 = d.zeta1, z2 = d.zeta2, k = d.kappa;
    Eigen::Matrix4d A;
    A << 0, 0, 1, 0,
         0, 0, 0, 1,
         -1 - k, k, -2 * (z1 + z2), 2 * z2,
         k / e, -k / e, 2 * z2 / e, -2 * z2 / e;
    return A;
}

/// Weight selecting (x1' - x2')^2, scaled so that q0^T P q0 is the dissipated fraction.
inline Eigen::Matrix4d cost_weight_1dof(double zeta2, double v10) {
    if (v10 == 0) throw DomainError("cost_weight_1dof: zero initial velocity");
    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
    Q(2, 2) = Q(3, 3) = 1;
    Q(2, 3) = Q(3, 2) = -1;
    return 4.0 * zeta2 / (v10 * v10) * Q;
}

/// Fraction of the initial energy dissipated by the absorber damper, via the Lyapunov solve.
inline double cost_J_1dof_lyapunov(const TmdDesign1& d, double v10 = 1.0) {
    if (d.zeta2 == 0) return 0.0;
    const Eigen::MatrixXd P = solve_lyapunov(build_A(d), cost_weight_1dof(d.zeta2, v10));
    return v10 * v10 * P(2, 2);
}

/// Closed form of the same cost.
inline double cost_J_1dof(double eps, double zeta1, double zeta2, double kappa) {
    const double e = eps, z1 = zeta1, z2 = zeta2, k = kappa;
    const double num = z2 * e * (4 * z1 * z1 * z2 * k + z2 * (4 * z1 * z2 + e) + z1 * k * k * (e + 1));
    const double den = z1 * z2 * (4 * z1 * z2 * k + 4 * z2 * z2 + k * k) + e * e * (z1 + z2) * (z1 * k * k + z2) +
                       2 * z1 * z2 * e * (k * (2 * z1 * (z1 + z2) - 1) + 2 * z2 * (z1 + z2) + k * k);
    if (den == 0) throw DomainError("cost_J_1dof: zero denominator");
    return num / den;
}

inline double optimal_kappa(double eps, double zeta1, double zeta2) {
    const double den = 1 + eps - 2 * zeta1 * zeta1;
    if (!(den > 0)) throw DomainError("optimal_kappa: requires 1 + eps - 2 zeta1^2 > 0");
    return (eps + 2 * zeta1 * zeta2) / den;
}

inline double optimal_zeta2(double eps, double zeta1) {
    const double e = eps, z = zeta1, z2 = z * z;
    const double s = 1 + e - z2;
    const double den = 2 * s * (1 + e - 4 * (1 + e) * z2 + 4 * z2 * z2);
    if (!(s > 0)) throw DomainError("optimal_zeta2: requires 1 + eps - zeta1^2 > 0");
    if (den == 0) throw DomainError("optimal_zeta2: zero denominator");
    return (2 * e * e * z * s + e * std::abs(1 + e - 2 * z2) * std::sqrt(e * s)) / den;
}

struct Optimum1 {
    double zeta2 = 0, kappa = 0, J = 0;
};

inline Optimum1 optimum_1dof(double eps, double zeta1) {
    Optimum1 o;
    o.zeta2 = optimal_zeta2(eps, zeta1);
    o.kappa = optimal_kappa(eps, zeta1, o.zeta2);
    o.J = cost_J_1dof(eps, zeta1, o.zeta2, o.kappa);
    return o;
}

// -- two-mass primary --------------------------------------------------------------

/// State q = (x1, x2, x3, x1', x2', x3') of the three-mass system with a linear attachment.
inline Eigen::MatrixXd build_A(const NondimParams& p) {
    if (!(p.mu > 0 && p.eps > 0)) throw DomainError("build_A: singular mass matrix");
    if (is_nes(p.attachment)) throw DomainError("build_A: attachment must be a linear TMD");
    const double kt = attachment_stiffness(p.attachment);
    Eigen::Vector3d m(1.0, p.mu, p.eps);
    Eigen::Matrix3d K, C;
    K << 1 + p.k12, -p.k12, 0,
         -p.k12, p.k12 + kt, -kt,
         0, -kt, kt;
    C << p.zeta1 + p.zeta12, -p.zeta12, 0,
         -p.zeta12, p.zeta12 + p.zeta3, -p.zeta3,
         0, -p.zeta3, p.zeta3;
    C *= 2.0;
    const Eigen::Matrix3d Minv = m.cwiseInverse().asDiagonal();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(6, 6);
    A.topRightCorner<3, 3>().setIdentity();
    A.bottomLeftCorner<3, 3>() = -Minv * K;
    A.bottomRightCorner<3, 3>() = -Minv * C;
    return A;
}

inline NondimParams with_tmd(NondimParams p, double zeta3, double k_tmd) {
    p.zeta3 = zeta3;
    p.attachment = LinearTmd{k_tmd};
    return p;
}

/// Fraction of the initial energy dissipated in the TMD damper after a unit impulse on mass 1.
inline double cost_J_2dof(const NondimParams& params, double zeta3, double k_tmd) {
    if (!(k_tmd > 0)) throw DomainError("cost_J_2dof: k_tmd must be positive");
    if (!(zeta3 >= 0)) throw DomainError("cost_J_2dof: zeta3 must be non-negative");
    if (zeta3 == 0) return 0.0;
    const Eigen::MatrixXd A = build_A(with_tmd(params, zeta3, k_tmd));
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(6, 6);
    Q(4, 4) = Q(5, 5) = 1;
    Q(4, 5) = Q(5, 4) = -1;
    Q *= 4.0 * zeta3;
    return solve_lyapunov(A, Q)(3, 3);
}

struct Optimize2Options {
    std::optional<double> zeta3_init;
    std::optional<double> k_tmd_init;
    int max_iterations = 500;
    double gradient_tolerance = 1e-8;  // on the gradient with respect to (ln zeta3, ln k_tmd)
    double backtrack = 0.5;
    double initial_step = 0.1;
    double fd_step = 1e-4;  // in log coordinates
};

struct Optimum2 {
    double zeta3 = 0, k_tmd = 0, J = 0;
    double gradient_norm = 0;
    int iterations = 0;
    bool converged = false;
    std::string warning;
};

/// Starting point: the single-mass closed forms applied to the lowest primary mode.
inline std::pair<double, double> default_init_2dof(const NondimParams& p) {
    const double w = modal_analysis(p).frequencies[0];
    const double k = p.eps * w * w / (1 + p.eps);
    const double z = optimal_zeta2(p.eps, p.zeta1) * w;
    return {z, k};
}

/// Gradient ascent on J in log coordinates with central differences, Barzilai-Borwein trial
/// steps and backtracking. Steps leaving the Hurwitz region are rejected like failed ascents.
inline Optimum2 optimize_2dof(const NondimParams& params, const Optimize2Options& opt = {}) {
    const auto [z0, k0] = default_init_2dof(params);
    Eigen::Vector2d s(std::log(opt.zeta3_init.value_or(z0)), std::log(opt.k_tmd_init.value_or(k0)));
    if (!std::isfinite(s(0)) || !std::isfinite(s(1))) throw DomainError("optimize_2dof: initial values must be positive");

    auto J = [&](const Eigen::Vector2d& x) -> std::optional<double> {
        try {
            return cost_J_2dof(params, std::exp(x(0)), std::exp(x(1)));
        } catch (const StabilityError&) {
            return std::nullopt;
        }
    };
    auto gradient = [&](const Eigen::Vector2d& x) {
        Eigen::Vector2d g;
        for (int i = 0; i < 2; ++i) {
            Eigen::Vector2d xp = x, xm = x;
            xp(i) += opt.fd_step;
            xm(i) -= opt.fd_step;
            const auto jp = J(xp), jm = J(xm);
            if (!jp || !jm) throw StabilityError("optimize_2dof: gradient stencil leaves the Hurwitz region");
            g(i) = (*jp - *jm) / (2 * opt.fd_step);
        }
        return g;
    };

    const auto j0 = J(s);
    if (!j0) throw StabilityError("optimize_2dof: initial design is not asymptotically stable");
    Optimum2 r;
    double jcur = *j0;
    Eigen::Vector2d g = gradient(s);
    double step = opt.initial_step;
    for (r.iterations = 0; r.iterations < opt.max_iterations; ++r.iterations) {
        if (g.norm() < opt.gradient_tolerance) {
            r.converged = true;
            break;
        }
        double t = step;
        bool moved = false;
        for (int bt = 0; bt < 60; ++bt, t *= opt.backtrack) {
            const Eigen::Vector2d trial = s + t * g;
            const auto jt = J(trial);
            if (jt && *jt >= jcur + 1e-4 * t * g.squaredNorm()) {
                const Eigen::Vector2d g_new = gradient(trial);
                const Eigen::Vector2d ds = trial - s, dg = g_new - g;
                const double curv = -ds.dot(dg);
                step = curv > 0 ? ds.squaredNorm() / curv : opt.initial_step;
                s = trial;
                jcur = *jt;
                g = g_new;
                moved = true;
                break;
            }
        }
        if (!moved) {
            r.warning = "line search stalled";
            break;
        }
    }
    r.zeta3 = std::exp(s(0));
    r.k_tmd = std::exp(s(1));
    r.J = jcur;
    r.gradient_norm = g.norm();
    if (!r.converged && r.warning.empty()) r.warning = "maximum iterations reached; returning best design found";
    return r;
}

// -- cost surfaces -------------------------------------------------------------------

struct CostSurface {
    std::vector<double> zetas;
    std::vector<double> stiffnesses;
    std::vector<std::vector<double>> J;  // J[i][j] at (zetas[i], stiffnesses[j]); NaN if unstable

    struct Peak {
        double zeta = 0, stiffness = 0, J = 0;
        std::size_t i = 0, j = 0;
    };

    Peak peak() const {
        Peak p;
        p.J = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < zetas.size(); ++i)
            for (std::size_t j = 0; j < stiffnesses.size(); ++j)
                if (J[i][j] > p.J) p = {zetas[i], stiffnesses[j], J[i][j], i, j};
        return p;
    }
};

template <class F>
CostSurface cost_surface(const std::vector<double>& zetas, const std::vector<double>& stiffnesses, F&& cost,
                         std::size_t threads = 0) {
    CostSurface s;
    s.zetas = zetas;
    s.stiffnesses = stiffnesses;
    s.J.assign(zetas.size(), std::vector<double>(stiffnesses.size(), 0.0));
    const std::size_t nk = stiffnesses.size();
    parallel_for(zetas.size() * nk, [&](std::size_t c) {
        const std::size_t i = c / nk, j = c % nk;
        try {
            s.J[i][j] = cost(zetas[i], stiffnesses[j]);
        } catch (const StabilityError&) {
            s.J[i][j] = std::numeric_limits<double>::quiet_NaN();
        }
    }, threads);
    return s;
}

inline CostSurface cost_surface_1dof(double eps, double zeta1, const std::vector<double>& zetas,
                                     const std::vector<double>& kappas, std::size_t threads = 0) {
    return cost_surface(zetas, kappas, [&](double z, double k) { return cost_J_1dof(eps, zeta1, z, k); }, threads);
}

inline CostSurface cost_surface_2dof(const NondimParams& p, const std::vector<double>& zetas,
                                     const std::vector<double>& k_tmds, std::size_t threads = 0) {
    return cost_surface(zetas, k_tmds, [&](double z, double k) { return cost_J_2dof(p, z, k); }, threads);
}

}  // namespace nes
