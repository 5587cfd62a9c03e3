#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "nes/ode.hpp"
#include "nes/tmdopt.hpp"

using namespace nes;

namespace {

NondimParams table1() { return nondimensionalize(PhysicalParams::table1()).params; }

// int_0^T q^T Q q dt along q' = A q, by augmenting the state with the running integral.
double quadrature_cost(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q, const Eigen::VectorXd& q0, double T) {
    const Eigen::Index n = A.rows();
    auto f = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        const Eigen::VectorXd q = y.head(n);
        dy.resize(n + 1);
        dy.head(n) = A * q;
        dy(n) = q.dot(Q * q);
    };
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(n + 1);
    y0.head(n) = q0;
    return integrate_ode(f, y0, 0.0, T, {1e-11, 1e-14, 1.0, T}).y.back()(n);
}

}  // namespace

TEST(Lyapunov, NegativeIdentity) {
    const Eigen::MatrixXd A = -Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd P = solve_lyapunov(A, Eigen::MatrixXd::Identity(3, 3));
    EXPECT_LT((P - 0.5 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Lyapunov, RandomStableSystemsMatchQuadrature) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd A(4, 4), B(4, 4);
        for (Eigen::Index i = 0; i < 16; ++i) {
            A.data()[i] = nd(rng);
            B.data()[i] = nd(rng);
        }
        A -= (max_real_eigenvalue(A) + 0.5) * Eigen::MatrixXd::Identity(4, 4);
        const Eigen::MatrixXd Q = B * B.transpose();
        const Eigen::MatrixXd P = solve_lyapunov(A, Q);
        EXPECT_LT(lyapunov_residual(A, Q, P), 1e-11 * Q.cwiseAbs().maxCoeff());
        EXPECT_LT((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff(), -1e-12);
        const Eigen::VectorXd q0 = Eigen::VectorXd::Random(4);
        const double direct = quadrature_cost(A, Q, q0, 80.0);
        EXPECT_NEAR(q0.dot(P * q0), direct, 1e-6 * std::abs(direct));
    }
}

TEST(Lyapunov, RejectsBadInput) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_THROW(solve_lyapunov(A, Eigen::MatrixXd::Identity(2, 2)), StabilityError);
    A = -A;
    EXPECT_THROW(solve_lyapunov(A, Eigen::MatrixXd::Identity(3, 3)), DomainError);
    Eigen::MatrixXd Q(2, 2);
    Q << 1, 2, 0, 1;
    EXPECT_THROW(solve_lyapunov(A, Q), DomainError);
    Eigen::MatrixXd marginal(2, 2);
    marginal << 0, 1, -1, 0;
    EXPECT_FALSE(is_hurwitz(marginal));
}

TEST(Lyapunov, ProblemStructFillsCost) {
    LyapunovProblem pr{-2.0 * Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2), {}, 0};
    solve(pr, Eigen::Vector2d(1.0, 1.0));
    EXPECT_NEAR(pr.J, 0.5, 1e-15);
}

TEST(Tmd1, StateMatrixEntries) {
    const Eigen::Matrix4d A = build_A(TmdDesign1{0.05, 0.02, 0.01, 0.9});
    EXPECT_DOUBLE_EQ(A(2, 0), -1.9);
    EXPECT_DOUBLE_EQ(A(2, 1), 0.9);
    EXPECT_DOUBLE_EQ(A(2, 2), -0.06);
    EXPECT_DOUBLE_EQ(A(2, 3), 0.02);
    EXPECT_DOUBLE_EQ(A(3, 0), 18.0);
    EXPECT_DOUBLE_EQ(A(3, 3), -0.4);
    const Eigen::Matrix4d U = build_A(TmdDesign1{0.05, 0.0, 0.0, 0.9});
    for (const auto& ev : U.eigenvalues()) EXPECT_NEAR(ev.real(), 0.0, 1e-12);
}

TEST(Tmd1, ClosedFormMatchesLyapunov) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ue(0.01, 0.2), uz(0.0, 0.1), uz2(0.001, 0.3), uk(0.5, 1.2);
    for (int trial = 0; trial < 100; ++trial) {
        const TmdDesign1 d{ue(rng), uz(rng), uz2(rng), uk(rng)};
        const double lyap = cost_J_1dof_lyapunov(d);
        EXPECT_NEAR(cost_J_1dof(d.eps, d.zeta1, d.zeta2, d.kappa), lyap, 1e-10 * std::max(1.0, lyap));
    }
}

TEST(Tmd1, CostIndependentOfImpulse) {
    const TmdDesign1 d{0.05, 0.02, 0.0055, 0.048};
    const double ref = cost_J_1dof_lyapunov(d, 1.0);
    for (double v : {0.01, 0.1, 3.0}) EXPECT_NEAR(cost_J_1dof_lyapunov(d, v), ref, 1e-12);
    EXPECT_EQ(cost_J_1dof_lyapunov({0.05, 0.02, 0.0, 0.048}), 0.0);
}

TEST(Tmd1, CostMatchesTimeDomain) {
    const TmdDesign1 d{0.05, 0.02, 0.0055, 0.048};
    Eigen::Vector4d q0(0, 0, 1, 0);
    const double direct = quadrature_cost(build_A(d), cost_weight_1dof(d.zeta2, 1.0), q0, 3000.0);
    EXPECT_NEAR(direct, cost_J_1dof_lyapunov(d), 0.01 * direct);
}

TEST(Tmd1, UndampedPrimaryLimit) {
    const double eps = 0.05;
    EXPECT_NEAR(optimal_kappa(eps, 0.0, optimal_zeta2(eps, 0.0)), eps / (1 + eps), 1e-15);
}

TEST(Tmd1, OptimumIsStationary) {
    for (auto [eps, z1] : {std::pair{0.05, 0.02}, std::pair{0.1, 0.005}, std::pair{0.02, 0.05}}) {
        const Optimum1 o = optimum_1dof(eps, z1);
        const double hz = 1e-6 * o.zeta2, hk = 1e-6 * o.kappa;
        const double dz = (cost_J_1dof(eps, z1, o.zeta2 + hz, o.kappa) - cost_J_1dof(eps, z1, o.zeta2 - hz, o.kappa)) /
                          (2 * hz);
        const double dk = (cost_J_1dof(eps, z1, o.zeta2, o.kappa + hk) - cost_J_1dof(eps, z1, o.zeta2, o.kappa - hk)) /
                          (2 * hk);
        EXPECT_LT(std::abs(dz) * o.zeta2, 1e-6) << eps << " " << z1;
        EXPECT_LT(std::abs(dk) * o.kappa, 1e-6) << eps << " " << z1;
        for (double f : {0.8, 1.25}) {
            EXPECT_LT(cost_J_1dof(eps, z1, f * o.zeta2, o.kappa), o.J);
            EXPECT_LT(cost_J_1dof(eps, z1, o.zeta2, f * o.kappa), o.J);
        }
    }
}

TEST(Tmd1, ReferenceDesign) {
    const Optimum1 o = optimum_1dof(0.05, 0.02);
    EXPECT_NEAR(o.zeta2, 0.005509, 1e-6);
    EXPECT_NEAR(o.kappa, 0.047865, 1e-6);
    EXPECT_NEAR(o.J, 0.725817, 1e-6);
    EXPECT_THROW(optimal_kappa(0.05, 1.0, 0.1), DomainError);
}

TEST(Tmd1, SurfacePeakNearOptimum) {
    std::vector<double> zs, ks;
    for (int i = 0; i <= 40; ++i) zs.push_back(0.002 + 0.0002 * i);
    for (int i = 0; i <= 40; ++i) ks.push_back(0.040 + 0.0004 * i);
    const CostSurface s = cost_surface_1dof(0.05, 0.02, zs, ks);
    const auto peak = s.peak();
    const Optimum1 o = optimum_1dof(0.05, 0.02);
    EXPECT_NEAR(peak.zeta, o.zeta2, 2e-4);
    EXPECT_NEAR(peak.stiffness, o.kappa, 4e-4);
}

TEST(Tmd2, StateMatrixRequiresTmd) {
    EXPECT_THROW(build_A(table1()), DomainError);
    const Eigen::MatrixXd A = build_A(with_tmd(table1(), 0.003, 0.018));
    EXPECT_EQ(A.rows(), 6);
    EXPECT_TRUE(is_hurwitz(A));
}

TEST(Tmd2, ReferenceCost) {
    EXPECT_NEAR(cost_J_2dof(table1(), 0.003, 0.018), 0.491829619790454, 1e-9);
    EXPECT_EQ(cost_J_2dof(table1(), 0.0, 0.018), 0.0);
}

TEST(Tmd2, CostMatchesTimeDomain) {
    const NondimParams p = with_tmd(table1(), 0.003, 0.018);
    Eigen::VectorXd q0 = Eigen::VectorXd::Zero(6);
    q0(3) = 1.0;
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(6, 6);
    Q(4, 4) = Q(5, 5) = 4 * 0.003;
    Q(4, 5) = Q(5, 4) = -4 * 0.003;
    const double direct = quadrature_cost(build_A(p), Q, q0, 5000.0);
    EXPECT_NEAR(direct, cost_J_2dof(table1(), 0.003, 0.018), 0.01 * direct);
}

TEST(Tmd2, UnstableDesignThrows) {
    NondimParams p = table1();
    p.zeta1 = p.zeta12 = 0;
    EXPECT_THROW(cost_J_2dof(p, 1e-14, 0.018), StabilityError);
}

TEST(Tmd2, OptimizerConvergesFromDifferentStarts) {
    const NondimParams p = table1();
    const Optimum2 ref = optimize_2dof(p);
    EXPECT_TRUE(ref.converged) << ref.warning;
    EXPECT_NEAR(ref.zeta3, 0.0030021, 2e-6);
    EXPECT_NEAR(ref.k_tmd, 0.0180349, 2e-6);
    EXPECT_NEAR(ref.J, 0.491832, 2e-6);
    for (auto [z, k] : {std::pair{0.001, 0.015}, std::pair{0.01, 0.02}}) {
        Optimize2Options opt;
        opt.zeta3_init = z;
        opt.k_tmd_init = k;
        const Optimum2 o = optimize_2dof(p, opt);
        EXPECT_NEAR(o.zeta3, ref.zeta3, 1e-5 * ref.zeta3 + 1e-7);
        EXPECT_NEAR(o.k_tmd, ref.k_tmd, 1e-5 * ref.k_tmd);
        EXPECT_NEAR(o.J, ref.J, 1e-9);
    }
}

TEST(Tmd2, SurfaceMarksUnstablePoints) {
    const CostSurface s = cost_surface({-1.0, 1.0}, {1.0, 2.0}, [](double z, double k) {
        if (z < 0) throw StabilityError("unstable");
        return z * k;
    });
    EXPECT_TRUE(std::isnan(s.J[0][0]));
    EXPECT_TRUE(std::isnan(s.J[0][1]));
    EXPECT_EQ(s.J[1][1], 2.0);
    EXPECT_EQ(s.peak().j, 1u);
}
