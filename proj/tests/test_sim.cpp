#include <gtest/gtest.h>

#include "nes/sim.hpp"

using namespace nes;

namespace {

NondimParams table1() { return nondimensionalize(PhysicalParams::table1()).params; }

NondimParams undamped() {
    NondimParams p = table1();
    p.zeta1 = p.zeta12 = p.zeta3 = 0;
    return p;
}

}  // namespace

TEST(Integrate, MatchesReferenceSolver) {
    // Reference: an independent eighth-order solver at rtol 1e-13.
    const IntegratorConfig cfg{1e-11, 1e-13, 1.0, 0.01};
    const State end = final_state(table1(), State::impulse(0.1), {0.0, 50.0}, cfg);
    const double ref[6] = {0.0153447137958, 0.022507542607, -0.0224314412797,
                           0.0421375658341, 0.040869878429, 0.00269330665252};
    const Eigen::VectorXd y = end.flat();
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(y(i), ref[i], 1e-8) << "component " << i;
    EXPECT_NEAR(primary_fraction_at(table1(), 0.1, 50.0, cfg), 0.320224805458, 1e-7);
    EXPECT_NEAR(primary_fraction_at(table1(), 0.15, 50.0, cfg), 0.202900375794, 1e-7);
}

TEST(Integrate, TmdReference) {
    NondimParams p = table1();
    p.attachment = LinearTmd{0.018};
    p.zeta3 = 0.003;
    EXPECT_NEAR(primary_fraction_at(p, 0.1, 50.0, {1e-11, 1e-13, 1.0, 0.01}), 0.0120292082093, 1e-8);
}

TEST(Energy, UndampedConservation) {
    const NondimParams p = undamped();
    const Trajectory traj = integrate(p, State::impulse(0.2), {0.0, 200.0}, {1e-12, 1e-14, 1.0, 0.5});
    const double e0 = total_energy(p, traj.states.front());
    double drift = 0;
    for (const auto& s : traj.states) drift = std::max(drift, std::abs(total_energy(p, s) - e0) / e0);
    EXPECT_LT(drift, 1e-8);
}

TEST(Energy, DampedBalance) {
    const NondimParams p = table1();
    const Trajectory traj = integrate(p, State::impulse(0.115), {0.0, 50.0}, {});
    const EnergyTrace tr = energy_trace(traj);
    double worst = 0;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        const double sum = tr.primary_fraction[i] + tr.nes_fraction[i] + tr.diss_ground[i] + tr.diss_primary[i] +
                           tr.diss_attachment[i];
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    EXPECT_LT(worst, 1e-6);
    EXPECT_DOUBLE_EQ(tr.primary_fraction.front(), 1.0);
    const EnergyTrace printed = energy_trace(traj, DissipationConvention::as_printed);
    EXPECT_NEAR(2 * printed.diss_attachment.back(), tr.diss_attachment.back(), 1e-15);
}

TEST(Energy, QuadratureFallbackAgrees) {
    const NondimParams p = table1();
    Trajectory traj = integrate(p, State::impulse(0.1), {0.0, 20.0}, {1e-10, 1e-12, 1.0, 0.002});
    const EnergyTrace a = energy_trace(traj);
    traj.dissipated.clear();
    const EnergyTrace b = energy_trace(traj);
    EXPECT_NEAR(a.diss_ground.back(), b.diss_ground.back(), 1e-6);
    EXPECT_NEAR(a.diss_primary.back(), b.diss_primary.back(), 1e-6);
    EXPECT_NEAR(a.diss_attachment.back(), b.diss_attachment.back(), 1e-6);
}

TEST(Energy, ZeroStartingEnergyRejected) {
    Trajectory traj;
    traj.params = table1();
    traj.times = {0.0};
    traj.states = {State::zero(3)};
    EXPECT_THROW(energy_trace(traj), DomainError);
    EXPECT_THROW(primary_fraction_at(table1(), 0.0, 10.0, {}), DomainError);
}

TEST(Energy, TmdFractionsIndependentOfImpulse) {
    NondimParams p = table1();
    p.attachment = LinearTmd{0.018};
    p.zeta3 = 0.003;
    const EnergyTrace ref = energy_trace(integrate(p, State::impulse(0.05), {0.0, 50.0}, {}));
    for (double v0 : {0.115, 0.2}) {
        const EnergyTrace tr = energy_trace(integrate(p, State::impulse(v0), {0.0, 50.0}, {}));
        ASSERT_EQ(tr.times.size(), ref.times.size());
        for (std::size_t i = 0; i < tr.times.size(); ++i) {
            EXPECT_NEAR(tr.primary_fraction[i], ref.primary_fraction[i], 1e-10);
            EXPECT_NEAR(tr.nes_fraction[i], ref.nes_fraction[i], 1e-10);
        }
    }
}

TEST(Threshold, VacuousCriterionReturnsFirstPoint) {
    ThresholdOptions opt;
    opt.drop_criterion = 1.0;
    const auto v = detect_threshold(table1(), {0.05, 0.1, 0.15}, 50.0, opt);
    ASSERT_TRUE(v.has_value());
    EXPECT_DOUBLE_EQ(*v, 0.05);
}

TEST(Threshold, TmdHasNoThreshold) {
    NondimParams p = table1();
    p.attachment = LinearTmd{0.018};
    p.zeta3 = 0.003;
    // The TMD fraction at tau = 50 is about 0.012 for every impulse.
    ThresholdOptions opt;
    opt.drop_criterion = 0.005;
    EXPECT_FALSE(detect_threshold(p, {0.05, 0.1, 0.2}, 50.0, opt).has_value());
}

TEST(Threshold, RefinesBetweenGridPoints) {
    const auto v = detect_threshold(table1(), {0.08, 0.1, 0.12, 0.14}, 50.0);
    ASSERT_TRUE(v.has_value());
    EXPECT_GT(*v, 0.1);
    EXPECT_LE(*v, 0.12);
    EXPECT_LT(primary_fraction_at(table1(), *v, 50.0, {}), 0.2);
    EXPECT_GE(primary_fraction_at(table1(), *v - 1e-3, 50.0, {}), 0.2);
}

TEST(Threshold, ValidatesGrid) {
    EXPECT_THROW(detect_threshold(table1(), {}, 50.0), DomainError);
    EXPECT_THROW(detect_threshold(table1(), {0.1, 0.05}, 50.0), DomainError);
}

TEST(Chain, TwoMassChainTrajectoryMatches) {
    const NondimParams p = table1();
    const State a = final_state(p, State::impulse(0.1), {0.0, 30.0}, {});
    const State b = chain_final_state(to_chain(p), State::impulse(0.1), {0.0, 30.0}, {});
    EXPECT_LT((a.flat() - b.flat()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(chain_primary_fraction_at(to_chain(p), 0.1, 30.0, {}), primary_fraction_at(p, 0.1, 30.0, {}), 1e-12);
}
