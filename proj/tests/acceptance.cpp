// Acceptance checks, one line per criterion: "CRITERION N: PASS|FAIL <details>".
// Usage: acceptance [N]   (no argument runs all nine)

#include <cstdarg>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nes/nes.hpp"

using namespace nes;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const char* fmt, ...) __attribute__((format(printf, 3, 4)));
};

void Check::expect(bool cond, const char* fmt, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    if (!detail.empty()) detail += "; ";
    detail += buf;
    detail += cond ? " ok" : " MISS";
    ok = ok && cond;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

NondimParams table1() { return nondimensionalize(PhysicalParams::table1()).params; }

NondimParams as_tmd(NondimParams p, double zeta3, double k_tmd) {
    p.attachment = LinearTmd{k_tmd};
    p.zeta3 = zeta3;
    return p;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// 1. Modal frequencies.
Check criterion1() {
    Check c;
    const NondimParams p = table1();
    const ModalData m = modal_analysis(p);
    c.expect(rel(m.frequencies[0], 0.757) < 0.01, "w1=%.6f vs 0.757 (1%%)", m.frequencies[0]);
    c.expect(rel(m.frequencies[1], 2.618) < 0.01, "w2=%.6f vs 2.618 (1%%)", m.frequencies[1]);
    c.expect(rel(m.frequencies[0], 0.76) < 0.01, "w1 vs printed 0.76 (1%%)");
    c.expect(rel(m.frequencies[1], 2.63) < 0.01, "w2 vs printed 2.63 (1%%)");
    const int reps = 1000;
    const auto t0 = Clock::now();
    double sink = 0;
    for (int i = 0; i < reps; ++i) sink += modal_analysis(p).frequencies[0];
    const double per_call = seconds_since(t0) / reps;
    c.expect(per_call < 1e-3 && sink > 0, "runtime %.2e s/call < 1e-3", per_call);
    return c;
}

// 2. Single-mass TMD optimum.
Check criterion2() {
    Check c;
    const double eps = 0.05, zeta1 = 0.02;
    const Optimum1 o = optimum_1dof(eps, zeta1);
    c.expect(rel(o.zeta2, 0.0055) < 0.02, "zeta2=%.6f vs 0.0055 (2%%)", o.zeta2);
    c.expect(rel(o.kappa, 0.048) < 0.02, "kappa=%.6f vs 0.048 (2%%)", o.kappa);
    c.expect(rel(o.J, 0.00726) < 0.02, "J=%.6f vs 0.00726 (2%%)", o.J);

    // Lyapunov-route grid search over zeta2 in [0.001, 0.02], kappa in [0.03, 0.07].
    const double dz = 0.0002, dk = 0.0005;
    std::vector<double> zs, ks;
    for (int i = 0; i <= 95; ++i) zs.push_back(0.001 + dz * i);
    for (int i = 0; i <= 80; ++i) ks.push_back(0.03 + dk * i);
    const CostSurface s = cost_surface(zs, ks, [&](double z, double k) {
        return cost_J_1dof_lyapunov({eps, zeta1, z, k}, 0.1);
    });
    const auto pk = s.peak();
    c.expect(std::abs(pk.zeta - o.zeta2) <= dz && std::abs(pk.stiffness - o.kappa) <= dk,
             "grid peak (%.4f, %.4f) within one cell of closed form", pk.zeta, pk.stiffness);
    return c;
}

// 3. Two-mass TMD optimum and time-domain stiffness sweep.
Check criterion3() {
    Check c;
    const NondimParams p = table1();
    const Optimum2 o = optimize_2dof(p);
    c.expect(o.converged, "optimizer converged in %d iterations (|g|=%.1e)", o.iterations, o.gradient_norm);
    c.expect(o.zeta3 >= 0.003 && o.zeta3 <= 0.005, "zeta3=%.7f in [0.003, 0.005]", o.zeta3);
    c.expect(o.k_tmd >= 0.017 && o.k_tmd <= 0.023, "k_tmd=%.7f in [0.017, 0.023]", o.k_tmd);
    std::vector<double> grid;
    for (int i = 0; i <= 16; ++i) grid.push_back(0.014 + 0.0005 * i);
    const SweepResult r = stiffness_sweep(as_tmd(p, o.zeta3, o.k_tmd), grid, 0.1);
    const double arg = r.argmin_axis2();
    c.expect(arg >= 0.016 && arg <= 0.020, "sweep argmin k_tmd=%.4f in [0.016, 0.020]", arg);
    return c;
}

// 4. Critical velocity, analytical and from the full simulation.
Check criterion4() {
    Check c;
    const NondimParams p = table1();
    const double vcr = v_critical(p);
    c.expect(vcr >= 0.07 && vcr <= 0.11, "v_cr=%.6f in [0.07, 0.11]", vcr);
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(0.05 + 0.025 * i);
    const auto th = detect_threshold(p, grid, kNominalHorizon);
    c.expect(th && *th >= 0.10 && *th <= 0.13, "threshold=%.4f in [0.10, 0.13]", th ? *th : -1.0);
    return c;
}

// 5. Fixed points at the critical forcing.
Check criterion5() {
    Check c;
    const CriticalReport r = critical_analysis(table1());
    c.expect(r.roots.size() == 3, "%zu distinct roots", r.roots.size());
    if (r.roots.size() == 3) {
        c.expect(r.roots[0] == 0.0, "root0=0");
        c.expect(rel(r.roots[1], 0.638) < 0.10, "root1=%.5f vs 0.638 (10%%)", r.roots[1]);
        c.expect(rel(r.roots[2], 2.552) < 0.10, "root2=%.5f vs 2.552 (10%%)", r.roots[2]);
    }
    c.expect(std::abs(r.f_prime_at_double_root) < 1e-8, "|f'(a*)|=%.2e < 1e-8", std::abs(r.f_prime_at_double_root));
    return c;
}

// 6. Homoclinic capture.
Check criterion6() {
    Check c;
    const NondimParams p = table1();
    const CriticalReport r = critical_analysis(p);
    HamiltonianModel hm{r.omega, p.C(), r.Chat1, r.Chat2, r.z3_cr};
    const HomoclinicReport at = homoclinic_check(hm);
    c.expect(at.captured(), "critical: enters saddle neighbourhood at tau=%.2f and stays (max a=%.4f, saddle a=%.4f)",
             at.entry_time, at.max_a, at.saddle_a);
    hm.z3_0 = 0.5 * r.z3_cr;
    const HomoclinicReport below = homoclinic_check(hm);
    c.expect(!below.entered, "half critical: no capture (max a=%.4f)", below.max_a);
    return c;
}

// 7. Reduction fidelity.
Check criterion7() {
    Check c;
    const NondimParams p = table1();
    const double w = fast_frequency(p);
    const IntegratorConfig cfg{1e-10, 1e-12, 1.0, 0.01};
    {
        const double v0 = 0.115;
        const ComplexSeries slow = integrate_slow(slow_model(p, w), slow_ic(v0), {0.0, 50.0}, cfg);
        const EnvelopeSeries full = envelope_from_full(integrate(p, State::impulse(v0), {0.0, 50.0}, cfg), w);
        const double m = relative_rms_mismatch(full.abs_u(1), slow.abs_of(1));
        c.expect(m < 0.15, "|u2| slow vs full at v0=0.115: %.4f < 0.15", m);
    }
    const SuperSlowModel ss = superslow_model(p, w);
    for (double v0 : {0.05, 0.115}) {
        const SuperSlowIc ic = superslow_ic(v0, p.eps);
        const auto four = integrate_superslow4(ss, ic.z1, ic.z2, ic.z3, {0.0, 50.0}, cfg).abs_of(1);
        const auto two = integrate_reduced2(ss, ic.z2, ic.z1, ic.z3, {0.0, 50.0}, cfg).abs_of(0);
        const double m = relative_rms_mismatch(four, two);
        c.expect(m < 0.10, "|z2| 2-D vs 4-D at v0=%.3f: %.4f < 0.10", v0, m);
    }
    return c;
}

// 8. Invariant suites.
Check criterion8() {
    Check c;
    const NondimParams p = table1();
    {
        NondimParams u = p;
        u.zeta1 = u.zeta12 = u.zeta3 = 0;
        const Trajectory t = integrate(u, State::impulse(0.2), {0.0, 200.0}, {1e-12, 1e-14, 1.0, 0.1});
        const double e0 = total_energy(u, t.states.front());
        double drift = 0;
        for (const auto& s : t.states) drift = std::max(drift, std::abs(total_energy(u, s) - e0) / e0);
        c.expect(drift < 1e-8, "undamped drift %.2e < 1e-8", drift);
    }
    {
        double worst = 0;
        for (double v0 : {0.05, 0.115, 0.2}) {
            const EnergyTrace tr = energy_trace(integrate(p, State::impulse(v0), {0.0, 50.0}, {}));
            for (std::size_t i = 0; i < tr.times.size(); ++i)
                worst = std::max(worst, std::abs(tr.primary_fraction[i] + tr.nes_fraction[i] + tr.diss_ground[i] +
                                                 tr.diss_primary[i] + tr.diss_attachment[i] - 1.0));
        }
        c.expect(worst < 1e-6, "energy balance residual %.2e < 1e-6", worst);
    }
    {
        const NondimParams t = as_tmd(p, 0.003, 0.018);
        const Eigen::MatrixXd A = build_A(t);
        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(6, 6);
        Q(4, 4) = Q(5, 5) = 4 * 0.003;
        Q(4, 5) = Q(5, 4) = -4 * 0.003;
        const Eigen::MatrixXd P = solve_lyapunov(A, Q);
        const double res = lyapunov_residual(A, Q, P) / Q.cwiseAbs().maxCoeff();
        c.expect(res < 1e-10, "Lyapunov residual %.2e < 1e-10", res);

        std::mt19937_64 rng(11);
        std::normal_distribution<double> nd;
        double worst = 0;
        for (int trial = 0; trial < 3; ++trial) {
            Eigen::MatrixXd R(4, 4), B(4, 4);
            for (Eigen::Index i = 0; i < 16; ++i) {
                R.data()[i] = nd(rng);
                B.data()[i] = nd(rng);
            }
            R -= (max_real_eigenvalue(R) + 0.3) * Eigen::MatrixXd::Identity(4, 4);
            const Eigen::MatrixXd Qr = B * B.transpose();
            const Eigen::VectorXd q0 = Eigen::VectorXd::Random(4);
            const double lyap = q0.dot(solve_lyapunov(R, Qr) * q0);
            auto f = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
                dy.resize(5);
                dy.head(4) = R * y.head(4);
                dy(4) = y.head(4).dot(Qr * y.head(4));
            };
            Eigen::VectorXd y0 = Eigen::VectorXd::Zero(5);
            y0.head(4) = q0;
            const double direct = integrate_ode(f, y0, 0.0, 150.0, {1e-11, 1e-14, 1.0, 150.0}).y.back()(4);
            worst = std::max(worst, std::abs(lyap - direct) / direct);
        }
        c.expect(worst < 0.01, "Lyapunov J vs quadrature %.2e < 1%%", worst);
    }
    {
        const ChainParams ch = to_chain(p);
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> ud(-1, 1);
        double worst = 0;
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd y(6), a(6), b(6);
            for (Eigen::Index i = 0; i < 6; ++i) y(i) = ud(rng);
            rhs_flat(p, y, a);
            chain_rhs_flat(ch, y, b);
            worst = std::max(worst, (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff()));
        }
        c.expect(worst <= 4 * std::numeric_limits<double>::epsilon(), "chain n=2 rhs difference %.1e <= 4 ulp", worst);
    }
    {
        const SweepResult r = velocity_sweep(as_tmd(p, 0.003, 0.018), {0.02, 0.1, 0.3});
        const double spread = *std::max_element(r.metric[0].begin(), r.metric[0].end()) -
                              *std::min_element(r.metric[0].begin(), r.metric[0].end());
        c.expect(spread < 1e-10, "TMD metric v0 spread %.2e < 1e-10", spread);
    }
    return c;
}

// 9. Qualitative sweep orderings.
Check criterion9() {
    Check c;
    {
        const NondimParams low = nondimensionalize(PhysicalParams::table1_low_damping()).params;
        NondimParams nes = low;
        nes.attachment = CubicNes{design_nes_stiffness(low, 0.1, 0.9).C};
        const Optimum2 o = optimize_2dof(low);
        const NondimParams tmd = as_tmd(low, o.zeta3, o.k_tmd);
        PerturbationSpec spec;
        spec.count = 5;
        const std::vector<double> v{0.05, 0.1, 0.15, 0.2};
        SweepOptions so;
        so.tau_eval = kLowDampingHorizon;
        const CompareReport rep = compare(robustness_sweep(nes, spec, v, so), robustness_sweep(tmd, spec, v, so));
        c.expect(rep.nes_best.value < rep.tmd_best.value, "low damping tau=130: best NES %.4f < best TMD %.4f",
                 rep.nes_best.value, rep.tmd_best.value);
    }
    {
        const NondimParams p = table1();
        const Optimum2 o = optimize_2dof(p);
        const NondimParams tmd = as_tmd(p, o.zeta3, o.k_tmd);
        PerturbationSpec spec;
        spec.count = 7;
        const std::vector<double> v{0.05, 0.1, 0.15, 0.2};
        const double s2 = sensitivity(robustness_sweep(tmd, spec, v));
        spec.target = PerturbationTarget::M3;
        const double s3 = sensitivity(robustness_sweep(tmd, spec, v));
        c.expect(s3 > s2, "nominal tau=50: TMD spread under M3 %.4f > under M2 %.4f", s3, s2);
    }
    return c;
}

struct Criterion {
    std::function<Check()> run;
    double time_limit;  // seconds
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {criterion1, 1.0},   {criterion2, 10.0},  {criterion3, 120.0}, {criterion4, 180.0}, {criterion5, 1.0},
        {criterion6, 10.0},  {criterion7, 60.0},  {criterion8, 120.0}, {criterion9, 600.0},
    };
    std::size_t first = 1, last = all.size();
    if (argc > 1) {
        first = last = static_cast<std::size_t>(std::atoi(argv[1]));
        if (first < 1 || first > all.size()) {
            std::fprintf(stderr, "usage: acceptance [1-%zu]\n", all.size());
            return 2;
        }
    }
    bool all_ok = true;
    for (std::size_t n = first; n <= last; ++n) {
        const auto t0 = Clock::now();
        Check c;
        try {
            c = all[n - 1].run();
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail = std::string("exception: ") + e.what();
        }
        const double dt = seconds_since(t0);
        c.expect(dt < all[n - 1].time_limit, "runtime %.2f s < %.0f s", dt, all[n - 1].time_limit);
        std::printf("CRITERION %zu: %s  %s\n", n, c.ok ? "PASS" : "FAIL", c.detail.c_str());
        std::fflush(stdout);
        all_ok = all_ok && c.ok;
    }
    return all_ok ? 0 : 1;
}
