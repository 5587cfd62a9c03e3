#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nes/nes.hpp"

namespace nes::cli {

using nlohmann::json;

/// Malformed or incomplete configuration (exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

// -- config access ---------------------------------------------------------------------

inline const json& require(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError("missing block: " + (where.empty() ? key : where + "." + key));
    return j.at(key);
}

inline double number(const json& j, const std::string& key, double fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    if (!j.at(key).is_number()) throw ConfigError("expected a number for key: " + key);
    return j.at(key).get<double>();
}

inline double number(const json& j, const std::string& key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number()) throw ConfigError("expected a number for key: " + where + "." + key);
    return v.get<double>();
}

inline std::vector<double> number_list(const json& j, const std::string& key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_array() || v.empty()) throw ConfigError("expected a nonempty list for key: " + where + "." + key);
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("expected numbers in list: " + where + "." + key);
        out.push_back(e.get<double>());
    }
    return out;
}

inline const json& block(const json& cfg, const std::string& key) {
    static const json empty = json::object();
    if (!cfg.contains(key)) return empty;
    if (!cfg.at(key).is_object()) throw ConfigError("block must be an object: " + key);
    return cfg.at(key);
}

/// Applies "a.b.c=value"; the value is parsed as JSON when possible, otherwise kept as a string.
inline void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
    const std::string path = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &cfg;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ConfigError("empty component in override path: " + path);
        parts.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
        node = &(*node)[parts[i]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
    (*node)[parts.back()] = value;
}

struct SystemSpec {
    NondimParams params;
    std::optional<double> time_scale;
};

inline SystemSpec resolve_system(const json& cfg) {
    const json& sys = require(cfg, "system", "");
    if (!sys.is_object()) throw ConfigError("block must be an object: system");
    const std::string kind = sys.value("attachment", std::string("nes"));
    if (kind != "nes" && kind != "tmd") throw ConfigError("system.attachment must be \"nes\" or \"tmd\"");
    const bool has_phys = sys.contains("physical"), has_nd = sys.contains("nondimensional");
    if (has_phys == has_nd)
        throw ConfigError("system needs exactly one of the blocks: system.physical, system.nondimensional");
    SystemSpec out;
    if (has_phys) {
        const json& p = sys.at("physical");
        const std::string w = "system.physical";
        PhysicalParams pp{number(p, "M1", w), number(p, "M2", w), number(p, "M3", w),
                          number(p, "kappa1", w), number(p, "kappa12", w), number(p, "kappa3", w),
                          number(p, "b1", w), number(p, "b12", w), number(p, "b3", w)};
        const auto nd = nondimensionalize(pp, kind == "nes" ? AttachmentType::cubic_nes : AttachmentType::linear_tmd);
        out.params = nd.params;
        out.time_scale = nd.time_scale;
    } else {
        const json& p = sys.at("nondimensional");
        const std::string w = "system.nondimensional";
        NondimParams& n = out.params;
        n.mu = number(p, "mu", w);
        n.eps = number(p, "eps", w);
        n.zeta1 = number(p, "zeta1", w);
        n.zeta12 = number(p, "zeta12", w);
        n.zeta3 = number(p, "zeta3", w);
        n.k12 = number(p, "k12", w);
        if (kind == "nes") n.attachment = CubicNes{number(p, "C", w)};
        else n.attachment = LinearTmd{number(p, "k_tmd", w)};
    }
    out.params.validate();
    return out;
}

inline json params_json(const NondimParams& p) {
    json j{{"mu", p.mu}, {"eps", p.eps}, {"zeta1", p.zeta1}, {"zeta12", p.zeta12}, {"zeta3", p.zeta3}, {"k12", p.k12}};
    if (is_nes(p.attachment)) {
        j["attachment"] = "nes";
        j["C"] = attachment_stiffness(p.attachment);
    } else {
        j["attachment"] = "tmd";
        j["k_tmd"] = attachment_stiffness(p.attachment);
    }
    return j;
}

inline IntegratorConfig resolve_integrator(const json& cfg) {
    const json& s = block(cfg, "simulation");
    IntegratorConfig c;
    c.rel_tol = number(s, "rel_tol", c.rel_tol);
    c.abs_tol = number(s, "abs_tol", c.abs_tol);
    c.max_step = number(s, "max_step", c.max_step);
    c.dense_output_dt = number(s, "sample_dt", c.dense_output_dt);
    c.validate();
    return c;
}

inline TimeSpan resolve_tspan(const json& cfg, double default_end) {
    const json& s = block(cfg, "simulation");
    if (!s.contains("tspan")) return {0.0, default_end};
    const auto v = number_list(s, "tspan", "simulation");
    if (v.size() != 2 || !(v[1] > v[0])) throw ConfigError("simulation.tspan must be [start, end] with end > start");
    return {v[0], v[1]};
}

inline ReductionOptions resolve_reduction(const json& cfg) {
    const json& a = block(cfg, "analysis");
    ReductionOptions r;
    if (a.contains("window")) {
        const auto w = number_list(a, "window", "analysis");
        if (w.size() != 2 || !(w[1] >= w[0])) throw ConfigError("analysis.window must be [start, end]");
        r.window = {w[0], w[1]};
    }
    if (a.contains("omega") && !a.at("omega").is_null()) r.omega = number(a, "omega", "analysis");
    return r;
}

inline PerturbationSpec resolve_perturbation(const json& cfg) {
    const json& p = require(block(cfg, "analysis"), "perturbation", "analysis");
    PerturbationSpec s;
    s.target = perturbation_target_from_string(p.value("target", std::string("M2")));
    const std::string mode = p.value("mode", std::string("quantile"));
    if (mode == "quantile") s.mode = SamplingMode::quantile;
    else if (mode == "explicit") s.mode = SamplingMode::explicit_grid;
    else if (mode == "monte_carlo") s.mode = SamplingMode::monte_carlo;
    else throw ConfigError("analysis.perturbation.mode must be quantile, explicit or monte_carlo");
    s.sigma_fraction = number(p, "sigma_fraction", s.sigma_fraction);
    s.count = static_cast<std::size_t>(number(p, "count", static_cast<double>(s.count)));
    if (p.contains("values")) s.values = number_list(p, "values", "analysis.perturbation");
    s.seed = static_cast<std::uint64_t>(number(p, "seed", 0.0));
    return s;
}

// -- output ------------------------------------------------------------------------

struct Output {
    std::optional<std::filesystem::path> dir;
    json config;  // resolved config, embedded in every file

    void write(const std::string& name, const std::string& content) const {
        if (!dir) return;
        std::filesystem::create_directories(*dir);
        write_text_file((*dir / name).string(), content);
    }

    void write_json(const std::string& name, json body) const {
        body["config"] = config;
        write(name, dump_json(body) + "\n");
    }

    void write_svg(const std::string& name, const std::string& svg) const {
        // Provenance comment after the root element opens.
        const auto pos = svg.find('\n');
        std::string cfg = dump_json(config, 0);
        for (std::size_t i = cfg.find("--"); i != std::string::npos; i = cfg.find("--", i)) cfg.replace(i, 2, "- -");
        write(name, svg.substr(0, pos + 1) + "<!-- config: " + cfg + " -->\n" + svg.substr(pos + 1));
    }
};

// -- subcommands ---------------------------------------------------------------------

inline json cmd_simulate(const json& cfg, const Output& out) {
    const SystemSpec sys = resolve_system(cfg);
    const json& sim = block(cfg, "simulation");
    const double v0 = number(sim, "v0", "simulation");
    const TimeSpan span = resolve_tspan(cfg, kNominalHorizon);
    const IntegratorConfig ic = resolve_integrator(cfg);
    const std::string diss = sim.value("dissipation", std::string("energy_consistent"));
    if (diss != "energy_consistent" && diss != "as_printed")
        throw ConfigError("simulation.dissipation must be energy_consistent or as_printed");
    const auto conv = diss == "as_printed" ? DissipationConvention::as_printed : DissipationConvention::energy_consistent;

    const Trajectory traj = integrate(sys.params, State::impulse(v0), span, ic);
    const EnergyTrace tr = energy_trace(traj, conv);
    const std::size_t last = tr.times.size() - 1;
    const double balance = tr.primary_fraction[last] + tr.nes_fraction[last] + tr.diss_ground[last] +
                           tr.diss_primary[last] + tr.diss_attachment[last] - 1.0;
    json r{{"params", params_json(sys.params)},
           {"v0", v0},
           {"tspan", {span.start, span.end}},
           {"dissipation_convention", diss},
           {"final",
            {{"tau", tr.times[last]},
             {"primary_fraction", tr.primary_fraction[last]},
             {"nes_fraction", tr.nes_fraction[last]},
             {"dissipated_ground", tr.diss_ground[last]},
             {"dissipated_primary", tr.diss_primary[last]},
             {"dissipated_attachment", tr.diss_attachment[last]},
             {"energy_balance_residual", balance}}}};
    if (sys.time_scale) r["time_scale"] = *sys.time_scale;

    std::vector<std::vector<double>> rows;
    rows.reserve(traj.times.size());
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const State& s = traj.states[i];
        rows.push_back({traj.times[i], s.x(0), s.x(1), s.x(2), s.v(0), s.v(1), s.v(2), tr.primary_fraction[i],
                        tr.nes_fraction[i], tr.diss_ground[i], tr.diss_primary[i], tr.diss_attachment[i]});
    }
    out.write("trajectory.csv", csv_with_config(out.config,
                                                {"tau", "x1", "x2", "x3", "v1", "v2", "v3", "primary_fraction",
                                                 "nes_fraction", "diss_ground", "diss_primary", "diss_attachment"},
                                                rows));
    out.write_svg("energy.svg", line_plot_svg({"Energy fractions", "tau (-)", "fraction of initial energy",
                                               {tr.times, tr.times}, {tr.primary_fraction, tr.nes_fraction},
                                               {"primary", "attachment"}}));
    out.write_json("simulate.json", r);
    return r;
}

inline json cmd_reduce(const json& cfg, const Output& out) {
    const SystemSpec sys = resolve_system(cfg);
    const NondimParams& p = sys.params;
    const double v0 = number(block(cfg, "simulation"), "v0", "simulation");
    const TimeSpan span = resolve_tspan(cfg, kNominalHorizon);
    const IntegratorConfig ic = resolve_integrator(cfg);
    const ReductionOptions ro = resolve_reduction(cfg);
    const double w = resolve_omega(p, ro);

    const Trajectory full = integrate(p, State::impulse(v0), span, ic);
    const EnvelopeSeries env = envelope_from_full(full, w);
    const ComplexSeries slow = integrate_slow(slow_model(p, w), slow_ic(v0), span, ic);
    const SuperSlowModel ssm = superslow_model(p, w);
    const SuperSlowIc z0 = superslow_ic(v0, p.eps);
    const ComplexSeries four = integrate_superslow4(ssm, z0.z1, z0.z2, z0.z3, span, ic);
    const ComplexSeries two = integrate_reduced2(ssm, z0.z2, z0.z1, z0.z3, span, ic);

    const auto u2_full = env.abs_u(1), u2_slow = slow.abs_of(1);
    const auto z2_four = four.abs_of(1), z2_two = two.abs_of(0);
    std::vector<double> z1_num = four.abs_of(0), z1_cf;
    for (double t : four.times) z1_cf.push_back(std::abs(z1_analytic(ssm, t, z0.z1, z0.z3)));

    const MeanForcing mf = mean_c1c2(p, w, ro.window);
    const HamiltonianModel hm = hamiltonian_model(p, w, mf, v0 / std::sqrt(p.eps));
    auto ham = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        const auto [dx, dyy] = ham_rhs(hm, y(0), y(1));
        dy.resize(2);
        dy << dx, dyy;
    };
    const OdeSolution orbit = integrate_ode(ham, Eigen::VectorXd::Zero(2), span.start, span.end, ic);
    std::vector<double> hx, hy, x2d, y2d;
    for (const auto& y : orbit.y) {
        hx.push_back(y(0));
        hy.push_back(y(1));
    }
    for (const auto& z : two.values) {
        x2d.push_back(z(0).real());
        y2d.push_back(z(0).imag());
    }

    json r{{"params", params_json(p)},
           {"v0", v0},
           {"omega", w},
           {"window", {ro.window.start, ro.window.end}},
           {"Chat1", mf.Chat1},
           {"Chat2", mf.Chat2},
           {"mismatch",
            {{"u2_slow_vs_full", relative_rms_mismatch(u2_full, u2_slow)},
             {"z2_reduced2_vs_superslow4", relative_rms_mismatch(z2_four, z2_two)},
             {"z1_analytic_vs_numerical", relative_rms_mismatch(z1_num, z1_cf)}}}};

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < full.times.size(); ++i)
        rows.push_back({full.times[i], std::abs(env.u[i](0)), u2_full[i], std::abs(env.u[i](2)),
                        std::abs(slow.values[i](0)), u2_slow[i], std::abs(slow.values[i](2)), z1_num[i], z1_cf[i],
                        z2_four[i], z2_two[i]});
    out.write("reduction.csv",
              csv_with_config(out.config,
                              {"tau", "abs_u1_full", "abs_u2_full", "abs_u3_full", "abs_u1_slow", "abs_u2_slow",
                               "abs_u3_slow", "abs_z1_superslow4", "abs_z1_closed_form", "abs_z2_superslow4",
                               "abs_z2_reduced2"},
                              rows));
    std::vector<std::vector<double>> prow;
    for (std::size_t i = 0; i < orbit.t.size(); ++i) prow.push_back({orbit.t[i], hx[i], hy[i]});
    out.write("phase_portrait.csv", csv_with_config(out.config, {"tau", "x", "y"}, prow));
    out.write_svg("phase_portrait.svg", line_plot_svg({"z2 phase portrait", "Re z2", "Im z2", {hx, x2d}, {hy, y2d},
                                                      {"undamped, averaged forcing", "damped 2-D system"}}));
    out.write_svg("envelopes.svg", line_plot_svg({"|u2| envelopes", "tau (-)", "|u2|", {full.times, slow.times},
                                                 {u2_full, u2_slow}, {"full system", "slow flow"}}));
    out.write_json("reduce.json", r);
    return r;
}

inline json homoclinic_json(const HomoclinicReport& h) {
    return {{"saddle_a", h.saddle_a},          {"entered", h.entered},
            {"entry_time", h.entry_time},      {"captured", h.captured()},
            {"min_a", h.min_a},                {"max_a", h.max_a},
            {"backward_reaches_saddle", h.backward_reaches_saddle},
            {"backward_return_distance", h.backward_return_distance},
            {"returns_to_start", h.returns_to_start}};
}

inline HomoclinicOptions resolve_homoclinic(const json& cfg) {
    const json& a = block(cfg, "analysis");
    HomoclinicOptions o;
    if (!a.contains("homoclinic")) return o;
    const json& h = a.at("homoclinic");
    o.displacement = number(h, "displacement", o.displacement);
    o.horizon = number(h, "horizon", o.horizon);
    o.neighborhood = number(h, "neighborhood", o.neighborhood);
    return o;
}

inline json cmd_critical(const json& cfg, const Output& out) {
    const SystemSpec sys = resolve_system(cfg);
    const ReductionOptions ro = resolve_reduction(cfg);
    const CriticalReport c = critical_analysis(sys.params, ro);
    const HomoclinicOptions ho = resolve_homoclinic(cfg);
    const double sub = number(block(cfg, "analysis"), "subcritical_fraction", 0.5);
    HamiltonianModel hm{c.omega, sys.params.C(), c.Chat1, c.Chat2, c.z3_cr};
    const HomoclinicReport at_cr = homoclinic_check(hm, ho);
    hm.z3_0 = sub * c.z3_cr;
    const HomoclinicReport below = homoclinic_check(hm, ho);

    json r{{"params", params_json(sys.params)},
           {"omega", c.omega},
           {"window", {c.window.start, c.window.end}},
           {"Chat1", c.Chat1},
           {"Chat2", c.Chat2},
           {"z3_cr", c.z3_cr},
           {"v_cr", c.v_cr},
           {"roots", c.roots},
           {"double_root", c.double_root},
           {"f_prime_at_double_root", c.f_prime_at_double_root},
           {"homoclinic_critical", homoclinic_json(at_cr)},
           {"homoclinic_subcritical", homoclinic_json(below)},
           {"subcritical_fraction", sub}};
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < at_cr.times.size(); ++i) rows.push_back({at_cr.times[i], at_cr.xs[i], at_cr.ys[i]});
    out.write("homoclinic_orbit.csv", csv_with_config(out.config, {"tau", "x", "y"}, rows));
    out.write_svg("homoclinic.svg", line_plot_svg({"Orbit from the origin", "x", "y", {at_cr.xs, below.xs},
                                                  {at_cr.ys, below.ys}, {"critical z3(0)", "subcritical z3(0)"}}));
    out.write_json("critical.json", r);
    return r;
}

inline std::vector<double> optional_list(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) return {};
    return number_list(j, key, where);
}

inline json cmd_tmd_opt(const json& cfg, const Output& out) {
    const json& tmd = require(block(cfg, "analysis"), "tmd", "analysis");
    const std::string mode = tmd.value("mode", std::string("1dof"));
    const auto zgrid = optional_list(tmd, "zeta_grid", "analysis.tmd");
    const auto kgrid = optional_list(tmd, "stiffness_grid", "analysis.tmd");
    json r;
    std::optional<CostSurface> surface;
    if (mode == "1dof") {
        const double eps = number(tmd, "eps", "analysis.tmd"), zeta1 = number(tmd, "zeta1", "analysis.tmd");
        const double v10 = number(tmd, "v10", 1.0);
        const Optimum1 o = optimum_1dof(eps, zeta1);
        r = {{"mode", "1dof"},
             {"eps", eps},
             {"zeta1", zeta1},
             {"zeta2", o.zeta2},
             {"kappa", o.kappa},
             {"J", o.J},
             {"J_lyapunov", cost_J_1dof_lyapunov({eps, zeta1, o.zeta2, o.kappa}, v10)},
             {"v10", v10}};
        if (!zgrid.empty() && !kgrid.empty()) surface = cost_surface_1dof(eps, zeta1, zgrid, kgrid);
    } else if (mode == "2dof") {
        const SystemSpec sys = resolve_system(cfg);
        Optimize2Options oo;
        if (tmd.contains("zeta3_init")) oo.zeta3_init = number(tmd, "zeta3_init", "analysis.tmd");
        if (tmd.contains("k_tmd_init")) oo.k_tmd_init = number(tmd, "k_tmd_init", "analysis.tmd");
        oo.max_iterations = static_cast<int>(number(tmd, "max_iterations", oo.max_iterations));
        const Optimum2 o = optimize_2dof(sys.params, oo);
        r = {{"mode", "2dof"},
             {"params", params_json(sys.params)},
             {"zeta3", o.zeta3},
             {"k_tmd", o.k_tmd},
             {"J", o.J},
             {"iterations", o.iterations},
             {"converged", o.converged},
             {"gradient_norm", o.gradient_norm}};
        if (!o.warning.empty()) r["warning"] = o.warning;
        if (!zgrid.empty() && !kgrid.empty()) surface = cost_surface_2dof(sys.params, zgrid, kgrid);
    } else {
        throw ConfigError("analysis.tmd.mode must be 1dof or 2dof");
    }
    if (surface) {
        const auto pk = surface->peak();
        r["grid_peak"] = {{"zeta", pk.zeta}, {"stiffness", pk.stiffness}, {"J", pk.J}};
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < surface->zetas.size(); ++i)
            for (std::size_t j = 0; j < surface->stiffnesses.size(); ++j)
                rows.push_back({surface->zetas[i], surface->stiffnesses[j], surface->J[i][j]});
        out.write("cost_surface.csv", csv_with_config(out.config, {"zeta", "stiffness", "J"}, rows));
    }
    out.write_json("tmd_opt.json", r);
    return r;
}

inline json cmd_design_nes(const json& cfg, const Output& out) {
    const SystemSpec sys = resolve_system(cfg);
    const json& a = block(cfg, "analysis");
    const double v = number(a, "v_design", "analysis");
    const double derate = number(a, "derate", 1.0);
    const ReductionOptions ro = resolve_reduction(cfg);
    const NesDesign d = design_nes_stiffness(sys.params, v, derate, ro);
    NondimParams designed = sys.params;
    designed.attachment = CubicNes{d.C};
    json r{{"C", d.C},
           {"v_design", d.v_design},
           {"derate", d.derate},
           {"v_cr_target", d.v_cr},
           {"v_cr_check", v_critical(designed, ro)},
           {"omega", d.omega},
           {"window", {ro.window.start, ro.window.end}},
           {"Chat1", d.forcing.Chat1},
           {"Chat2", d.forcing.Chat2}};
    if (sys.time_scale) {
        // kappa3 = C kappa1 for the physical block.
        r["kappa3"] = d.C * block(block(cfg, "system"), "physical").value("kappa1", 0.0);
    }
    out.write_json("design_nes.json", r);
    return r;
}

inline SweepOptions resolve_sweep_options(const json& cfg, double default_tau) {
    const json& a = block(cfg, "analysis");
    SweepOptions o;
    o.tau_eval = number(a, "tau_eval", default_tau);
    o.integrator = resolve_integrator(cfg);
    o.threads = static_cast<std::size_t>(number(a, "threads", 0.0));
    return o;
}

inline void write_sweep(const Output& out, const std::string& stem, const SweepResult& r, const std::string& title) {
    out.write(stem + ".csv", to_csv(r, out.config));
    out.write_svg(stem + ".svg", to_svg(r, title));
    out.write_json(stem + ".json", to_json(r));
}

inline json cmd_sweep(const json& cfg, const Output& out) {
    const SystemSpec sys = resolve_system(cfg);
    const json& a = block(cfg, "analysis");
    const std::string kind = require(a, "sweep", "analysis").get<std::string>();
    const SweepOptions so = resolve_sweep_options(cfg, kNominalHorizon);
    SweepResult res;
    json extra = json::object();
    if (kind == "velocity") {
        const auto v = number_list(a, "v_grid", "analysis");
        res = velocity_sweep(sys.params, v, so);
        if (a.contains("threshold")) {
            ThresholdOptions to;
            to.drop_criterion = number(a.at("threshold"), "drop_criterion", to.drop_criterion);
            to.resolution = number(a.at("threshold"), "resolution", to.resolution);
            to.integrator = so.integrator;
            const auto th = detect_threshold(sys.params, v, so.tau_eval, to);
            extra["threshold"] = th ? json(*th) : json("no threshold in range");
        }
    } else if (kind == "stiffness") {
        const auto k = number_list(a, "stiffness_grid", "analysis");
        const double v0 = number(block(cfg, "simulation"), "v0", "simulation");
        res = stiffness_sweep(sys.params, k, v0, so);
        extra["argmin_stiffness"] = res.argmin_axis2();
    } else if (kind == "robustness") {
        const auto v = number_list(a, "v_grid", "analysis");
        res = robustness_sweep(sys.params, resolve_perturbation(cfg), v, so);
        extra["sensitivity"] = sensitivity(res);
    } else {
        throw ConfigError("analysis.sweep must be velocity, stiffness or robustness");
    }
    write_sweep(out, "sweep", res, kind + " sweep");
    json r = to_json(res);
    r["summary"] = extra;
    r["best"] = {{"row", res.best().row}, {"col", res.best().col}, {"value", res.best().value}};
    return r;
}

inline json cell_json(const SweepResult& r, const SweepResult::Cell& c) {
    return {{r.axis1_name, r.axis1.at(c.col)}, {r.axis2_name, r.axis2.at(c.row)}, {"value", c.value}};
}

inline json cmd_compare(const json& cfg, const Output& out) {
    const SystemSpec sys = resolve_system(cfg);
    const json& a = block(cfg, "analysis");
    const json& cmp = block(a, "compare");
    const PerturbationSpec spec = resolve_perturbation(cfg);
    if (spec.target == PerturbationTarget::C || spec.target == PerturbationTarget::k_tmd)
        throw ConfigError("compare needs a plant perturbation target (M2, M3 or zeta3)");
    const auto v = number_list(a, "v_grid", "analysis");
    const SweepOptions so = resolve_sweep_options(cfg, kNominalHorizon);
    const ReductionOptions ro = resolve_reduction(cfg);

    NondimParams nes = sys.params;
    json design;
    if (cmp.contains("C")) {
        nes.attachment = CubicNes{number(cmp, "C", "analysis.compare")};
        design["nes_rule"] = "explicit";
    } else if (a.contains("v_design")) {
        const NesDesign d = design_nes_stiffness(sys.params, number(a, "v_design", "analysis"),
                                                 number(a, "derate", 1.0), ro);
        nes.attachment = CubicNes{d.C};
        design["nes_rule"] = "critical velocity";
        design["v_cr_target"] = d.v_cr;
    } else if (is_nes(sys.params.attachment)) {
        design["nes_rule"] = "system";
    } else {
        throw ConfigError("missing block: analysis.v_design or analysis.compare.C");
    }
    design["C"] = nes.C();

    NondimParams tmd = sys.params;
    if (cmp.contains("k_tmd")) {
        tmd = with_tmd(sys.params, number(cmp, "zeta3_tmd", sys.params.zeta3), number(cmp, "k_tmd", "analysis.compare"));
        design["tmd_rule"] = "explicit";
    } else {
        NondimParams probe = with_tmd(sys.params, sys.params.zeta3, 1.0);
        const Optimum2 o = optimize_2dof(probe);
        tmd = with_tmd(sys.params, o.zeta3, o.k_tmd);
        design["tmd_rule"] = "lyapunov optimum";
    }
    design["zeta3_tmd"] = tmd.zeta3;
    design["k_tmd"] = attachment_stiffness(tmd.attachment);

    const SweepResult rn = robustness_sweep(nes, spec, v, so);
    const SweepResult rt = robustness_sweep(tmd, spec, v, so);
    const CompareReport rep = compare(rn, rt);

    json r{{"design", design},
           {"tau_eval", so.tau_eval},
           {"target", to_string(spec.target)},
           {"nes_best", cell_json(rn, rep.nes_best)},
           {"tmd_best", cell_json(rt, rep.tmd_best)},
           {"nes_worst", cell_json(rn, rep.nes_worst)},
           {"tmd_worst", cell_json(rt, rep.tmd_worst)},
           {"fraction_nes_better", rep.fraction_nes_better},
           {"nes_sensitivity", rep.nes_sensitivity},
           {"tmd_sensitivity", rep.tmd_sensitivity},
           {"difference", rep.difference}};
    write_sweep(out, "compare_nes", rn, "NES");
    write_sweep(out, "compare_tmd", rt, "TMD");
    out.write_json("compare.json", r);
    return r;
}

// -- dispatch --------------------------------------------------------------------------

inline json load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError("config file is empty; missing block: system");
    try {
        json j = json::parse(text);
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Vibration absorber design and analysis"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::vector<std::string> overrides;

    using Handler = json (*)(const json&, const Output&);
    struct Sub {
        const char* name;
        const char* help;
        Handler fn;
    };
    const Sub subs[] = {
        {"simulate", "Integrate the full system and report the energy trace", cmd_simulate},
        {"reduce", "Slow, super-slow and 2-D reduced integrations with phase portraits", cmd_reduce},
        {"critical", "Averaged forcing, fixed points, critical velocity and homoclinic report", cmd_critical},
        {"tmd-opt", "Optimal TMD parameters for the 1-DOF or 2-DOF primary", cmd_tmd_opt},
        {"design-nes", "NES stiffness for a target critical velocity", cmd_design_nes},
        {"sweep", "Velocity, stiffness or robustness sweep", cmd_sweep},
        {"compare", "NES versus TMD robustness grids", cmd_compare},
    };
    for (const auto& s : subs) {
        CLI::App* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("config", config_path, "JSON config file")->required();
        sc->add_option("--out", out_dir, "Output directory");
        sc->add_option("--set", overrides, "Override a config leaf, e.g. system.nondimensional.eps=0.0318");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << e.what() << "\n" << app.help();
        return kExitConfig;
    }

    const Sub* chosen = nullptr;
    for (const auto& s : subs)
        if (app.got_subcommand(s.name)) chosen = &s;

    try {
        json cfg = load_config(config_path);
        for (const auto& o : overrides) apply_override(cfg, o);
        Output o;
        o.config = cfg;
        if (!out_dir.empty()) o.dir = out_dir;
        else if (cfg.contains("output") && cfg.at("output").contains("directory"))
            o.dir = cfg.at("output").at("directory").get<std::string>();
        json result = chosen->fn(cfg, o);
        result["config"] = cfg;
        out << dump_json(result) << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DomainError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const StiffnessError& e) {
        err << dump_json({{"error", "stiffness"}, {"message", e.what()}, {"last_time", e.last_time()}}, 0) << "\n";
        return kExitNumerical;
    } catch (const StabilityError& e) {
        err << dump_json({{"error", "stability"}, {"message", e.what()}}, 0) << "\n";
        return kExitNumerical;
    } catch (const SingularityError& e) {
        err << dump_json({{"error", "singularity"}, {"message", e.what()}}, 0) << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << dump_json({{"error", "numerical"}, {"message", e.what()}}, 0) << "\n";
        return kExitNumerical;
    }
}

}  // namespace nes::cli
