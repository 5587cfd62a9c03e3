#pragma once

// Batch experiments: velocity, stiffness and robustness sweeps of the primary energy fraction,
// NES stiffness design from a target critical velocity, and NES-vs-TMD comparison.

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nes/errors.hpp"
#include "nes/io.hpp"
#include "nes/model.hpp"
#include "nes/parallel.hpp"
#include "nes/reduction.hpp"
#include "nes/sim.hpp"

namespace nes {

enum class PerturbationTarget { M2, M3, zeta3, C, k_tmd };

inline std::string to_string(PerturbationTarget t) {
    switch (t) {
    case PerturbationTarget::M2: return "M2";
    case PerturbationTarget::M3: return "M3";
    case PerturbationTarget::zeta3: return "zeta3";
    case PerturbationTarget::C: return "C";
    case PerturbationTarget::k_tmd: return "k_tmd";
    }
    return "?";
}

inline PerturbationTarget perturbation_target_from_string(const std::string& s) {
    if (s == "M2") return PerturbationTarget::M2;
    if (s == "M3") return PerturbationTarget::M3;
    if (s == "zeta3") return PerturbationTarget::zeta3;
    if (s == "C") return PerturbationTarget::C;
    if (s == "k_tmd") return PerturbationTarget::k_tmd;
    throw DomainError("unknown perturbation target: " + s);
}

/// Axis label; masses are carried relative to M1.
inline std::string axis_label(PerturbationTarget t) {
    switch (t) {
    case PerturbationTarget::M2: return "M2 / M1 (-)";
    case PerturbationTarget::M3: return "M3 / M1 (-)";
    case PerturbationTarget::zeta3: return "zeta3 (-)";
    case PerturbationTarget::C: return "C (-)";
    case PerturbationTarget::k_tmd: return "k_tmd (-)";
    }
    return "?";
}

/// Nominal value of the perturbed quantity in nondimensional units.
inline double nominal_value(const NondimParams& p, PerturbationTarget t) {
    switch (t) {
    case PerturbationTarget::M2: return p.mu;
    case PerturbationTarget::M3: return p.eps;
    case PerturbationTarget::zeta3: return p.zeta3;
    case PerturbationTarget::C:
        if (!is_nes(p.attachment)) throw DomainError("perturbation target C requires a NES attachment");
        return p.C();
    case PerturbationTarget::k_tmd:
        if (is_nes(p.attachment)) throw DomainError("perturbation target k_tmd requires a TMD attachment");
        return attachment_stiffness(p.attachment);
    }
    throw DomainError("unknown perturbation target");
}

inline NondimParams apply_perturbation(NondimParams p, PerturbationTarget t, double value) {
    switch (t) {
    case PerturbationTarget::M2: p.mu = value; break;
    case PerturbationTarget::M3: p.eps = value; break;
    case PerturbationTarget::zeta3: p.zeta3 = value; break;
    case PerturbationTarget::C:
    case PerturbationTarget::k_tmd:
        nominal_value(p, t);
        p.attachment = with_stiffness(p.attachment, value);
        break;
    }
    return p;
}

enum class SamplingMode { quantile, explicit_grid, monte_carlo };

struct PerturbationSpec {
    PerturbationTarget target = PerturbationTarget::M2;
    SamplingMode mode = SamplingMode::quantile;
    double sigma_fraction = 0.05;  // sigma relative to the nominal value
    std::size_t count = 11;
    std::vector<double> values;    // explicit grid
    std::uint64_t seed = 0;

    void validate() const {
        if (mode == SamplingMode::explicit_grid) {
            if (values.empty()) throw DomainError("explicit perturbation grid is empty");
            for (double v : values)
                if (!(v > 0)) throw DomainError("perturbation grid values must be positive");
        } else {
            if (!(sigma_fraction > 0)) throw DomainError("perturbation sigma must be positive");
            if (count == 0) throw DomainError("perturbation sample count must be positive");
        }
    }

    /// Values of the perturbed quantity, ascending. The quantile grid places the samples at
    /// the (i + 1/2)/count quantiles of Normal(nominal, sigma).
    std::vector<double> resolve(double nominal) const {
        validate();
        std::vector<double> out;
        if (mode == SamplingMode::explicit_grid) {
            out = values;
        } else {
            const double sigma = sigma_fraction * nominal;
            if (mode == SamplingMode::quantile) {
                const boost::math::normal_distribution<double> dist(nominal, sigma);
                for (std::size_t i = 0; i < count; ++i)
                    out.push_back(boost::math::quantile(dist, (static_cast<double>(i) + 0.5) / static_cast<double>(count)));
            } else {
                std::mt19937_64 rng(seed);
                std::normal_distribution<double> dist(nominal, sigma);
                for (std::size_t i = 0; i < count; ++i) out.push_back(dist(rng));
            }
            for (double v : out)
                if (!(v > 0)) throw DomainError("perturbation sample is not positive; reduce sigma");
        }
        std::sort(out.begin(), out.end());
        return out;
    }
};

struct CellFailure {
    std::size_t row = 0, col = 0;
    std::string message;
};

/// metric[row][col]: row indexes axis2 (the swept parameter), col indexes axis1 (v0).
struct SweepResult {
    std::string axis1_name = "v0";
    std::vector<double> axis1;
    std::string axis2_name;
    std::vector<double> axis2;
    std::vector<std::vector<double>> metric;
    std::vector<CellFailure> failures;
    nlohmann::json metadata = nlohmann::json::object();

    struct Cell {
        std::size_t row = 0, col = 0;
        double value = std::numeric_limits<double>::quiet_NaN();
    };

    Cell best() const {
        Cell c;
        c.value = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < metric.size(); ++r)
            for (std::size_t k = 0; k < metric[r].size(); ++k)
                if (metric[r][k] < c.value) c = {r, k, metric[r][k]};
        return c;
    }

    Cell worst() const {
        Cell c;
        c.value = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < metric.size(); ++r)
            for (std::size_t k = 0; k < metric[r].size(); ++k)
                if (metric[r][k] > c.value) c = {r, k, metric[r][k]};
        return c;
    }

    /// Value of axis2 minimizing the metric in column `col` (argmin of a stiffness sweep).
    double argmin_axis2(std::size_t col = 0) const {
        if (metric.empty()) throw DomainError("argmin_axis2: empty sweep");
        std::size_t best_row = 0;
        for (std::size_t r = 1; r < metric.size(); ++r)
            if (metric[r][col] < metric[best_row][col]) best_row = r;
        return axis2[best_row];
    }
};

struct SweepOptions {
    double tau_eval = kNominalHorizon;
    IntegratorConfig integrator{};
    std::size_t threads = 0;
};

namespace detail {

template <class ParamsAt>
SweepResult run_grid(SweepResult r, ParamsAt&& params_at, const SweepOptions& opt) {
    const std::size_t rows = r.axis2.size(), cols = r.axis1.size();
    r.metric.assign(rows, std::vector<double>(cols, std::numeric_limits<double>::quiet_NaN()));
    std::vector<std::string> errors(rows * cols);
    parallel_for(rows * cols, [&](std::size_t cell) {
        const std::size_t row = cell / cols, col = cell % cols;
        try {
            r.metric[row][col] = primary_fraction_at(params_at(row), r.axis1[col], opt.tau_eval, opt.integrator);
        } catch (const std::exception& e) {
            errors[cell] = e.what();
            if (errors[cell].empty()) errors[cell] = "integration failed";
        }
    }, opt.threads);
    for (std::size_t cell = 0; cell < errors.size(); ++cell)
        if (!errors[cell].empty()) r.failures.push_back({cell / cols, cell % cols, errors[cell]});
    r.metadata["tau_eval"] = opt.tau_eval;
    return r;
}

inline void require_ascending(const std::vector<double>& g, const char* what) {
    if (g.empty()) throw DomainError(std::string(what) + " is empty");
    for (std::size_t i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1])) throw DomainError(std::string(what) + " must be ascending");
}

inline const char* absorber_name(const Attachment& a) { return is_nes(a) ? "nes" : "tmd"; }

}  // namespace detail

/// Primary energy fraction at tau_eval for each impulse.
inline SweepResult velocity_sweep(const NondimParams& params, const std::vector<double>& v_grid,
                                  const SweepOptions& opt = {}) {
    params.validate();
    detail::require_ascending(v_grid, "velocity grid");
    SweepResult r;
    r.axis1 = v_grid;
    r.axis2_name = "nominal";
    r.axis2 = {0.0};
    r.metadata["sweep"] = "velocity";
    r.metadata["absorber"] = detail::absorber_name(params.attachment);
    return detail::run_grid(std::move(r), [&](std::size_t) { return params; }, opt);
}

/// Primary energy fraction at tau_eval for each attachment stiffness (C or k_tmd), at one impulse.
inline SweepResult stiffness_sweep(const NondimParams& params, const std::vector<double>& stiffness_grid, double v0,
                                   const SweepOptions& opt = {}) {
    if (stiffness_grid.empty()) throw DomainError("stiffness grid is empty");
    for (double k : stiffness_grid)
        if (!(k > 0)) throw DomainError("stiffness grid values must be positive");
    SweepResult r;
    r.axis1 = {v0};
    r.axis2_name = is_nes(params.attachment) ? "C" : "k_tmd";
    r.axis2 = stiffness_grid;
    r.metadata["sweep"] = "stiffness";
    r.metadata["absorber"] = detail::absorber_name(params.attachment);
    r = detail::run_grid(std::move(r), [&](std::size_t row) {
        NondimParams p = params;
        p.attachment = with_stiffness(params.attachment, stiffness_grid[row]);
        return p;
    }, opt);
    r.metadata["argmin_stiffness"] = r.argmin_axis2();
    return r;
}

struct NesDesign {
    double C = 0;
    double v_design = 0;
    double derate = 1;
    double v_cr = 0;  // derate * v_design
    double omega = 0;
    MeanForcing forcing;
};

/// Cubic stiffness whose critical velocity is derate * v_design. The averaged forcing does not
/// depend on C, so the inversion is closed form.
inline NesDesign design_nes_stiffness(const NondimParams& params, double v_design, double derate,
                                      const ReductionOptions& opt = {}) {
    if (!(v_design > 0)) throw DomainError("design velocity must be positive");
    if (!(derate > 0 && derate <= 1)) throw DomainError("derate must lie in (0, 1]");
    NesDesign d;
    d.v_design = v_design;
    d.derate = derate;
    d.v_cr = derate * v_design;
    d.omega = resolve_omega(params, opt);
    d.forcing = mean_c1c2(params, d.omega, opt.window);
    const double s = d.forcing.norm2();
    if (!(s > 0)) throw DomainError("design_nes_stiffness: degenerate averaged forcing");
    d.C = 2.0 * params.eps * std::pow(d.omega, 6) / (81.0 * d.v_cr * d.v_cr * s);
    return d;
}

/// Plant perturbed along one parameter; the absorber design stays at its nominal value
/// unless the absorber parameter itself is the target.
inline SweepResult robustness_sweep(const NondimParams& nominal, const PerturbationSpec& spec,
                                    const std::vector<double>& v_grid, const SweepOptions& opt = {}) {
    nominal.validate();
    detail::require_ascending(v_grid, "velocity grid");
    const double nom = nominal_value(nominal, spec.target);
    SweepResult r;
    r.axis1 = v_grid;
    r.axis2_name = to_string(spec.target);
    r.axis2 = spec.resolve(nom);
    r.metadata["sweep"] = "robustness";
    r.metadata["absorber"] = detail::absorber_name(nominal.attachment);
    r.metadata["target"] = to_string(spec.target);
    r.metadata["nominal"] = nom;
    r.metadata["sigma"] = spec.sigma_fraction * nom;
    r.metadata["sigma_fraction"] = spec.sigma_fraction;
    r.metadata["sampling"] = spec.mode == SamplingMode::quantile      ? "quantile"
                             : spec.mode == SamplingMode::monte_carlo ? "monte_carlo"
                                                                      : "explicit";
    r.metadata["seed"] = spec.seed;
    const std::vector<double> values = r.axis2;
    return detail::run_grid(std::move(r), [&](std::size_t row) {
        return apply_perturbation(nominal, spec.target, values[row]);
    }, opt);
}

/// Mean over the v0 columns of the metric's spread (max - min) along the perturbed axis.
inline double sensitivity(const SweepResult& r) {
    if (r.metric.empty() || r.axis1.empty()) throw DomainError("sensitivity: empty sweep");
    double acc = 0;
    for (std::size_t c = 0; c < r.axis1.size(); ++c) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& row : r.metric) {
            lo = std::min(lo, row[c]);
            hi = std::max(hi, row[c]);
        }
        acc += hi - lo;
    }
    return acc / static_cast<double>(r.axis1.size());
}

struct CompareReport {
    std::vector<std::vector<double>> difference;  // nes - tmd; negative where the NES leaves less energy
    SweepResult::Cell nes_best, tmd_best, nes_worst, tmd_worst;
    double fraction_nes_better = 0;
    double nes_sensitivity = 0, tmd_sensitivity = 0;
};

inline CompareReport compare(const SweepResult& nes, const SweepResult& tmd) {
    if (nes.axis1 != tmd.axis1 || nes.metric.size() != tmd.metric.size())
        throw DomainError("compare: sweep axes do not match");
    CompareReport rep;
    std::size_t better = 0, total = 0;
    rep.difference.resize(nes.metric.size());
    for (std::size_t r = 0; r < nes.metric.size(); ++r) {
        if (nes.metric[r].size() != tmd.metric[r].size()) throw DomainError("compare: sweep axes do not match");
        rep.difference[r].resize(nes.metric[r].size());
        for (std::size_t c = 0; c < nes.metric[r].size(); ++c) {
            rep.difference[r][c] = nes.metric[r][c] - tmd.metric[r][c];
            ++total;
            if (nes.metric[r][c] < tmd.metric[r][c]) ++better;
        }
    }
    rep.nes_best = nes.best();
    rep.tmd_best = tmd.best();
    rep.nes_worst = nes.worst();
    rep.tmd_worst = tmd.worst();
    rep.fraction_nes_better = total ? static_cast<double>(better) / static_cast<double>(total) : 0.0;
    rep.nes_sensitivity = sensitivity(nes);
    rep.tmd_sensitivity = sensitivity(tmd);
    return rep;
}

// -- export ----------------------------------------------------------------------------

inline nlohmann::json to_json(const SweepResult& r) {
    nlohmann::json j;
    j["axis1"] = {{"name", r.axis1_name}, {"values", r.axis1}};
    j["axis2"] = {{"name", r.axis2_name}, {"values", r.axis2}};
    j["metric"] = r.metric;
    j["metric_name"] = "primary_energy_fraction";
    j["metadata"] = r.metadata;
    nlohmann::json f = nlohmann::json::array();
    for (const auto& e : r.failures) f.push_back({{"row", e.row}, {"col", e.col}, {"message", e.message}});
    j["failures"] = f;
    return j;
}

/// Long format: axis1, axis2, metric.
inline std::string to_csv(const SweepResult& r, const nlohmann::json& config) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < r.axis2.size(); ++i)
        for (std::size_t k = 0; k < r.axis1.size(); ++k) rows.push_back({r.axis1[k], r.axis2[i], r.metric[i][k]});
    return csv_with_config(config, {r.axis1_name, r.axis2_name, "primary_energy_fraction"}, rows);
}

inline std::string to_svg(const SweepResult& r, const std::string& title) {
    HeatmapSpec h;
    h.title = title;
    h.x_label = r.axis1_name == "v0" ? "v0 (-)" : r.axis1_name;
    h.y_label = r.axis2_name;
    for (auto t : {PerturbationTarget::M2, PerturbationTarget::M3, PerturbationTarget::zeta3, PerturbationTarget::C,
                   PerturbationTarget::k_tmd})
        if (r.axis2_name == to_string(t)) h.y_label = axis_label(t);
    h.value_label = "E_primary / E_0";
    h.x = r.axis1;
    h.y = r.axis2;
    h.z = r.metric;
    h.z_min = 0;
    h.z_max = 1;
    return heatmap_svg(h);
}

}  // namespace nes
