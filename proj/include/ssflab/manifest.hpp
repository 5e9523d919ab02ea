#pragma once

// Experiment manifests: one JSON document fixing the background, the
// perturbation, the boundary condition, the grids and the tolerances.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssflab/errors.hpp"
#include "ssflab/io.hpp"
#include "ssflab/potential.hpp"
#include "ssflab/spectral_flow.hpp"
#include "ssflab/transfer.hpp"

namespace ssflab {

struct Experiment {
    std::string name;
    PiecewisePotential w;
    std::optional<BarrierSpec> spec;  // when W is a barrier train
    PiecewisePotential v;
    BoundaryCondition bc;
    std::vector<double> energies;
    BreakdownOptions options;
    std::string output = "out";
    json effective;                   // the manifest after defaults and overrides
    std::string digest;               // SHA-256 of effective.dump()
};

namespace detail {

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    std::filesystem::path q(p);
    if (q.is_relative()) q = base / q;
    if (!std::filesystem::exists(q)) throw ParameterError("referenced file does not exist: " + q.string());
    return q.string();
}

inline double get_or(const json& j, const char* key, double fallback) {
    return j.contains(key) ? finite_number(j.at(key), key) : fallback;
}

inline std::size_t get_count(const json& j, const char* key, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    const json& x = j.at(key);
    if (!x.is_number_integer() || x.get<long long>() < 0) throw ParameterError(std::string(key) + " must be a non-negative integer");
    return static_cast<std::size_t>(x.get<long long>());
}

inline double positive(const json& j, const char* key, double fallback) {
    const double x = get_or(j, key, fallback);
    if (!(x > 0.0)) throw ParameterError(std::string(key) + " must be positive");
    return x;
}

}  // namespace detail

/// The background potential: a barrier train, an inline table, or a file.
inline PiecewisePotential background_from_json(const json& j, const std::filesystem::path& base,
                                               std::optional<BarrierSpec>& spec) {
    if (j.contains("file")) return potential_from_json(read_json_file(detail::resolve_path(j.at("file"), base)));
    if (j.contains("breakpoints")) return potential_from_json(j);
    BarrierPotential bp = build_vnw_potential(detail::get_or(j, "lambda_star", 1.0), detail::get_or(j, "w", 2.0),
                                              detail::get_or(j, "s", 0.75), detail::get_count(j, "barriers", 50));
    spec = bp.spec;
    return bp.potential;
}

inline PiecewisePotential perturbation_from_json(const json& j, const std::filesystem::path& base,
                                                 const std::optional<BarrierSpec>& spec) {
    if (j.contains("file")) return potential_from_json(read_json_file(detail::resolve_path(j.at("file"), base)));
    if (j.contains("breakpoints")) return potential_from_json(j);
    const std::string kind = j.value("kind", "none");
    if (kind == "none") return {};
    if (kind == "gap_bump") {
        GapBump g;
        g.height = detail::get_or(j, "height", 0.2);
        if (j.contains("gap")) {
            if (!spec) throw ParameterError("gap_bump by gap index needs a barrier background");
            const Interval iv = spec->gap(detail::get_count(j, "gap", 1));
            g.center = 0.5 * (iv.a + iv.b);
            g.width = detail::get_or(j, "width", iv.b - iv.a);
        } else {
            g.center = detail::get_or(j, "center", 0.0);
            g.width = detail::get_or(j, "width", 1.0);
        }
        return make_perturbation(g);
    }
    if (kind == "barrier_scale") {
        if (!spec) throw ParameterError("barrier_scale needs a barrier background");
        return make_perturbation(BarrierScale{*spec, detail::get_or(j, "factor", 0.1), detail::get_count(j, "count", 5)});
    }
    if (kind == "well")
        return make_perturbation(
            Well{detail::get_or(j, "start", 0.0), detail::get_or(j, "end", 1.0), detail::get_or(j, "depth", -0.3)});
    throw ParameterError("unknown perturbation kind: " + kind);
}

inline std::vector<double> energies_from_json(const json& j) {
    std::vector<double> out;
    if (j.is_array()) {
        out = detail::finite_array(j, "energies");
    } else if (j.is_object()) {
        const double lo = detail::finite_number(j.at("min"), "energies.min");
        const double hi = detail::finite_number(j.at("max"), "energies.max");
        const std::size_t n = detail::get_count(j, "count", 1);
        if (n == 1) {
            out.push_back(lo);
        } else {
            for (std::size_t i = 0; i < n; ++i)
                out.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
        }
    } else {
        throw ParameterError("energies must be a list or {min, max, count}");
    }
    if (out.empty()) throw ParameterError("energy grid is empty");
    std::sort(out.begin(), out.end());
    return out;
}

/// Builds an experiment from a manifest document; `base` resolves relative
/// file references.
inline Experiment experiment_from_json(const json& manifest, const std::filesystem::path& base = ".") {
    if (!manifest.is_object()) throw ParameterError("manifest must be a JSON object");
    Experiment e;
    e.effective = manifest;
    e.name = manifest.value("name", "experiment");
    e.w = background_from_json(manifest.value("potential", json::object()), base, e.spec);
    e.v = perturbation_from_json(manifest.value("perturbation", json::object()), base, e.spec);

    const json bc = manifest.value("boundary", json::object());
    if (bc.value("kind", "robin") == "dirichlet")
        e.bc = BoundaryCondition::dirichlet();
    else
        e.bc = BoundaryCondition::robin(detail::get_or(bc, "h", e.spec ? e.spec->boundary_h : 0.0));

    e.energies = energies_from_json(manifest.value("energies", json::array({1.0})));
    for (double l : e.energies)
        if (!(l > 0.0)) throw ParameterError("energies must be positive");

    BreakdownOptions& o = e.options;
    o.nodes = detail::get_count(manifest, "nodes", o.nodes);
    o.r_samples = detail::get_count(manifest, "r_samples", o.r_samples);
    o.scan.r_samples = detail::get_count(manifest, "scan_r_samples", o.scan.r_samples);
    o.theta_points = detail::get_count(manifest, "theta_points", o.theta_points);
    if (o.nodes == 0 || o.r_samples < 2 || o.scan.r_samples < 3 || o.theta_points == 0)
        throw ParameterError("grids must be nonempty");
    const json y = manifest.value("y_path", json::object());
    o.y.y_max = detail::get_or(y, "y_max", 0.0);
    o.y.y_min = detail::positive(y, "y_min", o.y.y_min);
    o.y.points_per_decade = static_cast<int>(detail::get_count(y, "points_per_decade", 6));
    if (o.y.points_per_decade <= 0) throw ParameterError("points_per_decade must be positive");
    const json t = manifest.value("tolerances", json::object());
    o.scan.detection = detail::positive(t, "detection", o.scan.detection);
    o.scan.shooting_threshold = detail::positive(t, "shooting", o.scan.shooting_threshold);
    o.scan.agreement = detail::positive(t, "agreement", o.scan.agreement);
    o.scan.certification = detail::positive(t, "certification", o.scan.certification);
    o.tracking.max_increment = detail::positive(t, "max_increment", o.tracking.max_increment);
    o.jump.tolerance = detail::positive(t, "jump", o.jump.tolerance);
    o.with_oracle = manifest.value("oracle", true);
    e.output = manifest.value("output", std::string("out"));
    e.digest = sha256_hex(e.effective.dump());
    return e;
}

inline Experiment load_experiment(const std::string& path, const json& overrides = json::object()) {
    json m = read_json_file(path);
    m.merge_patch(overrides);
    return experiment_from_json(m, std::filesystem::path(path).parent_path());
}

}  // namespace ssflab
