// ssflab: experiment manifests in, certified numbers and plot-ready tables out.

#include "CLI11.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ssflab/ssflab.hpp"

namespace fs = std::filesystem;
using namespace ssflab;

namespace {

struct Common {
    std::string manifest;
    std::string out;
    unsigned threads = 1;
    long seed = 0;  // reserved: every computation is deterministic
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results are written
/// by index, so output order never depends on completion order.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
}

Experiment load(const Common& c, const json& overrides) {
    Experiment e = c.manifest.empty() ? experiment_from_json(overrides) : load_experiment(c.manifest, overrides);
    if (!c.out.empty()) e.output = c.out;
    return e;
}

fs::path prepare(const Experiment& e) {
    fs::path dir(e.output);
    fs::create_directories(dir);
    return dir;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

// ---------------------------------------------------------------------------

int cmd_build_potential(const Common& c, double lambda, double w, double s, long n) {
    if (n < 0) throw ParameterError("--n must be non-negative");
    if (n == 0) std::cerr << "warning: --n 0 builds the empty potential W = 0\n";
    const BarrierPotential bp = build_vnw_potential(lambda, w, s, static_cast<std::size_t>(n));
    const ShootingReport rep = verify_embedded_eigenvalue(bp);
    const fs::path dir(c.out.empty() ? "." : c.out);
    fs::create_directories(dir);
    write_json_file((dir / "potential.json").string(), to_json(bp.potential));
    write_json_file((dir / "barrier_spec.json").string(), to_json(bp.spec));
    write_json_file((dir / "shooting_report.json").string(), to_json(rep));
    std::printf("barriers %ld  support_end %.17g  max entry residual %.3e  decay exponent %.6f\n", n,
                bp.potential.support_end, rep.max_residual(), rep.decay_fit_exponent);
    return 0;
}

int cmd_verify(const Common& c, const json& ov) {
    const Experiment e = load(c, ov);
    if (!e.spec) throw ParameterError("verify-eigenvalue needs a barrier-train background");
    const ShootingReport rep = verify_embedded_eigenvalue(e.w, *e.spec);
    const fs::path dir = prepare(e);
    json j = to_json(rep);
    j["manifest_digest"] = e.digest;
    write_json_file((dir / "shooting_report.json").string(), j);
    double ratio_err = 0.0;
    for (std::size_t i = 0; i < rep.amplitude_ratios.size(); ++i)
        ratio_err = std::max(ratio_err, std::abs(rep.amplitude_ratios[i] -
                                                 std::exp(-e.spec->kappa() * std::pow(i + 1.0, -e.spec->s))));
    std::printf("max entry residual %.3e  max amplitude-ratio error %.3e  decay exponent %.6f  l2 %s\n",
                rep.max_residual(), ratio_err, rep.decay_fit_exponent, rep.l2_divergent ? "divergent" : "convergent");
    return 0;
}

int cmd_phase_shift(const Common& c, const json& ov) {
    const Experiment e = load(c, ov);
    const std::vector<double> grid = uniform_r_grid(e.options.r_samples);
    std::vector<CsvTable> parts(e.energies.size(), CsvTable({}));
    const std::vector<std::string> header{"lambda", "r", "delta_shift", "s_eigenphase", "residual", "flagged"};
    parallel_for(e.energies.size(), c.threads, [&](std::size_t i) {
        const double lambda = e.energies[i];
        CsvTable t(header);
        const PhaseShiftCurve curve = phase_shift_curve(e.w, e.v, e.bc, lambda, grid);
        std::optional<SandwichedResolvent> t0;
        if (!e.v.empty()) t0 = assemble_T(e.w, e.v, e.bc, default_grid(e.w, e.v, e.options.nodes), cplx(lambda, 0.0));
        for (const PhaseShiftSample& s : curve.samples) {
            bool flagged = false;
            for (double f : curve.flagged) flagged = flagged || f == s.r;
            double phase = 0.0;
            double residual = 0.0;
            if (t0) {
                try {
                    const Eigen::VectorXcd ev = s_matrix_eigenvalues(*t0, s.r);
                    Eigen::Index k = 0;
                    (ev.array() - 1.0).abs().maxCoeff(&k);
                    phase = std::arg(ev[k]);
                    residual = std::abs(wrap_phase(phase - 2.0 * s.delta));
                } catch (const ResonancePointError&) {
                    flagged = true;
                    phase = residual = std::nan("");
                }
            }
            t.add({lambda, s.r, s.delta, phase, residual, flagged});
        }
        parts[i] = std::move(t);
    });
    CsvTable all(header);
    for (const CsvTable& p : parts) all.append(p);
    all.write((prepare(e) / "phase_shift.csv").string(), e.digest);
    return 0;
}

int cmd_ssf(const Common& c, const json& ov) {
    const Experiment e = load(c, ov);
    const std::vector<std::string> header{"lambda",      "xi",           "xi_ac",     "xi_s",
                                          "mu_s",        "residual_integer", "residual_identity", "oracle_xi",
                                          "resonant",    "status"};
    std::vector<std::vector<CsvTable::Cell>> rows(e.energies.size());
    parallel_for(e.energies.size(), c.threads, [&](std::size_t i) {
        const double lambda = e.energies[i];
        try {
            const SsfBreakdown b = xi_breakdown(lambda, e.w, e.v, e.bc, e.options);
            rows[i] = {lambda, b.xi, b.xi_ac, b.xi_s, b.mu_s, b.residual_integer, b.residual_identity, b.oracle_xi,
                       b.resonant, b.note.empty() ? std::string("ok") : b.note};
        } catch (const std::exception& ex) {
            const double nan = std::nan("");
            rows[i] = {lambda, nan, nan, nan, 0L, nan, nan, nan, true, std::string("error: ") + first_line(ex.what())};
        }
    });
    CsvTable t(header);
    for (auto& r : rows) t.add(std::move(r));
    t.write((prepare(e) / "ssf.csv").string(), e.digest);
    return 0;
}

int cmd_mu(const Common& c, const json& ov) {
    const Experiment e = load(c, ov);
    const std::vector<std::string> header{"lambda", "theta", "mu", "mu_ac", "mu_s", "status"};
    std::vector<CsvTable> parts(e.energies.size(), CsvTable({}));
    parallel_for(e.energies.size(), c.threads, [&](std::size_t i) {
        const double lambda = e.energies[i];
        CsvTable t(header);
        try {
            BreakdownOptions o = e.options;
            o.with_oracle = false;
            const SsfBreakdown b = xi_breakdown(lambda, e.w, e.v, e.bc, o);
            for (std::size_t k = 0; k < b.mu.theta.size(); ++k)
                t.add({lambda, b.mu.theta[k], b.mu.values[k], b.mu_a.values[k], b.mu.values[k] - b.mu_a.values[k],
                       b.note.empty() ? std::string("ok") : b.note});
        } catch (const std::exception& ex) {
            t.add({lambda, std::nan(""), 0L, 0L, 0L, std::string("error: ") + first_line(ex.what())});
        }
        parts[i] = std::move(t);
    });
    CsvTable all(header);
    for (const CsvTable& p : parts) all.append(p);
    all.write((prepare(e) / "mu.csv").string(), e.digest);
    return 0;
}

int cmd_scan(const Common& c, const json& ov, bool heatmap) {
    const Experiment e = load(c, ov);
    const std::vector<std::string> header{"lambda", "r0", "sigma_min", "shooting_residual", "certified", "r0_shooting",
                                          "boundary", "multiplicity"};
    const std::vector<std::string> hm_header{"lambda", "r", "sigma_min"};
    std::vector<CsvTable> parts(e.energies.size(), CsvTable({}));
    std::vector<CsvTable> maps(e.energies.size(), CsvTable({}));
    parallel_for(e.energies.size(), c.threads, [&](std::size_t i) {
        const double lambda = e.energies[i];
        CsvTable t(header);
        CsvTable m(hm_header);
        const GammaScan s = scan_gamma(e.w, e.v, e.bc, lambda, e.options.scan, e.options.nodes);
        for (const ResonancePoint& p : s.points)
            t.add({lambda, p.r0, p.sigma_min, p.shooting_residual, p.certified, p.r0_shooting, p.boundary,
                   static_cast<long>(p.multiplicity)});
        for (std::size_t k = 0; k < s.r_grid.size(); ++k) m.add({lambda, s.r_grid[k], s.sigma[k]});
        parts[i] = std::move(t);
        maps[i] = std::move(m);
    });
    const fs::path dir = prepare(e);
    CsvTable all(header);
    for (const CsvTable& p : parts) all.append(p);
    all.write((dir / "resonances.csv").string(), e.digest);
    if (heatmap) {
        CsvTable hm(hm_header);
        for (const CsvTable& p : maps) hm.append(p);
        hm.write((dir / "heatmap.csv").string(), e.digest);
    }
    return 0;
}

int cmd_birman_krein(const Common& c, const json& ov) {
    const Experiment e = load(c, ov);
    const std::vector<std::string> header{"lambda", "det_s_re", "det_s_im", "oracle_re", "oracle_im", "oracle_xi",
                                          "residual", "resonant"};
    std::vector<std::vector<CsvTable::Cell>> rows(e.energies.size());
    parallel_for(e.energies.size(), c.threads, [&](std::size_t i) {
        const double lambda = e.energies[i];
        const CountingOracle oc = ssf_counting_oracle(e.w, e.v, e.bc, lambda);
        const cplx expected = std::exp(cplx(0.0, -two_pi * oc.xi));
        cplx det{1.0, 0.0};
        bool resonant = !oc.converged;
        if (!e.v.empty()) {
            const SandwichedResolvent t0 =
                assemble_T(e.w, e.v, e.bc, default_grid(e.w, e.v, e.options.nodes), cplx(lambda, 0.0));
            const GammaScan s = scan_gamma(e.w, e.v, e.bc, lambda, t0, e.options.scan);
            for (const ResonancePoint& p : s.points) resonant = resonant || p.boundary;
            try {
                det = s_matrix_determinant(t0, 1.0);
            } catch (const ResonancePointError&) {
                resonant = true;
                det = {std::nan(""), std::nan("")};
            }
        }
        rows[i] = {lambda, det.real(), det.imag(), expected.real(), expected.imag(), oc.xi, std::abs(det - expected),
                   resonant};
    });
    CsvTable t(header);
    for (auto& r : rows) t.add(std::move(r));
    t.write((prepare(e) / "birman_krein.csv").string(), e.digest);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ssflab: spectral shift function of half-line Schroedinger operators with barrier potentials"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--manifest", common.manifest, "experiment manifest (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output directory (overrides the manifest)");
        sub->add_option("--threads", common.threads, "worker threads over energies")->check(CLI::PositiveNumber);
        sub->add_option("--seed", common.seed, "reserved; all computations are deterministic");
    };
    // Manifest overrides shared by the table commands.
    std::vector<double> energies;
    std::optional<std::size_t> nodes, r_samples, theta_points;
    auto add_grid = [&](CLI::App* sub) {
        sub->add_option("--energies", energies, "energy grid (overrides the manifest)");
        sub->add_option("--nodes", nodes, "Gauss nodes per panel");
        sub->add_option("--r-samples", r_samples, "r-path samples");
        sub->add_option("--theta-points", theta_points, "theta-grid size");
    };
    auto overrides = [&] {
        json ov = json::object();
        if (!energies.empty()) ov["energies"] = energies;
        if (nodes) ov["nodes"] = *nodes;
        if (r_samples) ov["r_samples"] = *r_samples;
        if (theta_points) ov["theta_points"] = *theta_points;
        return ov;
    };

    double lambda = 1.0, w = 2.0, s = 0.75;
    long n = 50;
    auto* build = app.add_subcommand("build-potential", "barrier potential and its shooting report");
    build->add_option("--lambda", lambda, "embedded energy lambda*");
    build->add_option("--w", w, "barrier height");
    build->add_option("--s", s, "width exponent (s > 1/2)");
    build->add_option("--n", n, "number of barriers");
    add_common(build);

    auto* verify = app.add_subcommand("verify-eigenvalue", "shooting report for the manifest background");
    auto* phase = app.add_subcommand("phase-shift", "ODE phase shift against the S-matrix eigenphase");
    auto* ssf = app.add_subcommand("ssf", "xi = xi_ac + xi_s over the energy grid");
    auto* mu = app.add_subcommand("mu", "mu and mu_ac on the theta-grid");
    auto* scan = app.add_subcommand("scan-resonances", "resonance slices and detector cross-check");
    bool heatmap = false;
    scan->add_flag("--heatmap", heatmap, "also write sigma_min over the (lambda, r) grid");
    auto* bk = app.add_subcommand("birman-krein-check", "det S against exp(-2 pi i xi_oracle)");
    for (CLI::App* sub : {verify, phase, ssf, mu, scan, bk}) {
        add_common(sub);
        add_grid(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (*build) return cmd_build_potential(common, lambda, w, s, n);
        if (*verify) return cmd_verify(common, overrides());
        if (*phase) return cmd_phase_shift(common, overrides());
        if (*ssf) return cmd_ssf(common, overrides());
        if (*mu) return cmd_mu(common, overrides());
        if (*scan) return cmd_scan(common, overrides(), heatmap);
        if (*bk) return cmd_birman_krein(common, overrides());
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
