#pragma once

// Eigenphase flow of S(z, r): continuous branches along the y-path (r = 1,
// y from +infinity to 0) and along the r-path (y = 0, r from 0 to 1), the
// mu-invariants built from their endpoints, and the decomposition
// xi = xi_ac + xi_s at a single energy.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssflab/assignment.hpp"
#include "ssflab/birman_schwinger.hpp"
#include "ssflab/errors.hpp"
#include "ssflab/potential.hpp"
#include "ssflab/pruefer.hpp"
#include "ssflab/resonance.hpp"

namespace ssflab {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline double wrap_phase(double x) { return std::remainder(x, two_pi); }

struct PhaseBranches {
    std::vector<double> params;               // in path order, after refinement
    std::vector<std::vector<double>> phases;  // phases[k][j], unwrapped
    std::vector<int> depth;                   // refinement depth of each sample
    std::vector<std::pair<double, double>> skipped;
    double max_increment = 0.0;               // over all non-skipped steps

    std::size_t branch_count() const { return phases.empty() ? 0 : phases.front().size(); }
    const std::vector<double>& endpoint() const { return phases.back(); }
    double endpoint_sum() const {
        double s = 0.0;
        for (double t : phases.back()) s += t;
        return s;
    }
    /// Total variation of branch j along the path.
    double variation(std::size_t j) const {
        double v = 0.0;
        for (std::size_t k = 1; k < phases.size(); ++k) v += std::abs(phases[k][j] - phases[k - 1][j]);
        return v;
    }
};

using EigenvalueSampler = std::function<Eigen::VectorXcd(double)>;

struct TrackingOptions {
    double max_increment = 0.5;  // refine any step at or above this (stricter than pi/2)
    double ambiguity = 0.1;
    int max_depth = 24;
    std::function<double(double, double)> midpoint;  // default: arithmetic mean
    std::vector<std::pair<double, double>> skip;     // crossed by nearest-phase matching only
};

namespace detail {

inline std::vector<double> phases_of(const Eigen::VectorXcd& ev) {
    std::vector<double> p(static_cast<std::size_t>(ev.size()));
    for (Eigen::Index i = 0; i < ev.size(); ++i) p[static_cast<std::size_t>(i)] = std::arg(ev[i]);
    return p;
}

struct Match {
    std::vector<double> increments;  // per old branch
    std::vector<double> wrapped;     // new wrapped phase per old branch
    double max_increment = 0.0;
    bool ambiguous = false;
};

inline Match match_phases(const std::vector<double>& old_wrapped, const std::vector<double>& fresh, double ambiguity) {
    const auto n = static_cast<Eigen::Index>(old_wrapped.size());
    if (static_cast<Eigen::Index>(fresh.size()) != n) throw TrackingError("sampler changed dimension", 0.0, 0.0);
    Eigen::MatrixXd cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = wrap_phase(fresh[static_cast<std::size_t>(j)] - old_wrapped[static_cast<std::size_t>(i)]);
            cost(i, j) = d * d;
        }
    const auto col = min_cost_assignment(cost);
    Match m;
    m.increments.resize(static_cast<std::size_t>(n));
    m.wrapped.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const double a = fresh[static_cast<std::size_t>(col[ui])];
        m.wrapped[ui] = a;
        m.increments[ui] = wrap_phase(a - old_wrapped[ui]);
        const double da = std::abs(m.increments[ui]);
        m.max_increment = std::max(m.max_increment, da);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == col[ui]) continue;
            const double c = fresh[static_cast<std::size_t>(j)];
            const double dc = std::abs(wrap_phase(c - old_wrapped[ui]));
            // The margin shrinks with the step so that a pair separated by about
            // `ambiguity` cannot stall the bisection.
            if (dc < da + std::min(ambiguity, da) && std::abs(wrap_phase(c - a)) > ambiguity) {
                m.ambiguous = true;
                break;
            }
        }
    }
    return m;
}

}  // namespace detail

/// Continuous eigenphase branches of a unitary family sampled on `grid`
/// (monotone in either direction). Steps are refined by bisection until every
/// increment is below max_increment and the matching is unambiguous.
inline PhaseBranches track_branches(const EigenvalueSampler& sampler, const std::vector<double>& grid,
                                    const TrackingOptions& opt = {}) {
    PhaseBranches out;
    if (grid.empty()) return out;
    auto mid = [&](double a, double b) { return opt.midpoint ? opt.midpoint(a, b) : 0.5 * (a + b); };
    auto skipped = [&](double a, double b) {
        const double lo = std::min(a, b);
        const double hi = std::max(a, b);
        for (const auto& [s0, s1] : opt.skip)
            if (lo <= s0 && hi >= s1) return true;
        return false;
    };

    std::vector<double> wrapped = detail::phases_of(sampler(grid.front()));
    out.params.push_back(grid.front());
    out.phases.push_back(wrapped);
    out.depth.push_back(0);

    auto step = [&](auto&& self, double t0, double t1, const std::vector<double>& fresh, int depth) -> void {
        const detail::Match m = detail::match_phases(wrapped, fresh, opt.ambiguity);
        const bool skip = skipped(t0, t1);
        if (!skip && (m.max_increment >= opt.max_increment || m.ambiguous)) {
            if (depth >= opt.max_depth)
                throw TrackingError("branch tracking did not resolve the interval", std::min(t0, t1), std::max(t0, t1));
            const double tm = mid(t0, t1);
            const std::vector<double> fm = detail::phases_of(sampler(tm));
            self(self, t0, tm, fm, depth + 1);
            self(self, tm, t1, fresh, depth + 1);
            return;
        }
        std::vector<double> next = out.phases.back();
        for (std::size_t j = 0; j < next.size(); ++j) next[j] += m.increments[j];
        wrapped = m.wrapped;
        out.params.push_back(t1);
        out.phases.push_back(std::move(next));
        out.depth.push_back(depth);
        if (skip)
            out.skipped.emplace_back(std::min(t0, t1), std::max(t0, t1));
        else
            out.max_increment = std::max(out.max_increment, m.max_increment);
    };
    for (std::size_t i = 1; i < grid.size(); ++i)
        step(step, out.params.back(), grid[i], detail::phases_of(sampler(grid[i])), 0);
    return out;
}

// ---------------------------------------------------------------------------
// y-path

struct YPathOptions {
    double y_max = 0.0;  // 0 selects 1e3 * (1 + |lambda|)
    double y_min = 1e-6;
    int points_per_decade = 6;
};

inline double default_y_max(double lambda) { return 1e3 * (1.0 + std::abs(lambda)); }

/// Geometric grid from y_max down to y_min, then y = 0.
inline std::vector<double> y_path_grid(double lambda, const YPathOptions& opt = {}) {
    const double top = opt.y_max > 0.0 ? opt.y_max : default_y_max(lambda);
    const double decades = std::log10(top / opt.y_min);
    const int n = std::max(2, static_cast<int>(std::ceil(decades * opt.points_per_decade)) + 1);
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(top * std::pow(opt.y_min / top, static_cast<double>(i) / (n - 1)));
    g.back() = opt.y_min;
    g.push_back(0.0);
    return g;
}

/// Geometric midpoint; toward y = 0 the step shrinks by a factor 10.
inline double y_midpoint(double a, double b) {
    if (a == 0.0 || b == 0.0) return 0.1 * std::max(a, b);
    return std::sqrt(a * b);
}

/// T_0(lambda + i y) on a fixed grid, memoized by y. Not shared across threads.
class BackgroundResolvent {
public:
    BackgroundResolvent(PiecewisePotential w, PiecewisePotential v, BoundaryCondition bc, QuadratureGrid grid,
                        double lambda)
        : w_(std::move(w)), v_(std::move(v)), bc_(bc), grid_(std::move(grid)), lambda_(lambda) {}

    const SandwichedResolvent& at(double y) {
        auto it = cache_.find(y);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(y, assemble_T(w_, v_, bc_, grid_, cplx(lambda_, y))).first->second;
    }

    double lambda() const { return lambda_; }
    const QuadratureGrid& grid() const { return grid_; }
    const PiecewisePotential& w() const { return w_; }
    const PiecewisePotential& v() const { return v_; }
    const BoundaryCondition& bc() const { return bc_; }
    void clear() { cache_.clear(); }

private:
    PiecewisePotential w_;
    PiecewisePotential v_;
    BoundaryCondition bc_;
    QuadratureGrid grid_;
    double lambda_;
    std::map<double, SandwichedResolvent> cache_;
};

inline PhaseBranches y_path_branches(BackgroundResolvent& t0, double r, const YPathOptions& yopt = {},
                                     TrackingOptions topt = {}) {
    topt.midpoint = y_midpoint;
    auto sampler = [&](double y) { return s_matrix_eigenvalues(t0.at(y), r); };
    return track_branches(sampler, y_path_grid(t0.lambda(), yopt), topt);
}

/// xi(lambda) = -(1/2pi) sum_j theta_j(lambda + i0, 1).
inline double xi_from_y_path(const PhaseBranches& b) { return -b.endpoint_sum() / two_pi; }

/// arg det(1 + r J T_0(lambda + iy)) continued from y = y_max (where it is
/// near 0) down to y = 0, for several couplings on one shared y-grid.
struct DeterminantPath {
    std::vector<double> r;
    std::vector<double> y;
    std::vector<double> final_arg;  // continued arg at y = 0, per r
    double max_increment = 0.0;
};

inline DeterminantPath determinant_y_path(BackgroundResolvent& t0, const std::vector<double>& rs,
                                          const YPathOptions& yopt = {}, double max_increment = 0.5,
                                          int max_depth = 30) {
    DeterminantPath out;
    out.r = rs;
    auto sample = [&](double y) {
        std::vector<double> a(rs.size());
        const SandwichedResolvent& t = t0.at(y);
        for (std::size_t i = 0; i < rs.size(); ++i) a[i] = perturbation_determinant(t, rs[i]).arg;
        return a;
    };
    const std::vector<double> grid = y_path_grid(t0.lambda(), yopt);
    std::vector<double> prev = sample(grid.front());
    out.final_arg = prev;  // principal value at y_max
    out.y.push_back(grid.front());
    auto step = [&](auto&& self, double y0, double y1, const std::vector<double>& a1, int depth) -> void {
        double inc = 0.0;
        for (std::size_t i = 0; i < rs.size(); ++i) inc = std::max(inc, std::abs(wrap_phase(a1[i] - prev[i])));
        if (inc >= max_increment) {
            if (depth >= max_depth) throw TrackingError("determinant phase not resolved", std::min(y0, y1), std::max(y0, y1));
            const double ym = y_midpoint(y0, y1);
            const std::vector<double> am = sample(ym);
            self(self, y0, ym, am, depth + 1);
            self(self, ym, y1, a1, depth + 1);
            return;
        }
        for (std::size_t i = 0; i < rs.size(); ++i) out.final_arg[i] += wrap_phase(a1[i] - prev[i]);
        out.max_increment = std::max(out.max_increment, inc);
        prev = a1;
        out.y.push_back(y1);
    };
    for (std::size_t k = 1; k < grid.size(); ++k) step(step, out.y.back(), grid[k], sample(grid[k]), 0);
    return out;
}

// ---------------------------------------------------------------------------
// r-path at y = 0

/// Uniform grid on [0, 1] plus `seeds`, with the open skip intervals removed
/// and their endpoints inserted.
inline std::vector<double> r_path_grid(std::size_t n, const std::vector<std::pair<double, double>>& skips,
                                       const std::vector<double>& seeds = {}) {
    std::vector<double> g = uniform_r_grid(std::max<std::size_t>(n, 2));
    for (double r : seeds)
        if (r >= 0.0 && r <= 1.0) g.push_back(r);
    std::erase_if(g, [&](double r) {
        for (const auto& [a, b] : skips)
            if (r > a && r < b) return true;
        return false;
    });
    for (const auto& [a, b] : skips) {
        if (a >= 0.0 && a <= 1.0) g.push_back(a);
        if (b >= 0.0 && b <= 1.0) g.push_back(b);
    }
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

/// Extra r-samples around each pole of (1 + r J T_0)^{-1}: a quasi-bound
/// state of width Im r_p turns the phase by 2 pi within a few widths, which a
/// uniform grid can step over without noticing.
inline std::vector<double> pole_seeds(const std::vector<cplx>& poles, double reach = 0.05) {
    std::vector<double> out;
    for (cplx p : poles) {
        out.push_back(p.real());
        for (double d = 0.5 * std::max(std::abs(p.imag()), 1e-12); d < reach; d *= 2.0) {
            out.push_back(p.real() - d);
            out.push_back(p.real() + d);
        }
    }
    return out;
}

inline PhaseBranches r_path_branches(const SandwichedResolvent& t0_real, std::size_t n_samples,
                                     const std::vector<std::pair<double, double>>& skips, TrackingOptions topt = {},
                                     const std::vector<double>& seeds = {}) {
    topt.skip = skips;
    auto sampler = [&](double r) { return s_matrix_eigenvalues(t0_real, r); };
    return track_branches(sampler, r_path_grid(n_samples, skips, seeds), topt);
}

/// Largest branch increment over the step [a, b] of the path, if present.
inline std::optional<double> step_increment(const PhaseBranches& b, double a, double c) {
    for (std::size_t k = 1; k < b.params.size(); ++k) {
        if (b.params[k - 1] != a || b.params[k] != c) continue;
        double m = 0.0;
        for (std::size_t j = 0; j < b.branch_count(); ++j) m = std::max(m, std::abs(b.phases[k][j] - b.phases[k - 1][j]));
        return m;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// mu-invariants

/// theta_k = 2 pi (k + g) / n with g the golden-ratio fraction, so no grid
/// point coincides with a branch endpoint at the trivial eigenvalue.
inline std::vector<double> theta_grid(std::size_t n = 32) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    std::vector<double> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = two_pi * (static_cast<double>(k) + g) / static_cast<double>(n);
    return t;
}

struct MuInvariant {
    enum class Flavor { full, ac };
    Flavor flavor = Flavor::full;
    std::vector<double> theta;
    std::vector<long> values;
    std::vector<double> branch_phases;  // retained endpoint phases theta_j

    /// mu(theta) = -sum_j floor((theta - theta_j) / 2 pi).
    long evaluate(double t) const {
        long m = 0;
        for (double p : branch_phases) m -= static_cast<long>(std::floor((t - p) / two_pi));
        return m;
    }

    /// Exact integral of the step function over [0, 2 pi): mu is constant
    /// between the jump points theta_j mod 2 pi.
    double integral() const {
        std::vector<double> cuts{0.0, two_pi};
        for (double p : branch_phases) {
            double c = std::fmod(p, two_pi);
            if (c < 0.0) c += two_pi;
            cuts.push_back(c);
        }
        std::sort(cuts.begin(), cuts.end());
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const double len = cuts[i + 1] - cuts[i];
            if (len > 0.0) s += len * static_cast<double>(evaluate(0.5 * (cuts[i] + cuts[i + 1])));
        }
        return s;
    }

    /// Riemann sum on the theta-grid (diagnostic; error up to one grid cell per jump).
    double riemann_integral() const {
        double s = 0.0;
        for (long v : values) s += static_cast<double>(v);
        return values.empty() ? 0.0 : s * two_pi / static_cast<double>(values.size());
    }
};

inline MuInvariant mu_from_branches(const PhaseBranches& b, const std::vector<double>& theta,
                                    MuInvariant::Flavor flavor, double retain = 1e-6) {
    MuInvariant mu;
    mu.flavor = flavor;
    mu.theta = theta;
    if (!b.phases.empty())
        for (std::size_t j = 0; j < b.branch_count(); ++j)
            if (b.variation(j) > retain || std::abs(b.endpoint()[j]) > retain) mu.branch_phases.push_back(b.endpoint()[j]);
    for (double t : theta) mu.values.push_back(mu.evaluate(t));
    return mu;
}

inline MuInvariant mu_invariant(const PhaseBranches& y_branches, const std::vector<double>& theta = theta_grid()) {
    return mu_from_branches(y_branches, theta, MuInvariant::Flavor::full);
}

inline MuInvariant mu_ac(const PhaseBranches& r_branches, const std::vector<double>& theta = theta_grid()) {
    return mu_from_branches(r_branches, theta, MuInvariant::Flavor::ac);
}

// ---------------------------------------------------------------------------
// Two-sided limits at a resonance

struct JumpOptions {
    // The truncated train leaks, so the jump is smeared over a small r-window;
    // the ladder starts well outside it.
    double eps0 = 4e-2;
    int levels = 11;         // eps_k = eps0 2^-k, k = 0 .. levels - 1
    double tolerance = 1e-2; // certified if |J - 2 pi m| < tolerance * 2 pi
};

struct JumpEstimate {
    double r0 = 0.0;
    std::vector<double> eps;
    std::vector<double> jumps;  // Richardson-corrected Theta(r0+) - Theta(r0-), per level
    int k_star = -1;
    double jump = 0.0;          // at k_star
    long m = 0;                 // round(jump / 2 pi)
    bool certified = false;
    bool boundary = false;      // too close to r = 0 or r = 1 for the sequence
    double skip_eps = 0.0;      // half-width to skip on the r-path
    double crossing_increment = -1.0;  // r-path increment across the skip (set by the breakdown)
};

/// Theta(r) = sum_j theta_j(lambda + i0, r) along the y-path equals
/// -2 arg det(1 + r J T_0) continued in y; Theta(r0 +- eps) for the whole
/// eps-sequence come from one shared determinant path.
inline JumpEstimate resonance_jump(BackgroundResolvent& t0, double r0, const JumpOptions& jopt = {},
                                   const YPathOptions& yopt = {}) {
    JumpEstimate out;
    out.r0 = r0;
    std::vector<double> eps;
    for (int k = 0; k < jopt.levels; ++k) {
        const double e = jopt.eps0 * std::ldexp(1.0, -k);
        if (r0 - 2.0 * e >= 0.0 && r0 + 2.0 * e <= 1.0) eps.push_back(e);
    }
    const double e_min = jopt.eps0 * std::ldexp(1.0, -(jopt.levels - 1));
    out.skip_eps = e_min;
    if (eps.size() < 2) {
        out.boundary = true;
        return out;
    }
    out.eps = eps;
    // r0 +- 2 eps_k = r0 +- eps_{k-1}: offsets are eps_0 2^-k for k = -1 .. K-1.
    std::vector<double> rs;
    for (std::size_t k = 0; k <= eps.size(); ++k) {
        const double e = 2.0 * eps.front() * std::ldexp(1.0, -static_cast<int>(k));
        rs.push_back(r0 - e);
        rs.push_back(r0 + e);
    }
    const DeterminantPath dp = determinant_y_path(t0, rs, yopt);
    auto theta = [&](std::size_t k, int side) { return -2.0 * dp.final_arg[2 * k + (side > 0 ? 1 : 0)]; };
    for (std::size_t k = 0; k < eps.size(); ++k) {
        const double plus = 2.0 * theta(k + 1, +1) - theta(k, +1);
        const double minus = 2.0 * theta(k + 1, -1) - theta(k, -1);
        out.jumps.push_back(plus - minus);
    }
    // The best-agreeing consecutive pair; its larger eps sits further out in
    // the tails of a quasi-bound state of finite width.
    double best = 1e300;
    for (std::size_t k = 0; k + 1 < out.jumps.size(); ++k) {
        const double d = std::abs(out.jumps[k] - out.jumps[k + 1]);
        if (d < best) {
            best = d;
            out.k_star = static_cast<int>(k);
        }
    }
    out.jump = out.jumps[static_cast<std::size_t>(out.k_star)];
    out.skip_eps = eps[static_cast<std::size_t>(out.k_star)];
    out.m = std::lround(out.jump / two_pi);
    out.certified = std::abs(out.jump - two_pi * static_cast<double>(out.m)) < jopt.tolerance * two_pi;
    return out;
}

// ---------------------------------------------------------------------------
// Breakdown at one energy

struct BreakdownOptions {
    std::size_t nodes = 12;
    YPathOptions y;
    TrackingOptions tracking;
    std::size_t r_samples = 41;
    ScanOptions scan;
    JumpOptions jump;
    std::size_t theta_points = 32;
    bool with_oracle = true;
};

/// What the r-path at y = 0 needs from the resonance slice: the interior
/// resonances to cross by two-sided limits, and sample seeds at every pole.
struct RPathPlan {
    GammaScan scan;
    std::vector<JumpEstimate> jumps;
    std::vector<std::pair<double, double>> skips;
    std::vector<double> seeds;
    long jump_sum = 0;       // sum of m over crossed resonances
    bool resonant = false;   // boundary resonance or an uncertified one
    std::string note;
};

inline RPathPlan plan_r_path(BackgroundResolvent& t0, const BreakdownOptions& opt) {
    RPathPlan plan;
    plan.scan = scan_gamma(t0.w(), t0.v(), t0.bc(), t0.lambda(), t0.at(0.0), opt.scan);
    for (const ResonancePoint& p : plan.scan.points) {
        if (p.boundary) {
            plan.resonant = true;
            plan.note += "resonance at the coupling boundary r=" + std::to_string(p.r0) + "; ";
            continue;
        }
        if (!p.certified) {
            plan.resonant = true;
            plan.note += "uncertified detection at r=" + std::to_string(p.r0) + "; ";
            continue;
        }
        JumpEstimate j = resonance_jump(t0, p.r0, opt.jump, opt.y);
        if (j.boundary) {
            plan.resonant = true;
            plan.note += "resonance too close to the coupling boundary r=" + std::to_string(p.r0) + "; ";
        } else {
            if (!j.certified) {
                plan.resonant = true;
                plan.note += "jump not certified at r=" + std::to_string(p.r0) + "; ";
            }
            plan.skips.emplace_back(p.r0 - j.skip_eps, p.r0 + j.skip_eps);
            plan.jump_sum += j.m;
        }
        plan.jumps.push_back(std::move(j));
    }
    plan.seeds = pole_seeds(plan.scan.poles);
    return plan;
}

struct SsfBreakdown {
    double lambda = 0.0;
    double xi = 0.0;       // y-path eigenphase sum
    double xi_ac = 0.0;    // r-path eigenphase sum
    double xi_s = 0.0;
    long mu_s = 0;         // mu - mu_ac (theta-independent)
    long mu_s_jumps = 0;   // from the certified jumps
    double residual_integer = 0.0;
    double residual_identity = 0.0;
    double oracle_xi = 0.0;
    double oracle_residual = 0.0;
    bool oracle_converged = true;
    double xi_det = 0.0;   // arg det(1 + J T_0) / pi continued in y
    double mu_integral_residual = 0.0;     // |xi + (1/2pi) int mu|
    double mu_ac_integral_residual = 0.0;  // |xi_ac + (1/2pi) int mu_ac|
    bool mu_difference_constant = true;
    double r_path_max_increment = 0.0;     // outside the skipped intervals
    std::vector<double> crossing_increments;  // across each skipped interval
    double det_s_residual = 0.0;           // |exp(-2 pi i xi_ac) - det S(lambda; H_1, H_0)|
    cplx det_s{1.0, 0.0};
    bool resonant = false;
    std::string note;
    std::vector<ResonancePoint> resonances;
    std::vector<JumpEstimate> jumps;
    MuInvariant mu;
    MuInvariant mu_a;
};

inline SsfBreakdown xi_breakdown(double lambda, const PiecewisePotential& w, const PiecewisePotential& v,
                                 const BoundaryCondition& bc, const BreakdownOptions& opt = {}) {
    if (!(lambda > 0.0)) throw UnsupportedEnergyError("the breakdown lives on the continuous spectrum lambda > 0");
    SsfBreakdown out;
    out.lambda = lambda;
    const std::vector<double> theta = theta_grid(opt.theta_points);
    out.mu.theta = out.mu_a.theta = theta;
    out.mu_a.flavor = MuInvariant::Flavor::ac;
    if (v.empty()) {
        out.mu.values.assign(theta.size(), 0);
        out.mu_a.values.assign(theta.size(), 0);
        return out;
    }
    BackgroundResolvent t0(w, v, bc, default_grid(w, v, opt.nodes), lambda);
    const SandwichedResolvent& t_real = t0.at(0.0);

    RPathPlan plan = plan_r_path(t0, opt);
    out.resonances = plan.scan.points;
    out.resonant = plan.resonant;
    out.note = plan.note;
    out.mu_s_jumps = plan.jump_sum;

    const PhaseBranches yb = y_path_branches(t0, 1.0, opt.y, opt.tracking);
    out.xi = xi_from_y_path(yb);
    out.xi_det = determinant_y_path(t0, {1.0}, opt.y).final_arg[0] / std::numbers::pi;

    const PhaseBranches rb = r_path_branches(t_real, opt.r_samples, plan.skips, opt.tracking, plan.seeds);
    out.xi_ac = -rb.endpoint_sum() / two_pi;
    out.r_path_max_increment = rb.max_increment;
    for (JumpEstimate& j : plan.jumps) {
        if (j.boundary) continue;
        j.crossing_increment = step_increment(rb, j.r0 - j.skip_eps, j.r0 + j.skip_eps).value_or(-1.0);
        out.crossing_increments.push_back(j.crossing_increment);
    }
    out.jumps = std::move(plan.jumps);
    out.det_s = s_matrix_determinant(t_real, 1.0);
    out.det_s_residual = std::abs(std::exp(cplx(0.0, -two_pi * out.xi_ac)) - out.det_s);

    out.mu = mu_invariant(yb, theta);
    out.mu_a = mu_ac(rb, theta);
    out.mu_integral_residual = std::abs(out.xi + out.mu.integral() / two_pi);
    out.mu_ac_integral_residual = std::abs(out.xi_ac + out.mu_a.integral() / two_pi);
    out.mu_s = out.mu.values.front() - out.mu_a.values.front();
    for (std::size_t i = 0; i < theta.size(); ++i)
        if (out.mu.values[i] - out.mu_a.values[i] != out.mu_s) out.mu_difference_constant = false;

    out.xi_s = out.xi - out.xi_ac;
    out.residual_integer = std::abs(out.xi_s - std::round(out.xi_s));
    out.residual_identity = std::abs(out.xi_s + static_cast<double>(out.mu_s));

    if (opt.with_oracle) {
        const CountingOracle oc = ssf_counting_oracle(w, v, bc, lambda);
        out.oracle_xi = oc.xi;
        out.oracle_residual = std::abs(out.xi - oc.xi);
        out.oracle_converged = oc.converged;
        if (!oc.converged) out.note += "counting oracle did not converge; ";
    }

    if (!out.resonant && out.mu_s != out.mu_s_jumps)
        throw InconsistencyError("mu_s from mu - mu_ac (" + std::to_string(out.mu_s) + ") differs from the jump sum (" +
                                 std::to_string(out.mu_s_jumps) + ") at lambda=" + std::to_string(lambda));
    return out;
}

// ---------------------------------------------------------------------------
// xi_ac along a piecewise linear path of operators

struct OperatorPath {
    std::vector<PiecewisePotential> nodes;  // nodes.front() is H_0's potential
};

struct XiAcResult {
    double xi_ac = 0.0;
    std::vector<double> segment_xi_ac;
    std::vector<std::vector<ResonancePoint>> segment_resonances;
    bool resonant = false;
    std::string note;
};

/// Each segment is an r-path from nodes[i] to nodes[i+1] on the background
/// nodes[i]; a single open channel, so the segment contributions add.
inline XiAcResult xi_ac(double lambda, const OperatorPath& path, const BoundaryCondition& bc,
                        const BreakdownOptions& opt = {}) {
    XiAcResult out;
    for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
        const PiecewisePotential& a = path.nodes[i];
        const PiecewisePotential dv = path.nodes[i + 1] - a;
        if (std::all_of(dv.values.begin(), dv.values.end(), [](double x) { return x == 0.0; })) {
            out.segment_xi_ac.push_back(0.0);
            out.segment_resonances.emplace_back();
            continue;
        }
        BackgroundResolvent t0(a, dv, bc, default_grid(a, dv, opt.nodes), lambda);
        const RPathPlan plan = plan_r_path(t0, opt);
        if (plan.resonant) {
            out.resonant = true;
            out.note += "segment " + std::to_string(i) + ": " + plan.note;
        }
        const PhaseBranches rb = r_path_branches(t0.at(0.0), opt.r_samples, plan.skips, opt.tracking, plan.seeds);
        out.segment_xi_ac.push_back(-rb.endpoint_sum() / two_pi);
        out.segment_resonances.push_back(plan.scan.points);
        out.xi_ac += out.segment_xi_ac.back();
    }
    return out;
}

}  // namespace ssflab
