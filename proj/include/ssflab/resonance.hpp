#pragma once

// The resonance slice gamma_lambda = { r in [0,1] : 1 + r J T_0(lambda+i0) is
// not invertible }, located twice: by singular values of the Birman-Schwinger
// matrix, and independently on the ODE side by the phase-shift jump plus a
// trapping residual of the real solution of H_r psi = lambda psi.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <vector>

#include "ssflab/birman_schwinger.hpp"
#include "ssflab/errors.hpp"
#include "ssflab/potential.hpp"
#include "ssflab/pruefer.hpp"
#include "ssflab/transfer.hpp"

namespace ssflab {

struct ResonancePoint {
    double lambda = 0.0;
    double r0 = 0.0;                 // singular-value location (shooting location if undetected there)
    double sigma_min = 0.0;          // of 1 + r0 J T_0(lambda + i0)
    double shooting_residual = 0.0;  // at the shooting location
    double r0_shooting = 0.0;
    bool detected_sv = false;
    bool detected_shooting = false;
    bool certified = false;          // both detectors agree within the tolerance
    bool boundary = false;           // at r = 0 or r = 1 (an eigenvalue of H_0 or H_1 itself)
    int multiplicity = 1;
};

struct ScanOptions {
    std::size_t r_samples = 101;
    double detection = 1e-3;      // sigma_min threshold relative to the median plateau
    double shooting_threshold = 1e-3;
    double certification = 1e-2;  // absolute floor for certified-empty slices
    double agreement = 1e-4;      // detector agreement in r
    double merge = 1e-4;
    double refine_tol = 1e-8;
    double plateau_width = 1e-3;
};

struct GammaScan {
    double lambda = 0.0;
    std::vector<ResonancePoint> points;
    double plateau = 0.0;        // median sigma_min over the r-grid
    double min_sigma = 0.0;      // over the grid and all refinements
    bool certified_empty = false;
    std::vector<double> r_grid;
    std::vector<double> sigma;
    std::vector<cplx> poles;     // of (1 + r J T_0)^{-1}, near the real segment [0, 1]
};

/// Trapping residual (A_out / A_max)^2 of the real solution at lambda, with
/// amplitude A = sqrt(|psi|^2 + |psi'/k|^2) sampled at every breakpoint and
/// A_out taken beyond the support. It vanishes exactly when the solution is
/// square integrable and is O(1) for an ordinary scattering state.
inline double trap_residual(const PiecewisePotential& p, const BoundaryCondition& bc, double lambda) {
    if (!(lambda > 0.0)) throw UnsupportedEnergyError("shooting residual needs lambda > 0");
    const double k = std::sqrt(lambda);
    SolutionFrame f = bc.initial_frame();
    auto log_amp = [k](const SolutionFrame& s) {
        return s.log_scale + 0.5 * std::log(std::norm(s.value) + std::norm(s.derivative) / (k * k));
    };
    double top = log_amp(f);
    for (double b : p.breakpoints) {
        if (b <= f.position) continue;
        f = propagate_frame(p, f, b, cplx(lambda, 0.0));
        top = std::max(top, log_amp(f));
    }
    return std::exp(2.0 * (log_amp(f) - top));
}

inline double shooting_residual(const PiecewisePotential& w, const PiecewisePotential& v, const BoundaryCondition& bc,
                                double lambda, double r) {
    return trap_residual(r == 0.0 || v.empty() ? w : coupled(w, v, r), bc, lambda);
}

namespace detail {

template <class F>
double golden_min(F&& f, double lo, double hi, double tol, double* fmin = nullptr) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - g * (hi - lo);
    double d = lo + g * (hi - lo);
    double fc = f(c);
    double fd = f(d);
    while (hi - lo > tol) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    const double x = fc < fd ? c : d;
    if (fmin) *fmin = std::min(fc, fd);
    return x;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

}  // namespace detail

/// Shooting detector: r where the phase shift jumps by more than pi/2 between
/// grid points, bisected to the phase midpoint and polished by minimizing the
/// trapping residual. Uses only the ODE side.
inline std::vector<std::pair<double, double>> shooting_detections(const PiecewisePotential& w,
                                                                  const PiecewisePotential& v,
                                                                  const BoundaryCondition& bc, double lambda,
                                                                  const std::vector<double>& r_grid,
                                                                  const ScanOptions& opt = {}) {
    std::vector<std::pair<double, double>> out;
    if (v.empty() || r_grid.size() < 2) return out;
    auto dd = [&](double r) { return relative_phase_shift(w, v, bc, r, lambda); };
    auto res = [&](double r) { return shooting_residual(w, v, bc, lambda, r); };
    std::vector<double> d(r_grid.size());
    for (std::size_t i = 0; i < r_grid.size(); ++i) d[i] = dd(r_grid[i]);
    for (std::size_t i = 0; i + 1 < r_grid.size(); ++i) {
        if (std::abs(d[i + 1] - d[i]) <= 0.5 * std::numbers::pi) continue;
        double lo = r_grid[i];
        double hi = r_grid[i + 1];
        const double target = 0.5 * (d[i] + d[i + 1]);
        const bool rising = d[i + 1] > d[i];
        while (hi - lo > 1e-12 * std::max(1.0, hi)) {
            const double mid = 0.5 * (lo + hi);
            if ((dd(mid) < target) == rising)
                lo = mid;
            else
                hi = mid;
        }
        const double rc = 0.5 * (lo + hi);
        const double h = std::max(10.0 * opt.refine_tol, 1e-5);
        double fmin = 0.0;
        const double r_star = detail::golden_min(res, std::max(r_grid[i], rc - h), std::min(r_grid[i + 1], rc + h),
                                                 1e-3 * opt.refine_tol, &fmin);
        if (fmin < opt.shooting_threshold) out.emplace_back(r_star, fmin);
    }
    return out;
}

/// Complex couplings r = -1/mu (mu an eigenvalue of J T_0) where
/// 1 + r J T_0 is singular, restricted to a neighbourhood of [0, 1]. A
/// quasi-bound state shows up as a pole with a tiny imaginary part.
inline std::vector<cplx> coupling_poles(const SandwichedResolvent& t0, double reach = 0.05) {
    std::vector<cplx> out;
    if (t0.size() == 0) return out;
    const Eigen::MatrixXcd jt = t0.J.asDiagonal() * t0.T;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(jt, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const cplx mu = es.eigenvalues()[i];
        if (std::abs(mu) < 1e-300) continue;
        const cplx rc = -1.0 / mu;
        if (rc.real() >= -reach && rc.real() <= 1.0 + reach && std::abs(rc.imag()) <= reach) out.push_back(rc);
    }
    std::sort(out.begin(), out.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
    return out;
}

/// Uniform r-grid on [0, 1].
inline std::vector<double> uniform_r_grid(std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

/// Both detectors on the slice gamma_lambda. t0 must be T_0(lambda + i0)
/// assembled on the background W.
inline GammaScan scan_gamma(const PiecewisePotential& w, const PiecewisePotential& v, const BoundaryCondition& bc,
                            double lambda, const SandwichedResolvent& t0, const ScanOptions& opt = {}) {
    GammaScan out;
    out.lambda = lambda;
    if (v.empty()) {
        out.plateau = 1.0;
        out.min_sigma = 1.0;
        out.certified_empty = true;
        return out;
    }
    out.r_grid = uniform_r_grid(std::max<std::size_t>(opt.r_samples, 3));
    for (double r : out.r_grid) out.sigma.push_back(min_singular(t0, r));
    out.plateau = detail::median(out.sigma);
    out.min_sigma = *std::min_element(out.sigma.begin(), out.sigma.end());
    const double h = out.r_grid[1] - out.r_grid[0];
    auto sig = [&](double r) { return min_singular(t0, r); };

    // Candidates: real parts of nearby poles, and grid minima.
    out.poles = coupling_poles(t0);
    std::vector<double> cand;
    for (cplx p : out.poles)
        if (std::abs(p.imag()) <= h) cand.push_back(p.real());
    for (std::size_t i = 1; i + 1 < out.sigma.size(); ++i)
        if (out.sigma[i] < out.sigma[i - 1] && out.sigma[i] <= out.sigma[i + 1]) cand.push_back(out.r_grid[i]);
    if (out.sigma[0] < out.sigma[1]) cand.push_back(0.0);
    if (out.sigma.back() < out.sigma[out.sigma.size() - 2]) cand.push_back(1.0);

    std::vector<std::pair<double, double>> sv;
    for (double c : cand) {
        double fmin = 0.0;
        const double lo = std::max(0.0, c - h);
        const double hi = std::min(1.0, c + h);
        // Bracket the candidate tightly first: sharp minima are far narrower than h.
        double r_star = c;
        double s_star = sig(std::clamp(c, 0.0, 1.0));
        for (double width : {h, 1e-3 * h, 1e-6 * h}) {
            const double a = std::max(lo, r_star - width);
            const double b = std::min(hi, r_star + width);
            if (b <= a) break;
            const double x = detail::golden_min(sig, a, b, std::max(opt.refine_tol, 1e-4 * width), &fmin);
            if (fmin <= s_star) {
                r_star = x;
                s_star = fmin;
            }
        }
        out.min_sigma = std::min(out.min_sigma, s_star);
        if (s_star < opt.detection * out.plateau) sv.emplace_back(r_star, s_star);
    }
    std::sort(sv.begin(), sv.end());
    std::vector<ResonancePoint> merged;
    for (const auto& [r, s] : sv) {
        if (!merged.empty() && std::abs(merged.back().r0 - r) <= opt.merge) {
            if (s < merged.back().sigma_min) {
                merged.back().r0 = r;
                merged.back().sigma_min = s;
            }
            continue;
        }
        ResonancePoint p;
        p.lambda = lambda;
        p.r0 = r;
        p.sigma_min = s;
        p.detected_sv = true;
        merged.push_back(p);
    }
    // Degenerate plateau: still below threshold well away from the minimum.
    for (const ResonancePoint& p : merged) {
        const double a = p.r0 - 0.5 * opt.plateau_width;
        const double b = p.r0 + 0.5 * opt.plateau_width;
        if (a >= 0.0 && b <= 1.0 && sig(a) < opt.detection * out.plateau && sig(b) < opt.detection * out.plateau)
            throw DegenerateDetectionError("near-singularity of 1 + rJT persists over an r-interval wider than the plateau limit");
    }

    const auto shots = shooting_detections(w, v, bc, lambda, out.r_grid, opt);
    std::vector<bool> used(shots.size(), false);

    // Endpoints: sigma_min is pinned to 1 at r = 0, so the singular-value side
    // is read off the pole location; the shooting side tests H_0 or H_1 directly.
    std::vector<ResonancePoint> ends;
    for (double e : {0.0, 1.0}) {
        double dist = 1e300;
        for (cplx p : out.poles) dist = std::min(dist, std::abs(p - e));
        const double shoot = shooting_residual(w, v, bc, lambda, e);
        if (dist > opt.agreement && shoot >= opt.shooting_threshold) continue;
        ResonancePoint p;
        p.lambda = lambda;
        p.r0 = e;
        p.r0_shooting = e;
        p.sigma_min = sig(e);
        p.shooting_residual = shoot;
        p.detected_sv = dist <= opt.agreement;
        p.detected_shooting = shoot < opt.shooting_threshold;
        p.certified = p.detected_sv && p.detected_shooting;
        p.boundary = true;
        for (std::size_t j = 0; j < shots.size(); ++j)
            if (std::abs(shots[j].first - e) <= opt.merge * 10.0 + opt.agreement) used[j] = true;
        ends.push_back(p);
    }
    std::erase_if(merged, [&](const ResonancePoint& p) {
        for (const ResonancePoint& q : ends)
            if (std::abs(p.r0 - q.r0) <= opt.merge * 10.0 + opt.agreement) return true;
        return false;
    });

    for (ResonancePoint& p : merged) {
        for (std::size_t j = 0; j < shots.size(); ++j) {
            if (used[j] || std::abs(shots[j].first - p.r0) > opt.merge * 10.0 + opt.agreement) continue;
            used[j] = true;
            p.detected_shooting = true;
            p.r0_shooting = shots[j].first;
            p.shooting_residual = shots[j].second;
            break;
        }
        if (!p.detected_shooting) {
            p.r0_shooting = p.r0;
            p.shooting_residual = shooting_residual(w, v, bc, lambda, p.r0);
        }
        p.certified = p.detected_shooting && std::abs(p.r0_shooting - p.r0) <= opt.agreement;
    }
    for (std::size_t j = 0; j < shots.size(); ++j) {
        if (used[j]) continue;
        ResonancePoint p;
        p.lambda = lambda;
        p.r0 = shots[j].first;
        p.r0_shooting = shots[j].first;
        p.shooting_residual = shots[j].second;
        p.sigma_min = sig(p.r0);
        p.detected_shooting = true;
        merged.push_back(p);
    }
    merged.insert(merged.end(), ends.begin(), ends.end());
    std::sort(merged.begin(), merged.end(), [](const ResonancePoint& a, const ResonancePoint& b) { return a.r0 < b.r0; });
    out.points = merged;
    out.certified_empty = out.points.empty() && out.min_sigma > opt.certification;
    return out;
}

inline GammaScan scan_gamma(const PiecewisePotential& w, const PiecewisePotential& v, const BoundaryCondition& bc,
                            double lambda, const ScanOptions& opt = {}, std::size_t nodes = 12) {
    if (v.empty()) return scan_gamma(w, v, bc, lambda, SandwichedResolvent{}, opt);
    const QuadratureGrid grid = default_grid(w, v, nodes);
    return scan_gamma(w, v, bc, lambda, assemble_T(w, v, bc, grid, cplx(lambda, 0.0)), opt);
}

}  // namespace ssflab
