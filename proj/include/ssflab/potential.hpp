#pragma once

// Piecewise-constant half-line potentials and the tuned barrier train that
// carries an embedded eigenvalue (von Neumann-Wigner type construction).
//
// Units: hbar = 2m = 1, so energies are squared wavenumbers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "ssflab/errors.hpp"

namespace ssflab {

/// A potential that is constant on [breakpoints[i], breakpoints[i+1]) with
/// height values[i], and identically zero outside [breakpoints.front(),
/// support_end). An empty breakpoint list is the zero potential.
struct PiecewisePotential {
    std::vector<double> breakpoints;
    std::vector<double> values;
    double support_end = 0.0;

    bool empty() const { return values.empty(); }
    std::size_t segment_count() const { return values.size(); }
    double support_start() const { return breakpoints.empty() ? 0.0 : breakpoints.front(); }

    double operator()(double x) const {
        if (values.empty() || x < breakpoints.front() || x >= support_end) return 0.0;
        auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
        return values[static_cast<std::size_t>(it - breakpoints.begin()) - 1];
    }

    /// Lebesgue measure of {x : P(x) != 0}.
    double support_measure() const {
        double m = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] != 0.0) m += breakpoints[i + 1] - breakpoints[i];
        return m;
    }

    bool nonnegative() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0; });
    }

    friend bool operator==(const PiecewisePotential&, const PiecewisePotential&) = default;
};

inline void validate(const PiecewisePotential& p) {
    if (p.breakpoints.empty()) {
        if (!p.values.empty() || p.support_end != 0.0)
            throw ParameterError("zero potential must have no values and support_end 0");
        return;
    }
    if (p.breakpoints.size() != p.values.size() + 1)
        throw ParameterError("breakpoints must have exactly one more entry than values");
    if (p.breakpoints.front() < 0.0) throw ParameterError("potential must live on the half-line x >= 0");
    for (std::size_t i = 0; i + 1 < p.breakpoints.size(); ++i)
        if (!(p.breakpoints[i] < p.breakpoints[i + 1]))
            throw ParameterError("breakpoints must be strictly increasing");
    for (double b : p.breakpoints)
        if (!std::isfinite(b)) throw ParameterError("breakpoints must be finite");
    for (double v : p.values)
        if (!std::isfinite(v)) throw ParameterError("potential heights must be finite");
    if (p.support_end != p.breakpoints.back())
        throw ParameterError("support_end must equal the last breakpoint");
}

inline PiecewisePotential make_piecewise(std::vector<double> breakpoints, std::vector<double> values) {
    PiecewisePotential p;
    if (!breakpoints.empty()) p.support_end = breakpoints.back();
    p.breakpoints = std::move(breakpoints);
    p.values = std::move(values);
    validate(p);
    return p;
}

inline double evaluate_potential(const PiecewisePotential& p, double x) { return p(x); }

/// Pointwise a + scale * b on the union of both breakpoint sets.
inline PiecewisePotential add_scaled(const PiecewisePotential& a, const PiecewisePotential& b, double scale) {
    std::vector<double> pts = a.breakpoints;
    pts.insert(pts.end(), b.breakpoints.begin(), b.breakpoints.end());
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 2) return {};
    std::vector<double> vals(pts.size() - 1);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double mid = 0.5 * (pts[i] + pts[i + 1]);
        vals[i] = a(mid) + scale * b(mid);
    }
    return make_piecewise(std::move(pts), std::move(vals));
}

inline PiecewisePotential operator+(const PiecewisePotential& a, const PiecewisePotential& b) {
    return add_scaled(a, b, 1.0);
}

inline PiecewisePotential operator-(const PiecewisePotential& a, const PiecewisePotential& b) {
    return add_scaled(a, b, -1.0);
}

inline PiecewisePotential scaled(const PiecewisePotential& p, double factor) {
    PiecewisePotential out = p;
    for (double& v : out.values) v *= factor;
    return out;
}

/// H_r = -d^2/dx^2 + W + r V, represented by its potential.
inline PiecewisePotential coupled(const PiecewisePotential& w, const PiecewisePotential& v, double r) {
    return add_scaled(w, v, r);
}

struct Interval {
    double a = 0.0;
    double b = 0.0;
    double length() const { return b - a; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Layout of the tuned barrier train. Barriers are indexed from n = 1 with
/// width n^-s; consecutive barriers are separated by one free wavelength at
/// lambda_star, and a_1 = 0 so the Robin condition psi'(0) = h psi(0) with
/// h = -sqrt(w - lambda_star) makes the solution enter every barrier on its
/// decaying exponential.
struct BarrierSpec {
    double lambda_star = 1.0;
    double w = 2.0;
    double s = 0.75;
    std::vector<Interval> barriers;
    double boundary_h = -1.0;

    double kappa() const { return std::sqrt(w - lambda_star); }
    double gap_length() const { return 2.0 * std::numbers::pi / std::sqrt(lambda_star); }

    /// Free interval between barrier n and barrier n+1 (1-based).
    Interval gap(std::size_t n) const {
        if (n == 0 || n >= barriers.size()) throw ParameterError("gap index out of range");
        return {barriers[n - 1].b, barriers[n].a};
    }

    friend bool operator==(const BarrierSpec&, const BarrierSpec&) = default;
};

struct BarrierPotential {
    BarrierSpec spec;
    PiecewisePotential potential;
};

inline BarrierPotential build_vnw_potential(double lambda_star, double w, double s, std::size_t n_barriers) {
    if (!(lambda_star > 0.0)) throw ParameterError("lambda_star must be positive");
    if (!(lambda_star < w)) throw ParameterError("barrier height w must exceed lambda_star");
    if (!(s > 0.5)) throw ParameterError("width exponent s must satisfy s > 1/2 (short range)");

    BarrierPotential out;
    BarrierSpec& spec = out.spec;
    spec.lambda_star = lambda_star;
    spec.w = w;
    spec.s = s;
    spec.boundary_h = -std::sqrt(w - lambda_star);

    const double gap = spec.gap_length();
    std::vector<double> pts;
    std::vector<double> vals;
    double a = 0.0;
    for (std::size_t n = 1; n <= n_barriers; ++n) {
        const double b = a + std::pow(static_cast<double>(n), -s);
        spec.barriers.push_back({a, b});
        if (n == 1) pts.push_back(a);
        pts.push_back(b);
        vals.push_back(w);
        if (n < n_barriers) {
            a = b + gap;
            pts.push_back(a);
            vals.push_back(0.0);
        }
    }
    out.potential = make_piecewise(std::move(pts), std::move(vals));
    return out;
}

// ---------------------------------------------------------------------------
// Perturbations V. All are compactly supported step functions.

struct GapBump {
    double center = 0.0;
    double width = 1.0;
    double height = 0.2;
};

/// factor * W restricted to the first `count` barriers of `spec`.
struct BarrierScale {
    BarrierSpec spec;
    double factor = 0.1;
    std::size_t count = 5;
};

struct Well {
    double start = 0.0;
    double end = 1.0;
    double depth = -0.3;
};

using PerturbationParams = std::variant<GapBump, BarrierScale, Well>;

inline PiecewisePotential make_perturbation(const PerturbationParams& params) {
    struct Visitor {
        PiecewisePotential operator()(const GapBump& g) const {
            if (!(g.width > 0.0) || g.height == 0.0) throw ParameterError("gap_bump has empty support");
            const double lo = g.center - 0.5 * g.width;
            if (lo < 0.0) throw ParameterError("gap_bump extends below x = 0");
            return make_piecewise({lo, g.center + 0.5 * g.width}, {g.height});
        }
        PiecewisePotential operator()(const BarrierScale& bs) const {
            const std::size_t n = std::min(bs.count, bs.spec.barriers.size());
            if (n == 0 || bs.factor == 0.0) throw ParameterError("barrier_scale has empty support");
            std::vector<double> pts;
            std::vector<double> vals;
            for (std::size_t i = 0; i < n; ++i) {
                const Interval& iv = bs.spec.barriers[i];
                if (pts.empty() || pts.back() != iv.a) {
                    if (!pts.empty()) vals.push_back(0.0);
                    pts.push_back(iv.a);
                }
                pts.push_back(iv.b);
                vals.push_back(bs.factor * bs.spec.w);
            }
            return make_piecewise(std::move(pts), std::move(vals));
        }
        PiecewisePotential operator()(const Well& wl) const {
            if (!(wl.end > wl.start) || wl.depth == 0.0) throw ParameterError("well has empty support");
            if (wl.start < 0.0) throw ParameterError("well extends below x = 0");
            return make_piecewise({wl.start, wl.end}, {wl.depth});
        }
    };
    return std::visit(Visitor{}, params);
}

}  // namespace ssflab
