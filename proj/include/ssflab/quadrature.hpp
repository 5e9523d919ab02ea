#pragma once

// Composite Gauss-Legendre rules over the support of a perturbation and the
// orthonormal Lagrange basis attached to each panel's nodes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include "ssflab/errors.hpp"
#include "ssflab/potential.hpp"

namespace ssflab {

struct GaussRule {
    std::vector<double> nodes;    // ascending in (-1, 1)
    std::vector<double> weights;  // sum to 2
};

/// n-point Gauss-Legendre rule by Newton iteration on P_n.
inline GaussRule gauss_legendre(std::size_t n) {
    if (n == 0) throw ParameterError("Gauss-Legendre rule needs at least one node");
    const double dn = static_cast<double>(n);
    // (P_n(x), P_n'(x)) by the three-term recurrence.
    auto legendre = [n, dn](double x) {
        double p0 = 1.0;
        double p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
            const double dk = static_cast<double>(k);
            const double p2 = ((2.0 * dk - 1.0) * x * p1 - (dk - 1.0) * p0) / dk;
            p0 = p1;
            p1 = p2;
        }
        return std::pair{p1, dn * (x * p1 - p0) / (x * x - 1.0)};
    };
    GaussRule g;
    g.nodes.resize(n);
    g.weights.resize(n);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (dn + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [p, dp] = legendre(x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double dp = legendre(x).second;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        g.nodes[i] = -x;
        g.nodes[n - 1 - i] = x;
        g.weights[i] = w;
        g.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) g.nodes[n / 2] = 0.0;
    return g;
}

/// Values at t of the Lagrange polynomials on `nodes`, divided by sqrt of the
/// matching Gauss weights: orthonormal on [-1, 1] because the rule integrates
/// their products exactly.
inline void orthonormal_lagrange(const GaussRule& g, const std::vector<double>& bary, double t, double* out) {
    const std::size_t n = g.nodes.size();
    for (std::size_t j = 0; j < n; ++j) {
        if (t == g.nodes[j]) {
            for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
            out[j] = 1.0 / std::sqrt(g.weights[j]);
            return;
        }
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = bary[j] / (t - g.nodes[j]);
        denom += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= denom * std::sqrt(g.weights[j]);
}

inline std::vector<double> barycentric_weights(const std::vector<double>& nodes) {
    std::vector<double> w(nodes.size(), 1.0);
    for (std::size_t j = 0; j < nodes.size(); ++j)
        for (std::size_t k = 0; k < nodes.size(); ++k)
            if (k != j) w[j] /= (nodes[j] - nodes[k]);
    return w;
}

struct Panel {
    double a = 0.0;
    double b = 0.0;
    double height = 0.0;  // value of V on the panel
    double length() const { return b - a; }
};

struct QuadratureGrid {
    std::vector<Panel> panels;
    std::size_t n_per_panel = 0;
    GaussRule rule;
    std::vector<double> nodes;    // panel-major
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }
    double total_weight() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }
};

/// Nodes on every segment where V != 0. Segments are split at `extra_cuts`
/// (breakpoints of the background) and into pieces no longer than max_panel,
/// so that the background solutions are analytic on each panel.
inline QuadratureGrid build_grid(const PiecewisePotential& v, std::size_t n_per_segment,
                                 const std::vector<double>& extra_cuts = {}, double max_panel = 1.0) {
    if (v.empty() || v.support_measure() == 0.0) throw ParameterError("perturbation has empty support");
    if (n_per_segment == 0) throw ParameterError("need at least one node per segment");
    QuadratureGrid g;
    g.n_per_panel = n_per_segment;
    g.rule = gauss_legendre(n_per_segment);
    for (std::size_t s = 0; s < v.segment_count(); ++s) {
        const double h = v.values[s];
        if (h == 0.0) continue;
        std::vector<double> cuts{v.breakpoints[s]};
        for (double c : extra_cuts)
            if (c > v.breakpoints[s] && c < v.breakpoints[s + 1]) cuts.push_back(c);
        cuts.push_back(v.breakpoints[s + 1]);
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const double a = cuts[i];
            const double b = cuts[i + 1];
            const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / max_panel - 1e-12)));
            for (std::size_t j = 0; j < pieces; ++j) {
                const double pa = j == 0 ? a : a + (b - a) * static_cast<double>(j) / static_cast<double>(pieces);
                const double pb =
                    j + 1 == pieces ? b : a + (b - a) * static_cast<double>(j + 1) / static_cast<double>(pieces);
                g.panels.push_back({pa, pb, h});
            }
        }
    }
    for (const Panel& p : g.panels) {
        const double half = 0.5 * p.length();
        for (std::size_t i = 0; i < n_per_segment; ++i) {
            g.nodes.push_back(p.a + half * (g.rule.nodes[i] + 1.0));
            g.weights.push_back(half * g.rule.weights[i]);
        }
    }
    return g;
}

}  // namespace ssflab
