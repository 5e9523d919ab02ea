#pragma once

// Verification of the barrier construction: the real solution at lambda*
// must enter every barrier with log-derivative -kappa, decay exactly like
// exp(-kappa * width) across it, and come back unchanged after each gap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ssflab/potential.hpp"
#include "ssflab/quadrature.hpp"
#include "ssflab/resonance.hpp"
#include "ssflab/transfer.hpp"

namespace ssflab {

struct ShootingReport {
    std::vector<double> entry_positions;           // a_n
    std::vector<double> entry_log_amplitudes;      // log |psi(a_n)|
    std::vector<double> entry_logderiv_residuals;  // |psi'(a_n)/psi(a_n) + kappa|
    std::vector<double> amplitude_ratios;          // |psi(b_n)| / |psi(a_n)|
    double decay_fit_exponent = 0.0;               // p in log|psi| ~ alpha - c x^p
    double decay_fit_coefficient = 0.0;            // c
    double decay_fit_rms = 0.0;
    std::vector<double> l2_partials;               // int_0^{a_n} |psi|^2, n = 2 .. N, then to b_N
    double l2_tail_estimate = 0.0;                 // int over [0, b_N]
    bool l2_divergent = false;

    double max_residual() const {
        double m = 0.0;
        for (double r : entry_logderiv_residuals) m = std::max(m, r);
        return m;
    }
};

namespace detail {

struct PowerFit {
    double p = 0.0;
    double c = 0.0;
    double alpha = 0.0;
    double rms = 0.0;
};

/// Least squares for y ~ alpha - c x^p at fixed p.
inline PowerFit linear_fit(const std::vector<double>& x, const std::vector<double>& y, double p) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = std::pow(x[i], p);
        sx += u;
        sy += y[i];
        sxx += u * u;
        sxy += u * y[i];
    }
    PowerFit f;
    f.p = p;
    const double det = n * sxx - sx * sx;
    if (det == 0.0) return f;
    const double slope = (n * sxy - sx * sy) / det;
    f.alpha = (sy - slope * sx) / n;
    f.c = -slope;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (f.alpha - f.c * std::pow(x[i], p));
        ss += e * e;
    }
    f.rms = std::sqrt(ss / n);
    return f;
}

/// Exponent p by a coarse scan over (0, 2] and golden refinement.
inline PowerFit power_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 3) return {};
    double best_p = 0.01;
    double best = linear_fit(x, y, best_p).rms;
    for (double p = 0.02; p <= 2.0 + 1e-12; p += 0.01) {
        const double r = linear_fit(x, y, p).rms;
        if (r < best) {
            best = r;
            best_p = p;
        }
    }
    const double p = golden_min([&](double q) { return linear_fit(x, y, q).rms; }, std::max(1e-4, best_p - 0.01),
                                best_p + 0.01, 1e-10);
    return linear_fit(x, y, p);
}

/// int |psi|^2 over [x0, x1] on a single constant segment, frame given at x0
/// with the common log scale removed (returned relative to exp(2 log_scale)).
inline double segment_l2(double height, double x0, double x1, const SolutionFrame& f, double lambda) {
    static const GaussRule rule = gauss_legendre(16);
    double s = 0.0;
    const double len = x1 - x0;
    const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(len)));
    for (std::size_t j = 0; j < pieces; ++j) {
        const double a = x0 + len * static_cast<double>(j) / static_cast<double>(pieces);
        const double b = x0 + len * static_cast<double>(j + 1) / static_cast<double>(pieces);
        const double half = 0.5 * (b - a);
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double x = a + half * (rule.nodes[i] + 1.0);
            const TransferMatrix t = transfer_matrix(height, x - x0, cplx(lambda, 0.0));
            const cplx psi = (t.matrix()(0, 0) * f.value + t.matrix()(0, 1) * f.derivative);
            s += half * rule.weights[i] * std::norm(psi) * std::exp(2.0 * t.log_scale);
        }
    }
    return s;
}

}  // namespace detail

/// Shooting at lambda* with the Robin condition of the spec.
inline ShootingReport verify_embedded_eigenvalue(const PiecewisePotential& p, const BarrierSpec& spec) {
    ShootingReport out;
    const double lambda = spec.lambda_star;
    const double kappa = spec.kappa();
    const cplx z(lambda, 0.0);
    const std::size_t n = spec.barriers.size();
    if (n == 0) {
        out.l2_divergent = true;
        return out;
    }
    SolutionFrame f = BoundaryCondition::robin(spec.boundary_h).initial_frame();
    double l2 = 0.0;
    // Integrates |psi|^2 while advancing the frame to x_to.
    auto advance = [&](double x_to) {
        detail::for_each_piece(p, f.position, x_to, [&](double height, double from, double to) {
            l2 += detail::segment_l2(height, from, to, f, lambda) * std::exp(2.0 * f.log_scale);
            f.apply(transfer_matrix(height, to - from, z), to);
            f.normalize();
        });
    };
    for (std::size_t i = 0; i < n; ++i) {
        const Interval& b = spec.barriers[i];
        advance(b.a);
        if (i > 0) out.l2_partials.push_back(l2);
        const double log_in = f.log_abs_value();
        out.entry_positions.push_back(b.a);
        out.entry_log_amplitudes.push_back(log_in);
        out.entry_logderiv_residuals.push_back(std::abs(f.log_derivative() + kappa));
        advance(b.b);
        out.amplitude_ratios.push_back(std::exp(f.log_abs_value() - log_in));
    }
    out.l2_partials.push_back(l2);
    out.l2_tail_estimate = l2;

    // Decay fit on barrier entries, first quarter discarded as transient.
    const std::size_t skip = n / 4;
    std::vector<double> xs(out.entry_positions.begin() + static_cast<std::ptrdiff_t>(skip), out.entry_positions.end());
    std::vector<double> ys(out.entry_log_amplitudes.begin() + static_cast<std::ptrdiff_t>(skip),
                           out.entry_log_amplitudes.end());
    const detail::PowerFit fit = detail::power_fit(xs, ys);
    out.decay_fit_exponent = fit.p;
    out.decay_fit_coefficient = fit.c;
    out.decay_fit_rms = fit.rms;

    // Cauchy-like partial norms: increments must shrink over the second half.
    std::vector<double> inc;
    for (std::size_t i = 1; i < out.l2_partials.size(); ++i) inc.push_back(out.l2_partials[i] - out.l2_partials[i - 1]);
    out.l2_divergent = inc.size() < 2;
    for (std::size_t i = inc.size() / 2 + 1; i < inc.size(); ++i)
        if (!(inc[i] < inc[i - 1])) out.l2_divergent = true;
    return out;
}

inline ShootingReport verify_embedded_eigenvalue(const BarrierPotential& bp) {
    return verify_embedded_eigenvalue(bp.potential, bp.spec);
}

}  // namespace ssflab
