#pragma once

// Real-energy oscillation theory: continuous Pruefer angle, zero counting,
// relative phase shifts and the truncation-counting oracle for xi.
//
// The angle is carried as pi * m + beta with m the number of zeros already
// passed and beta in [0, pi) measured against a reference wavenumber. Inside
// an oscillatory segment beta advances exactly by q * length, so the integer
// part never depends on a sign decision made from rounded amplitudes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <tuple>
#include <utility>
#include <vector>

#include "ssflab/errors.hpp"
#include "ssflab/potential.hpp"
#include "ssflab/transfer.hpp"

namespace ssflab {

struct PrueferState {
    long zeros = 0;       // zeros of psi in (0, x]
    double beta = 0.0;    // angle mod pi against `scale`, in [0, pi)
    double scale = 1.0;   // psi ~ sin(beta), psi' ~ scale * cos(beta)
    double position = 0.0;
};

namespace detail {

inline double fold_pi(double b, long& zeros) {
    const double f = std::floor(b / std::numbers::pi);
    zeros += static_cast<long>(f);
    b -= f * std::numbers::pi;
    if (b >= std::numbers::pi) {
        b -= std::numbers::pi;
        ++zeros;
    }
    if (b < 0.0) b = 0.0;
    return b;
}

// Re-express beta against another wavenumber. Both angles lie in [0, pi) and
// vanish together, so the zero count is unchanged.
inline double rescale_beta(double beta, double from, double to) {
    if (beta == 0.0 || from == to) return beta;
    const double b = std::atan2(std::sin(beta), std::cos(beta) * from / to);
    return b >= std::numbers::pi ? 0.0 : b;
}

inline void pruefer_step(PrueferState& st, double height, double length, double lambda) {
    if (length <= 0.0) return;
    const double d = lambda - height;
    if (d > 0.0) {
        const double q = std::sqrt(d);
        double b = rescale_beta(st.beta, st.scale, q);
        st.scale = q;
        st.beta = fold_pi(b + q * length, st.zeros);
        return;
    }
    // At most one zero: exponential or linear solution.
    const double u0 = std::sin(st.beta);
    const double v0 = st.scale * std::cos(st.beta);
    double u1;
    double v1;
    if (d == 0.0) {
        u1 = u0 + v0 * length;
        v1 = v0;
    } else {
        const double kap = std::sqrt(-d);
        const double th = std::tanh(kap * length);
        u1 = u0 + v0 * th / kap;
        v1 = v0 + u0 * kap * th;
    }
    const bool crossed = (u0 != 0.0) && (u1 == 0.0 || (u1 > 0.0) != (u0 > 0.0));
    if (crossed) ++st.zeros;
    double b = std::atan2(u1, v1 / st.scale);
    if (b < 0.0) b += std::numbers::pi;
    if (b >= std::numbers::pi) b -= std::numbers::pi;
    st.beta = b;
}

inline double angle_scale(double lambda) { return lambda > 0.0 ? std::sqrt(lambda) : 1.0; }

}  // namespace detail

inline PrueferState pruefer_initial(const BoundaryCondition& bc, double lambda) {
    PrueferState st;
    st.scale = detail::angle_scale(lambda);
    if (bc.kind == BoundaryCondition::Kind::robin) st.beta = std::atan2(1.0, bc.h / st.scale);
    return st;
}

inline PrueferState pruefer_advance(const PiecewisePotential& p, PrueferState st, double lambda, double x_to) {
    if (x_to < st.position) throw ParameterError("Pruefer integration runs forward only");
    detail::for_each_piece(p, st.position, x_to, [&](double height, double from, double to) {
        detail::pruefer_step(st, height, to - from, lambda);
    });
    st.position = x_to;
    return st;
}

/// Continuous Pruefer angle at x, scaled by sqrt(lambda) (1 if lambda <= 0).
/// Beyond the support it grows exactly like sqrt(lambda) * x.
inline double pruefer_angle(const PiecewisePotential& p, const BoundaryCondition& bc, double lambda, double x) {
    PrueferState st = pruefer_advance(p, pruefer_initial(bc, lambda), lambda, x);
    const double s = detail::angle_scale(lambda);
    return std::numbers::pi * static_cast<double>(st.zeros) + detail::rescale_beta(st.beta, st.scale, s);
}

struct PrueferCount {
    long count = 0;      // eigenvalues below lambda on [0, L] with Dirichlet at L
    double angle = 0.0;  // continuous Pruefer angle at L
};

inline PrueferCount pruefer_count(const PiecewisePotential& p, const BoundaryCondition& bc, double lambda, double L) {
    if (!(L >= p.support_end)) throw ParameterError("truncation length must cover the support");
    if (!(L > 0.0)) throw ParameterError("truncation length must be positive");
    PrueferState st = pruefer_advance(p, pruefer_initial(bc, lambda), lambda, L);
    const double s = detail::angle_scale(lambda);
    PrueferCount out;
    out.count = st.beta == 0.0 ? st.zeros - 1 : st.zeros;
    out.angle = std::numbers::pi * static_cast<double>(st.zeros) + detail::rescale_beta(st.beta, st.scale, s);
    return out;
}

/// Delta delta_r(lambda) = delta(W + r V) - delta(W): the difference of the
/// continuous Pruefer angles at a point beyond both supports. The angle is
/// continuous in r, so this is the r-continuous branch starting from 0.
inline double relative_phase_shift(const PiecewisePotential& w, const PiecewisePotential& v,
                                   const BoundaryCondition& bc, double r, double lambda, double x_eval = -1.0) {
    if (!(lambda > 0.0)) throw UnsupportedEnergyError("phase shifts need lambda > 0");
    if (r == 0.0 || v.empty()) return 0.0;
    const double x = std::max({x_eval, w.support_end, v.support_end});
    const PiecewisePotential h1 = coupled(w, v, r);
    return pruefer_angle(h1, bc, lambda, x) - pruefer_angle(w, bc, lambda, x);
}

struct PhaseShiftSample {
    double r = 0.0;
    double delta = 0.0;
};

struct PhaseShiftCurve {
    std::vector<PhaseShiftSample> samples;
    std::vector<double> flagged;  // r where a step above pi/2 survived refinement
    double max_step = 0.0;
};

/// Delta delta_r on the grid, refined by interval halving until consecutive
/// samples differ by less than `max_step` (ties are refined).
inline PhaseShiftCurve phase_shift_curve(const PiecewisePotential& w, const PiecewisePotential& v,
                                         const BoundaryCondition& bc, double lambda, const std::vector<double>& r_grid,
                                         double max_step = 0.1, int max_depth = 24) {
    PhaseShiftCurve out;
    if (r_grid.empty()) return out;
    auto eval = [&](double r) { return relative_phase_shift(w, v, bc, r, lambda); };
    auto refine = [&](auto&& self, double r0, double d0, double r1, double d1, int depth) -> void {
        if (std::abs(d1 - d0) < max_step || depth >= max_depth) {
            if (std::abs(d1 - d0) >= 0.5 * std::numbers::pi) out.flagged.push_back(0.5 * (r0 + r1));
            out.max_step = std::max(out.max_step, std::abs(d1 - d0));
            out.samples.push_back({r1, d1});
            return;
        }
        const double rm = 0.5 * (r0 + r1);
        const double dm = eval(rm);
        self(self, r0, d0, rm, dm, depth + 1);
        self(self, rm, dm, r1, d1, depth + 1);
    };
    double r_prev = r_grid.front();
    double d_prev = eval(r_prev);
    out.samples.push_back({r_prev, d_prev});
    for (std::size_t i = 1; i < r_grid.size(); ++i) {
        const double d = eval(r_grid[i]);
        refine(refine, r_prev, d_prev, r_grid[i], d, 0);
        r_prev = r_grid[i];
        d_prev = d;
    }
    return out;
}

struct CountingOracle {
    double xi = 0.0;                  // mean over L of (angle_0(L) - angle_1(L)) / pi
    double std_dev = 0.0;             // spread of that quantity over the L-window
    double integer_count_mean = 0.0;  // mean over L of count_0(L) - count_1(L)
    double integer_count_std = 0.0;
    bool converged = true;            // std_dev <= 0.2
    std::vector<double> lengths;
};

/// Truncation lengths spanning `wavelengths` wavelengths beyond the joint
/// support, `samples` points.
inline std::vector<double> oracle_lengths(double support_end, double lambda, int samples = 32, double wavelengths = 8.0) {
    const double wl = 2.0 * std::numbers::pi / std::sqrt(lambda);
    std::vector<double> out;
    for (int i = 0; i < samples; ++i)
        out.push_back(support_end + wl + wavelengths * wl * (static_cast<double>(i) + 0.5) / samples);
    return out;
}

/// xi(lambda) = N_0 - N_1 from Dirichlet truncations of H_0 = W and H_1 = W + V.
inline CountingOracle ssf_counting_oracle(const PiecewisePotential& w, const PiecewisePotential& v,
                                          const BoundaryCondition& bc, double lambda,
                                          std::vector<double> lengths = {}) {
    if (!(lambda > 0.0)) throw UnsupportedEnergyError("the counting oracle works on the continuous spectrum");
    const PiecewisePotential h1 = v.empty() ? w : w + v;
    const double end = std::max(w.support_end, h1.support_end);
    if (lengths.empty()) lengths = oracle_lengths(end, lambda);
    CountingOracle out;
    out.lengths = lengths;
    std::vector<double> xs;
    std::vector<double> ns;
    for (double L : lengths) {
        const PrueferCount c0 = pruefer_count(w, bc, lambda, L);
        const PrueferCount c1 = pruefer_count(h1, bc, lambda, L);
        xs.push_back((c0.angle - c1.angle) / std::numbers::pi);
        ns.push_back(static_cast<double>(c0.count - c1.count));
    }
    auto mean_std = [](const std::vector<double>& a) {
        double m = 0.0;
        for (double x : a) m += x;
        m /= static_cast<double>(a.size());
        double v = 0.0;
        for (double x : a) v += (x - m) * (x - m);
        return std::pair{m, std::sqrt(v / static_cast<double>(a.size()))};
    };
    std::tie(out.xi, out.std_dev) = mean_std(xs);
    std::tie(out.integer_count_mean, out.integer_count_std) = mean_std(ns);
    out.converged = out.std_dev <= 0.2;
    return out;
}

}  // namespace ssflab
