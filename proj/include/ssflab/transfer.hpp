#pragma once

// Exact propagation of -psi'' + P psi = z psi through piecewise-constant P.
// Amplitudes are carried as mantissa * exp(log_scale) so that long chains of
// exponential segments, or large Im z, never overflow.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "ssflab/errors.hpp"
#include "ssflab/potential.hpp"

namespace ssflab {

using cplx = std::complex<double>;

/// z = lambda + i y. Operations that take boundary values need y >= 0.
struct ComplexEnergy {
    double lambda = 0.0;
    double y = 0.0;
    cplx z() const { return {lambda, y}; }
};

/// sqrt(z) with Im k >= 0; on the positive real axis k = +sqrt(lambda).
inline cplx momentum(cplx z) {
    cplx k = std::sqrt(z);
    if (k.imag() < 0.0 || (k.imag() == 0.0 && k.real() < 0.0)) k = -k;
    return k;
}

/// exp(log_scale) * m maps (psi, psi') at the segment start to the end.
struct TransferMatrix {
    Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();
    double log_scale = 0.0;

    Eigen::Matrix2cd matrix() const { return m * std::exp(log_scale); }
    cplx determinant() const { return m.determinant() * std::exp(2.0 * log_scale); }

    TransferMatrix operator*(const TransferMatrix& rhs) const {
        TransferMatrix out;
        out.m = m * rhs.m;
        out.log_scale = log_scale + rhs.log_scale;
        const double s = out.m.cwiseAbs().maxCoeff();
        if (s > 0.0 && std::isfinite(s)) {
            out.m /= s;
            out.log_scale += std::log(s);
        }
        return out;
    }
};

namespace detail {

// Signed lengths are allowed; a negative length propagates backwards.
inline TransferMatrix segment_transfer(double height, double length, cplx z) {
    TransferMatrix t;
    if (length == 0.0) return t;
    const cplx d = z - height;
    const cplx q = std::sqrt(d);
    const cplx th = q * length;
    if (std::abs(th) < 1e-4) {
        const cplx x2 = d * length * length;
        const cplx sinc = 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
        const cplx c = 1.0 - x2 / 2.0 + x2 * x2 / 24.0;
        t.m << c, length * sinc, -d * length * sinc, c;
        return t;
    }
    const double a = std::abs(th.imag());
    cplx c;
    cplx s;
    if (a > 20.0) {
        const cplx i(0.0, 1.0);
        const cplx e1 = std::exp(i * th - a);
        const cplx e2 = std::exp(-i * th - a);
        c = 0.5 * (e1 + e2);
        s = (e1 - e2) / (2.0 * i);
        t.log_scale = a;
    } else {
        c = std::cos(th);
        s = std::sin(th);
    }
    t.m << c, s / q, -q * s, c;
    return t;
}

}  // namespace detail

inline TransferMatrix transfer_matrix(double height, double length, cplx z) {
    if (!(length >= 0.0)) throw ParameterError("segment length must be non-negative");
    return detail::segment_transfer(height, length, z);
}

inline TransferMatrix transfer_matrix(double height, double length, ComplexEnergy e) {
    return transfer_matrix(height, length, e.z());
}

/// (psi, psi') = exp(log_scale) * (value, derivative) at `position`.
struct SolutionFrame {
    double position = 0.0;
    cplx value{1.0, 0.0};
    cplx derivative{0.0, 0.0};
    double log_scale = 0.0;

    cplx psi() const { return value * std::exp(log_scale); }
    cplx dpsi() const { return derivative * std::exp(log_scale); }
    cplx log_derivative() const { return derivative / value; }
    double log_abs_value() const { return log_scale + std::log(std::abs(value)); }

    void normalize() {
        const double s = std::max(std::abs(value), std::abs(derivative));
        if (s > 0.0 && std::isfinite(s)) {
            value /= s;
            derivative /= s;
            log_scale += std::log(s);
        }
    }

    void apply(const TransferMatrix& t, double new_position) {
        const cplx v = t.m(0, 0) * value + t.m(0, 1) * derivative;
        const cplx d = t.m(1, 0) * value + t.m(1, 1) * derivative;
        value = v;
        derivative = d;
        log_scale += t.log_scale;
        position = new_position;
        normalize();
    }
};

/// A complex number stored as mantissa * exp(log_scale).
struct ScaledComplex {
    cplx mantissa{0.0, 0.0};
    double log_scale = 0.0;
    cplx value() const { return mantissa * std::exp(log_scale); }
};

/// W(f, g) = f g' - f' g.
inline ScaledComplex wronskian(const SolutionFrame& f, const SolutionFrame& g) {
    return {f.value * g.derivative - f.derivative * g.value, f.log_scale + g.log_scale};
}

/// psi'(0) = h psi(0), or psi(0) = 0.
struct BoundaryCondition {
    enum class Kind { robin, dirichlet };
    Kind kind = Kind::robin;
    double h = 0.0;

    static BoundaryCondition robin(double h) { return {Kind::robin, h}; }
    static BoundaryCondition dirichlet() { return {Kind::dirichlet, 0.0}; }

    SolutionFrame initial_frame() const {
        SolutionFrame f;
        if (kind == Kind::robin) {
            f.value = 1.0;
            f.derivative = h;
        } else {
            f.value = 0.0;
            f.derivative = 1.0;
        }
        f.normalize();
        return f;
    }

    friend bool operator==(const BoundaryCondition&, const BoundaryCondition&) = default;
};

namespace detail {

// Calls fn(height, from, to) for each constant piece between x0 and x1, in
// the direction of travel.
template <class Fn>
void for_each_piece(const PiecewisePotential& p, double x0, double x1, Fn&& fn) {
    if (x0 == x1) return;
    const double lo = std::min(x0, x1);
    const double hi = std::max(x0, x1);
    std::vector<double> cuts{lo};
    for (double b : p.breakpoints)
        if (b > lo && b < hi) cuts.push_back(b);
    cuts.push_back(hi);
    if (x1 > x0) {
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            fn(p(0.5 * (cuts[i] + cuts[i + 1])), cuts[i], cuts[i + 1]);
    } else {
        for (std::size_t i = cuts.size() - 1; i > 0; --i)
            fn(p(0.5 * (cuts[i] + cuts[i - 1])), cuts[i], cuts[i - 1]);
    }
}

}  // namespace detail

inline SolutionFrame propagate_frame(const PiecewisePotential& p, SolutionFrame frame, double x_to, cplx z) {
    detail::for_each_piece(p, frame.position, x_to, [&](double height, double from, double to) {
        frame.apply(detail::segment_transfer(height, to - from, z), to);
    });
    frame.position = x_to;
    return frame;
}

/// Accumulated transfer matrix from x0 to x1 (either direction).
inline TransferMatrix accumulated_transfer(const PiecewisePotential& p, double x0, double x1, cplx z) {
    TransferMatrix acc;
    detail::for_each_piece(p, x0, x1, [&](double height, double from, double to) {
        acc = detail::segment_transfer(height, to - from, z) * acc;
    });
    return acc;
}

/// The boundary-condition solution at x_end.
inline SolutionFrame propagate(const PiecewisePotential& p, const BoundaryCondition& bc, cplx z, double x_end) {
    if (!(x_end >= 0.0)) throw ParameterError("propagation target must satisfy x >= 0");
    SolutionFrame f = bc.initial_frame();
    return propagate_frame(p, f, x_end, z);
}

inline SolutionFrame propagate(const PiecewisePotential& p, const BoundaryCondition& bc, ComplexEnergy e, double x_end) {
    return propagate(p, bc, e.z(), x_end);
}

namespace detail {

inline void check_jost_energy(cplx z) {
    if (z.imag() == 0.0 && !(z.real() > 0.0))
        throw UnsupportedEnergyError("outgoing solution needs lambda > 0 on the real axis");
}

// f = exp(i k x) exactly, for x at or beyond the support.
inline SolutionFrame free_jost_frame(cplx k, double x) {
    SolutionFrame f;
    f.position = x;
    f.value = std::exp(cplx(0.0, k.real() * x));
    f.derivative = cplx(0.0, 1.0) * k * f.value;
    f.log_scale = -k.imag() * x;
    f.normalize();
    return f;
}

}  // namespace detail

/// Solution equal to exp(i k x) beyond the support (decaying for Im z != 0,
/// outgoing on the real axis), evaluated at x.
inline SolutionFrame jost_solution(const PiecewisePotential& p, cplx z, double x) {
    detail::check_jost_energy(z);
    const cplx k = momentum(z);
    const double x_out = std::max(p.support_end, x);
    return propagate_frame(p, detail::free_jost_frame(k, x_out), x, z);
}

inline SolutionFrame jost_solution(const PiecewisePotential& p, ComplexEnergy e, double x) {
    return jost_solution(p, e.z(), x);
}

/// Regular and Jost solutions of one operator at one energy, precomputed at
/// every breakpoint so that the Green kernel costs one local step per point.
class GreenFactors {
public:
    GreenFactors(const PiecewisePotential& p, const BoundaryCondition& bc, cplx z) : z_(z), k_(momentum(z)) {
        detail::check_jost_energy(z);
        knots_.push_back(0.0);
        for (double b : p.breakpoints)
            if (b > 0.0) knots_.push_back(b);
        for (std::size_t i = 0; i + 1 < knots_.size(); ++i)
            heights_.push_back(p(0.5 * (knots_[i] + knots_[i + 1])));

        regular_.resize(knots_.size());
        regular_[0] = bc.initial_frame();
        for (std::size_t i = 1; i < knots_.size(); ++i) {
            regular_[i] = regular_[i - 1];
            regular_[i].apply(detail::segment_transfer(heights_[i - 1], knots_[i] - knots_[i - 1], z), knots_[i]);
        }
        jost_.resize(knots_.size());
        jost_.back() = detail::free_jost_frame(k_, knots_.back());
        for (std::size_t i = knots_.size() - 1; i > 0; --i) {
            jost_[i - 1] = jost_[i];
            jost_[i - 1].apply(detail::segment_transfer(heights_[i - 1], knots_[i - 1] - knots_[i], z), knots_[i - 1]);
        }
        w_ = wronskian(jost_[0], regular_[0]);
        if (std::abs(w_.mantissa) < 1e-14)
            throw EigenvalueProximityError("Wronskian of regular and Jost solutions vanishes: z is at an eigenvalue");
    }

    GreenFactors(const PiecewisePotential& p, const BoundaryCondition& bc, ComplexEnergy e)
        : GreenFactors(p, bc, e.z()) {}

    cplx z() const { return z_; }
    cplx k() const { return k_; }

    SolutionFrame regular(double x) const {
        const std::size_t i = knot_index(x);
        SolutionFrame f = regular_[i];
        const double h = i < heights_.size() ? heights_[i] : 0.0;
        f.apply(detail::segment_transfer(h, x - knots_[i], z_), x);
        return f;
    }

    SolutionFrame jost(double x) const {
        if (x >= knots_.back()) return detail::free_jost_frame(k_, x);
        const std::size_t i = knot_index(x);
        SolutionFrame f = jost_[i + 1];
        f.apply(detail::segment_transfer(heights_[i], x - knots_[i + 1], z_), x);
        return f;
    }

    /// W(f, phi); independent of the evaluation point.
    const ScaledComplex& wronskian_value() const { return w_; }

    /// |W| relative to the frame amplitudes at x = 0.
    double wronskian_ratio() const { return std::abs(w_.mantissa); }

    /// G(x, y) = phi(min) f(max) / W(f, phi).
    cplx kernel(double x, double y) const {
        const double a = std::min(x, y);
        const double b = std::max(x, y);
        const SolutionFrame p = regular(a);
        const SolutionFrame f = jost(b);
        const double e = p.log_scale + f.log_scale - w_.log_scale;
        if (e < -700.0) return 0.0;
        return p.value * f.value / w_.mantissa * std::exp(e);
    }

    const std::vector<double>& knots() const { return knots_; }

private:
    std::size_t knot_index(double x) const {
        if (x < 0.0) throw ParameterError("Green kernel is defined on x >= 0");
        auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
        return static_cast<std::size_t>(it - knots_.begin()) - 1;
    }

    cplx z_;
    cplx k_;
    std::vector<double> knots_;
    std::vector<double> heights_;
    std::vector<SolutionFrame> regular_;
    std::vector<SolutionFrame> jost_;
    ScaledComplex w_;
};

inline cplx green_kernel(const PiecewisePotential& p, const BoundaryCondition& bc, cplx z, double x, double y) {
    return GreenFactors(p, bc, z).kernel(x, y);
}

inline cplx green_kernel(const PiecewisePotential& p, const BoundaryCondition& bc, ComplexEnergy e, double x,
                         double y) {
    return green_kernel(p, bc, e.z(), x, y);
}

}  // namespace ssflab
