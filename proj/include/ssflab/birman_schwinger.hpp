#pragma once

// Discretized sandwiched resolvent T(z) = G R_z(W + rV) G, G = |V|^{1/2},
// the scattering matrix S(z, r) built from it, and the perturbation
// determinant det(1 + r J T).
//
// T is the Galerkin matrix of the integral operator in the orthonormal
// Lagrange basis attached to each panel's Gauss nodes, so row m still belongs
// to node x_m and J[m] = sign V(x_m). Kernel integrals are split at the kink
// of the Green function and use a finer inner rule.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "ssflab/errors.hpp"
#include "ssflab/potential.hpp"
#include "ssflab/quadrature.hpp"
#include "ssflab/transfer.hpp"

namespace ssflab {

struct SandwichedResolvent {
    cplx z{0.0, 0.0};
    double background_r = 0.0;  // T is built on W + background_r * V
    Eigen::MatrixXcd T;
    Eigen::VectorXd J;

    Eigen::Index size() const { return T.rows(); }
};

struct AssemblyOptions {
    std::size_t inner_nodes = 0;  // 0 selects 2 n + 16
};

namespace detail {

struct PanelIntegrals {
    double phi_scale = 0.0;  // log scale of phi at the panel start
    double jost_scale = 0.0; // log scale of f at the panel end
    Eigen::VectorXcd iphi;   // int e_i phi, relative to phi_scale
    Eigen::VectorXcd ijost;  // int e_i f, relative to jost_scale
    Eigen::MatrixXcd diag;   // int int e_i(x) phi(min) f(max) e_j(y), relative to both scales
};

inline cplx relative(const SolutionFrame& f, double ref) { return f.value * std::exp(f.log_scale - ref); }

inline PanelIntegrals panel_integrals(const GreenFactors& gf, const Panel& p, const GaussRule& rule,
                                      const std::vector<double>& bary, const GaussRule& inner) {
    const std::size_t n = rule.nodes.size();
    const std::size_t nq = inner.nodes.size();
    const double L = p.length();
    const double half = 0.5 * L;
    const double escale = std::sqrt(2.0 / L);

    PanelIntegrals out;
    out.phi_scale = gf.regular(p.a).log_scale;
    out.jost_scale = gf.jost(p.b).log_scale;
    auto phi_at = [&](double x) { return relative(gf.regular(x), out.phi_scale); };
    auto jost_at = [&](double x) { return relative(gf.jost(x), out.jost_scale); };
    auto to_ref = [&](double x) { return std::clamp(2.0 * (x - p.a) / L - 1.0, -1.0, 1.0); };

    std::vector<double> e(n);
    out.iphi = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
    out.ijost = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
    out.diag = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));

    Eigen::VectorXcd left(static_cast<Eigen::Index>(n));
    Eigen::VectorXcd right(static_cast<Eigen::Index>(n));
    for (std::size_t q = 0; q < nq; ++q) {
        const double yq = p.a + half * (inner.nodes[q] + 1.0);
        const double wq = half * inner.weights[q];
        const cplx phq = phi_at(yq);
        const cplx fq = jost_at(yq);
        orthonormal_lagrange(rule, bary, to_ref(yq), e.data());
        for (std::size_t i = 0; i < n; ++i) {
            out.iphi[static_cast<Eigen::Index>(i)] += wq * escale * e[i] * phq;
            out.ijost[static_cast<Eigen::Index>(i)] += wq * escale * e[i] * fq;
        }
        // int_a^y e_i phi and int_y^b e_i f
        left.setZero();
        right.setZero();
        const double hl = 0.5 * (yq - p.a);
        const double hr = 0.5 * (p.b - yq);
        std::vector<double> el(n);
        for (std::size_t l = 0; l < nq; ++l) {
            const double xl = p.a + hl * (inner.nodes[l] + 1.0);
            const cplx pl = phi_at(xl);
            orthonormal_lagrange(rule, bary, to_ref(xl), el.data());
            for (std::size_t i = 0; i < n; ++i) left[static_cast<Eigen::Index>(i)] += hl * inner.weights[l] * escale * el[i] * pl;
            const double xr = yq + hr * (inner.nodes[l] + 1.0);
            const cplx fr = jost_at(xr);
            orthonormal_lagrange(rule, bary, to_ref(xr), el.data());
            for (std::size_t i = 0; i < n; ++i) right[static_cast<Eigen::Index>(i)] += hr * inner.weights[l] * escale * el[i] * fr;
        }
        const Eigen::VectorXcd col = left * fq + right * phq;
        for (std::size_t j = 0; j < n; ++j)
            out.diag.col(static_cast<Eigen::Index>(j)) += (wq * escale * e[j]) * col;
    }
    return out;
}

}  // namespace detail

/// T for the background W + r V at energy z (y = 0 uses the outgoing kernel).
inline SandwichedResolvent assemble_T(const PiecewisePotential& w, const PiecewisePotential& v,
                                      const BoundaryCondition& bc, const QuadratureGrid& grid, cplx z, double r = 0.0,
                                      AssemblyOptions opt = {}) {
    const PiecewisePotential background = r == 0.0 ? w : coupled(w, v, r);
    const GreenFactors gf(background, bc, z);
    const std::size_t n = grid.n_per_panel;
    const std::size_t np = grid.panels.size();
    const auto N = static_cast<Eigen::Index>(n * np);
    const GaussRule inner = gauss_legendre(opt.inner_nodes ? opt.inner_nodes : 2 * n + 16);
    const std::vector<double> bary = barycentric_weights(grid.rule.nodes);

    std::vector<detail::PanelIntegrals> pi;
    pi.reserve(np);
    for (const Panel& p : grid.panels) pi.push_back(detail::panel_integrals(gf, p, grid.rule, bary, inner));

    const ScaledComplex& wr = gf.wronskian_value();
    SandwichedResolvent out;
    out.z = z;
    out.background_r = r;
    out.T = Eigen::MatrixXcd::Zero(N, N);
    out.J = Eigen::VectorXd(N);
    const auto nn = static_cast<Eigen::Index>(n);
    for (std::size_t I = 0; I < np; ++I) {
        const double gi = std::sqrt(std::abs(grid.panels[I].height));
        out.J.segment(static_cast<Eigen::Index>(I) * nn, nn).setConstant(grid.panels[I].height > 0.0 ? 1.0 : -1.0);
        for (std::size_t K = 0; K < np; ++K) {
            const double gk = std::sqrt(std::abs(grid.panels[K].height));
            double e;
            if (I == K)
                e = pi[I].phi_scale + pi[I].jost_scale - wr.log_scale;
            else if (I < K)
                e = pi[I].phi_scale + pi[K].jost_scale - wr.log_scale;
            else
                e = pi[I].jost_scale + pi[K].phi_scale - wr.log_scale;
            if (e < -700.0) continue;
            const cplx factor = gi * gk * std::exp(e) / wr.mantissa;
            auto block = out.T.block(static_cast<Eigen::Index>(I) * nn, static_cast<Eigen::Index>(K) * nn, nn, nn);
            if (I == K)
                block = factor * pi[I].diag;
            else if (I < K)
                block = factor * pi[I].iphi * pi[K].ijost.transpose();
            else
                block = factor * pi[I].ijost * pi[K].iphi.transpose();
        }
    }
    out.T = (0.5 * (out.T + out.T.transpose())).eval();
    return out;
}

inline SandwichedResolvent assemble_T(const PiecewisePotential& w, const PiecewisePotential& v,
                                      const BoundaryCondition& bc, const QuadratureGrid& grid, ComplexEnergy e,
                                      double r = 0.0, AssemblyOptions opt = {}) {
    return assemble_T(w, v, bc, grid, e.z(), r, opt);
}

/// Grid over supp V, split at the breakpoints of W.
inline QuadratureGrid default_grid(const PiecewisePotential& w, const PiecewisePotential& v, std::size_t n = 12) {
    return build_grid(v, n, w.breakpoints);
}

/// B = (T - T*) / 2i.
inline Eigen::MatrixXcd imaginary_part(const Eigen::MatrixXcd& t) {
    return (t - t.adjoint()) / cplx(0.0, 2.0);
}

struct ScatteringMatrixSample {
    cplx z{0.0, 0.0};
    double r = 0.0;
    Eigen::MatrixXcd S;
    Eigen::VectorXcd eigenvalues;
    std::vector<double> eigenphases;     // arg of every eigenvalue, in (-pi, pi]
    std::vector<double> nontrivial;      // eigenphases with |e^{i theta} - 1| > tol
};

inline Eigen::MatrixXcd sqrt_psd(const Eigen::MatrixXcd& b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(b);
    Eigen::VectorXd ev = es.eigenvalues();
    const double top = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-10 * top)
            throw DiscretizationError("imaginary part of T has a negative eigenvalue beyond tolerance");
        ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

/// S(z, r) = 1 - 2 i r B^{1/2} J (1 + r T J)^{-1} B^{1/2}.
inline Eigen::MatrixXcd scattering_matrix(const SandwichedResolvent& t, double r) {
    const Eigen::Index n = t.size();
    const Eigen::MatrixXcd bh = sqrt_psd(imaginary_part(t.T));
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(n, n) + r * (t.T * t.J.asDiagonal());
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
    if (r != 0.0 && lu.rcond() < 1e-14) throw ResonancePointError("1 + r T J is singular", r);
    const Eigen::MatrixXcd x = lu.solve(bh);
    return Eigen::MatrixXcd::Identity(n, n) - cplx(0.0, 2.0 * r) * (bh * t.J.asDiagonal() * x);
}

inline ScatteringMatrixSample s_matrix(const SandwichedResolvent& t, double r, double nontrivial_tol = 1e-6) {
    ScatteringMatrixSample out;
    out.z = t.z;
    out.r = r;
    out.S = scattering_matrix(t, r);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(out.S, false);
    out.eigenvalues = es.eigenvalues();
    for (Eigen::Index i = 0; i < out.eigenvalues.size(); ++i) {
        const double th = std::arg(out.eigenvalues[i]);
        out.eigenphases.push_back(th);
        if (std::abs(out.eigenvalues[i] - 1.0) > nontrivial_tol) out.nontrivial.push_back(th);
    }
    return out;
}

/// Eigenvalues of S only; the sampler used by branch tracking. S - 1 lives
/// on the range of B, so the nonzero part of its spectrum is that of a k x k
/// compression with k = rank B (directions with eigenvalue below 1e-14 of the
/// top are dropped; their eigenphases are O(1e-14)).
inline Eigen::VectorXcd s_matrix_eigenvalues(const SandwichedResolvent& t, double r) {
    const Eigen::Index n = t.size();
    Eigen::VectorXcd out = Eigen::VectorXcd::Ones(n);
    if (n == 0 || r == 0.0) return out;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(imaginary_part(t.T));
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double top = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -1e-10 * top)
        throw DiscretizationError("imaginary part of T has a negative eigenvalue beyond tolerance");
    Eigen::Index first = 0;
    while (first < n && ev[first] <= 1e-14 * top) ++first;
    const Eigen::Index k = n - first;
    if (k == 0) return out;
    const Eigen::MatrixXcd u = es.eigenvectors().rightCols(k) * ev.tail(k).cwiseSqrt().asDiagonal();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(n, n) + r * (t.T * t.J.asDiagonal());
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
    if (lu.rcond() < 1e-14) throw ResonancePointError("1 + r T J is singular", r);
    const Eigen::MatrixXcd c = Eigen::MatrixXcd::Identity(k, k) -
                               cplx(0.0, 2.0 * r) * (u.adjoint() * t.J.asDiagonal() * lu.solve(u));
    if (k == 1) {
        out[0] = c(0, 0);
        return out;
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(c, false);
    out.head(k) = ces.eigenvalues();
    return out;
}

inline cplx s_matrix_determinant(const SandwichedResolvent& t, double r) {
    return scattering_matrix(t, r).partialPivLu().determinant();
}

/// det(1 + r J T) as exp(log_abs + i arg); arg is the sum of pivot arguments
/// and is only meaningful modulo 2 pi.
struct LogDeterminant {
    double log_abs = 0.0;
    double arg = 0.0;
    cplx value() const { return std::polar(std::exp(log_abs), arg); }
};

inline LogDeterminant perturbation_determinant(const SandwichedResolvent& t, double r) {
    const Eigen::Index n = t.size();
    LogDeterminant d;
    if (r == 0.0 || n == 0) return d;
    const Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(n, n) + r * (t.J.asDiagonal() * t.T);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
    const Eigen::MatrixXcd& f = lu.matrixLU();
    for (Eigen::Index i = 0; i < n; ++i) {
        d.log_abs += std::log(std::abs(f(i, i)));
        d.arg += std::arg(f(i, i));
    }
    if (lu.permutationP().determinant() < 0) d.arg += std::numbers::pi;
    d.arg = std::remainder(d.arg, 2.0 * std::numbers::pi);
    return d;
}

/// Smallest singular value of 1 + r J T by inverse iteration on (A* A)^{-1};
/// falls back to a full SVD when the iteration stalls on a cluster.
inline double min_singular(const SandwichedResolvent& t, double r) {
    const Eigen::Index n = t.size();
    if (n == 0 || r == 0.0) return 1.0;
    const Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(n, n) + r * (t.J.asDiagonal() * t.T);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
    if (lu.rcond() > 1e-13) {
        Eigen::VectorXcd x = Eigen::VectorXcd::Ones(n) / std::sqrt(static_cast<double>(n));
        double nu = 0.0;
        for (int it = 0; it < 300; ++it) {
            const Eigen::VectorXcd z = lu.adjoint().solve(lu.solve(x));
            const double next = z.norm();
            x = z / next;
            if (std::abs(next - nu) <= 1e-13 * next) return 1.0 / std::sqrt(next);
            nu = next;
        }
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
    return svd.singularValues().minCoeff();
}

}  // namespace ssflab
