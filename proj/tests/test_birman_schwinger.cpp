#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "ssflab/birman_schwinger.hpp"
#include "ssflab/potential.hpp"
#include "ssflab/pruefer.hpp"

using namespace ssflab;
using Catch::Matchers::WithinAbs;

namespace {

constexpr double pi = std::numbers::pi;

struct Setup {
    BarrierPotential bp = build_vnw_potential(1.0, 2.0, 0.75, 50);
    BoundaryCondition bc = BoundaryCondition::robin(-1.0);
    PiecewisePotential v;
    QuadratureGrid grid;

    explicit Setup(PiecewisePotential pert, std::size_t nodes = 12) : v(std::move(pert)) {
        grid = default_grid(bp.potential, v, nodes);
    }
    SandwichedResolvent T(cplx z) const { return assemble_T(bp.potential, v, bc, grid, z); }
};

PiecewisePotential well() { return make_perturbation(Well{0.0, 1.0, -0.3}); }

PiecewisePotential bump(const BarrierSpec& s) {
    const Interval g = s.gap(1);
    return make_perturbation(GapBump{0.5 * (g.a + g.b), g.length(), 0.9});
}

double opnorm(const Eigen::MatrixXcd& m) { return Eigen::JacobiSVD<Eigen::MatrixXcd>(m).singularValues()(0); }

// The nontrivial eigenphase: the eigenvalue farthest from 1.
double nontrivial_phase(const Eigen::VectorXcd& ev) {
    Eigen::Index k = 0;
    for (Eigen::Index i = 1; i < ev.size(); ++i)
        if (std::abs(ev[i] - 1.0) > std::abs(ev[k] - 1.0)) k = i;
    return std::arg(ev[k]);
}

double wrap(double x) { return std::remainder(x, 2.0 * pi); }

}  // namespace

TEST_CASE("Gauss-Legendre grid on one and two segments") {
    const QuadratureGrid g1 = build_grid(make_piecewise({0.0, 1.0}, {1.0}), 4);
    CHECK(g1.size() == 4);
    CHECK_THAT(g1.total_weight(), WithinAbs(1.0, 1e-14));
    // nodes of the 4-point rule on [0, 1]
    const double t = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
    CHECK_THAT(g1.nodes.front(), WithinAbs(0.5 * (1.0 - t), 1e-14));
    for (double x : g1.nodes) CHECK((x > 0.0 && x < 1.0));

    const QuadratureGrid g2 = build_grid(make_piecewise({0.0, 0.5, 0.8}, {1.0, -2.0}), 6);
    CHECK(g2.size() == 12);
    CHECK_THAT(g2.total_weight(), WithinAbs(0.8, 1e-14));
    for (double w : g2.weights) CHECK(w > 0.0);

    CHECK_THROWS_AS(build_grid(PiecewisePotential{}, 4), ParameterError);
    CHECK_THROWS_AS(build_grid(make_piecewise({0.0, 1.0}, {0.0}), 4), ParameterError);
}

TEST_CASE("panels never straddle a breakpoint of the background") {
    const Setup s(bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec));
    for (const Panel& p : s.grid.panels) {
        CHECK(p.length() <= 1.0 + 1e-12);
        for (double b : s.bp.potential.breakpoints) CHECK_FALSE((b > p.a + 1e-12 && b < p.b - 1e-12));
    }
    CHECK_THAT(s.grid.total_weight(), WithinAbs(s.v.support_measure(), 1e-12));
}

TEST_CASE("T decays at large y and satisfies the resolvent bound") {
    const Setup s(well());
    CHECK(opnorm(s.T(cplx(1.0, 1e6)).T) < 1e-4);
    double worst = 0.0;
    for (double y = 1.0; y <= 1e4; y *= 10.0) worst = std::max(worst, y * opnorm(s.T(cplx(1.0, y)).T));
    // |V| <= 0.3 on the support: ||T|| <= 0.3 / y
    CHECK(worst <= 0.3 * (1.0 + 1e-8));
}

TEST_CASE("T at the conjugate energy is the adjoint") {
    const Setup s(bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec));
    for (cplx z : {cplx(0.9, 0.3), cplx(1.4, 2.0)}) {
        const Eigen::MatrixXcd a = s.T(z).T;
        const Eigen::MatrixXcd b = s.T(std::conj(z)).T;
        CHECK((b - a.adjoint()).cwiseAbs().maxCoeff() < 1e-10 * a.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("imaginary part at y = 0 is positive and rank one") {
    for (const PiecewisePotential& v : {well(), bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec)}) {
        const Setup s(v);
        for (double lambda : {0.6, 1.0, 1.7}) {
            const Eigen::MatrixXcd b = imaginary_part(s.T(cplx(lambda, 0.0)).T);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(b);
            const Eigen::VectorXd ev = es.eigenvalues();
            const double top = ev(ev.size() - 1);
            CHECK(top > 0.0);
            CHECK(ev(0) >= -1e-10 * top);
            CHECK(std::abs(ev(ev.size() - 2)) <= 1e-8 * top);
        }
    }
}

TEST_CASE("S is the identity at r = 0 and unitary elsewhere") {
    const Setup s(well());
    const ScatteringMatrixSample s0 = s_matrix(s.T(cplx(1.2, 0.0)), 0.0);
    CHECK((s0.S - Eigen::MatrixXcd::Identity(s0.S.rows(), s0.S.cols())).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s0.nontrivial.empty());

    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 25; ++i) {
        const cplx z(0.3 + 2.0 * u(rng), i % 5 == 0 ? 0.0 : std::pow(10.0, 4.0 * u(rng) - 2.0));
        const ScatteringMatrixSample m = s_matrix(s.T(z), u(rng));
        for (Eigen::Index k = 0; k < m.eigenvalues.size(); ++k)
            worst = std::max(worst, std::abs(std::abs(m.eigenvalues[k]) - 1.0));
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("compressed eigenvalues match the full eigen-decomposition") {
    const Setup s(bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec));
    for (cplx z : {cplx(0.95, 0.0), cplx(1.1, 0.05), cplx(1.0, 3.0)}) {
        const SandwichedResolvent t = s.T(z);
        for (double r : {0.3, 1.0}) {
            const Eigen::VectorXcd full = s_matrix(t, r).eigenvalues;
            const Eigen::VectorXcd fast = s_matrix_eigenvalues(t, r);
            CHECK(std::abs(nontrivial_phase(full) - nontrivial_phase(fast)) < 1e-10);
            cplx pf = 1.0;
            cplx pq = 1.0;
            for (Eigen::Index i = 0; i < full.size(); ++i) {
                pf *= full[i];
                pq *= fast[i];
            }
            CHECK(std::abs(pf - pq) < 1e-10);
        }
    }
}

TEST_CASE("S tends to 1 uniformly in r at large y") {
    const Setup s(bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec));
    const SandwichedResolvent t = s.T(cplx(1.0, 2e3));
    for (int i = 0; i <= 10; ++i) {
        const double r = i / 10.0;
        const Eigen::MatrixXcd S = scattering_matrix(t, r);
        CHECK(opnorm(S - Eigen::MatrixXcd::Identity(S.rows(), S.cols())) < 1e-2);
    }
}

TEST_CASE("on-shell eigenphase is twice the ODE phase shift") {
    for (const PiecewisePotential& v : {well(), bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec)}) {
        const Setup s(v);
        for (double lambda : {0.7, 0.93, 1.25, 1.6}) {
            const SandwichedResolvent t = s.T(cplx(lambda, 0.0));
            for (double r : {0.25, 0.6, 1.0}) {
                const double theta = nontrivial_phase(s_matrix_eigenvalues(t, r));
                const double dd = relative_phase_shift(s.bp.potential, v, s.bc, r, lambda);
                CHECK(std::abs(wrap(theta - 2.0 * dd)) < 1e-3);
            }
        }
    }
}

TEST_CASE("doubling the nodes changes the eigenphase below 1e-6") {
    const PiecewisePotential v = bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec);
    const Setup a(v, 12);
    const Setup b(v, 24);
    for (double lambda : {0.8, 1.3})
        CHECK(std::abs(wrap(nontrivial_phase(s_matrix_eigenvalues(a.T(cplx(lambda, 0.0)), 1.0)) -
                            nontrivial_phase(s_matrix_eigenvalues(b.T(cplx(lambda, 0.0)), 1.0)))) < 1e-6);
}

TEST_CASE("perturbation determinant limits") {
    const Setup s(well());
    const LogDeterminant d0 = perturbation_determinant(s.T(cplx(1.0, 0.0)), 0.0);
    CHECK(d0.value() == cplx(1.0, 0.0));
    const LogDeterminant d = perturbation_determinant(s.T(cplx(1.0, 1e6)), 1.0);
    CHECK(std::abs(d.value() - 1.0) < 1e-3);
    // against Eigen's determinant on a moderate case
    const SandwichedResolvent t = s.T(cplx(0.8, 0.2));
    const Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(t.size(), t.size()) + 0.7 * (t.J.asDiagonal() * t.T);
    CHECK(std::abs(perturbation_determinant(t, 0.7).value() - m.determinant()) < 1e-12 * std::abs(m.determinant()));
}

TEST_CASE("perturbation determinant does not vanish off the real axis") {
    const Setup s(bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec));
    double lowest = 1e300;
    for (double y : {1e-3, 1e-2, 0.1, 1.0, 10.0})
        for (int i = 0; i <= 10; ++i)
            lowest = std::min(lowest, std::exp(perturbation_determinant(s.T(cplx(1.0, y)), i / 10.0).log_abs));
    CHECK(lowest > 1e-8);
}

TEST_CASE("smallest singular value of 1 + r J T") {
    const Setup s(bump(build_vnw_potential(1.0, 2.0, 0.75, 50).spec));
    const SandwichedResolvent t0 = s.T(cplx(1.02, 0.0));
    CHECK(min_singular(t0, 0.0) == 1.0);
    CHECK(min_singular(s.T(cplx(1.0, 1e4)), 1.0) > 0.99);
    for (double r : {0.1, 0.5, 0.9}) {
        const Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(t0.size(), t0.size()) + r * (t0.J.asDiagonal() * t0.T);
        const double ref = Eigen::JacobiSVD<Eigen::MatrixXcd>(m).singularValues().minCoeff();
        CHECK(std::abs(min_singular(t0, r) - ref) < 1e-10);
    }
}

TEST_CASE("S depends continuously on (y, r)") {
    const Setup s(well());
    double worst = 0.0;
    for (double y : {0.0, 0.01, 0.1, 1.0}) {
        const SandwichedResolvent t = s.T(cplx(1.2, y));
        double prev = 0.0;
        for (int i = 1; i <= 40; ++i) {
            const double cur = nontrivial_phase(s_matrix_eigenvalues(t, i / 40.0));
            worst = std::max(worst, std::abs(wrap(cur - prev)));
            prev = cur;
        }
    }
    CHECK(worst < 0.1);
}
