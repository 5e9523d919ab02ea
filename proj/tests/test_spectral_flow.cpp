#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "ssflab/potential.hpp"
#include "ssflab/spectral_flow.hpp"

using namespace ssflab;
using Catch::Matchers::WithinAbs;

namespace {

constexpr double pi = std::numbers::pi;

Eigen::VectorXcd unit_eigenvalues(const std::vector<double>& phases) {
    Eigen::VectorXcd ev(static_cast<Eigen::Index>(phases.size()));
    for (std::size_t j = 0; j < phases.size(); ++j) ev[static_cast<Eigen::Index>(j)] = std::polar(1.0, phases[j]);
    return ev;
}

// Smooth phase functions that wind several times, cross each other and
// pass through the branch cut of arg.
std::vector<double> synthetic(double t) {
    return {7.0 * pi * t * t, -3.0 * pi * std::sin(2.0 * t), 0.4 + 2.0 * t - 5.0 * t * t * t, 1.0};
}

// Signed number of times a continuous phase path crosses the ray at angle
// theta, counted clockwise-positive; computed from a fine sampling of the
// path, independently of the floor formula.
long clockwise_crossings(const std::function<double(double)>& phase, double theta, int samples = 20000) {
    long n = 0;
    double prev = phase(0.0);
    for (int i = 1; i <= samples; ++i) {
        const double cur = phase(static_cast<double>(i) / samples);
        const double a = std::remainder(prev - theta, 2.0 * pi);
        const double b = a + (cur - prev);
        if (a > 0.0 && b <= 0.0) ++n;
        if (a <= 0.0 && b > 0.0) --n;
        prev = cur;
    }
    return n;
}

std::vector<double> uniform(double a, double b, int n) {
    std::vector<double> g;
    for (int i = 0; i <= n; ++i) g.push_back(a + (b - a) * i / n);
    return g;
}

}  // namespace

TEST_CASE("identity sampler gives zero branches") {
    auto sampler = [](double) { return Eigen::VectorXcd::Ones(5).eval(); };
    const PhaseBranches b = track_branches(sampler, uniform(0.0, 1.0, 10));
    CHECK(b.branch_count() == 5);
    for (const auto& row : b.phases)
        for (double p : row) CHECK(p == 0.0);
    CHECK(b.max_increment == 0.0);
}

// Squared-distance matching may let two branches bounce off each other at a
// crossing instead of passing through; both labelings are continuous. What
// is fixed is the multiset of endpoint phases modulo relabeling: the sum of
// net changes and the crossing count mu.
TEST_CASE("tracking recovers winding phases through crossings and the cut") {
    auto sampler = [](double t) { return unit_eigenvalues(synthetic(t)); };
    const PhaseBranches b = track_branches(sampler, uniform(0.0, 1.0, 8));
    REQUIRE(b.branch_count() == 4);
    const std::vector<double> s0 = synthetic(0.0);
    const std::vector<double> s1 = synthetic(1.0);
    double got = 0.0;
    double expected = 0.0;
    MuInvariant start;
    MuInvariant tracked;
    MuInvariant exact;
    for (std::size_t j = 0; j < 4; ++j) {
        got += b.endpoint()[j] - b.phases.front()[j];
        expected += s1[j] - s0[j];
        start.branch_phases.push_back(b.phases.front()[j]);
        tracked.branch_phases.push_back(b.endpoint()[j]);
        exact.branch_phases.push_back(s1[j]);
    }
    CHECK_THAT(got, WithinAbs(expected, 1e-10));
    // with start phases s0 the exact flow through theta is exact - start
    for (double t : theta_grid()) CHECK(tracked.evaluate(t) == exact.evaluate(t));
    CHECK(b.max_increment < 0.5);
    for (std::size_t k = 1; k < b.params.size(); ++k)
        for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(b.phases[k][j] - b.phases[k - 1][j]) < 0.5);
    // endpoint phases reproduce the endpoint eigenvalue multiset
    for (std::size_t j = 0; j < 4; ++j) {
        double best = 1.0;
        for (double p : s1) best = std::min(best, std::abs(std::polar(1.0, b.endpoint()[j]) - std::polar(1.0, p)));
        CHECK(best < 1e-8);
    }
}

TEST_CASE("reversed tracking negates the net change") {
    auto sampler = [](double t) { return unit_eigenvalues(synthetic(t)); };
    const std::vector<double> fwd = uniform(0.0, 1.0, 8);
    const std::vector<double> rev(fwd.rbegin(), fwd.rend());
    const PhaseBranches a = track_branches(sampler, fwd);
    const PhaseBranches b = track_branches(sampler, rev);
    auto net = [](const PhaseBranches& x) {
        double n = 0.0;
        for (std::size_t j = 0; j < x.branch_count(); ++j) n += x.endpoint()[j] - x.phases.front()[j];
        return n;
    };
    CHECK_THAT(net(a), WithinAbs(-net(b), 1e-8));
}

// The grid must resolve the motion (steps below pi); refinement then keeps
// every accepted increment below max_increment.
TEST_CASE("a single branch is tracked exactly") {
    auto sampler = [](double t) { return unit_eigenvalues({7.0 * pi * t * t - 2.0 * t}); };
    const PhaseBranches b = track_branches(sampler, uniform(0.0, 1.0, 32));
    CHECK_THAT(b.endpoint()[0], WithinAbs(7.0 * pi - 2.0, 1e-12));
    const std::vector<double> fwd = uniform(0.0, 1.0, 32);
    const PhaseBranches r = track_branches(sampler, std::vector<double>(fwd.rbegin(), fwd.rend()));
    CHECK_THAT(r.endpoint()[0] - r.phases.front()[0], WithinAbs(-(7.0 * pi - 2.0), 1e-8));
}

TEST_CASE("a discontinuous family exhausts the refinement depth") {
    auto sampler = [](double t) { return unit_eigenvalues({t < 0.3 ? 0.0 : 2.0, 1.0}); };
    TrackingOptions opt;
    opt.max_depth = 12;
    try {
        track_branches(sampler, uniform(0.0, 1.0, 4), opt);
        FAIL("expected a tracking error");
    } catch (const TrackingError& e) {
        CHECK(e.interval_lo <= 0.3);
        CHECK(e.interval_hi >= 0.3);
        CHECK(e.interval_hi - e.interval_lo < 1e-3);
    }
}

TEST_CASE("skipped intervals are crossed by nearest matching") {
    auto sampler = [](double t) { return unit_eigenvalues({t < 0.3 ? 0.0 : 0.3}); };
    TrackingOptions opt;
    opt.max_increment = 0.2;
    opt.skip = {{0.25, 0.35}};
    std::vector<double> grid{0.0, 0.25, 0.35, 1.0};
    const PhaseBranches b = track_branches(sampler, grid, opt);
    REQUIRE(b.skipped.size() == 1);
    CHECK_THAT(b.endpoint()[0], WithinAbs(0.3, 1e-15));
    CHECK(b.max_increment == 0.0);
}

TEST_CASE("Hungarian assignment is optimal") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 1 + trial % 6;
        Eigen::MatrixXd c(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) c(i, j) = u(rng);
        const auto col = detail::min_cost_assignment(c);
        double got = 0.0;
        for (int i = 0; i < n; ++i) got += c(i, col[static_cast<std::size_t>(i)]);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        double best = 1e300;
        do {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += c(i, perm[static_cast<std::size_t>(i)]);
            best = std::min(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK_THAT(got, WithinAbs(best, 1e-12));
    }
}

TEST_CASE("theta grid avoids the trivial eigenvalue") {
    const std::vector<double> t = theta_grid();
    REQUIRE(t.size() == 32);
    for (std::size_t k = 0; k < t.size(); ++k) {
        CHECK(t[k] > 0.0);
        CHECK(t[k] < 2.0 * pi);
        CHECK(std::abs(std::remainder(t[k], 2.0 * pi / 32)) > 1e-3);
        if (k) CHECK(t[k] > t[k - 1]);
    }
}

TEST_CASE("mu of trivial branches vanishes") {
    MuInvariant mu;
    mu.branch_phases = {0.0, 0.0};
    for (double t : theta_grid()) CHECK(mu.evaluate(t) == 0);
    CHECK(mu.integral() == 0.0);
}

// mu = -sum floor((theta - theta_j) / 2 pi): a clockwise half turn gives
// mu = -1 on (pi, 2 pi), consistent with xi = -(1/2 pi) int mu = 1/2.
TEST_CASE("mu of a clockwise half turn") {
    MuInvariant mu;
    mu.branch_phases = {-pi};
    auto path = [](double s) { return -pi * s; };
    for (double t : theta_grid()) {
        const long expected = t < pi ? 0 : -1;
        CHECK(mu.evaluate(t) == expected);
        CHECK(mu.evaluate(t) == -clockwise_crossings(path, t));
    }
    CHECK_THAT(-mu.integral() / (2.0 * pi), WithinAbs(0.5, 1e-15));
}

TEST_CASE("mu counts crossings of winding paths") {
    const std::vector<std::function<double(double)>> paths = {
        [](double s) { return 7.0 * pi * s * s; },
        [](double s) { return -3.0 * pi * std::sin(2.0 * s); },
        [](double s) { return 2.0 * s - 5.0 * s * s * s; },
    };
    MuInvariant mu;
    for (const auto& p : paths) mu.branch_phases.push_back(p(1.0));
    for (double t : theta_grid()) {
        long c = 0;
        for (const auto& p : paths) c -= clockwise_crossings(p, t);
        CHECK(mu.evaluate(t) == c);
    }
}

TEST_CASE("integral of mu is the sum of the endpoint phases") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(-15.0, 15.0);
    for (int trial = 0; trial < 20; ++trial) {
        MuInvariant mu;
        double sum = 0.0;
        for (int j = 0; j < 1 + trial % 4; ++j) {
            mu.branch_phases.push_back(u(rng));
            sum += mu.branch_phases.back();
        }
        CHECK_THAT(mu.integral(), WithinAbs(sum, 1e-11));
        mu.theta = theta_grid(4096);
        for (double t : mu.theta) mu.values.push_back(mu.evaluate(t));
        CHECK_THAT(mu.riemann_integral(), WithinAbs(sum, 2.0 * pi * 5 / 4096.0 + 1e-9));
    }
}

TEST_CASE("y grid spans y_max down to y_min") {
    const std::vector<double> g = y_path_grid(1.0);
    CHECK(g.front() == Catch::Approx(2e3));
    REQUIRE(g.size() >= 3);
    CHECK(g.back() == 0.0);
    CHECK(g[g.size() - 2] == 1e-6);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] < g[i - 1]);
    CHECK(y_midpoint(1.0, 100.0) == Catch::Approx(10.0));
    CHECK(y_midpoint(0.0, 1e-6) > 0.0);
}

// ---------------------------------------------------------------------------
// On the barrier model

namespace {

const BarrierPotential& train() {
    static const BarrierPotential bp = build_vnw_potential(1.0, 2.0, 0.75, 50);
    return bp;
}

const BoundaryCondition bc = BoundaryCondition::robin(-1.0);

PiecewisePotential shallow_well() { return make_perturbation(Well{0.0, 1.0, -0.3}); }

PiecewisePotential scaled_barriers() { return make_perturbation(BarrierScale{train().spec, 0.1, 5}); }

}  // namespace

TEST_CASE("zero perturbation: all spectral quantities vanish") {
    const SsfBreakdown b = xi_breakdown(1.0, train().potential, PiecewisePotential{}, bc);
    CHECK(b.xi == 0.0);
    CHECK(b.xi_ac == 0.0);
    CHECK(b.mu_s == 0);
    for (long m : b.mu.values) CHECK(m == 0);
    for (long m : b.mu_a.values) CHECK(m == 0);
    const XiAcResult t = xi_ac(1.0, OperatorPath{{train().potential, train().potential}}, bc);
    CHECK(t.xi_ac == 0.0);
}

TEST_CASE("y-path eigenphase sum, continued determinant and counting oracle agree") {
    const PiecewisePotential v = shallow_well();
    for (double lambda : {0.8, 1.2}) {
        BackgroundResolvent t0(train().potential, v, bc, default_grid(train().potential, v), lambda);
        const PhaseBranches yb = y_path_branches(t0, 1.0);
        for (double p : yb.phases.front()) CHECK(std::abs(p) < 1e-3);
        const double xi = xi_from_y_path(yb);
        const double xi_det = determinant_y_path(t0, {1.0}).final_arg[0] / pi;
        CHECK(std::abs(xi - xi_det) < 1e-3);
        const CountingOracle o = ssf_counting_oracle(train().potential, v, bc, lambda);
        CHECK(std::abs(xi - o.xi) < 0.05);
    }
}

TEST_CASE("breakdown off resonance: integer singular part and mu identities") {
    const SsfBreakdown b = xi_breakdown(1.2, train().potential, shallow_well(), bc);
    CHECK_FALSE(b.resonant);
    CHECK(b.mu_s == 0);
    CHECK(b.residual_integer < 1e-2);
    CHECK(b.residual_identity < 1e-2);
    CHECK(b.mu_difference_constant);
    CHECK(b.mu_integral_residual < 1e-2);
    CHECK(b.mu_ac_integral_residual < 1e-2);
    CHECK(b.det_s_residual < 1e-6);
    CHECK(b.oracle_residual < 0.05);
}

TEST_CASE("xi_ac does not depend on the path") {
    const PiecewisePotential v = shallow_well();
    const PiecewisePotential h1 = train().potential + v;
    const PiecewisePotential mid = train().potential + make_perturbation(Well{0.0, 0.5, -0.4});
    const double lambda = 1.2;
    const XiAcResult straight = xi_ac(lambda, OperatorPath{{train().potential, h1}}, bc);
    const XiAcResult detour = xi_ac(lambda, OperatorPath{{train().potential, mid, h1}}, bc);
    CHECK(detour.segment_xi_ac.size() == 2);
    CHECK(std::abs(straight.xi_ac - detour.xi_ac) < 1e-2);
}

TEST_CASE("jump across an interior resonance is a nonzero multiple of 2 pi") {
    const PiecewisePotential v = scaled_barriers();
    const double lambda = 1.01;
    BackgroundResolvent t0(train().potential, v, bc, default_grid(train().potential, v), lambda);
    const GammaScan scan = scan_gamma(train().potential, v, bc, lambda, t0.at(0.0));
    bool found = false;
    for (const ResonancePoint& p : scan.points) {
        if (p.boundary || !p.certified) continue;
        const JumpEstimate j = resonance_jump(t0, p.r0);
        CHECK(j.certified);
        CHECK(j.m != 0);
        CHECK(std::abs(j.jump - 2.0 * pi * static_cast<double>(j.m)) < 1e-2 * 2.0 * pi);
        found = true;
    }
    CHECK(found);
}

TEST_CASE("flipping the sign convention breaks Birman-Krein") {
    const PiecewisePotential v = shallow_well();
    const double lambda = 1.2;
    const QuadratureGrid grid = default_grid(train().potential, v);
    const cplx det = s_matrix_determinant(assemble_T(train().potential, v, bc, grid, cplx(lambda, 0.0)), 1.0);
    const double xi = ssf_counting_oracle(train().potential, v, bc, lambda).xi;
    CHECK(std::abs(det - std::exp(cplx(0.0, -2.0 * pi * xi))) < 1e-3);
    CHECK(std::abs(det - std::exp(cplx(0.0, 2.0 * pi * xi))) > 0.1);
}
