#include "oracles.hpp"
#include "wavesim/netlist.hpp"
#include "wavesim/transient.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace wavesim;

namespace {

const char* kRcStep = "V1 1 0 PWL(0 0 1p 1)\nR1 1 2 1k\nC1 2 0 1n\n.end\n";

// The PWL ramp lasts 1 ps; the analytic response of the RC to that ramp.
double rc_exact(double t) {
    constexpr double tau = 1e-6;
    constexpr double tr = 1e-12;
    if (t <= tr) return (t - tau * (1.0 - std::exp(-t / tau))) / tr;
    const double at_tr = (tr - tau * (1.0 - std::exp(-tr / tau))) / tr;
    return 1.0 - (1.0 - at_tr) * std::exp(-(t - tr) / tau);
}

double rc_error(const TranResult& r) {
    double e = 0.0;
    for (std::size_t k = 0; k < r.grid.size(); ++k) e = std::max(e, std::abs(r.states[k](1) - rc_exact(r.grid[k])));
    return e;
}

TranResult run(const char* text, double tstop, double reltol) {
    const MnaSystem sys(elaborate(parse(text)));
    return solve_transient(sys, dc_operating_point(sys).x0, TranConfig::for_run(tstop, reltol));
}

}  // namespace

TEST_CASE("RC step response", "[transient]") {
    const TranResult r = run(kRcStep, 5e-6, 1e-6);
    REQUIRE(r.grid.front() == 0.0);
    CHECK(r.grid.back() == 5e-6);
    for (std::size_t k = 1; k < r.grid.size(); ++k) CHECK(r.grid[k] > r.grid[k - 1]);
    CHECK(sample(r, 1e-6)(1) == Catch::Approx(0.63212).margin(1e-4));
    CHECK(rc_error(r) < 1e-4);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 5e-6);
    for (int k = 0; k < 100; ++k) {
        const double t = u(rng);
        CHECK(std::abs(sample(r, t)(1) - rc_exact(t)) < 1e-3);
    }
}

TEST_CASE("tighter tolerance does not increase the error", "[transient]") {
    const double e1 = rc_error(run(kRcStep, 5e-6, 1e-5));
    const double e2 = rc_error(run(kRcStep, 5e-6, 0.5e-5));
    CHECK(e2 <= 2.0 * e1);
}

TEST_CASE("sampling", "[transient]") {
    const TranResult r = run(kRcStep, 5e-6, 1e-5);
    CHECK(sample(r, r.grid[3]) == r.states[3]);
    const double mid = 0.5 * (r.grid[5] + r.grid[6]);
    CHECK((sample(r, mid) - 0.5 * (r.states[5] + r.states[6])).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(sample(r, -1e-9), DomainError);
    CHECK_THROWS_AS(sample(r, 6e-6), DomainError);
}

TEST_CASE("resistive circuit stays at its DC point", "[transient]") {
    const TranResult r = run("V1 1 0 2\nR1 1 2 1k\nR2 2 0 3k\n.end", 1e-6, 1e-6);
    for (const auto& x : r.states) CHECK((x - r.states.front()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("trapezoidal rule converges at second order", "[transient][property]") {
    const MnaSystem sys(elaborate(parse("V1 1 0 1\nR1 1 2 1k\nC1 2 0 1n\n.end")));
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3);
    x0 << 1.0, 0.0, -1e-3;
    auto err = [&](double h) {
        TranConfig cfg = TranConfig::for_run(5e-6);
        cfg.fixed_step = true;
        cfg.initial_step = h;
        cfg.max_step = h;
        const TranResult r = solve_transient(sys, x0, cfg);
        double e = 0.0;
        for (std::size_t k = 0; k < r.grid.size(); ++k) {
            e = std::max(e, std::abs(r.states[k](1) - (1.0 - std::exp(-r.grid[k] / 1e-6))));
        }
        return e;
    };
    const double ratio = err(1e-7) / err(0.5e-7);
    CHECK(ratio >= 3.4);
    CHECK(ratio <= 4.6);
}

TEST_CASE("each step satisfies the trapezoidal relation", "[transient][property]") {
    const MnaSystem sys(elaborate(parse("V1 in 0 SIN(0 5 1meg)\nRs in a 10\nD1 a out\nR1 out 0 1k\nC1 out 0 100n\n.end")));
    const TranResult r = solve_transient(sys, dc_operating_point(sys).x0, TranConfig::for_run(2e-6, 1e-6));
    for (std::size_t k = 0; k + 1 < r.grid.size(); ++k) {
        const double h = r.grid[k + 1] - r.grid[k];
        const Eigen::VectorXd lhs = sys.eval_q(r.states[k + 1]) - sys.eval_q(r.states[k]);
        const Eigen::VectorXd rhs = 0.5 * h *
                                    (sys.eval_s(r.grid[k + 1]) - sys.eval_f(r.states[k + 1]) +
                                     sys.eval_s(r.grid[k]) - sys.eval_f(r.states[k]));
        // charge rows only; algebraic rows are checked through the same relation
        const Eigen::VectorXd d = lhs - rhs;
        const Eigen::VectorXd scale = (sys.jac_q(r.states[k + 1]).cwiseAbs() +
                                       0.5 * h * sys.jac_f(r.states[k + 1]).cwiseAbs()) *
                                      r.states[k + 1].cwiseAbs().cwiseMax(sys.unit_floor());
        for (Eigen::Index i = 0; i < d.size(); ++i) CHECK(std::abs(d(i)) <= 1e-6 * scale(i));
    }
}

TEST_CASE("pulse corners are grid points", "[transient][property]") {
    const MnaSystem sys(elaborate(parse("V1 1 0 PULSE(0 1 0.1n 0.03n 0.05n 0.3n 1n)\nR1 1 2 1k\nC1 2 0 0.1p\n.end")));
    const TranResult r = solve_transient(sys, dc_operating_point(sys).x0, TranConfig::for_run(3e-9, 1e-4));
    for (double t : sys.breakpoints(0.0, 3e-9)) {
        CHECK(std::find(r.grid.begin(), r.grid.end(), t) != r.grid.end());
    }
}
