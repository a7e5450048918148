#include "oracles.hpp"
#include "wavesim/cli.hpp"
#include "wavesim/wavelet_solver.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace wavesim;

namespace {

const char* kRcStep = "V1 1 0 PWL(0 0 1p 1)\nR1 1 2 1k\nC1 2 0 1n\n.end\n";

MnaSystem system_of(const std::string& text) { return MnaSystem(elaborate(parse(text))); }

// Response to the 1 ps ramp; differs from 1 - exp(-t/tau) by < 1e-6.
double rc_exact(double t) {
    constexpr double tau = 1e-6;
    constexpr double tr = 1e-12;
    if (t <= tr) return (t - tau * (1.0 - std::exp(-t / tau))) / tr;
    const double at_tr = (tr - tau * (1.0 - std::exp(-tr / tau))) / tr;
    return 1.0 - (1.0 - at_tr) * std::exp(-(t - tr) / tau);
}

double rc_error(const WaveletResult& r) {
    double e = 0.0;
    for (int k = 0; k <= 5000; ++k) {
        const double t = 5e-6 * k / 5000.0;
        e = std::max(e, std::abs(r.eval(t)(1) - rc_exact(t)));
    }
    for (double t : r.knots()) e = std::max(e, std::abs(r.eval(t)(1) - rc_exact(t)));
    return e;
}

WaveletResult rc_run(double tol) {
    const MnaSystem sys = system_of(kRcStep);
    WaveletConfig cfg;
    cfg.tol = tol;
    return solve_wavelet(sys, dc_operating_point(sys).x0, 5e-6, cfg);
}

MnaSystem rectifier() { return MnaSystem(load_circuit(oracle::netlist_path("rectifier.cir"))); }

}  // namespace

TEST_CASE("RC step response within tolerance", "[wavelet]") {
    const WaveletResult r = rc_run(1e-4);
    CHECK(rc_error(r) < 1e-4);
    REQUIRE(r.windows.size() == 1);
    const WindowStats& s = r.windows[0].stats;
    CHECK(s.passes > 1);
    for (int it : s.newton_per_pass) CHECK(it == 1);
    CHECK(r.grid_size == s.knot_count);
}

TEST_CASE("constant source from its DC point needs one pass", "[wavelet]") {
    const MnaSystem sys = system_of("V1 1 0 1\nR1 1 2 1k\nC1 2 0 1n\nD1 2 0\n.end");
    const WaveletResult r = solve_wavelet(sys, dc_operating_point(sys).x0, 1e-6, WaveletConfig{});
    REQUIRE(r.windows.size() == 1);
    CHECK(r.windows[0].stats.passes == 1);
    CHECK(r.windows[0].stats.newton_per_pass == std::vector<int>{0});
    CHECK(r.grid_size == 9);
}

TEST_CASE("knots cluster at pulse edges", "[wavelet]") {
    const MnaSystem sys(load_circuit(oracle::netlist_path("pulse_rc.cir")));
    WaveletConfig cfg;
    cfg.tol = 1e-3;
    const WaveletResult r = solve_wavelet(sys, dc_operating_point(sys).x0, 3e-9, cfg);
    const std::vector<double> knots = r.knots();
    auto density = [&](double a, double b) {
        const auto n = std::count_if(knots.begin(), knots.end(), [&](double t) { return t >= a && t < b; });
        return static_cast<double>(n) / (b - a);
    };
    // edges every 500 ps; the middle of each plateau is flat
    double near = 0.0;
    double flat = 0.0;
    for (int k = 0; k < 6; ++k) {
        const double e = 500e-12 * k;
        near += density(std::max(0.0, e - 50e-12), e + 50e-12);
        flat += density(e + 150e-12, e + 400e-12);
    }
    CHECK(near >= 4.0 * flat);
}

TEST_CASE("refinement is monotone for a linear circuit", "[wavelet][property]") {
    const MnaSystem sys = system_of("V1 1 0 SIN(0 1 1meg)\nR1 1 2 1k\nC1 2 0 1n\nL1 2 3 10u\nR2 3 0 100\n.end");
    const Eigen::VectorXd x0 = dc_operating_point(sys).x0;
    const Eigen::VectorXd scale = sys.unit_floor().cwiseMax(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(sys.size()), 1e-3));
    const std::vector<double> breaks = sys.breakpoints(0.0, 5e-6);
    SplineCurve c = SplineCurve::constant(SplineSpace(KnotVector::uniform(4, 0.0, 5e-6, 8)), x0);
    double last_peak = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 12; ++pass) {
        const GalerkinSystem gs(sys, c.space(), x0, scale, breaks);
        const NewtonResult nr = newton_solve(gs, c);
        REQUIRE(nr.converged);
        const RefinementPlan plan = refine_indicators(gs, nr.curve, 1e-5, 0.25);
        CHECK(plan.max_indicator() <= last_peak * (1.0 + 1e-9));
        last_peak = plan.max_indicator();
        if (!plan.any_flagged()) break;
        const KnotVector& kv = nr.curve.space().knot_vector();
        const KnotVector finer = midpoint_refine(kv, plan.flags);
        const std::vector<double> added = missing_knots(kv, finer);
        CHECK(finer.knots().size() == kv.knots().size() + added.size());
        for (double t : kv.breakpoints()) CHECK(finer.multiplicity(t) >= kv.multiplicity(t));
        c = insert_knots(nr.curve, added);
    }
}

TEST_CASE("halving the tolerance does not increase the error", "[wavelet][property]") {
    double prev = rc_error(rc_run(1e-3));
    for (double tol : {5e-4, 2.5e-4, 1.25e-4}) {
        const double e = rc_error(rc_run(tol));
        CHECK(e <= 2.0 * prev);
        prev = e;
    }
}

TEST_CASE("one window equals solve_window", "[wavelet]") {
    const MnaSystem sys = rectifier();
    const Eigen::VectorXd x0 = dc_operating_point(sys).x0;
    WaveletConfig cfg;
    const WaveletResult r = solve_wavelet(sys, x0, 1e-6, cfg);
    const WindowSolution w = solve_window(sys, x0, 0.0, 1e-6, cfg);
    REQUIRE(r.windows.size() == 1);
    CHECK(r.windows[0].curve.space().knots() == w.curve.space().knots());
    CHECK(r.windows[0].curve.coefficients() == w.curve.coefficients());
}

TEST_CASE("windows join continuously and warm starts pay off", "[wavelet]") {
    const MnaSystem sys = rectifier();
    WaveletConfig cfg;
    cfg.window = 1e-6;
    const WaveletResult r = solve_wavelet(sys, dc_operating_point(sys).x0, 10e-6, cfg);
    REQUIRE(r.windows.size() == 10);
    for (std::size_t k = 1; k < r.windows.size(); ++k) {
        const auto& prev = r.windows[k - 1].curve.coefficients();
        const auto& next = r.windows[k].curve.coefficients();
        CHECK(next.row(0) == prev.row(prev.rows() - 1));
        CHECK(r.windows[k].a == r.windows[k - 1].b);
    }
    CHECK(r.windows[9].stats.newton_iterations() <= r.windows[0].stats.newton_iterations());
}

TEST_CASE("configuration is validated", "[wavelet]") {
    const MnaSystem sys = system_of(kRcStep);
    const Eigen::VectorXd x0 = dc_operating_point(sys).x0;
    WaveletConfig cfg;
    cfg.order = 1;
    CHECK_THROWS_AS(solve_wavelet(sys, x0, 1e-6, cfg), ArgumentError);
    cfg = {};
    cfg.tol = 0.0;
    CHECK_THROWS_AS(solve_wavelet(sys, x0, 1e-6, cfg), ArgumentError);
    CHECK_THROWS_AS(solve_wavelet(sys, x0, -1.0, WaveletConfig{}), ArgumentError);
    CHECK_THROWS_AS(solve_window(sys, x0, 1.0, 1.0, WaveletConfig{}), ArgumentError);
}
