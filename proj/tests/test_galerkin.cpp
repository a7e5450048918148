#include "oracles.hpp"
#include "wavesim/galerkin.hpp"
#include "wavesim/netlist.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace wavesim;

namespace {

MnaSystem system_of(const std::string& text) { return MnaSystem(elaborate(parse(text))); }

Eigen::VectorXd ones(std::size_t n) { return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)); }

// x(t) = t / C for a unit current into C: coefficients are the Greville points.
SplineCurve ramp_curve(const SplineSpace& space) {
    const auto xi = greville(space);
    CoefficientMatrix c(static_cast<Eigen::Index>(xi.size()), 1);
    for (std::size_t i = 0; i < xi.size(); ++i) c(static_cast<Eigen::Index>(i), 0) = xi[i];
    return {space, c};
}

SplineCurve random_curve(std::mt19937_64& rng, const SplineSpace& space, std::size_t N, double amp) {
    std::uniform_real_distribution<double> u(-amp, amp);
    CoefficientMatrix c(static_cast<Eigen::Index>(space.dimension()), static_cast<Eigen::Index>(N));
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    return {space, c};
}

Eigen::VectorXd flat(const SplineCurve& c) {
    return Eigen::Map<const Eigen::VectorXd>(c.coefficients().data(), c.coefficients().size());
}

SplineCurve with_coeffs(const SplineCurve& like, const Eigen::VectorXd& v) {
    CoefficientMatrix c = like.coefficients();
    Eigen::Map<Eigen::VectorXd>(c.data(), c.size()) = v;
    return {like.space(), c};
}

}  // namespace

TEST_CASE("unit capacitor ramp is a discrete solution", "[galerkin][property]") {
    const MnaSystem sys = system_of("I1 0 1 1\nC1 1 0 1\n.end");
    for (int m = 2; m <= 6; ++m) {
        const SplineSpace space(KnotVector::clamped(m, 0.0, 1.0, std::vector<double>{0.2, 0.45, 0.7}));
        const GalerkinSystem gs(sys, space, Eigen::VectorXd::Zero(1), ones(1));
        const Eigen::VectorXd r = gs.residual(ramp_curve(space));
        // gmin leaks 1e-12 * v, at most ~1e-12 over the unit interval
        CHECK(r.cwiseAbs().maxCoeff() < 1e-10);
        const RefinementPlan plan = refine_indicators(gs, ramp_curve(space), 1e-6, 0.25);
        CHECK(plan.max_indicator() < 1e-10);
        CHECK_FALSE(plan.any_flagged());
    }
}

TEST_CASE("stationary solutions have zero residual", "[galerkin]") {
    const MnaSystem sys = system_of("V1 1 0 2\nR1 1 2 1k\nC1 2 0 1n\nD1 2 3\nR2 3 0 2k\nL1 3 0 1u\n.end");
    const Eigen::VectorXd x0 = dc_operating_point(sys).x0;
    const SplineSpace space(KnotVector::uniform(4, 0.0, 1e-6, 5));
    const GalerkinSystem gs(sys, space, x0, x0.cwiseAbs().cwiseMax(sys.unit_floor()));
    const Eigen::VectorXd r = gs.residual(SplineCurve::constant(space, x0));
    CHECK(r.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("divider residual equals interval length times the imbalance", "[galerkin]") {
    const MnaSystem sys = system_of("V1 1 0 1\nR1 1 2 1k\nR2 2 0 1k\n.end");
    Eigen::VectorXd x(3);
    x << 1.0, 0.2, -1e-3;
    const SplineSpace space(KnotVector::uniform(3, 0.0, 2.0, 4));
    const GalerkinSystem gs(sys, space, x, ones(3));
    const Eigen::VectorXd r = gs.residual(SplineCurve::constant(space, x));
    // by hand: node 1: i_V + (v1 - v2)/1k = -1e-3 + 0.8e-3; node 2: (v2 - v1)/1k + v2/1k;
    // branch: v1 - 1
    const double imbalance[] = {-0.2e-3 + 1e-12, -0.8e-3 + 0.2e-3 + 0.2e-12, 0.0};
    const auto xi = gs.test_partition();
    for (std::size_t l = 1; l < xi.size(); ++l) {
        for (int k = 0; k < 3; ++k) {
            const double expect = (xi[l] - xi[l - 1]) * imbalance[k];
            CHECK(r(static_cast<Eigen::Index>(3 * l) + k) == Catch::Approx(expect).margin(1e-18));
        }
    }
    CHECK(r.head(3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Galerkin Jacobian structure", "[galerkin]") {
    const MnaSystem sys = system_of("V1 1 0 SIN(0 1 1meg)\nR1 1 2 1k\nC1 2 0 1n\n.end");
    const SplineSpace space(KnotVector::uniform(4, 0.0, 1e-6, 6));
    const GalerkinSystem gs(sys, space, Eigen::VectorXd::Zero(3), ones(3));
    std::mt19937_64 rng(4);
    const BlockRowMatrix J1 = gs.jacobian(random_curve(rng, space, 3, 1.0));
    const BlockRowMatrix J2 = gs.jacobian(random_curve(rng, space, 3, 1.0));
    CHECK(J1.to_dense() == J2.to_dense());

    const Eigen::MatrixXd D = J1.to_dense();
    const auto& xi = gs.test_partition();
    const auto& U = space.knots();
    const int m = space.order();
    for (std::size_t l = 1; l < gs.blocks(); ++l) {
        for (std::size_t i = 0; i < gs.blocks(); ++i) {
            const bool disjoint = U[i + static_cast<std::size_t>(m)] <= xi[l - 1] || U[i] >= xi[l];
            if (!disjoint) continue;
            CHECK(D.block(static_cast<Eigen::Index>(3 * l), static_cast<Eigen::Index>(3 * i), 3, 3)
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
        }
    }
    CHECK(D.topLeftCorner(3, 3) == Eigen::MatrixXd::Identity(3, 3));
}

TEST_CASE("Galerkin Jacobian matches directional differences", "[galerkin][property]") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> order(2, 5);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const MnaSystem sys = system_of(oracle::random_circuit(rng));
        const int m = order(rng);
        const SplineSpace space(KnotVector(m, oracle::random_knots(rng, m, 0.0, 50e-9, 3 + trial % 4)));
        const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.size()));
        const GalerkinSystem gs(sys, space, x0, sys.unit_floor().cwiseMax(ones(sys.size()) * 1e-3),
                                sys.breakpoints(0.0, 50e-9));
        const SplineCurve c = random_curve(rng, space, sys.size(), 0.6);
        const SplineCurve d = random_curve(rng, space, sys.size(), 1.0);
        const double eps = 1e-6;
        const Eigen::VectorXd cp = flat(c) + eps * flat(d);
        const Eigen::VectorXd cm = flat(c) - eps * flat(d);
        const Eigen::VectorXd fd = (gs.residual(with_coeffs(c, cp)) - gs.residual(with_coeffs(c, cm))) / (2 * eps);
        const Eigen::VectorXd an = gs.jacobian(c).apply(flat(d));
        CHECK(oracle::rel_diff(an, fd) < 1e-6);
        ++checked;
    }
    CHECK(checked == 40);
}

TEST_CASE("Newton on a linear circuit takes one step", "[galerkin]") {
    const MnaSystem sys = system_of("V1 1 0 PWL(0 0 1p 1)\nR1 1 2 1k\nC1 2 0 1n\n.end");
    const SplineSpace space(KnotVector::uniform(4, 0.0, 5e-6, 12));
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd scale(3);
    scale << 1.0, 1.0, 1e-3;
    const GalerkinSystem gs(sys, space, x0, scale, sys.breakpoints(0.0, 5e-6));
    std::mt19937_64 rng(2);
    for (int k = 0; k < 3; ++k) {
        SplineCurve start = random_curve(rng, space, 3, 2.0);
        const NewtonResult r = newton_solve(gs, start);
        REQUIRE(r.converged);
        CHECK(r.iterations == 1);
        const NewtonResult again = newton_solve(gs, r.curve);
        CHECK(again.converged);
        CHECK(again.iterations == 0);
    }
}

TEST_CASE("Newton on a rectifier window is self-consistent", "[galerkin]") {
    const MnaSystem sys = system_of("V1 in 0 SIN(0 5 1meg)\nRs in a 10\nD1 a out\nR1 out 0 1k\nC1 out 0 100n\n.end");
    const Eigen::VectorXd x0 = dc_operating_point(sys).x0;
    const SplineSpace space(KnotVector::uniform(4, 0.0, 1e-6, 48));
    Eigen::VectorXd scale = sys.unit_floor();
    scale.head(3).setConstant(5.0);
    scale(3) = 5e-3;
    const GalerkinSystem gs(sys, space, x0, scale);
    const NewtonOptions opt;
    const NewtonResult r = newton_solve(gs, SplineCurve::constant(space, x0), opt);
    REQUIRE(r.converged);
    const Eigen::VectorXd res = gs.residual(r.curve);
    const Eigen::VectorXd rs = gs.row_scales(gs.jacobian(r.curve));
    CHECK((res.array().abs() / rs.array()).maxCoeff() < opt.residual_tol);
}

TEST_CASE("prolongation leaves far residual blocks unchanged", "[galerkin][property]") {
    const MnaSystem sys = system_of("V1 in 0 SIN(0 5 1meg)\nRs in a 10\nD1 a out\nR1 out 0 1k\nC1 out 0 100n\n.end");
    std::mt19937_64 rng(43);
    std::uniform_int_distribution<int> span(0, 15);
    for (int trial = 0; trial < 20; ++trial) {
        const SplineSpace coarse(KnotVector::uniform(4, 0.0, 1e-6, 16));
        const SplineCurve c = random_curve(rng, coarse, sys.size(), 1.0);
        std::vector<bool> flags(16, false);
        flags[static_cast<std::size_t>(span(rng))] = true;
        const KnotVector fine_kv = midpoint_refine(coarse.knot_vector(), flags);
        const SplineCurve f = insert_knots(c, missing_knots(coarse.knot_vector(), fine_kv));

        const Eigen::VectorXd x0 = c.coefficients().row(0).transpose();
        const GalerkinSystem gc(sys, coarse, x0, ones(sys.size()));
        const GalerkinSystem gf(sys, f.space(), x0, ones(sys.size()));
        const Eigen::VectorXd rc = gc.residual(c);
        const Eigen::VectorXd rf = gf.residual(f);
        const auto& xc = gc.test_partition();
        const auto& xf = gf.test_partition();
        const auto N = static_cast<Eigen::Index>(sys.size());
        const auto& kc = coarse.knots();
        const auto& kf = f.space().knots();
        int compared = 0;
        for (std::size_t lf = 1; lf < xf.size(); ++lf) {
            for (std::size_t lc = 1; lc < xc.size(); ++lc) {
                if (xc[lc - 1] != xf[lf - 1] || xc[lc] != xf[lf]) continue;
                // same quadrature segments: identical knots inside the interval
                auto inside = [&](const std::vector<double>& k, double a, double b) {
                    std::vector<double> out;
                    for (double t : k) if (t > a && t < b) out.push_back(t);
                    return out;
                };
                if (inside(kc, xc[lc - 1], xc[lc]) != inside(kf, xf[lf - 1], xf[lf])) continue;
                const Eigen::VectorXd a = rc.segment(static_cast<Eigen::Index>(lc) * N, N);
                const Eigen::VectorXd b = rf.segment(static_cast<Eigen::Index>(lf) * N, N);
                CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff()));
                ++compared;
            }
        }
        CHECK(compared > 0);
    }
}

TEST_CASE("indicators peak where the solution is steepest", "[galerkin]") {
    const MnaSystem sys = system_of("V1 1 0 PWL(0 0 1p 1)\nR1 1 2 1k\nC1 2 0 1n\n.end");
    const SplineSpace space(KnotVector::uniform(4, 0.0, 5e-6, 10));
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd scale(3);
    scale << 1.0, 1.0, 1e-3;
    const GalerkinSystem gs(sys, space, x0, scale, sys.breakpoints(0.0, 5e-6));
    const NewtonResult r = newton_solve(gs, SplineCurve::constant(space, x0));
    REQUIRE(r.converged);
    const RefinementPlan plan = refine_indicators(gs, r.curve, 1e-4, 0.25);
    REQUIRE(plan.span_indicators.size() == 10);
    const auto peak = std::max_element(plan.span_indicators.begin(), plan.span_indicators.end());
    CHECK(peak - plan.span_indicators.begin() == 0);
    for (double v : plan.span_indicators) CHECK(v >= 0.0);

    // the error of the discrete solution is largest in the first span
    double worst = 0.0;
    std::size_t worst_span = 0;
    for (int k = 0; k <= 1000; ++k) {
        const double t = 5e-6 * k / 1000.0;
        const double e = std::abs(eval_curve(r.curve, t)(1) - (1.0 - std::exp(-t / 1e-6)));
        if (e > worst) {
            worst = e;
            worst_span = static_cast<std::size_t>(std::min(9.0, std::floor(t / 5e-7)));
        }
    }
    CHECK(worst_span == 0);

    const RefinementPlan none = refine_indicators(gs, r.curve, 2.0 * *peak, 1.0);
    CHECK_FALSE(none.any_flagged());
}
