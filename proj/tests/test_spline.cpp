#include "oracles.hpp"
#include "wavesim/spline.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace wavesim;
using Catch::Approx;

namespace {

SplineSpace cubic01(std::vector<double> interior = {}) {
    return SplineSpace(KnotVector::clamped(4, 0.0, 1.0, interior));
}

SplineCurve identity_curve(const SplineSpace& space) {
    const auto xi = greville(space);
    CoefficientMatrix c(static_cast<Eigen::Index>(xi.size()), 1);
    for (std::size_t i = 0; i < xi.size(); ++i) c(static_cast<Eigen::Index>(i), 0) = xi[i];
    return {space, c};
}

SplineSpace random_space(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> order(1, 6);
    std::uniform_int_distribution<int> count(0, 9);
    const int m = order(rng);
    return SplineSpace(KnotVector(m, oracle::random_knots(rng, m, -1.0, 2.0, count(rng))));
}

}  // namespace

TEST_CASE("knot vectors reject invalid input", "[spline]") {
    CHECK_THROWS_AS(KnotVector(4, {0, 0, 0, 1, 1, 1, 1}), ArgumentError);
    CHECK_THROWS_AS(KnotVector(2, {0, 0, 0.7, 0.5, 1, 1}), ArgumentError);
    CHECK_THROWS_AS(KnotVector(2, {0, 0, 0.5, 0.5, 0.5, 1, 1}), ArgumentError);
    CHECK_THROWS_AS(KnotVector(0, {0, 1}), ArgumentError);
    CHECK_NOTHROW(KnotVector(2, {0, 0, 0.5, 0.5, 1, 1}));
}

TEST_CASE("cubic Bezier basis matches Bernstein polynomials", "[spline]") {
    const auto b = eval_basis(cubic01(), 0.5);
    REQUIRE(b.count == 4);
    CHECK(b.first == 0);
    const double expect[] = {0.125, 0.375, 0.375, 0.125};
    for (int k = 0; k < 4; ++k) CHECK(b.values[k] == Approx(expect[k]).margin(1e-15));

    for (double t : {0.0, 0.13, 0.77, 1.0}) {
        const auto v = eval_basis(cubic01(), t);
        for (int k = 0; k < 4; ++k) CHECK(v.values[k] == Approx(oracle::bernstein(3, k, t)).margin(1e-14));
    }
}

TEST_CASE("order one basis is a characteristic function", "[spline]") {
    const SplineSpace s(KnotVector(1, {0.0, 0.5, 1.0}));
    const auto b = eval_basis(s, 0.25);
    CHECK(b.count == 1);
    CHECK(b.first == 0);
    CHECK(b.values[0] == 1.0);
}

TEST_CASE("evaluation outside the domain throws", "[spline]") {
    CHECK_THROWS_AS(eval_basis(cubic01(), -0.1), DomainError);
    CHECK_THROWS_AS(eval_basis(cubic01(), 1.0001), DomainError);
    CHECK_THROWS_AS(eval_basis_deriv(cubic01(), 0.5, 4), ArgumentError);
}

TEST_CASE("basis derivatives", "[spline]") {
    const auto d = eval_basis_deriv(cubic01(), 0.0, 1);
    const double expect[] = {-3.0, 3.0, 0.0, 0.0};
    for (int k = 0; k < 4; ++k) CHECK(d.values[k] == Approx(expect[k]).margin(1e-13));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const SplineSpace s = random_space(rng);
        const double t = s.t_start() + (s.t_end() - s.t_start()) * u(rng);
        const auto b0 = eval_basis(s, t);
        const auto d0 = eval_basis_deriv(s, t, 0);
        REQUIRE(b0.first == d0.first);
        for (int k = 0; k < b0.count; ++k) CHECK(b0.values[k] == d0.values[k]);
        if (s.order() >= 2) {
            const auto d1 = eval_basis_deriv(s, t, 1);
            double sum = 0.0;
            for (int k = 0; k < d1.count; ++k) sum += d1.values[k];
            CHECK(std::abs(sum) < 1e-9 * (1.0 + d1.view().size()));
        }
    }
}

TEST_CASE("basis agrees with recursive Cox-de Boor", "[spline][property]") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const SplineSpace s = random_space(rng);
        const double t = trial % 10 == 0 ? s.t_end() : s.t_start() + (s.t_end() - s.t_start()) * u(rng);
        const auto b = eval_basis(s, t);
        for (std::size_t i = 0; i < s.dimension(); ++i) {
            const double ref = oracle::bspline(s.knots(), static_cast<int>(i), s.order(), t);
            double got = 0.0;
            if (i >= b.first && i < b.first + static_cast<std::size_t>(b.count)) got = b.values[i - b.first];
            CHECK(got == Approx(ref).margin(1e-12));
        }
    }
}

TEST_CASE("partition of unity, non-negativity and local support", "[spline][property]") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const SplineSpace s = random_space(rng);
        const double t = s.t_start() + (s.t_end() - s.t_start()) * u(rng);
        const auto b = eval_basis(s, t);
        REQUIRE(b.count <= s.order());
        double sum = 0.0;
        for (int k = 0; k < b.count; ++k) {
            CHECK(b.values[k] >= 0.0);
            sum += b.values[k];
            const std::size_t i = b.first + static_cast<std::size_t>(k);
            if (b.values[k] > 0.0) {
                CHECK(t >= s.knots()[i]);
                CHECK(t <= s.knots()[i + static_cast<std::size_t>(s.order())]);
            }
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("curve evaluation", "[spline]") {
    const SplineSpace s = cubic01({0.3, 0.6});
    Eigen::VectorXd a(2);
    a << 1.5, -2.0;
    const auto c = SplineCurve::constant(s, a);
    for (double t : {0.0, 0.1, 0.3, 0.99, 1.0}) CHECK((eval_curve(c, t) - a).norm() < 1e-15);

    const auto id = identity_curve(s);
    for (double t : {0.0, 0.2, 0.45, 0.6, 1.0}) CHECK(eval_curve(id, t)(0) == Approx(t).margin(1e-14));
    for (double t : {0.1, 0.45, 0.8}) CHECK(eval_curve(id, t, 1)(0) == Approx(1.0).margin(1e-12));

    CHECK_THROWS_AS(SplineCurve(s, CoefficientMatrix::Zero(3, 1)), ArgumentError);
}

TEST_CASE("Greville abscissae", "[spline]") {
    const auto xi = greville(cubic01());
    REQUIRE(xi.size() == 4);
    CHECK(xi[1] == Approx(1.0 / 3.0));
    CHECK(xi[2] == Approx(2.0 / 3.0));
    CHECK(xi.front() == 0.0);
    CHECK(xi.back() == 1.0);

    const auto x2 = greville(SplineSpace(KnotVector(2, {0, 0, 0.5, 1, 1})));
    REQUIRE(x2.size() == 3);
    CHECK(x2[0] == 0.0);
    CHECK(x2[1] == 0.5);
    CHECK(x2[2] == 1.0);

    const auto x1 = greville(SplineSpace(KnotVector(1, {0.0, 0.5, 1.0})));
    REQUIRE(x1.size() == 2);
    CHECK(x1[0] == 0.25);
    CHECK(x1[1] == 0.75);
}

TEST_CASE("polynomial reproduction", "[spline][property]") {
    // A degree-d polynomial p has B-spline coefficients given by the blossom
    // evaluated at the m-1 knots t_{i+1}..t_{i+m-1}; for monomials the blossom
    // is the normalized elementary symmetric polynomial.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::uniform_int_distribution<int> order(2, 6);
        const int m = order(rng);
        const SplineSpace s(KnotVector(m, oracle::random_knots(rng, m, 0.0, 1.0, trial % 7)));
        std::uniform_int_distribution<int> deg(0, m - 1);
        const int d = deg(rng);
        const auto& U = s.knots();
        const auto n = static_cast<Eigen::Index>(s.dimension());
        CoefficientMatrix c(n, 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            // e_d(t_{i+1}..t_{i+m-1}) / C(m-1, d)
            std::vector<double> e(static_cast<std::size_t>(d) + 1, 0.0);
            e[0] = 1.0;
            for (int k = 1; k < m; ++k) {
                const double x = U[static_cast<std::size_t>(i + k)];
                for (int j = d; j >= 1; --j) e[static_cast<std::size_t>(j)] += x * e[static_cast<std::size_t>(j - 1)];
            }
            c(i, 0) = e[static_cast<std::size_t>(d)] / oracle::binomial(m - 1, d);
        }
        const SplineCurve curve(s, c);
        const double t = u(rng);
        CHECK(std::abs(eval_curve(curve, t)(0) - std::pow(t, d)) < 1e-10);
    }
}

TEST_CASE("knot insertion", "[spline]") {
    Eigen::VectorXd a(1);
    a << 3.0;
    const double k1[] = {0.2, 0.2, 0.9};
    const auto c = insert_knots(SplineCurve::constant(cubic01(), a), k1);
    CHECK(c.coefficients().rows() == 7);
    CHECK((c.coefficients().array() - 3.0).abs().maxCoeff() < 1e-15);

    const double half[] = {0.5};
    const auto id = insert_knots(identity_curve(cubic01()), half);
    const double expect[] = {0.0, 1.0 / 6.0, 0.5, 5.0 / 6.0, 1.0};
    REQUIRE(id.coefficients().rows() == 5);
    for (int i = 0; i < 5; ++i) CHECK(id.coefficients()(i, 0) == Approx(expect[i]).margin(1e-15));

    const double outside[] = {1.5};
    CHECK_THROWS_AS(insert_knots(identity_curve(cubic01()), outside), ArgumentError);
    const double too_many[] = {0.5, 0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_AS(insert_knots(identity_curve(cubic01()), too_many), ArgumentError);
}

TEST_CASE("knot insertion preserves the function", "[spline][property]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::uniform_int_distribution<int> order(1, 6);
        const int m = order(rng);
        const SplineSpace s(KnotVector(m, oracle::random_knots(rng, m, 0.0, 1.0, trial % 6)));
        CoefficientMatrix c(static_cast<Eigen::Index>(s.dimension()), 2);
        for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = g(rng);
        const SplineCurve curve(s, c);
        std::vector<double> add;
        for (int k = 0; k < 1 + trial % 3; ++k) add.push_back(0.01 + 0.98 * u(rng));
        std::sort(add.begin(), add.end());
        SplineCurve fine = curve;
        try {
            fine = insert_knots(curve, add);
        } catch (const ArgumentError&) {
            continue;  // multiplicity overflow for order 1 repeats
        }
        CHECK(fine.coefficients().rows() == c.rows() + static_cast<Eigen::Index>(add.size()));
        for (int p = 0; p < 10; ++p) {
            const double t = u(rng);
            CHECK((eval_curve(fine, t) - eval_curve(curve, t)).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("curve derivative matches finite differences", "[spline][property]") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> order(3, 6);
        const int m = order(rng);
        const auto knots = oracle::random_knots(rng, m, 0.0, 1.0, trial % 5);
        const SplineSpace s(KnotVector(m, knots));
        CoefficientMatrix c(static_cast<Eigen::Index>(s.dimension()), 1);
        for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = g(rng);
        const SplineCurve curve(s, c);
        const double h = 1e-6;
        double t = 0.05 + 0.9 * u(rng);
        // keep the stencil inside one polynomial piece
        bool near_knot = false;
        for (double k : knots) near_knot = near_knot || std::abs(k - t) < 2 * h;
        if (near_knot) continue;
        const double fd = (eval_curve(curve, t + h)(0) - eval_curve(curve, t - h)(0)) / (2 * h);
        const double an = eval_curve(curve, t, 1)(0);
        CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(an)));
    }
}

TEST_CASE("composite Gauss quadrature", "[spline]") {
    const SplineSpace s = cubic01({0.5});
    const auto nodes = quadrature_nodes(s, 0.1, 0.9, 3);
    double w = 0.0;
    bool left = false;
    bool right = false;
    for (const auto& q : nodes) {
        w += q.weight;
        CHECK(q.t != 0.5);
        left = left || q.t < 0.5;
        right = right || q.t > 0.5;
    }
    CHECK(w == Approx(0.8).margin(1e-15));
    CHECK(left);
    CHECK(right);

    const SplineSpace free = cubic01();
    double integral = 0.0;
    for (const auto& q : quadrature_nodes(free, 0.2, 0.7, 2)) integral += q.weight * q.t * q.t * q.t;
    CHECK(integral == Approx((std::pow(0.7, 4) - std::pow(0.2, 4)) / 4.0).epsilon(1e-14));

    CHECK_THROWS_AS(quadrature_nodes(free, 0.5, 0.5, 2), ArgumentError);
    CHECK_THROWS_AS(quadrature_nodes(free, 0.5, 0.2, 2), ArgumentError);
}
