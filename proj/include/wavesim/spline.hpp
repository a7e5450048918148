#pragma once

// B-spline spaces on clamped knot vectors.
//
// Provides evaluation (de Boor / Cox recursion), derivatives, Greville
// abscissae, Boehm knot insertion and composite Gauss-Legendre quadrature.
// Everything in here is immutable after construction and safe to share
// between threads.

#include "wavesim/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wavesim {

inline constexpr int kMaxSplineOrder = 8;

/// Row i holds the coefficient vector c_i (one entry per MNA unknown).
using CoefficientMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// =============================================================================
// Knot vector
// =============================================================================

/// Clamped knot vector of order m: first and last knot repeated exactly m times.
class KnotVector {
public:
    KnotVector(int order, std::vector<double> knots) : order_(order), knots_(std::move(knots)) {
        validate();
    }

    /// Clamped vector on [a, b]; `interior` must be sorted, repeats encode multiplicity.
    static KnotVector clamped(int order, double a, double b, std::span<const double> interior) {
        if (order < 1) throw ArgumentError("spline order must be >= 1");
        std::vector<double> knots;
        knots.reserve(interior.size() + 2 * static_cast<std::size_t>(order));
        knots.insert(knots.end(), static_cast<std::size_t>(order), a);
        knots.insert(knots.end(), interior.begin(), interior.end());
        knots.insert(knots.end(), static_cast<std::size_t>(order), b);
        return KnotVector(order, std::move(knots));
    }

    static KnotVector uniform(int order, double a, double b, std::size_t spans) {
        if (spans == 0) throw ArgumentError("uniform knot vector needs at least one span");
        std::vector<double> interior;
        interior.reserve(spans - 1);
        for (std::size_t k = 1; k < spans; ++k) {
            interior.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(spans));
        }
        return clamped(order, a, b, interior);
    }

    [[nodiscard]] int order() const noexcept { return order_; }
    [[nodiscard]] int degree() const noexcept { return order_ - 1; }
    [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_; }
    [[nodiscard]] std::size_t dimension() const noexcept {
        return knots_.size() - static_cast<std::size_t>(order_);
    }
    [[nodiscard]] double t_start() const noexcept { return knots_.front(); }
    [[nodiscard]] double t_end() const noexcept { return knots_.back(); }
    [[nodiscard]] double length() const noexcept { return t_end() - t_start(); }

    /// Interior knots (with repeats), i.e. everything except the clamped ends.
    [[nodiscard]] std::vector<double> interior() const {
        return {knots_.begin() + order_, knots_.end() - order_};
    }

    /// Distinct knot values, including both ends.
    [[nodiscard]] std::vector<double> breakpoints() const {
        std::vector<double> out;
        out.reserve(knots_.size());
        for (double k : knots_) {
            if (out.empty() || k > out.back()) out.push_back(k);
        }
        return out;
    }

    [[nodiscard]] std::size_t span_count() const { return breakpoints().size() - 1; }

    [[nodiscard]] std::size_t multiplicity(double t) const {
        auto [lo, hi] = std::equal_range(knots_.begin(), knots_.end(), t);
        return static_cast<std::size_t>(hi - lo);
    }

    /// Index s with t_s <= t < t_{s+1}; ties go right, except t_end which maps
    /// to the last nonempty span.
    [[nodiscard]] std::size_t find_span(double t) const {
        if (!(t >= t_start() && t <= t_end())) {
            throw DomainError("time " + std::to_string(t) + " outside spline domain [" +
                              std::to_string(t_start()) + ", " + std::to_string(t_end()) + "]");
        }
        const std::size_t n = dimension();
        if (t == t_end()) return n - 1;
        auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
        return static_cast<std::size_t>(it - knots_.begin()) - 1;
    }

    bool operator==(const KnotVector&) const = default;

private:
    void validate() const {
        if (order_ < 1 || order_ > kMaxSplineOrder) {
            throw ArgumentError("spline order must lie in [1, " + std::to_string(kMaxSplineOrder) +
                                "], got " + std::to_string(order_));
        }
        const auto m = static_cast<std::size_t>(order_);
        if (knots_.size() < 2 * m) throw ArgumentError("knot vector too short for its order");
        for (double k : knots_) {
            if (!std::isfinite(k)) throw ArgumentError("knot vector contains a non-finite value");
        }
        if (!std::is_sorted(knots_.begin(), knots_.end())) {
            throw ArgumentError("knots must be non-decreasing");
        }
        if (!(knots_.front() < knots_.back())) throw ArgumentError("empty spline domain");
        if (multiplicity(knots_.front()) != m || multiplicity(knots_.back()) != m) {
            throw ArgumentError("end knots must have multiplicity exactly equal to the order");
        }
        std::size_t run = 1;
        for (std::size_t i = 1; i < knots_.size(); ++i) {
            run = knots_[i] == knots_[i - 1] ? run + 1 : 1;
            if (run > m) throw ArgumentError("interior knot multiplicity exceeds the order");
        }
    }

    int order_;
    std::vector<double> knots_;
};

// =============================================================================
// Space and curve
// =============================================================================

/// The span of the B-splines phi_0..phi_{n-1} over a clamped knot vector.
class SplineSpace {
public:
    explicit SplineSpace(KnotVector knots) : knots_(std::move(knots)) {}

    [[nodiscard]] const KnotVector& knot_vector() const noexcept { return knots_; }
    [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_.knots(); }
    [[nodiscard]] int order() const noexcept { return knots_.order(); }
    [[nodiscard]] std::size_t dimension() const noexcept { return knots_.dimension(); }
    [[nodiscard]] double t_start() const noexcept { return knots_.t_start(); }
    [[nodiscard]] double t_end() const noexcept { return knots_.t_end(); }

    bool operator==(const SplineSpace&) const = default;

private:
    KnotVector knots_;
};

/// Values of the (at most m) basis functions that are active at a point.
struct BasisValues {
    std::size_t first = 0;  ///< index of the first active basis function
    int count = 0;
    std::array<double, kMaxSplineOrder> values{};

    [[nodiscard]] std::span<const double> view() const noexcept {
        return {values.data(), static_cast<std::size_t>(count)};
    }
};

/// Vector-valued spline x(t) = sum_i c_i phi_i(t).
class SplineCurve {
public:
    SplineCurve(SplineSpace space, CoefficientMatrix coefficients)
        : space_(std::move(space)), coeffs_(std::move(coefficients)) {
        if (static_cast<std::size_t>(coeffs_.rows()) != space_.dimension()) {
            throw ArgumentError("coefficient count " + std::to_string(coeffs_.rows()) +
                                " does not match space dimension " +
                                std::to_string(space_.dimension()));
        }
    }

    /// Every coefficient equal to `value`.
    static SplineCurve constant(SplineSpace space, const Eigen::VectorXd& value) {
        CoefficientMatrix c(static_cast<Eigen::Index>(space.dimension()), value.size());
        c.rowwise() = value.transpose();
        return {std::move(space), std::move(c)};
    }

    [[nodiscard]] const SplineSpace& space() const noexcept { return space_; }
    [[nodiscard]] const CoefficientMatrix& coefficients() const noexcept { return coeffs_; }
    [[nodiscard]] CoefficientMatrix& coefficients() noexcept { return coeffs_; }
    [[nodiscard]] std::size_t components() const noexcept {
        return static_cast<std::size_t>(coeffs_.cols());
    }

private:
    SplineSpace space_;
    CoefficientMatrix coeffs_;
};

// =============================================================================
// Evaluation
// =============================================================================

/// Nonzero basis values at t (Cox-de Boor triangle).
inline BasisValues eval_basis(const SplineSpace& space, double t) {
    const auto& U = space.knots();
    const int p = space.order() - 1;
    const std::size_t s = space.knot_vector().find_span(t);

    BasisValues out;
    out.first = s - static_cast<std::size_t>(p);
    out.count = p + 1;
    std::array<double, kMaxSplineOrder> left{};
    std::array<double, kMaxSplineOrder> right{};
    auto& N = out.values;
    N[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = t - U[s + 1 - j];
        right[j] = U[s + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = N[r] / (right[r + 1] + left[j - r]);
            N[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        N[j] = saved;
    }
    return out;
}

/// Derivatives of the given order of the active basis functions at t.
inline BasisValues eval_basis_deriv(const SplineSpace& space, double t, int order) {
    const int m = space.order();
    if (order < 0 || order >= m) {
        throw ArgumentError("derivative order " + std::to_string(order) +
                            " must lie in [0, order-1] for a spline of order " + std::to_string(m));
    }
    if (order == 0) return eval_basis(space, t);

    const auto& U = space.knots();
    const int p = m - 1;
    const std::size_t s = space.knot_vector().find_span(t);

    // Piegl & Tiller, algorithm A2.3.
    double ndu[kMaxSplineOrder][kMaxSplineOrder];
    double a[2][kMaxSplineOrder] = {};
    std::array<double, kMaxSplineOrder> left{};
    std::array<double, kMaxSplineOrder> right{};
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = t - U[s + 1 - j];
        right[j] = U[s + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    BasisValues out;
    out.first = s - static_cast<std::size_t>(p);
    out.count = p + 1;
    for (int r = 0; r <= p; ++r) {
        int s1 = 0;
        int s2 = 1;
        a[0][0] = 1.0;
        double d = 0.0;
        for (int k = 1; k <= order; ++k) {
            d = 0.0;
            const int rk = r - k;
            const int pk = p - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            std::swap(s1, s2);
        }
        out.values[r] = d;
    }
    double factor = 1.0;
    for (int k = 0; k < order; ++k) factor *= static_cast<double>(p - k);
    for (int r = 0; r <= p; ++r) out.values[r] *= factor;
    return out;
}

/// sum_i c_i phi_i^{(deriv_order)}(t)
inline Eigen::VectorXd eval_curve(const SplineCurve& curve, double t, int deriv_order = 0) {
    const BasisValues b = eval_basis_deriv(curve.space(), t, deriv_order);
    const auto& c = curve.coefficients();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(c.cols());
    for (int k = 0; k < b.count; ++k) {
        x += b.values[k] * c.row(static_cast<Eigen::Index>(b.first) + k).transpose();
    }
    return x;
}

/// Knot averages xi_i = (t_{i+1} + ... + t_{i+m-1}) / (m-1); span midpoints for m = 1.
inline std::vector<double> greville(const SplineSpace& space) {
    const auto& U = space.knots();
    const int m = space.order();
    const std::size_t n = space.dimension();
    std::vector<double> xi(n);
    if (m == 1) {
        for (std::size_t i = 0; i < n; ++i) xi[i] = 0.5 * (U[i] + U[i + 1]);
        return xi;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 1; j < m; ++j) sum += U[i + static_cast<std::size_t>(j)];
        xi[i] = sum / static_cast<double>(m - 1);
    }
    // Clamping makes the ends exact; pin them against rounding in the average.
    xi.front() = space.t_start();
    xi.back() = space.t_end();
    return xi;
}

// =============================================================================
// Knot insertion
// =============================================================================

/// Re-represent the curve on a refined knot vector (Boehm, one knot at a time).
inline SplineCurve insert_knots(const SplineCurve& curve, std::span<const double> new_knots) {
    if (!std::is_sorted(new_knots.begin(), new_knots.end())) {
        throw ArgumentError("knots to insert must be sorted");
    }
    const int m = curve.space().order();
    const int p = m - 1;
    std::vector<double> U = curve.space().knots();
    CoefficientMatrix P = curve.coefficients();
    const double a = U.front();
    const double b = U.back();

    for (double tau : new_knots) {
        if (!(tau > a && tau < b)) {
            throw ArgumentError("inserted knot " + std::to_string(tau) +
                                " is not strictly inside the domain");
        }
        auto hi = std::upper_bound(U.begin(), U.end(), tau);
        const auto s = static_cast<std::size_t>(hi - U.begin()) - 1;
        const auto mult = static_cast<std::size_t>(hi - std::lower_bound(U.begin(), hi, tau));
        if (mult + 1 > static_cast<std::size_t>(m)) {
            throw ArgumentError("knot insertion at " + std::to_string(tau) +
                                " would exceed multiplicity " + std::to_string(m));
        }
        const auto n = static_cast<std::size_t>(P.rows());
        CoefficientMatrix Q(static_cast<Eigen::Index>(n + 1), P.cols());
        for (std::size_t i = 0; i <= n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            if (i + static_cast<std::size_t>(p) <= s) {
                Q.row(ii) = P.row(ii);
            } else if (i <= s) {
                const double alpha = (tau - U[i]) / (U[i + static_cast<std::size_t>(p)] - U[i]);
                Q.row(ii) = alpha * P.row(ii) + (1.0 - alpha) * P.row(ii - 1);
            } else {
                Q.row(ii) = P.row(ii - 1);
            }
        }
        U.insert(U.begin() + static_cast<std::ptrdiff_t>(s) + 1, tau);
        P = std::move(Q);
    }
    return {SplineSpace(KnotVector(m, std::move(U))), std::move(P)};
}

// =============================================================================
// Quadrature
// =============================================================================

struct QuadratureNode {
    double t;
    double weight;
};

struct GaussRule {
    std::vector<double> nodes;    ///< on [-1, 1]
    std::vector<double> weights;
};

inline constexpr int kMaxGaussPoints = 32;

/// Gauss-Legendre rule with g points, cached after first use.
inline const GaussRule& gauss_legendre(int g) {
    if (g < 1 || g > kMaxGaussPoints) {
        throw ArgumentError("Gauss-Legendre point count must lie in [1, " +
                            std::to_string(kMaxGaussPoints) + "]");
    }
    static const std::vector<GaussRule> table = [] {
        std::vector<GaussRule> rules(kMaxGaussPoints + 1);
        for (int n = 1; n <= kMaxGaussPoints; ++n) {
            GaussRule& rule = rules[n];
            rule.nodes.resize(n);
            rule.weights.resize(n);
            for (int i = 0; i < (n + 1) / 2; ++i) {
                // Newton on P_n starting from the Chebyshev-like guess.
                double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
                double dp = 0.0;
                for (int it = 0; it < 100; ++it) {
                    double p1 = 1.0;
                    double p2 = 0.0;
                    for (int j = 1; j <= n; ++j) {
                        const double p3 = p2;
                        p2 = p1;
                        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
                    }
                    dp = n * (z * p1 - p2) / (z * z - 1.0);
                    const double z1 = z;
                    z = z1 - p1 / dp;
                    if (std::abs(z - z1) < 1e-16) break;
                }
                // Recompute the derivative at the converged root.
                double p1 = 1.0;
                double p2 = 0.0;
                for (int j = 1; j <= n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
                }
                dp = n * (z * p1 - p2) / (z * z - 1.0);
                const double w = 2.0 / ((1.0 - z * z) * dp * dp);
                rule.nodes[i] = -z;
                rule.nodes[n - 1 - i] = z;
                rule.weights[i] = w;
                rule.weights[n - 1 - i] = w;
            }
            if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
        }
        return rules;
    }();
    return table[static_cast<std::size_t>(g)];
}

/// Append the g-point Gauss rule mapped onto [a, b].
inline void append_gauss_segment(std::vector<QuadratureNode>& out, double a, double b, int g) {
    const GaussRule& rule = gauss_legendre(g);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (int i = 0; i < g; ++i) {
        out.push_back({mid + half * rule.nodes[i], half * rule.weights[i]});
    }
}

/// Composite Gauss-Legendre rule on [a, b], split at every knot strictly
/// inside and at every point of `extra_splits` strictly inside.
inline std::vector<QuadratureNode> quadrature_nodes(const SplineSpace& space, double a, double b,
                                                    int points_per_segment,
                                                    std::span<const double> extra_splits = {}) {
    if (!(a < b)) throw ArgumentError("quadrature interval must satisfy a < b");
    if (points_per_segment < 1) throw ArgumentError("need at least one Gauss point per segment");
    if (a < space.t_start() || b > space.t_end()) {
        throw DomainError("quadrature interval outside spline domain");
    }
    std::vector<double> cuts{a};
    const auto& U = space.knots();
    for (auto it = std::upper_bound(U.begin(), U.end(), a); it != U.end() && *it < b; ++it) {
        cuts.push_back(*it);
    }
    for (double e : extra_splits) {
        if (e > a && e < b) cuts.push_back(e);
    }
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::vector<QuadratureNode> nodes;
    nodes.reserve((cuts.size() - 1) * static_cast<std::size_t>(points_per_segment));
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        append_gauss_segment(nodes, cuts[k], cuts[k + 1], points_per_segment);
    }
    return nodes;
}

}  // namespace wavesim
