#pragma once

// Two-scale structure over nested spline spaces: coarse part plus detail,
// detail thresholding, and midpoint refinement with 2:1 grading.

#include "wavesim/errors.hpp"
#include "wavesim/spline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace wavesim {

/// Smallest span a refinement may create, relative to the domain length (2^-24).
inline constexpr double kMinSpanFraction = 1.0 / 16777216.0;

/// Per-span refinement data for one knot vector.
struct RefinementPlan {
    KnotVector base_knots;
    std::vector<double> span_indicators;  ///< one per nonempty span
    std::vector<bool> flags;              ///< one per nonempty span

    [[nodiscard]] bool any_flagged() const {
        return std::find(flags.begin(), flags.end(), true) != flags.end();
    }
    [[nodiscard]] double max_indicator() const {
        return span_indicators.empty()
                   ? 0.0
                   : *std::max_element(span_indicators.begin(), span_indicators.end());
    }
};

/// fine = prolong(coarse) + details
struct Decomposition {
    SplineCurve coarse;
    SplineCurve details;  ///< lives on the fine space
};

/// Multiset difference fine - coarse; false when coarse is not contained in fine.
inline bool knot_difference(const KnotVector& coarse, const KnotVector& fine,
                            std::vector<double>& missing) {
    missing.clear();
    const auto& c = coarse.knots();
    const auto& f = fine.knots();
    std::size_t i = 0;
    for (double k : f) {
        if (i < c.size() && c[i] == k) {
            ++i;
        } else {
            if (i < c.size() && c[i] < k) return false;
            missing.push_back(k);
        }
    }
    return i == c.size();
}

/// Coarse part by L2 projection onto `coarse_space`; details as the fine-space remainder.
inline Decomposition two_scale_decompose(const SplineCurve& fine, const SplineSpace& coarse_space) {
    const KnotVector& fk = fine.space().knot_vector();
    const KnotVector& ck = coarse_space.knot_vector();
    std::vector<double> missing;
    if (ck.order() != fk.order() || ck.t_start() != fk.t_start() || ck.t_end() != fk.t_end() ||
        !knot_difference(ck, fk, missing)) {
        throw ArgumentError("coarse space is not nested in the fine space");
    }

    const int m = fk.order();
    const auto nc = static_cast<Eigen::Index>(coarse_space.dimension());
    const auto dim = static_cast<Eigen::Index>(fine.components());
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nc, nc);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nc, dim);

    // Both factors are polynomials of degree m-1 on every fine span, so m
    // Gauss points per span integrate the products exactly.
    const auto nodes = quadrature_nodes(fine.space(), fk.t_start(), fk.t_end(), m);
    for (const auto& q : nodes) {
        const BasisValues bc = eval_basis(coarse_space, q.t);
        const Eigen::VectorXd xf = eval_curve(fine, q.t);
        for (int a = 0; a < bc.count; ++a) {
            const auto ia = static_cast<Eigen::Index>(bc.first) + a;
            const double wa = q.weight * bc.values[a];
            for (int b = 0; b < bc.count; ++b) {
                gram(ia, static_cast<Eigen::Index>(bc.first) + b) += wa * bc.values[b];
            }
            rhs.row(ia) += wa * xf.transpose();
        }
    }
    CoefficientMatrix coarse_coeffs = gram.ldlt().solve(rhs);
    SplineCurve coarse(coarse_space, std::move(coarse_coeffs));

    SplineCurve prolonged = insert_knots(coarse, missing);
    CoefficientMatrix detail_coeffs = fine.coefficients() - prolonged.coefficients();
    SplineCurve details(fine.space(), std::move(detail_coeffs));
    return {std::move(coarse), std::move(details)};
}

/// Coarse-grid spans (indices among nonempty spans) where the detail part's
/// sampled max-norm exceeds tol.
inline std::vector<std::size_t> threshold_details(const Decomposition& d, double tol) {
    const std::vector<double> spans = d.coarse.space().knot_vector().breakpoints();
    const int m = d.coarse.space().order();
    const int samples = std::max(2, m * m);
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s + 1 < spans.size(); ++s) {
        double peak = 0.0;
        for (int k = 0; k < samples; ++k) {
            const double t =
                spans[s] + (spans[s + 1] - spans[s]) * static_cast<double>(k) / (samples - 1);
            peak = std::max(peak, eval_curve(d.details, t).cwiseAbs().maxCoeff());
        }
        if (peak > tol) out.push_back(s);
    }
    return out;
}

/// Insert the midpoint of every flagged span, then split spans until adjacent
/// span lengths differ by at most a factor of two.
inline KnotVector midpoint_refine(const KnotVector& knots, const std::vector<bool>& flags) {
    std::vector<double> bp = knots.breakpoints();
    if (flags.size() + 1 != bp.size()) {
        throw ArgumentError("flag count " + std::to_string(flags.size()) +
                            " does not match span count " + std::to_string(bp.size() - 1));
    }
    if (std::find(flags.begin(), flags.end(), true) == flags.end()) return knots;

    const double h_min = knots.length() * kMinSpanFraction;
    std::vector<double> added;
    for (std::size_t s = 0; s < flags.size(); ++s) {
        if (flags[s] && bp[s + 1] - bp[s] >= 2.0 * h_min) added.push_back(0.5 * (bp[s] + bp[s + 1]));
    }

    std::vector<double> grid;
    grid.reserve(bp.size() + added.size());
    std::merge(bp.begin(), bp.end(), added.begin(), added.end(), std::back_inserter(grid));

    // Grading sweeps: split the longer of any adjacent pair with ratio > 2.
    constexpr double kRatio = 2.0 * (1.0 + 1e-12);
    bool changed = !added.empty();
    while (changed) {
        changed = false;
        std::vector<double> next;
        next.reserve(grid.size() * 2);
        next.push_back(grid[0]);
        const std::size_t spans = grid.size() - 1;
        for (std::size_t s = 0; s < spans; ++s) {
            const double len = grid[s + 1] - grid[s];
            const bool longer_than_left = s > 0 && len > kRatio * (grid[s] - grid[s - 1]);
            const bool longer_than_right = s + 1 < spans && len > kRatio * (grid[s + 2] - grid[s + 1]);
            if (longer_than_left || longer_than_right) {
                next.push_back(0.5 * (grid[s] + grid[s + 1]));
                added.push_back(next.back());
                changed = true;
            }
            next.push_back(grid[s + 1]);
        }
        grid = std::move(next);
    }

    std::vector<double> all = knots.knots();
    std::sort(added.begin(), added.end());
    std::vector<double> merged;
    merged.reserve(all.size() + added.size());
    std::merge(all.begin(), all.end(), added.begin(), added.end(), std::back_inserter(merged));
    return KnotVector(knots.order(), std::move(merged));
}

/// Knots of `fine` not present in `coarse`; throws when not nested.
inline std::vector<double> missing_knots(const KnotVector& coarse, const KnotVector& fine) {
    std::vector<double> missing;
    if (!knot_difference(coarse, fine, missing)) {
        throw ArgumentError("knot vectors are not nested");
    }
    return missing;
}

}  // namespace wavesim
