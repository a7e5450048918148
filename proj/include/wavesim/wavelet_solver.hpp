#pragma once

// Adaptive spline-Galerkin transient solver: nested refinement inside each
// time window, windows chained with a time-shifted warm start.

#include "wavesim/errors.hpp"
#include "wavesim/galerkin.hpp"
#include "wavesim/mna.hpp"
#include "wavesim/multiresolution.hpp"
#include "wavesim/spline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace wavesim {

struct WaveletConfig {
    double tol = 1e-4;
    int order = 4;
    std::size_t initial_spans = 8;
    int max_passes = 20;           ///< refinement passes per window
    double refine_fraction = 0.25;
    NewtonOptions newton;
    double intermediate_fraction = 0.1;  ///< non-final Newton tolerance, relative to tol and the previous peak indicator
    int quadrature_points = 0;     ///< 0: use the spline order
    double window = 0.0;           ///< window length; 0 with window_count 0 means one window
    std::size_t window_count = 0;
    bool adaptive = true;          ///< false: a single solve on the initial space
    bool breakpoint_knots = true;  ///< put source corners into the initial knot vector
    bool warm_start = true;

    void validate(double tstop) const {
        if (!(tol > 0.0)) throw ArgumentError("tol must be positive");
        if (order < 2 || order > kMaxSplineOrder) throw ArgumentError("spline order must be in [2, 8]");
        if (initial_spans < 1) throw ArgumentError("need at least one initial span");
        if (max_passes < 0) throw ArgumentError("max passes must be non-negative");
        if (!(refine_fraction > 0.0) || refine_fraction > 1.0) {
            throw ArgumentError("refine fraction must lie in (0, 1]");
        }
        if (window < 0.0 || window > tstop * (1.0 + 1e-12)) {
            throw ArgumentError("window length must lie in [0, tstop]");
        }
    }
};

struct WindowStats {
    int passes = 0;  ///< Newton solves, including one after an emergency refinement
    std::vector<int> newton_per_pass;
    double final_indicator = 0.0;
    std::size_t knot_count = 0;  ///< distinct knots of the final space
    bool emergency_refinement = false;

    [[nodiscard]] int newton_iterations() const {
        int total = 0;
        for (int k : newton_per_pass) total += k;
        return total;
    }
};

struct WindowSolution {
    double a = 0.0;
    double b = 0.0;
    SplineCurve curve;
    WindowStats stats;
};

struct WaveletResult {
    std::vector<WindowSolution> windows;
    std::size_t grid_size = 0;
    double wall_seconds = 0.0;

    [[nodiscard]] double t_end() const { return windows.empty() ? 0.0 : windows.back().b; }

    [[nodiscard]] int newton_iterations() const {
        int total = 0;
        for (const auto& w : windows) total += w.stats.newton_iterations();
        return total;
    }

    /// Distinct knot times over all windows, sorted.
    [[nodiscard]] std::vector<double> knots() const {
        std::vector<double> out;
        for (const auto& w : windows) {
            for (double k : w.curve.space().knot_vector().breakpoints()) {
                if (out.empty() || k > out.back()) out.push_back(k);
            }
        }
        return out;
    }

    /// Window k covers [a_k, b_k); the last window includes its end.
    [[nodiscard]] Eigen::VectorXd eval(double t, int deriv_order = 0) const {
        if (windows.empty() || t < windows.front().a || t > windows.back().b) {
            throw DomainError("time " + std::to_string(t) + " outside the wavelet result");
        }
        auto it = std::upper_bound(windows.begin(), windows.end(), t,
                                   [](double x, const WindowSolution& w) { return x < w.a; });
        const WindowSolution& w = *(it - 1);
        return eval_curve(w.curve, std::min(t, w.b), deriv_order);
    }
};

namespace detail {

/// Per-variable magnitude: max(|x0|, max |coefficient|, unit floor).
inline Eigen::VectorXd curve_scale(const MnaSystem& sys, const SplineCurve& curve,
                                   const Eigen::VectorXd& x0) {
    Eigen::VectorXd scale = sys.unit_floor().cwiseMax(x0.cwiseAbs());
    if (curve.coefficients().rows() > 0) {
        scale = scale.cwiseMax(curve.coefficients().cwiseAbs().colwise().maxCoeff().transpose());
    }
    return scale;
}

/// Spline on `space` interpolating `values(t)` at the Greville points, with
/// c_0 = x0. Exact whenever the sampled function already lies in the space.
template <class F>
SplineCurve interpolate_greville(const SplineSpace& space, const Eigen::VectorXd& x0, F&& values) {
    const std::vector<double> xi = greville(space);
    const std::size_t n = space.dimension();
    const auto N = x0.size();
    std::vector<BasisValues> rows;
    std::vector<std::size_t> first(n), last(n);
    rows.reserve(n);
    for (std::size_t l = 0; l < n; ++l) {
        rows.push_back(eval_basis(space, xi[l]));
        first[l] = rows[l].first;
        last[l] = rows[l].first + static_cast<std::size_t>(rows[l].count) - 1;
    }
    BlockRowMatrix A(1, first, last);
    for (std::size_t l = 0; l < n; ++l) {
        for (int k = 0; k < rows[l].count; ++k) {
            A.block(l, rows[l].first + static_cast<std::size_t>(k))(0, 0) = rows[l].values[k];
        }
    }
    CoefficientMatrix data(static_cast<Eigen::Index>(n), N);
    data.row(0) = x0.transpose();
    for (std::size_t l = 1; l < n; ++l) data.row(static_cast<Eigen::Index>(l)) = values(xi[l]).transpose();
    CoefficientMatrix coeffs(static_cast<Eigen::Index>(n), N);
    for (Eigen::Index j = 0; j < N; ++j) coeffs.col(j) = solve_block_system(A, data.col(j));
    coeffs.row(0) = x0.transpose();
    return SplineCurve(space, std::move(coeffs));
}

/// Initial knot vector of a window and the starting curve on it.
inline SplineCurve initial_curve(const MnaSystem& sys, const Eigen::VectorXd& x0, double a, double b,
                                 const WaveletConfig& cfg, const SplineCurve* warm) {
    const int m = cfg.order;
    const int max_mult = std::max(1, m - 1);
    const double len = b - a;
    const double snap_tol = len * 1e-9;
    const double h_min = len * kMinSpanFraction;

    std::vector<double> corners;
    if (cfg.breakpoint_knots) {
        for (double t : sys.breakpoints(a, b)) {
            if (t > a + h_min && t < b - h_min) corners.push_back(t);
        }
    }
    auto near_corner = [&](double t) {
        auto it = std::lower_bound(corners.begin(), corners.end(), t - len * 1e-6);
        return it != corners.end() && std::abs(*it - t) <= len * 1e-6;
    };

    // Knots closer than snap_tol are the same knot; the first value seen wins,
    // so corners keep their exact times.
    std::map<double, int> mult;
    auto require = [&](double t, int k) {
        auto it = mult.lower_bound(t - snap_tol);
        if (it == mult.end() || std::abs(it->first - t) > snap_tol) it = mult.emplace(t, 0).first;
        it->second = std::min(max_mult, std::max(it->second, k));
    };
    for (double t : corners) require(t, max_mult);
    for (std::size_t s = 1; s < cfg.initial_spans; ++s) {
        const double t = a + len * static_cast<double>(s) / static_cast<double>(cfg.initial_spans);
        if (!near_corner(t)) require(t, 1);
    }

    double shift = 0.0;
    if (warm) {
        // Same knot pattern relative to the window start.
        shift = warm->space().t_start() - a;
        const KnotVector& wk = warm->space().knot_vector();
        for (double t : wk.breakpoints()) {
            const double u = t - shift;
            if (u > a + h_min && u < b - h_min) require(u, static_cast<int>(wk.multiplicity(t)));
        }
    }

    std::vector<double> interior;
    for (const auto& [t, k] : mult) interior.insert(interior.end(), static_cast<std::size_t>(k), t);
    SplineSpace space(KnotVector::clamped(m, a, b, interior));

    if (!warm) return SplineCurve::constant(std::move(space), x0);
    const double w0 = warm->space().t_start();
    const double w1 = warm->space().t_end();
    return interpolate_greville(space, x0, [&](double t) {
        return eval_curve(*warm, std::clamp(t + shift, w0, w1));
    });
}

}  // namespace detail

/// Nested solve on one window [a, b] starting from x(a) = x0.
inline WindowSolution solve_window(const MnaSystem& sys, const Eigen::VectorXd& x0, double a, double b,
                                   const WaveletConfig& cfg, const SplineCurve* warm_start = nullptr) {
    if (!(b > a)) throw ArgumentError("window must have positive length");
    if (x0.size() != static_cast<Eigen::Index>(sys.size())) {
        throw ArgumentError("initial state has wrong dimension");
    }
    const std::vector<double> breaks = sys.breakpoints(a, b);
    WindowSolution out{a, b, detail::initial_curve(sys, x0, a, b, cfg, warm_start), {}};
    WindowStats& stats = out.stats;

    // Intermediate levels only need to be solved to about the discretization
    // error (taken from the previous level's peak indicator); the last level
    // is then tightened to the full Newton tolerance.
    NewtonOptions loose = cfg.newton;
    loose.residual_tol = std::max(loose.residual_tol, cfg.intermediate_fraction * cfg.tol);
    loose.step_tol = std::max(loose.step_tol, cfg.intermediate_fraction * cfg.tol);

    int refinements = 0;
    double previous_peak = 0.0;
    for (;;) {
        const SplineCurve start = out.curve;
        GalerkinSystem gs(sys, start.space(), x0, detail::curve_scale(sys, start, x0), breaks,
                          cfg.quadrature_points);
        NewtonOptions level = loose;
        level.residual_tol = std::max(level.residual_tol, cfg.intermediate_fraction * previous_peak);
        level.step_tol = std::max(level.step_tol, cfg.intermediate_fraction * previous_peak);
        NewtonResult nr = newton_solve(gs, start, cfg.adaptive ? level : cfg.newton);
        ++stats.passes;
        stats.newton_per_pass.push_back(nr.iterations);

        bool last_pass = !cfg.adaptive;
        RefinementPlan plan{start.space().knot_vector(), {}, {}};
        if (nr.converged) gs.set_scale(detail::curve_scale(sys, nr.curve, x0));
        if (nr.converged && cfg.adaptive) {
            plan = refine_indicators(gs, nr.curve, cfg.tol, cfg.refine_fraction);
            stats.final_indicator = plan.max_indicator();
            previous_peak = plan.max_indicator();
            last_pass = !plan.any_flagged() || refinements >= cfg.max_passes;
            if (last_pass) {
                const int loose_iterations = nr.iterations;
                nr = newton_solve(gs, std::move(nr.curve), cfg.newton);
                nr.iterations += loose_iterations;
                stats.newton_per_pass.back() = nr.iterations;
            }
        }

        if (!nr.converged) {
            if (stats.emergency_refinement) {
                const auto& c = nr.curve.coefficients();
                throw ConvergenceError(
                    "Newton failed on window [" + std::to_string(a) + ", " + std::to_string(b) +
                        "] after emergency refinement (" + std::to_string(start.space().dimension()) +
                        " coefficients, scaled residual " + std::to_string(nr.residual_norm) + ")",
                    std::vector<double>(c.data(), c.data() + c.size()), nr.residual_norm);
            }
            stats.emergency_refinement = true;
            const KnotVector& kv = start.space().knot_vector();
            const std::vector<bool> all(kv.span_count(), true);
            const KnotVector finer = midpoint_refine(kv, all);
            out.curve = insert_knots(start, missing_knots(kv, finer));
            continue;
        }
        out.curve = std::move(nr.curve);
        if (last_pass) break;
        const KnotVector& kv = out.curve.space().knot_vector();
        const KnotVector finer = midpoint_refine(kv, plan.flags);
        if (finer == kv) break;
        out.curve = insert_knots(out.curve, missing_knots(kv, finer));
        ++refinements;
    }
    stats.knot_count = out.curve.space().knot_vector().breakpoints().size();
    return out;
}

/// Window boundaries 0 = a_0 < a_1 < ... < a_K = tstop.
inline std::vector<double> window_boundaries(double tstop, const WaveletConfig& cfg) {
    std::vector<double> out{0.0};
    if (cfg.window > 0.0) {
        const auto count =
            static_cast<std::size_t>(std::max(1.0, std::ceil(tstop / cfg.window - 1e-9)));
        for (std::size_t k = 1; k < count; ++k) out.push_back(static_cast<double>(k) * cfg.window);
    } else if (cfg.window_count > 1) {
        for (std::size_t k = 1; k < cfg.window_count; ++k) {
            out.push_back(tstop * static_cast<double>(k) / static_cast<double>(cfg.window_count));
        }
    }
    out.push_back(tstop);
    return out;
}

inline WaveletResult solve_wavelet(const MnaSystem& sys, const Eigen::VectorXd& x0, double tstop,
                                   const WaveletConfig& cfg) {
    if (!(tstop > 0.0)) throw ArgumentError("tstop must be positive");
    cfg.validate(tstop);
    const auto start = std::chrono::steady_clock::now();
    const std::vector<double> bounds = window_boundaries(tstop, cfg);

    WaveletResult res;
    Eigen::VectorXd x = x0;
    for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
        const double a = bounds[k];
        const double b = bounds[k + 1];
        const SplineCurve* warm = nullptr;
        if (k > 0 && cfg.warm_start) {
            const WindowSolution& prev = res.windows.back();
            if (std::abs((prev.b - prev.a) - (b - a)) <= 1e-9 * (b - a)) warm = &prev.curve;
        }
        try {
            res.windows.push_back(solve_window(sys, x, a, b, cfg, warm));
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("window " + std::to_string(k) + ": " + e.what(), e.last_iterate(),
                                   e.residual_norm());
        }
        const auto& C = res.windows.back().curve.coefficients();
        x = C.row(C.rows() - 1).transpose();
    }
    res.grid_size = res.knots().size();
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

}  // namespace wavesim
