#pragma once

// Reference transient analysis: trapezoidal rule on the charge formulation
//   q(x1) - q(x0) = h/2 [s(t1) - f(x1) + s(t0) - f(x0)]
// with step-doubling error control and source breakpoints as mandatory grid
// points.

#include "wavesim/errors.hpp"
#include "wavesim/mna.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace wavesim {

struct TranConfig {
    double tstop = 0.0;
    double initial_step = 0.0;
    double reltol = 1e-6;
    double abstol_v = 1e-9;   ///< V
    double abstol_i = 1e-12;  ///< A
    double max_step = 0.0;
    int max_newton = 50;
    bool fixed_step = false;  ///< uniform steps of initial_step, no error control

    /// Defaults scaled to the run length.
    static TranConfig for_run(double tstop, double reltol = 1e-6) {
        TranConfig cfg;
        cfg.tstop = tstop;
        cfg.reltol = reltol;
        cfg.initial_step = tstop * 1e-5;
        cfg.max_step = tstop / 50.0;
        return cfg;
    }

    void validate() const {
        if (!(tstop > 0.0)) throw ArgumentError("tstop must be positive");
        if (!(initial_step > 0.0) || initial_step > max_step || max_step > tstop) {
            throw ArgumentError("need 0 < initial step <= max step <= tstop");
        }
        if (!(reltol > 0.0) || !(abstol_v > 0.0) || !(abstol_i > 0.0)) {
            throw ArgumentError("tolerances must be positive");
        }
        if (max_newton < 1) throw ArgumentError("max Newton iterations must be >= 1");
    }
};

struct TranStats {
    std::size_t steps = 0;  ///< accepted grid points after t = 0
    std::size_t newton_iterations = 0;
    std::size_t rejected = 0;
    double wall_seconds = 0.0;
};

struct TranResult {
    std::vector<double> grid;
    std::vector<Eigen::VectorXd> states;
    TranStats stats;
};

namespace detail {

struct TrapOutcome {
    Eigen::VectorXd x;
    int iterations = 0;
    bool converged = false;
};

/// One trapezoidal step from (t0, x0) to t1 = t0 + h, damped Newton from `guess`.
inline TrapOutcome trap_step(const MnaSystem& sys, double t0, const Eigen::VectorXd& x0, double t1,
                             const Eigen::VectorXd& guess, const Eigen::VectorXd& tol_abs,
                             double reltol, int max_newton) {
    const auto n = static_cast<Eigen::Index>(sys.size());
    const double h = t1 - t0;
    const Eigen::VectorXd q0 = sys.eval_q(x0);
    const Eigen::VectorXd rhs0 = sys.eval_s(t0) - sys.eval_f(x0);
    const Eigen::VectorXd s1 = sys.eval_s(t1);

    auto residual = [&](const Eigen::VectorXd& y, Eigen::MatrixXd* jac) {
        Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
        if (jac) {
            Eigen::MatrixXd jq = Eigen::MatrixXd::Zero(n, n);
            Eigen::MatrixXd jf = Eigen::MatrixXd::Zero(n, n);
            sys.add_q(y, q, &jq);
            sys.add_f(y, f, &jf);
            *jac = jq + 0.5 * h * jf;
        } else {
            sys.add_q(y, q, nullptr);
            sys.add_f(y, f, nullptr);
        }
        return Eigen::VectorXd(q - q0 - 0.5 * h * (s1 - f + rhs0));
    };

    TrapOutcome out;
    Eigen::VectorXd y = guess;
    Eigen::MatrixXd J;
    for (int it = 0; it < max_newton; ++it) {
        Eigen::VectorXd G;
        try {
            G = residual(y, &J);
        } catch (const EvalError&) {
            break;
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
        const Eigen::VectorXd dy = lu.solve(-G);
        if (!dy.allFinite()) break;
        const Eigen::VectorXd scale = y.cwiseAbs().cwiseMax(tol_abs);
        const Eigen::VectorXd rs = row_scales(J, scale);
        const double norm = scaled_residual_norm(G, rs);

        const Eigen::VectorXd limit = 1e-3 * (reltol * y.cwiseAbs() + tol_abs);
        ++out.iterations;
        if ((dy.cwiseAbs().array() <= limit.array()).all()) {
            y += dy;
            out.converged = true;
            break;
        }
        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k <= 12 && !accepted; ++k, lambda *= 0.5) {
            const Eigen::VectorXd trial = y + lambda * dy;
            try {
                if (scaled_residual_norm(residual(trial, nullptr), rs) <= (1.0 - lambda / 4.0) * norm) {
                    y = trial;
                    accepted = true;
                }
            } catch (const EvalError&) {
            }
        }
        if (!accepted) break;
    }
    out.x = std::move(y);
    return out;
}

}  // namespace detail

inline TranResult solve_transient(const MnaSystem& sys, const Eigen::VectorXd& x0,
                                  const TranConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto n = static_cast<Eigen::Index>(sys.size());
    if (x0.size() != n) throw ArgumentError("initial state has wrong dimension");

    Eigen::VectorXd tol_abs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        tol_abs(i) = sys.circuit().is_current(static_cast<std::size_t>(i)) ? cfg.abstol_i : cfg.abstol_v;
    }

    std::vector<double> breaks = sys.breakpoints(0.0, cfg.tstop);
    breaks.push_back(cfg.tstop);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    std::size_t next_break = 0;

    TranResult res;
    res.grid.push_back(0.0);
    res.states.push_back(x0);

    double t = 0.0;
    double h = cfg.initial_step;
    int consecutive_failures = 0;
    auto fail = [&](const std::string& why, const Eigen::VectorXd& x) {
        throw ConvergenceError("transient analysis failed at t = " + std::to_string(t) + ": " + why,
                               std::vector<double>(x.data(), x.data() + x.size()),
                               std::numeric_limits<double>::quiet_NaN());
    };

    while (t < cfg.tstop) {
        while (next_break < breaks.size() && breaks[next_break] <= t) ++next_break;
        const double bp = breaks[next_break];
        h = std::min(h, cfg.max_step);
        double t_next = t + h;
        if (t_next > bp - 1e-3 * h) t_next = bp;
        const double step = t_next - t;
        if (!(step > cfg.tstop * 1e-15)) fail("step size underflow", res.states.back());

        const Eigen::VectorXd& x = res.states.back();
        Eigen::VectorXd slope = Eigen::VectorXd::Zero(n);
        if (res.grid.size() >= 2) {
            const std::size_t k = res.grid.size() - 1;
            slope = (res.states[k] - res.states[k - 1]) / (res.grid[k] - res.grid[k - 1]);
        }

        if (cfg.fixed_step) {
            auto r = detail::trap_step(sys, t, x, t_next, x + step * slope, tol_abs, cfg.reltol,
                                       cfg.max_newton);
            res.stats.newton_iterations += static_cast<std::size_t>(r.iterations);
            if (!r.converged) fail("Newton did not converge in fixed-step mode", r.x);
            res.grid.push_back(t_next);
            res.states.push_back(std::move(r.x));
            ++res.stats.steps;
            t = t_next;
            h = cfg.initial_step;
            continue;
        }

        const double t_half = t + 0.5 * step;
        auto full = detail::trap_step(sys, t, x, t_next, x + step * slope, tol_abs, cfg.reltol,
                                      cfg.max_newton);
        auto half1 = detail::trap_step(sys, t, x, t_half, x + 0.5 * step * slope, tol_abs,
                                       cfg.reltol, cfg.max_newton);
        detail::TrapOutcome half2;
        if (half1.converged) {
            half2 = detail::trap_step(sys, t_half, half1.x, t_next, 2.0 * half1.x - x, tol_abs,
                                      cfg.reltol, cfg.max_newton);
        }
        res.stats.newton_iterations += static_cast<std::size_t>(full.iterations + half1.iterations +
                                                                half2.iterations);
        if (!full.converged || !half1.converged || !half2.converged) {
            ++res.stats.rejected;
            if (++consecutive_failures > 10) fail("Newton failed after halving the step ten times", x);
            h = 0.5 * step;
            continue;
        }
        consecutive_failures = 0;

        double ratio = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double err = std::abs(half2.x(i) - full.x(i)) / 3.0;
            const double tol =
                cfg.reltol * std::max(std::abs(half2.x(i)), std::abs(x(i))) + tol_abs(i);
            ratio = std::max(ratio, err / tol);
        }
        const double grow = ratio > 0.0 ? 0.9 * std::pow(ratio, -1.0 / 3.0) : 4.0;
        const double h_new = std::clamp(grow, 0.25, 4.0) * step;
        if (ratio > 1.0) {
            ++res.stats.rejected;
            h = h_new;
            continue;
        }
        res.grid.push_back(t_half);
        res.states.push_back(std::move(half1.x));
        res.grid.push_back(t_next);
        res.states.push_back(std::move(half2.x));
        res.stats.steps += 2;
        const bool hit_break = t_next == bp;
        t = t_next;
        h = hit_break ? std::min(h_new, cfg.initial_step) : h_new;
    }
    res.stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

/// Linear interpolation between bracketing grid points.
inline Eigen::VectorXd sample(const TranResult& result, double t) {
    if (result.grid.empty() || t < result.grid.front() || t > result.grid.back()) {
        throw DomainError("sample time " + std::to_string(t) + " outside the transient result");
    }
    auto it = std::lower_bound(result.grid.begin(), result.grid.end(), t);
    auto k = static_cast<std::size_t>(it - result.grid.begin());
    if (result.grid[k] == t) return result.states[k];
    const double t0 = result.grid[k - 1];
    const double t1 = result.grid[k];
    const double w = (t - t0) / (t1 - t0);
    return (1.0 - w) * result.states[k - 1] + w * result.states[k];
}

}  // namespace wavesim
