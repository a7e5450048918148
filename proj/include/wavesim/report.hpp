#pragma once

// Error measurement between the two solvers and the CSV artifacts.

#include "wavesim/errors.hpp"
#include "wavesim/transient.hpp"
#include "wavesim/wavelet_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace wavesim {

namespace detail {

inline void check_coverage(double a0, double a1, double b0, double b1) {
    const double tol = 1e-9 * std::max({std::abs(a1), std::abs(b1), 1e-300});
    if (std::abs(a0 - b0) > tol || std::abs(a1 - b1) > tol) {
        throw ArgumentError("results cover different time ranges");
    }
}

inline std::string format_number(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    out.close();
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace detail

/// Max over the transient grid of |wavelet(t_k) - transient(t_k)|, per variable.
inline std::vector<double> max_abs_diff(const WaveletResult& w, const TranResult& t,
                                        const std::vector<int>& vars) {
    if (w.windows.empty() || t.grid.empty()) throw ArgumentError("empty result");
    detail::check_coverage(w.windows.front().a, w.t_end(), t.grid.front(), t.grid.back());
    std::vector<double> out(vars.size(), 0.0);
    for (std::size_t k = 0; k < t.grid.size(); ++k) {
        const double tk = std::min(t.grid[k], w.t_end());
        const Eigen::VectorXd x = w.eval(tk);
        for (std::size_t v = 0; v < vars.size(); ++v) {
            out[v] = std::max(out[v], std::abs(x(vars[v]) - t.states[k](vars[v])));
        }
    }
    return out;
}

/// Same measure between two transient runs: `t` at its own grid points
/// against `ref` interpolated linearly.
inline std::vector<double> max_abs_diff(const TranResult& t, const TranResult& ref,
                                        const std::vector<int>& vars) {
    if (t.grid.empty() || ref.grid.empty()) throw ArgumentError("empty result");
    detail::check_coverage(t.grid.front(), t.grid.back(), ref.grid.front(), ref.grid.back());
    std::vector<double> out(vars.size(), 0.0);
    for (std::size_t k = 0; k < t.grid.size(); ++k) {
        const Eigen::VectorXd x = sample(ref, std::clamp(t.grid[k], ref.grid.front(), ref.grid.back()));
        for (std::size_t v = 0; v < vars.size(); ++v) {
            out[v] = std::max(out[v], std::abs(x(vars[v]) - t.states[k](vars[v])));
        }
    }
    return out;
}

struct CompareReport {
    std::vector<std::string> variables;
    std::vector<double> max_abs_error;
    std::size_t wavelet_grid_size = 0;    ///< distinct knots
    std::size_t transient_grid_size = 0;  ///< accepted steps
    double wavelet_seconds = 0.0;
    double transient_seconds = 0.0;
    double tol = 0.0;
    double ref_reltol = 0.0;
};

inline void write_compare_csv(const CompareReport& r, const std::string& path) {
    std::string text =
        "variable,max_abs_error,wavelet_grid_size,transient_grid_size,wavelet_seconds,"
        "transient_seconds,tol,ref_reltol\n";
    for (std::size_t v = 0; v < r.variables.size(); ++v) {
        text += r.variables[v] + "," + detail::format_number("%.17e", r.max_abs_error[v]) + "," +
                std::to_string(r.wavelet_grid_size) + "," + std::to_string(r.transient_grid_size) +
                "," + detail::format_number("%.17e", r.wavelet_seconds) + "," +
                detail::format_number("%.17e", r.transient_seconds) + "," +
                detail::format_number("%.17e", r.tol) + "," +
                detail::format_number("%.17e", r.ref_reltol) + "\n";
    }
    detail::write_file(path, text);
}

struct SolutionTable {
    std::vector<std::string> labels;
    std::vector<double> t;
    std::vector<std::vector<double>> rows;  ///< rows[k][v]
};

inline SolutionTable solution_table(const TranResult& r, const std::vector<int>& vars,
                                    const std::vector<std::string>& labels) {
    SolutionTable tab{labels, r.grid, {}};
    tab.rows.reserve(r.grid.size());
    for (const auto& x : r.states) {
        std::vector<double> row;
        for (int v : vars) row.push_back(x(v));
        tab.rows.push_back(std::move(row));
    }
    return tab;
}

/// Samples `samples` uniform points, every knot and any `extra` times.
inline SolutionTable solution_table(const WaveletResult& r, const std::vector<int>& vars,
                                    const std::vector<std::string>& labels, std::size_t samples,
                                    const std::vector<double>& extra = {}) {
    if (r.windows.empty()) throw ArgumentError("empty wavelet result");
    const double a = r.windows.front().a;
    const double b = r.t_end();
    std::vector<double> t = r.knots();
    if (samples == 1) t.push_back(a);
    for (std::size_t i = 0; samples > 1 && i < samples; ++i) {
        t.push_back(i + 1 == samples ? b
                                     : a + (b - a) * static_cast<double>(i) /
                                               static_cast<double>(samples - 1));
    }
    for (double e : extra) t.push_back(std::clamp(e, a, b));
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());

    SolutionTable tab{labels, t, {}};
    tab.rows.reserve(t.size());
    for (double tk : t) {
        const Eigen::VectorXd x = r.eval(tk);
        std::vector<double> row;
        for (int v : vars) row.push_back(x(v));
        tab.rows.push_back(std::move(row));
    }
    return tab;
}

inline std::string format_solution_csv(const SolutionTable& tab) {
    std::string text = "t";
    for (const auto& l : tab.labels) text += "," + l;
    text += "\n";
    for (std::size_t k = 0; k < tab.t.size(); ++k) {
        text += detail::format_number("%.17g", tab.t[k]);
        for (double v : tab.rows[k]) text += "," + detail::format_number("%.17g", v);
        text += "\n";
    }
    return text;
}

inline void write_solution_csv(const SolutionTable& tab, const std::string& path) {
    detail::write_file(path, format_solution_csv(tab));
}

struct StatsRow {
    std::string solver;
    double tol = 0.0;
    double cpu_seconds = 0.0;
    std::size_t grid_size = 0;
    double max_abs_error = 0.0;
};

/// Rows are emitted solver-major (in order of first appearance) with
/// tolerances descending.
inline std::string format_stats_csv(std::vector<StatsRow> rows) {
    std::vector<std::string> order;
    for (const auto& r : rows) {
        if (std::find(order.begin(), order.end(), r.solver) == order.end()) order.push_back(r.solver);
    }
    auto rank = [&](const StatsRow& r) {
        return std::find(order.begin(), order.end(), r.solver) - order.begin();
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const StatsRow& x, const StatsRow& y) {
        if (rank(x) != rank(y)) return rank(x) < rank(y);
        return x.tol > y.tol;
    });
    std::string text = "solver,tol,cpu_seconds,grid_size,max_abs_error\n";
    for (const auto& r : rows) {
        text += r.solver + "," + detail::format_number("%.17e", r.tol) + "," +
                detail::format_number("%.17e", r.cpu_seconds) + "," + std::to_string(r.grid_size) +
                "," + detail::format_number("%.17e", r.max_abs_error) + "\n";
    }
    return text;
}

inline void write_stats_csv(const std::vector<StatsRow>& rows, const std::string& path) {
    detail::write_file(path, format_stats_csv(rows));
}

}  // namespace wavesim
