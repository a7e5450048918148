#pragma once

// Command-line front end. Exit codes: 0 success, 1 bad input (flags, netlist,
// files), 2 solver failure.

#include "wavesim/errors.hpp"
#include "wavesim/mna.hpp"
#include "wavesim/netlist.hpp"
#include "wavesim/report.hpp"
#include "wavesim/transient.hpp"
#include "wavesim/wavelet_solver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace wavesim {

inline Circuit load_circuit(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read netlist '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return elaborate(parse(ss.str()));
}

namespace detail {

struct CliOptions {
    std::string netlist;
    std::optional<double> tstop;
    double reltol = 1e-4;
    std::optional<double> tol;
    std::optional<double> window;
    int order = 4;
    std::size_t samples = 1000;
    double ref_reltol = 1e-6;
    double sweep_ref_reltol = 1e-8;
    std::vector<double> tols;
    std::string out;
    std::string report;
    std::string stats;
    std::string wavelet_out;
    std::string tran_out;
};

inline double resolve_tstop(const CliOptions& o, const Circuit& c) {
    double t = 0.0;
    if (o.tstop) {
        t = *o.tstop;
    } else if (c.tran) {
        t = c.tran->tstop;
    } else if (c.wavelet) {
        t = c.wavelet->tstop;
    } else {
        throw ArgumentError("no --tstop given and the netlist has no .tran or .wavelet");
    }
    if (!(t > 0.0)) throw ArgumentError("tstop must be positive");
    return t;
}

inline WaveletConfig wavelet_config(const CliOptions& o, const Circuit& c, double tol) {
    WaveletConfig cfg;
    cfg.tol = tol;
    cfg.order = o.order;
    if (o.window) {
        cfg.window = *o.window;
    } else if (c.wavelet && c.wavelet->window) {
        cfg.window = *c.wavelet->window;
    }
    return cfg;
}

inline double resolve_tol(const CliOptions& o, const Circuit& c) {
    if (o.tol) return *o.tol;
    if (c.wavelet) return c.wavelet->tol;
    return 1e-4;
}

inline std::vector<std::string> labels(const Circuit& c) {
    std::vector<std::string> out;
    for (int v : c.printed) out.push_back(c.unknown_label(static_cast<std::size_t>(v)));
    return out;
}

inline Eigen::VectorXd initial_state(const MnaSystem& sys) {
    OperatingPoint op = dc_operating_point(sys);
    if (!op.converged) {
        throw ConvergenceError("DC operating point did not converge",
                               std::vector<double>(op.x0.data(), op.x0.data() + op.x0.size()),
                               op.residual_norm);
    }
    return op.x0;
}

inline double max_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

inline double cli_number(const std::string& flag, const std::string& text) {
    const std::optional<double> v = parse_number(text);
    if (!v) throw CLI::ValidationError(flag, "'" + text + "' is not a number");
    return *v;
}

template <class T>
void number_option(CLI::App* sub, const std::string& flag, T& target, const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [flag, &target](const std::string& text) { target = cli_number(flag, text); }, help);
}

inline int run_tran(const CliOptions& o, std::ostream& out) {
    Circuit c = load_circuit(o.netlist);
    const double tstop = resolve_tstop(o, c);
    const std::vector<int> vars = c.printed;
    const std::vector<std::string> names = labels(c);
    MnaSystem sys(std::move(c));
    const TranResult r = solve_transient(sys, initial_state(sys), TranConfig::for_run(tstop, o.reltol));
    write_solution_csv(solution_table(r, vars, names), o.out);
    out << "tran: " << r.stats.steps << " steps, " << r.stats.newton_iterations
        << " Newton iterations, " << r.stats.wall_seconds << " s\n";
    return 0;
}

inline int run_wavelet(const CliOptions& o, std::ostream& out) {
    Circuit c = load_circuit(o.netlist);
    const double tstop = resolve_tstop(o, c);
    const WaveletConfig cfg = wavelet_config(o, c, resolve_tol(o, c));
    const std::vector<int> vars = c.printed;
    const std::vector<std::string> names = labels(c);
    MnaSystem sys(std::move(c));
    const WaveletResult r = solve_wavelet(sys, initial_state(sys), tstop, cfg);
    write_solution_csv(solution_table(r, vars, names, o.samples), o.out);
    out << "wavelet: " << r.windows.size() << " windows, " << r.grid_size << " knots, "
        << r.newton_iterations() << " Newton iterations, " << r.wall_seconds << " s\n";
    return 0;
}

inline int run_compare(const CliOptions& o, std::ostream& out) {
    Circuit c = load_circuit(o.netlist);
    const double tstop = resolve_tstop(o, c);
    const double tol = resolve_tol(o, c);
    const WaveletConfig cfg = wavelet_config(o, c, tol);
    const std::vector<int> vars = c.printed;
    const std::vector<std::string> names = labels(c);
    MnaSystem sys(std::move(c));
    const Eigen::VectorXd x0 = initial_state(sys);
    const TranResult tr = solve_transient(sys, x0, TranConfig::for_run(tstop, o.ref_reltol));
    const WaveletResult wr = solve_wavelet(sys, x0, tstop, cfg);

    CompareReport rep;
    rep.variables = names;
    rep.max_abs_error = max_abs_diff(wr, tr, vars);
    rep.wavelet_grid_size = wr.grid_size;
    rep.transient_grid_size = tr.stats.steps;
    rep.wavelet_seconds = wr.wall_seconds;
    rep.transient_seconds = tr.stats.wall_seconds;
    rep.tol = tol;
    rep.ref_reltol = o.ref_reltol;

    if (!o.report.empty()) write_compare_csv(rep, o.report);
    // The wavelet table includes the transient grid so the reported error can
    // be recomputed from the two files.
    if (!o.wavelet_out.empty()) {
        write_solution_csv(solution_table(wr, vars, names, o.samples, tr.grid), o.wavelet_out);
    }
    if (!o.tran_out.empty()) write_solution_csv(solution_table(tr, vars, names), o.tran_out);

    for (std::size_t v = 0; v < names.size(); ++v) {
        out << names[v] << ": max_abs_error " << rep.max_abs_error[v] << "\n";
    }
    out << "wavelet " << rep.wavelet_grid_size << " knots " << rep.wavelet_seconds << " s, transient "
        << rep.transient_grid_size << " steps " << rep.transient_seconds << " s\n";
    return 0;
}

inline int run_sweep(const CliOptions& o, std::ostream& out) {
    Circuit c = load_circuit(o.netlist);
    const double tstop = resolve_tstop(o, c);
    if (o.tols.empty()) throw ArgumentError("--tols needs at least one tolerance");
    for (double t : o.tols) {
        if (!(t > 0.0)) throw ArgumentError("tolerances must be positive");
    }
    std::vector<double> tols = o.tols;
    std::sort(tols.begin(), tols.end(), std::greater<>());
    const std::vector<int> vars = c.printed;
    MnaSystem sys(std::move(c));
    const Eigen::VectorXd x0 = initial_state(sys);
    const TranResult ref = solve_transient(sys, x0, TranConfig::for_run(tstop, o.sweep_ref_reltol));

    std::vector<StatsRow> rows;
    for (double tol : tols) {
        const WaveletResult w = solve_wavelet(sys, x0, tstop, wavelet_config(o, sys.circuit(), tol));
        rows.push_back({"wavelet", tol, w.wall_seconds, w.grid_size, max_of(max_abs_diff(w, ref, vars))});
    }
    for (double tol : tols) {
        const TranResult t = solve_transient(sys, x0, TranConfig::for_run(tstop, tol));
        rows.push_back({"transient", tol, t.stats.wall_seconds, t.stats.steps,
                        max_of(max_abs_diff(t, ref, vars))});
    }
    write_stats_csv(rows, o.stats);
    out << format_stats_csv(rows);
    return 0;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Spline-wavelet and trapezoidal transient circuit simulator", "wavesim"};
    app.require_subcommand(1);
    detail::CliOptions o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("netlist", o.netlist, "netlist file")->required();
        detail::number_option(sub, "--tstop", o.tstop, "end time (default: from .tran or .wavelet)");
    };
    auto wavelet_flags = [&](CLI::App* sub) {
        detail::number_option(sub, "--tol", o.tol, "wavelet tolerance (default: .wavelet or 1e-4)");
        detail::number_option(sub, "--window", o.window, "window length, 0 for one window");
        sub->add_option("--order", o.order, "spline order")->capture_default_str();
        sub->add_option("--samples", o.samples, "uniform output samples")->capture_default_str();
    };

    CLI::App* tran = app.add_subcommand("tran", "classical trapezoidal transient");
    common(tran);
    detail::number_option(tran, "--reltol", o.reltol, "relative tolerance (default 1e-4)");
    tran->add_option("--out", o.out, "solution CSV")->required();

    CLI::App* wav = app.add_subcommand("wavelet", "adaptive spline-wavelet solve");
    common(wav);
    wavelet_flags(wav);
    wav->add_option("--out", o.out, "solution CSV")->required();

    CLI::App* cmp = app.add_subcommand("compare", "wavelet against a transient reference");
    common(cmp);
    wavelet_flags(cmp);
    detail::number_option(cmp, "--ref-reltol", o.ref_reltol, "reference reltol (default 1e-6)");
    cmp->add_option("--report", o.report, "report CSV");
    cmp->add_option("--wavelet-out", o.wavelet_out, "wavelet solution CSV");
    cmp->add_option("--tran-out", o.tran_out, "transient solution CSV");

    CLI::App* swp = app.add_subcommand("sweep", "error and cost over a list of tolerances");
    common(swp);
    swp->add_option_function<std::vector<std::string>>(
           "--tols",
           [&o](const std::vector<std::string>& items) {
               for (const auto& item : items) o.tols.push_back(detail::cli_number("--tols", item));
           },
           "comma separated tolerances")
        ->required()
        ->delimiter(',');
    detail::number_option(swp, "--ref-reltol", o.sweep_ref_reltol, "reference reltol (default 1e-8)");
    detail::number_option(swp, "--window", o.window, "window length, 0 for one window");
    swp->add_option("--order", o.order, "spline order")->capture_default_str();
    swp->add_option("--stats", o.stats, "stats CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (tran->parsed()) return detail::run_tran(o, out);
        if (wav->parsed()) return detail::run_wavelet(o, out);
        if (cmp->parsed()) return detail::run_compare(o, out);
        return detail::run_sweep(o, out);
    } catch (const ConvergenceError& e) {
        err << "solver failure: " << e.what() << "\n";
        return 2;
    } catch (const EvalError& e) {
        err << "solver failure: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        err << "solver failure: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        err << o.netlist << ": " << e.what() << "\n";
        return 1;
    } catch (const ElaborationError& e) {
        err << o.netlist << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace wavesim
