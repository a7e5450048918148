#pragma once

// Charge/flux oriented MNA:  d/dt q(x) + f(x) = s(t).
//
// Row layout follows the unknown layout of Circuit: one KCL row per node
// (currents leaving the node count positive in f), then one row per branch
// current unknown (V sources and inductors).

#include "wavesim/errors.hpp"
#include "wavesim/netlist.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace wavesim {

/// Always-present conductance from every node to ground (S).
inline constexpr double kDefaultGmin = 1e-12;

/// Diode exponent limit in units of the (emission-scaled) thermal voltage.
inline constexpr double kDiodeExpLimit = 40.0;

/// Absolute floors used when scaling voltages and currents.
inline constexpr double kVoltageFloor = 1e-6;
inline constexpr double kCurrentFloor = 1e-9;

struct DiodeEval {
    double current;
    double conductance;
};

/// Is*(exp(v/nVt) - 1), continued linearly beyond v = 40 nVt.
inline DiodeEval diode_current(const Diode& d, double v) {
    const double vte = d.emission * d.thermal_voltage;
    const double limit = kDiodeExpLimit * vte;
    if (v <= limit) {
        const double e = std::exp(v / vte);
        return {d.saturation_current * (e - 1.0), d.saturation_current * e / vte};
    }
    const double e = std::exp(kDiodeExpLimit);
    const double g = d.saturation_current * e / vte;
    return {d.saturation_current * (e - 1.0) + g * (v - limit), g};
}

class MnaSystem {
public:
    explicit MnaSystem(Circuit circuit, double gmin = kDefaultGmin)
        : circuit_(std::move(circuit)), gmin_(gmin) {
        linear_ = std::none_of(circuit_.elements.begin(), circuit_.elements.end(), [](const Element& e) {
            return std::holds_alternative<Diode>(e) || std::holds_alternative<BehavioralSource>(e);
        });
    }

    [[nodiscard]] const Circuit& circuit() const noexcept { return circuit_; }
    [[nodiscard]] std::size_t size() const noexcept { return circuit_.unknown_count(); }
    [[nodiscard]] double gmin() const noexcept { return gmin_; }
    /// True when f is affine in x (no diodes or behavioral sources).
    [[nodiscard]] bool is_linear() const noexcept { return linear_; }

    /// Per-unknown absolute floor: kVoltageFloor for node voltages, kCurrentFloor for currents.
    [[nodiscard]] Eigen::VectorXd unit_floor() const {
        Eigen::VectorXd fl(static_cast<Eigen::Index>(size()));
        for (std::size_t i = 0; i < size(); ++i) {
            fl(static_cast<Eigen::Index>(i)) = circuit_.is_current(i) ? kCurrentFloor : kVoltageFloor;
        }
        return fl;
    }

    // -------------------------------------------------------------------------
    // q
    // -------------------------------------------------------------------------

    void add_q(const Eigen::VectorXd& x, Eigen::VectorXd& q, Eigen::MatrixXd* jac) const {
        for (const auto& el : circuit_.elements) {
            if (const auto* c = std::get_if<Capacitor>(&el)) {
                const double charge = c->capacitance * (volt(x, c->a) - volt(x, c->b));
                check(charge, c->name);
                add(q, c->a, charge);
                add(q, c->b, -charge);
                if (jac) stamp_conductance(*jac, c->a, c->b, c->capacitance);
            } else if (const auto* l = std::get_if<Inductor>(&el)) {
                const double flux = l->inductance * x(l->branch);
                check(flux, l->name);
                q(l->branch) += flux;
                if (jac) (*jac)(l->branch, l->branch) += l->inductance;
            }
        }
    }

    [[nodiscard]] Eigen::VectorXd eval_q(const Eigen::VectorXd& x) const {
        check_size(x);
        Eigen::VectorXd q = Eigen::VectorXd::Zero(x.size());
        add_q(x, q, nullptr);
        return q;
    }

    [[nodiscard]] Eigen::MatrixXd jac_q(const Eigen::VectorXd& x) const {
        check_size(x);
        Eigen::VectorXd q = Eigen::VectorXd::Zero(x.size());
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(x.size(), x.size());
        add_q(x, q, &j);
        return j;
    }

    // -------------------------------------------------------------------------
    // f
    // -------------------------------------------------------------------------

    /// Accumulate f(x) (and its Jacobian) into the outputs; `ground`, when
    /// given, collects the contributions that land on the reference node.
    void add_f(const Eigen::VectorXd& x, Eigen::VectorXd& f, Eigen::MatrixXd* jac,
               double* ground = nullptr) const {
        auto leave = [&](int a, int b, double current) {
            add(f, a, current);
            add(f, b, -current);
            if (ground) {
                if (a == kGround) *ground += current;
                if (b == kGround) *ground -= current;
            }
        };
        for (const auto& el : circuit_.elements) {
            std::visit(
                [&](const auto& e) {
                    using E = std::decay_t<decltype(e)>;
                    if constexpr (std::is_same_v<E, Resistor>) {
                        const double g = 1.0 / e.resistance;
                        const double i = g * (volt(x, e.a) - volt(x, e.b));
                        check(i, e.name);
                        leave(e.a, e.b, i);
                        if (jac) stamp_conductance(*jac, e.a, e.b, g);
                    } else if constexpr (std::is_same_v<E, Inductor>) {
                        const double i = x(e.branch);
                        leave(e.a, e.b, i);
                        f(e.branch) -= volt(x, e.a) - volt(x, e.b);
                        if (jac) stamp_branch(*jac, e.a, e.b, e.branch, -1.0);
                    } else if constexpr (std::is_same_v<E, VoltageSource>) {
                        const double i = x(e.branch);
                        leave(e.a, e.b, i);
                        f(e.branch) += volt(x, e.a) - volt(x, e.b);
                        if (jac) stamp_branch(*jac, e.a, e.b, e.branch, 1.0);
                    } else if constexpr (std::is_same_v<E, Diode>) {
                        const auto d = diode_current(e, volt(x, e.anode) - volt(x, e.cathode));
                        check(d.current, e.name);
                        check(d.conductance, e.name);
                        leave(e.anode, e.cathode, d.current);
                        if (jac) stamp_conductance(*jac, e.anode, e.cathode, d.conductance);
                    } else if constexpr (std::is_same_v<E, Vccs>) {
                        const double i = e.gm * (volt(x, e.ctrl_a) - volt(x, e.ctrl_b));
                        check(i, e.name);
                        leave(e.a, e.b, i);
                        if (jac) stamp_transconductance(*jac, e.a, e.b, e.ctrl_a, e.ctrl_b, e.gm);
                    } else if constexpr (std::is_same_v<E, BehavioralSource>) {
                        std::vector<double> vals(e.slots.size());
                        for (std::size_t k = 0; k < e.slots.size(); ++k) vals[k] = volt(x, e.slots[k]);
                        ExprValue r;
                        try {
                            r = expr_partials(e.expr, vals);
                        } catch (const EvalError& err) {
                            throw EvalError("element '" + e.name + "': " + err.what());
                        }
                        leave(e.a, e.b, r.value);
                        if (jac) {
                            for (std::size_t k = 0; k < e.slots.size(); ++k) {
                                const int col = e.slots[k];
                                if (col == kGround) continue;
                                add(*jac, e.a, col, r.partials[k]);
                                add(*jac, e.b, col, -r.partials[k]);
                            }
                        }
                    }
                },
                el);
        }
        for (std::size_t n = 0; n < circuit_.node_count(); ++n) {
            const auto i = static_cast<Eigen::Index>(n);
            f(i) += gmin_ * x(i);
            if (ground) *ground -= gmin_ * x(i);
            if (jac) (*jac)(i, i) += gmin_;
        }
    }

    [[nodiscard]] Eigen::VectorXd eval_f(const Eigen::VectorXd& x) const {
        check_size(x);
        Eigen::VectorXd f = Eigen::VectorXd::Zero(x.size());
        add_f(x, f, nullptr);
        return f;
    }

    [[nodiscard]] Eigen::MatrixXd jac_f(const Eigen::VectorXd& x) const {
        check_size(x);
        Eigen::VectorXd f = Eigen::VectorXd::Zero(x.size());
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(x.size(), x.size());
        add_f(x, f, &j);
        return j;
    }

    // -------------------------------------------------------------------------
    // s
    // -------------------------------------------------------------------------

    void add_s(double t, Eigen::VectorXd& s, double* ground = nullptr) const {
        for (const auto& el : circuit_.elements) {
            if (const auto* v = std::get_if<VoltageSource>(&el)) {
                s(v->branch) += eval_waveform(v->wave, t);
            } else if (const auto* i = std::get_if<CurrentSource>(&el)) {
                const double val = eval_waveform(i->wave, t);
                add(s, i->a, -val);
                add(s, i->b, val);
                if (ground) {
                    if (i->a == kGround) *ground -= val;
                    if (i->b == kGround) *ground += val;
                }
            }
        }
    }

    [[nodiscard]] Eigen::VectorXd eval_s(double t) const {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
        add_s(t, s);
        return s;
    }

    /// The KCL row of the reference node, f - s. Together with the node rows it
    /// sums to zero for every x and t.
    [[nodiscard]] double ground_residual(const Eigen::VectorXd& x, double t) const {
        check_size(x);
        Eigen::VectorXd f = Eigen::VectorXd::Zero(x.size());
        Eigen::VectorXd s = Eigen::VectorXd::Zero(x.size());
        double gf = 0.0;
        double gs = 0.0;
        add_f(x, f, nullptr, &gf);
        add_s(t, s, &gs);
        return gf - gs;
    }

    [[nodiscard]] std::vector<double> breakpoints(double t0, double t1) const {
        return circuit_.source_breakpoints(t0, t1);
    }

private:
    void check_size(const Eigen::VectorXd& x) const {
        if (static_cast<std::size_t>(x.size()) != size()) {
            throw ArgumentError("state vector has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(size()));
        }
    }

    static void check(double v, const std::string& element) {
        if (!std::isfinite(v)) throw EvalError("non-finite stamp value in element '" + element + "'");
    }

    static double volt(const Eigen::VectorXd& x, int node) { return node == kGround ? 0.0 : x(node); }

    static void add(Eigen::VectorXd& v, int row, double value) {
        if (row != kGround) v(row) += value;
    }

    static void add(Eigen::MatrixXd& m, int row, int col, double value) {
        if (row != kGround && col != kGround) m(row, col) += value;
    }

    static void stamp_conductance(Eigen::MatrixXd& m, int a, int b, double g) {
        add(m, a, a, g);
        add(m, a, b, -g);
        add(m, b, a, -g);
        add(m, b, b, g);
    }

    static void stamp_transconductance(Eigen::MatrixXd& m, int a, int b, int c, int d, double gm) {
        add(m, a, c, gm);
        add(m, a, d, -gm);
        add(m, b, c, -gm);
        add(m, b, d, gm);
    }

    /// Branch current enters the KCL rows; the branch row sees sign*(v_a - v_b).
    static void stamp_branch(Eigen::MatrixXd& m, int a, int b, int branch, double sign) {
        add(m, a, branch, 1.0);
        add(m, b, branch, -1.0);
        add(m, branch, a, sign);
        add(m, branch, b, -sign);
    }

    Circuit circuit_;
    double gmin_;
    bool linear_ = true;
};

// =============================================================================
// DC operating point
// =============================================================================

struct OperatingPoint {
    Eigen::VectorXd x0;
    bool converged = false;
    int iterations = 0;       ///< Newton updates, summed over all gmin stages
    double residual_norm = 0.0;
    std::vector<double> gmin_stages;  ///< extra gmin per stage actually run (empty: plain Newton)
    std::vector<double> stage_start_residuals;  ///< scaled residual at the start of each stage
};

struct DcOptions {
    int max_iterations = 100;
    double residual_tol = 1e-10;  ///< scaled, see scaled_residual_norm
    double step_tol = 1e-10;      ///< relative to max(|x|, unit floor)
    int max_halvings = 12;
};

/// max_r |F_r| / sum_c |J_rc| * scale_c; dimensionless.
inline double scaled_residual_norm(const Eigen::VectorXd& residual, const Eigen::VectorXd& row_scale) {
    double norm = 0.0;
    for (Eigen::Index r = 0; r < residual.size(); ++r) {
        norm = std::max(norm, std::abs(residual(r)) / row_scale(r));
    }
    return norm;
}

inline Eigen::VectorXd row_scales(const Eigen::MatrixXd& jac, const Eigen::VectorXd& var_scale) {
    Eigen::VectorXd rs = jac.cwiseAbs() * var_scale;
    for (Eigen::Index r = 0; r < rs.size(); ++r) {
        if (!(rs(r) > std::numeric_limits<double>::min())) rs(r) = std::numeric_limits<double>::min();
    }
    return rs;
}

namespace detail {

struct DcStageResult {
    Eigen::VectorXd x;
    bool converged = false;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    double initial_residual = std::numeric_limits<double>::infinity();
};

/// Damped Newton on f(x) + extra_gmin * v - s(0) = 0.
inline DcStageResult dc_newton(const MnaSystem& sys, Eigen::VectorXd x, double extra_gmin,
                               const DcOptions& opt) {
    const Eigen::VectorXd s0 = sys.eval_s(0.0);
    const Eigen::VectorXd floor = sys.unit_floor();
    const auto nodes = static_cast<Eigen::Index>(sys.circuit().node_count());
    const auto n = static_cast<Eigen::Index>(sys.size());

    auto evaluate = [&](const Eigen::VectorXd& y, Eigen::VectorXd& F, Eigen::MatrixXd* J) {
        F = -s0;
        if (J) J->setZero(n, n);
        sys.add_f(y, F, J);
        F.head(nodes) += extra_gmin * y.head(nodes);
        if (J) J->diagonal().head(nodes).array() += extra_gmin;
    };

    DcStageResult res;
    Eigen::VectorXd F;
    Eigen::MatrixXd J;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        evaluate(x, F, &J);
        const Eigen::VectorXd scale = x.cwiseAbs().cwiseMax(floor);
        const Eigen::VectorXd rs = row_scales(J, scale);
        const double norm = scaled_residual_norm(F, rs);
        res.residual = norm;
        if (it == 0) res.initial_residual = norm;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
        const Eigen::VectorXd dx = lu.solve(-F);
        if (!dx.allFinite()) break;
        const double step = (dx.cwiseAbs().array() / scale.array()).maxCoeff();
        if (norm < opt.residual_tol && step < opt.step_tol) {
            res.converged = true;
            break;
        }
        if (it == opt.max_iterations) break;
        bool accepted = false;
        double lambda = 1.0;
        for (int h = 0; h <= opt.max_halvings; ++h, lambda *= 0.5) {
            const Eigen::VectorXd trial = x + lambda * dx;
            Eigen::VectorXd Ft;
            try {
                evaluate(trial, Ft, nullptr);
            } catch (const EvalError&) {
                continue;
            }
            if (scaled_residual_norm(Ft, rs) <= (1.0 - lambda / 4.0) * norm) {
                x = trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        ++res.iterations;
    }
    res.x = std::move(x);
    return res;
}

}  // namespace detail

/// Damped Newton from x = 0; falls back to gmin stepping (1e-2 S down to
/// 1e-12 S in decades) when the plain solve fails.
inline OperatingPoint dc_operating_point(const MnaSystem& sys, const DcOptions& opt = {}) {
    const auto n = static_cast<Eigen::Index>(sys.size());
    OperatingPoint op;
    auto direct = detail::dc_newton(sys, Eigen::VectorXd::Zero(n), 0.0, opt);
    op.iterations = direct.iterations;
    if (direct.converged) {
        op.x0 = std::move(direct.x);
        op.converged = true;
        op.residual_norm = direct.residual;
        return op;
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    detail::DcStageResult stage;
    for (double g = 1e-2; g >= kDefaultGmin * 0.5; g /= 10.0) {
        const double extra = g < 1.5 * sys.gmin() ? 0.0 : g - sys.gmin();
        op.gmin_stages.push_back(extra);
        stage = detail::dc_newton(sys, x, extra, opt);
        op.stage_start_residuals.push_back(stage.initial_residual);
        op.iterations += stage.iterations;
        x = stage.x;
    }
    op.x0 = x;
    op.converged = stage.converged;
    op.residual_norm = stage.residual;
    if (!op.converged) {
        throw ConvergenceError("DC operating point did not converge (scaled residual " +
                                   std::to_string(stage.residual) + ")",
                               std::vector<double>(x.data(), x.data() + x.size()), stage.residual);
    }
    return op;
}

}  // namespace wavesim
