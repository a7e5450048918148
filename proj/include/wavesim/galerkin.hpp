#pragma once

// Petrov-Galerkin discretization of  d/dt q(x) + f(x) = s(t)  on a spline
// space over one time window [a, b].
//
// Trial functions are the B-splines phi_0..phi_{n-1}; test functions are the
// indicators of the Greville intervals [xi_{l-1}, xi_l], l = 1..n-1. Against
// an indicator the derivative term integrates to an endpoint difference, so
// block l of the residual is
//
//   q(x(xi_l)) - q(x(xi_{l-1})) + int_{xi_{l-1}}^{xi_l} f(x(t)) - s(t) dt
//
// and block 0 pins the clamped start value, c_0 - x0.
//
// Rows without a charge term (nodes touching no capacitor, source and
// behavioral branch equations) only fix interval means under indicator tests,
// which leaves an undamped alternating mode in those components. Such rows are
// collocated at xi_l instead:  (xi_l - xi_{l-1}) * (f(x(xi_l)) - s(xi_l)).

#include "wavesim/errors.hpp"
#include "wavesim/linalg.hpp"
#include "wavesim/mna.hpp"
#include "wavesim/multiresolution.hpp"
#include "wavesim/spline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace wavesim {

class GalerkinSystem {
public:
    /// `scale` holds one positive magnitude per unknown (V or A); `breaks` are
    /// extra quadrature split points (source corners). g = 0 selects g = m.
    GalerkinSystem(const MnaSystem& sys, SplineSpace space, Eigen::VectorXd x0, Eigen::VectorXd scale,
                   std::vector<double> breaks = {}, int quadrature_points = 0)
        : sys_(&sys), space_(std::move(space)), x0_(std::move(x0)), scale_(std::move(scale)),
          breaks_(std::move(breaks)),
          g_(quadrature_points > 0 ? quadrature_points : space_.order()) {
        const auto N = static_cast<Eigen::Index>(sys.size());
        if (x0_.size() != N || scale_.size() != N) {
            throw ArgumentError("initial value / scale vector dimension mismatch");
        }
        if ((scale_.array() <= 0.0).any()) throw ArgumentError("scale entries must be positive");
        const Eigen::MatrixXd jq = sys.jac_q(x0_);
        dynamic_ = Eigen::VectorXd::Ones(N);
        for (Eigen::Index r = 0; r < N; ++r) {
            if (jq.row(r).cwiseAbs().maxCoeff() == 0.0) dynamic_(r) = 0.0;
        }
        has_algebraic_ = dynamic_.minCoeff() == 0.0;

        xi_ = greville(space_);
        const std::size_t n = space_.dimension();
        xi_basis_.reserve(n);
        for (double t : xi_) {
            xi_basis_.push_back(eval_basis(space_, t));
            xi_s_.push_back(has_algebraic_ ? sys.eval_s(t) : Eigen::VectorXd());
        }

        first_.assign(n, 0);
        last_.assign(n, 0);
        intervals_.resize(n);
        for (std::size_t l = 1; l < n; ++l) {
            Interval& iv = intervals_[l];
            iv.begin = nodes_.size();
            std::size_t lo = xi_basis_[l - 1].first;
            std::size_t hi = xi_basis_[l].first + static_cast<std::size_t>(xi_basis_[l].count) - 1;
            lo = std::min(lo, xi_basis_[l].first);
            hi = std::max(hi, xi_basis_[l - 1].first + static_cast<std::size_t>(xi_basis_[l - 1].count) - 1);
            if (xi_[l] > xi_[l - 1]) {
                for (const auto& q : quadrature_nodes(space_, xi_[l - 1], xi_[l], g_, breaks_)) {
                    Node node{q.t, q.weight, eval_basis(space_, q.t), sys.eval_s(q.t)};
                    lo = std::min(lo, node.basis.first);
                    hi = std::max(hi, node.basis.first + static_cast<std::size_t>(node.basis.count) - 1);
                    nodes_.push_back(std::move(node));
                }
            }
            iv.end = nodes_.size();
            first_[l] = lo;
            last_[l] = std::min(hi, n - 1);
        }
    }

    [[nodiscard]] const MnaSystem& mna() const noexcept { return *sys_; }
    [[nodiscard]] const SplineSpace& space() const noexcept { return space_; }
    [[nodiscard]] const std::vector<double>& test_partition() const noexcept { return xi_; }
    [[nodiscard]] const Eigen::VectorXd& x0() const noexcept { return x0_; }
    [[nodiscard]] const Eigen::VectorXd& scale() const noexcept { return scale_; }
    [[nodiscard]] const std::vector<double>& breaks() const noexcept { return breaks_; }

    void set_scale(Eigen::VectorXd scale) {
        if (scale.size() != scale_.size() || (scale.array() <= 0.0).any()) {
            throw ArgumentError("scale must have one positive entry per unknown");
        }
        scale_ = std::move(scale);
    }
    [[nodiscard]] int quadrature_points() const noexcept { return g_; }
    /// 1 for rows carrying a charge term, 0 for collocated algebraic rows.
    [[nodiscard]] const Eigen::VectorXd& dynamic_rows() const noexcept { return dynamic_; }
    [[nodiscard]] std::size_t blocks() const noexcept { return space_.dimension(); }
    [[nodiscard]] std::size_t block_size() const noexcept { return sys_->size(); }
    [[nodiscard]] std::size_t unknowns() const noexcept { return blocks() * block_size(); }

    /// Residual and/or Jacobian at `curve`. Either output may be null.
    void assemble(const SplineCurve& curve, Eigen::VectorXd* residual, BlockRowMatrix* jac) const {
        check_curve(curve);
        const std::size_t n = blocks();
        const auto N = static_cast<Eigen::Index>(block_size());
        const auto& C = curve.coefficients();

        if (residual) residual->setZero(static_cast<Eigen::Index>(n) * N);
        if (jac) *jac = BlockRowMatrix(block_size(), first_, last_);

        if (residual) residual->head(N) = C.row(0).transpose() - x0_;
        if (jac) jac->block(0, 0).setIdentity();

        // q and dq/dx at every test-partition point, shared by neighbouring blocks.
        std::vector<Eigen::VectorXd> q(n);
        std::vector<Eigen::MatrixXd> jq(jac ? n : 0);
        std::vector<Eigen::VectorXd> fx(has_algebraic_ ? n : 0);
        std::vector<Eigen::MatrixXd> jfx(has_algebraic_ && jac ? n : 0);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::VectorXd x = combine(C, xi_basis_[i]);
            q[i] = Eigen::VectorXd::Zero(N);
            if (jac) {
                jq[i] = Eigen::MatrixXd::Zero(N, N);
                sys_->add_q(x, q[i], &jq[i]);
            } else {
                sys_->add_q(x, q[i], nullptr);
            }
            if (has_algebraic_ && i > 0) {
                fx[i] = Eigen::VectorXd::Zero(N);
                if (jac) {
                    jfx[i] = Eigen::MatrixXd::Zero(N, N);
                    sys_->add_f(x, fx[i], &jfx[i]);
                } else {
                    sys_->add_f(x, fx[i], nullptr);
                }
            }
        }

        const Eigen::VectorXd algebraic = Eigen::VectorXd::Ones(N) - dynamic_;
        Eigen::VectorXd f(N);
        Eigen::MatrixXd jf(N, N);
        for (std::size_t l = 1; l < n; ++l) {
            const auto row = static_cast<Eigen::Index>(l) * N;
            Eigen::VectorXd r = q[l] - q[l - 1];
            if (jac) {
                add_basis_blocks(*jac, l, xi_basis_[l], jq[l], 1.0);
                add_basis_blocks(*jac, l, xi_basis_[l - 1], jq[l - 1], -1.0);
            }
            const Interval& iv = intervals_[l];
            for (std::size_t k = iv.begin; k < iv.end; ++k) {
                const Node& node = nodes_[k];
                const Eigen::VectorXd x = combine(C, node.basis);
                f.setZero();
                if (jac) {
                    jf.setZero();
                    sys_->add_f(x, f, &jf);
                    if (has_algebraic_) jf = dynamic_.asDiagonal() * jf;
                    add_basis_blocks(*jac, l, node.basis, jf, node.weight);
                } else {
                    sys_->add_f(x, f, nullptr);
                }
                r += node.weight * (f - node.s);
            }
            if (has_algebraic_) {
                const double len = xi_[l] - xi_[l - 1];
                r = dynamic_.cwiseProduct(r) + len * algebraic.cwiseProduct(fx[l] - xi_s_[l]);
                if (jac) add_basis_blocks(*jac, l, xi_basis_[l], algebraic.asDiagonal() * jfx[l], len);
            }
            if (residual) residual->segment(row, N) = r;
        }
    }

    [[nodiscard]] Eigen::VectorXd residual(const SplineCurve& curve) const {
        Eigen::VectorXd r;
        assemble(curve, &r, nullptr);
        return r;
    }

    [[nodiscard]] BlockRowMatrix jacobian(const SplineCurve& curve) const {
        BlockRowMatrix j(block_size(), first_, last_);
        assemble(curve, nullptr, &j);
        return j;
    }

    /// Per-row magnitude sum_c |J_rc| * scale_c used to make residuals dimensionless.
    [[nodiscard]] Eigen::VectorXd row_scales(const BlockRowMatrix& jac) const {
        const auto N = static_cast<Eigen::Index>(block_size());
        Eigen::VectorXd rs(static_cast<Eigen::Index>(unknowns()));
        for (std::size_t l = 0; l < blocks(); ++l) {
            const Eigen::MatrixXd& row = jac.row(l);
            const auto width = row.cols() / N;
            Eigen::VectorXd tiled(row.cols());
            for (Eigen::Index k = 0; k < width; ++k) tiled.segment(k * N, N) = scale_;
            rs.segment(static_cast<Eigen::Index>(l) * N, N) = row.cwiseAbs() * tiled;
        }
        for (Eigen::Index r = 0; r < rs.size(); ++r) {
            if (!(rs(r) > std::numeric_limits<double>::min())) rs(r) = std::numeric_limits<double>::min();
        }
        return rs;
    }

    /// Scaled max-norm of a coefficient update.
    [[nodiscard]] double scaled_step_norm(const Eigen::VectorXd& delta) const {
        const auto N = static_cast<Eigen::Index>(block_size());
        double norm = 0.0;
        for (Eigen::Index i = 0; i < delta.size(); ++i) {
            norm = std::max(norm, std::abs(delta(i)) / scale_(i % N));
        }
        return norm;
    }

private:
    struct Node {
        double t;
        double weight;
        BasisValues basis;
        Eigen::VectorXd s;
    };

    struct Interval {
        std::size_t begin = 0;
        std::size_t end = 0;
    };

    void check_curve(const SplineCurve& curve) const {
        if (!(curve.space() == space_)) throw ArgumentError("curve does not live on the Galerkin space");
        if (curve.components() != block_size()) throw ArgumentError("curve has wrong component count");
    }

    static Eigen::VectorXd combine(const CoefficientMatrix& C, const BasisValues& b) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(C.cols());
        for (int k = 0; k < b.count; ++k) {
            x += b.values[k] * C.row(static_cast<Eigen::Index>(b.first) + k).transpose();
        }
        return x;
    }

    static void add_basis_blocks(BlockRowMatrix& jac, std::size_t l, const BasisValues& b,
                                 const Eigen::MatrixXd& m, double factor) {
        for (int k = 0; k < b.count; ++k) {
            const double w = factor * b.values[k];
            if (w != 0.0) jac.block(l, b.first + static_cast<std::size_t>(k)) += w * m;
        }
    }

    const MnaSystem* sys_;
    SplineSpace space_;
    Eigen::VectorXd x0_;
    Eigen::VectorXd scale_;
    std::vector<double> breaks_;
    int g_;
    std::vector<double> xi_;
    std::vector<BasisValues> xi_basis_;
    std::vector<Eigen::VectorXd> xi_s_;
    Eigen::VectorXd dynamic_;
    bool has_algebraic_ = false;
    std::vector<Node> nodes_;
    std::vector<Interval> intervals_;
    std::vector<std::size_t> first_;
    std::vector<std::size_t> last_;
};

// =============================================================================
// Newton
// =============================================================================

struct NewtonOptions {
    double residual_tol = 1e-8;  ///< scaled residual, see GalerkinSystem::row_scales
    double step_tol = 1e-7;      ///< scaled coefficient update
    int max_iterations = 50;
    int max_halvings = 12;       ///< damping floor 2^-12
};

struct NewtonResult {
    SplineCurve curve;
    int iterations = 0;  ///< applied updates
    bool converged = false;
    double residual_norm = std::numeric_limits<double>::infinity();
};

/// Damped Newton: lambda in {1, 1/2, ..., 2^-12}, Armijo factor 1 - lambda/4.
/// Converged when the scaled residual and the scaled update are both below
/// their tolerances; the final (tiny) update is not applied. A line search
/// that stalls with the residual already below tolerance also counts as
/// converged.
inline NewtonResult newton_solve(const GalerkinSystem& gs, SplineCurve initial,
                                 const NewtonOptions& opt = {}) {
    NewtonResult out{std::move(initial)};
    const auto rows = static_cast<Eigen::Index>(out.curve.coefficients().rows());
    const auto cols = static_cast<Eigen::Index>(out.curve.coefficients().cols());
    Eigen::VectorXd R;
    BlockRowMatrix J(gs.block_size(), {}, {});
    for (;;) {
        gs.assemble(out.curve, &R, &J);
        const Eigen::VectorXd rs = gs.row_scales(J);
        const double norm = scaled_residual_norm(R, rs);
        out.residual_norm = norm;
        Eigen::VectorXd delta;
        try {
            delta = solve_block_system(J, -R);
        } catch (const EvalError&) {
            return out;
        }
        const double step = gs.scaled_step_norm(delta);
        if (norm < opt.residual_tol && step < opt.step_tol) {
            out.converged = true;
            return out;
        }
        if (out.iterations >= opt.max_iterations) return out;

        const Eigen::Map<const CoefficientMatrix> dmat(delta.data(), rows, cols);
        double lambda = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings && !accepted; ++h, lambda *= 0.5) {
            SplineCurve trial(out.curve.space(), out.curve.coefficients() + lambda * dmat);
            try {
                const double trial_norm = scaled_residual_norm(gs.residual(trial), rs);
                if (trial_norm <= (1.0 - lambda / 4.0) * norm) {
                    out.curve = std::move(trial);
                    accepted = true;
                }
            } catch (const EvalError&) {
            }
        }
        if (!accepted) {
            // No decrease left at roundoff level: the residual test alone decides.
            out.converged = norm < opt.residual_tol;
            return out;
        }
        ++out.iterations;
    }
}

// =============================================================================
// Refinement indicators
// =============================================================================

/// For every nonempty knot span, the larger of its two halves' scaled local
/// residual  q(x(sup H)) - q(x(inf H)) + int_H f - s dt,  each row divided by
/// sum_b (|dq/dx| + |H| |df/dx|)_ab * scale_b at the half's midpoint.
/// Collocated rows use |H| (f - s) at the half's midpoint. Spans whose
/// indicator exceeds tol and reaches refine_fraction * max are flagged.
inline RefinementPlan refine_indicators(const GalerkinSystem& gs, const SplineCurve& curve,
                                        double tol, double refine_fraction) {
    const Eigen::VectorXd& scale = gs.scale();
    const MnaSystem& sys = gs.mna();
    const auto N = static_cast<Eigen::Index>(sys.size());
    const KnotVector& kv = gs.space().knot_vector();
    const std::vector<double> bp = kv.breakpoints();
    const double h_min = kv.length() * kMinSpanFraction;

    RefinementPlan plan{kv, {}, {}};
    plan.span_indicators.reserve(bp.size() - 1);

    Eigen::VectorXd q_lo(N), q_hi(N), f(N);
    Eigen::MatrixXd jq(N, N), jf(N, N);
    for (std::size_t s = 0; s + 1 < bp.size(); ++s) {
        const double mid = 0.5 * (bp[s] + bp[s + 1]);
        const double halves[2][2] = {{bp[s], mid}, {mid, bp[s + 1]}};
        double indicator = 0.0;
        for (const auto& half : halves) {
            const double lo = half[0];
            const double hi = half[1];
            if (!(hi > lo)) continue;
            q_lo.setZero();
            q_hi.setZero();
            sys.add_q(eval_curve(curve, lo), q_lo, nullptr);
            sys.add_q(eval_curve(curve, hi), q_hi, nullptr);
            Eigen::VectorXd r = q_hi - q_lo;
            for (const auto& node : quadrature_nodes(gs.space(), lo, hi, gs.quadrature_points(), gs.breaks())) {
                f.setZero();
                sys.add_f(eval_curve(curve, node.t), f, nullptr);
                r += node.weight * (f - sys.eval_s(node.t));
            }
            const Eigen::VectorXd xm = eval_curve(curve, 0.5 * (lo + hi));
            Eigen::VectorXd qm = Eigen::VectorXd::Zero(N);
            Eigen::VectorXd fm = Eigen::VectorXd::Zero(N);
            jq.setZero();
            jf.setZero();
            sys.add_q(xm, qm, &jq);
            sys.add_f(xm, fm, &jf);
            const Eigen::VectorXd rs =
                (jq.cwiseAbs() + (hi - lo) * jf.cwiseAbs()) * scale;
            const Eigen::VectorXd& dyn = gs.dynamic_rows();
            r = dyn.cwiseProduct(r) +
                (hi - lo) * (Eigen::VectorXd::Ones(N) - dyn).cwiseProduct(fm - sys.eval_s(0.5 * (lo + hi)));
            for (Eigen::Index a = 0; a < N; ++a) {
                const double denom = std::max(rs(a), std::numeric_limits<double>::min());
                indicator = std::max(indicator, std::abs(r(a)) / denom);
            }
        }
        plan.span_indicators.push_back(indicator);
    }

    const double peak = plan.max_indicator();
    plan.flags.resize(plan.span_indicators.size());
    for (std::size_t s = 0; s < plan.flags.size(); ++s) {
        const double ind = plan.span_indicators[s];
        plan.flags[s] = ind > tol && ind >= refine_fraction * peak && bp[s + 1] - bp[s] >= 2.0 * h_min;
    }
    return plan;
}

}  // namespace wavesim
