#pragma once

// Expression trees for behavioral sources: literals, v(node), + - * /,
// unary minus and sin/cos/exp/tanh/pow. Values and exact partial
// derivatives are computed by forward accumulation over the tree.

#include "wavesim/errors.hpp"

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace wavesim {

enum class ExprOp { Literal, Var, Add, Sub, Mul, Div, Neg, Sin, Cos, Exp, Tanh, Pow };

inline constexpr int kMaxExprDepth = 64;

struct ExprNode {
    ExprOp op = ExprOp::Literal;
    double value = 0.0;   ///< Literal
    int slot = -1;        ///< Var: index into Expr::variables()
    int lhs = -1;
    int rhs = -1;
};

/// Flat expression tree. Children always precede their parents in `nodes`,
/// the root is the last node.
class Expr {
public:
    Expr() = default;

    int add_literal(double v) { return push({ExprOp::Literal, v, -1, -1, -1}); }

    int add_var(const std::string& node_name) {
        int slot = -1;
        for (std::size_t i = 0; i < variables_.size(); ++i) {
            if (variables_[i] == node_name) slot = static_cast<int>(i);
        }
        if (slot < 0) {
            slot = static_cast<int>(variables_.size());
            variables_.push_back(node_name);
        }
        return push({ExprOp::Var, 0.0, slot, -1, -1});
    }

    int add_unary(ExprOp op, int arg) { return push({op, 0.0, -1, arg, -1}); }
    int add_binary(ExprOp op, int lhs, int rhs) { return push({op, 0.0, -1, lhs, rhs}); }

    [[nodiscard]] const std::vector<ExprNode>& nodes() const noexcept { return nodes_; }
    /// Referenced node names in order of first appearance.
    [[nodiscard]] const std::vector<std::string>& variables() const noexcept { return variables_; }
    [[nodiscard]] bool empty() const noexcept { return nodes_.empty(); }
    [[nodiscard]] int root() const noexcept { return static_cast<int>(nodes_.size()) - 1; }

    [[nodiscard]] int depth() const {
        std::vector<int> d(nodes_.size(), 1);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            if (n.lhs >= 0) d[i] = std::max(d[i], d[static_cast<std::size_t>(n.lhs)] + 1);
            if (n.rhs >= 0) d[i] = std::max(d[i], d[static_cast<std::size_t>(n.rhs)] + 1);
        }
        return d.empty() ? 0 : d.back();
    }

    [[nodiscard]] std::string to_string() const { return empty() ? "" : to_string(root()); }

    [[nodiscard]] std::string to_string(int index) const {
        const auto& n = nodes_[static_cast<std::size_t>(index)];
        auto bin = [&](const char* sym) {
            return "(" + to_string(n.lhs) + " " + sym + " " + to_string(n.rhs) + ")";
        };
        auto fn = [&](const char* name) { return std::string(name) + "(" + to_string(n.lhs) + ")"; };
        switch (n.op) {
            case ExprOp::Literal: {
                std::ostringstream os;
                os.precision(17);
                os << n.value;
                return os.str();
            }
            case ExprOp::Var: return "v(" + variables_[static_cast<std::size_t>(n.slot)] + ")";
            case ExprOp::Add: return bin("+");
            case ExprOp::Sub: return bin("-");
            case ExprOp::Mul: return bin("*");
            case ExprOp::Div: return bin("/");
            case ExprOp::Neg: return "-" + to_string(n.lhs);
            case ExprOp::Sin: return fn("sin");
            case ExprOp::Cos: return fn("cos");
            case ExprOp::Exp: return fn("exp");
            case ExprOp::Tanh: return fn("tanh");
            case ExprOp::Pow:
                return "pow(" + to_string(n.lhs) + ", " + to_string(n.rhs) + ")";
        }
        return "?";
    }

private:
    int push(ExprNode n) {
        nodes_.push_back(n);
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<ExprNode> nodes_;
    std::vector<std::string> variables_;
};

struct ExprValue {
    double value = 0.0;
    std::vector<double> partials;  ///< d value / d variables()[k]
};

namespace detail {

inline void check_finite(const Expr& e, int index, double v) {
    if (!std::isfinite(v)) {
        throw EvalError("non-finite result in subexpression " + e.to_string(index));
    }
}

}  // namespace detail

/// Value and exact partials; `values[k]` is the voltage of variables()[k].
inline ExprValue expr_partials(const Expr& e, const std::vector<double>& values) {
    const auto& nodes = e.nodes();
    const std::size_t nv = e.variables().size();
    if (values.size() != nv) {
        throw ArgumentError("expression expects " + std::to_string(nv) + " node values, got " +
                            std::to_string(values.size()));
    }
    std::vector<double> val(nodes.size());
    std::vector<double> grad(nodes.size() * nv, 0.0);
    auto g = [&](int node) { return grad.begin() + static_cast<std::ptrdiff_t>(node) * static_cast<std::ptrdiff_t>(nv); };

    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        const int self = static_cast<int>(i);
        auto gi = g(self);
        const double a = n.lhs >= 0 ? val[static_cast<std::size_t>(n.lhs)] : 0.0;
        const double b = n.rhs >= 0 ? val[static_cast<std::size_t>(n.rhs)] : 0.0;
        auto ga = n.lhs >= 0 ? g(n.lhs) : gi;
        auto gb = n.rhs >= 0 ? g(n.rhs) : gi;
        double v = 0.0;
        switch (n.op) {
            case ExprOp::Literal: v = n.value; break;
            case ExprOp::Var:
                v = values[static_cast<std::size_t>(n.slot)];
                gi[n.slot] = 1.0;
                break;
            case ExprOp::Add:
                v = a + b;
                for (std::size_t k = 0; k < nv; ++k) gi[k] = ga[k] + gb[k];
                break;
            case ExprOp::Sub:
                v = a - b;
                for (std::size_t k = 0; k < nv; ++k) gi[k] = ga[k] - gb[k];
                break;
            case ExprOp::Mul:
                v = a * b;
                for (std::size_t k = 0; k < nv; ++k) gi[k] = ga[k] * b + a * gb[k];
                break;
            case ExprOp::Div:
                if (b == 0.0) throw EvalError("division by zero in subexpression " + e.to_string(self));
                v = a / b;
                for (std::size_t k = 0; k < nv; ++k) gi[k] = (ga[k] - v * gb[k]) / b;
                break;
            case ExprOp::Neg:
                v = -a;
                for (std::size_t k = 0; k < nv; ++k) gi[k] = -ga[k];
                break;
            case ExprOp::Sin: {
                v = std::sin(a);
                const double d = std::cos(a);
                for (std::size_t k = 0; k < nv; ++k) gi[k] = d * ga[k];
                break;
            }
            case ExprOp::Cos: {
                v = std::cos(a);
                const double d = -std::sin(a);
                for (std::size_t k = 0; k < nv; ++k) gi[k] = d * ga[k];
                break;
            }
            case ExprOp::Exp:
                v = std::exp(a);
                for (std::size_t k = 0; k < nv; ++k) gi[k] = v * ga[k];
                break;
            case ExprOp::Tanh: {
                v = std::tanh(a);
                const double d = 1.0 - v * v;
                for (std::size_t k = 0; k < nv; ++k) gi[k] = d * ga[k];
                break;
            }
            case ExprOp::Pow: {
                v = std::pow(a, b);
                bool exponent_varies = false;
                for (std::size_t k = 0; k < nv; ++k) exponent_varies |= gb[k] != 0.0;
                const double da = (b == 0.0) ? 0.0 : b * std::pow(a, b - 1.0);
                const double db = exponent_varies ? v * std::log(a) : 0.0;
                if (exponent_varies && !(a > 0.0)) {
                    throw EvalError("pow with non-positive base and variable exponent in " +
                                    e.to_string(self));
                }
                for (std::size_t k = 0; k < nv; ++k) {
                    gi[k] = (ga[k] != 0.0 ? da * ga[k] : 0.0) + (gb[k] != 0.0 ? db * gb[k] : 0.0);
                }
                break;
            }
        }
        detail::check_finite(e, self, v);
        for (std::size_t k = 0; k < nv; ++k) detail::check_finite(e, self, gi[k]);
        val[i] = v;
    }
    ExprValue out;
    out.value = val.empty() ? 0.0 : val.back();
    if (!val.empty()) out.partials.assign(g(e.root()), g(e.root()) + static_cast<std::ptrdiff_t>(nv));
    return out;
}

inline double eval_expr(const Expr& e, const std::vector<double>& values) {
    return expr_partials(e, values).value;
}

}  // namespace wavesim
