#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace wavesim {

/// Evaluation point outside the domain of a space, waveform table or result.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Invalid argument (bad order, non-nested spaces, multiplicity overflow, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Netlist syntax error with 1-based source location.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, int line, int column)
        : std::runtime_error("line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ": " + message),
          line_(line), column_(column) {}

    [[nodiscard]] int line() const noexcept { return line_; }
    [[nodiscard]] int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

/// Netlist is syntactically fine but cannot be turned into a circuit.
class ElaborationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite value, division by zero or similar during model evaluation.
class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Nonlinear solver gave up. Carries the last iterate for diagnostics.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& message, std::vector<double> last_iterate,
                     double residual_norm)
        : std::runtime_error(message),
          last_iterate_(std::move(last_iterate)),
          residual_norm_(residual_norm) {}

    [[nodiscard]] const std::vector<double>& last_iterate() const noexcept {
        return last_iterate_;
    }
    [[nodiscard]] double residual_norm() const noexcept { return residual_norm_; }

private:
    std::vector<double> last_iterate_;
    double residual_norm_;
};

/// File could not be read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace wavesim
