#pragma once

// Banded LU with partial pivoting and a block-row sparse container for the
// Galerkin Jacobian. Dense work goes through Eigen.

#include "wavesim/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace wavesim {

/// Square band matrix with `lower` sub- and `upper` super-diagonals, factored
/// in place. Each row keeps `lower` extra columns on the right for pivoting fill.
class BandMatrix {
public:
    BandMatrix(std::size_t n, std::size_t lower, std::size_t upper)
        : n_(n), kl_(lower), ku_(upper), width_(2 * lower + upper + 1),
          data_(n * width_, 0.0) {}

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] std::size_t lower() const noexcept { return kl_; }
    [[nodiscard]] std::size_t upper() const noexcept { return ku_; }

    [[nodiscard]] bool in_band(std::size_t r, std::size_t c) const noexcept {
        return c + kl_ >= r && c <= r + ku_ + kl_;
    }

    double& at(std::size_t r, std::size_t c) { return data_[r * width_ + (c + kl_ - r)]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const {
        return data_[r * width_ + (c + kl_ - r)];
    }

    /// Gaussian elimination with row partial pivoting. Throws on a zero pivot.
    void factor() {
        pivots_.assign(n_, 0);
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t last_row = std::min(n_ - 1, k + kl_);
            std::size_t p = k;
            double best = std::abs(at(k, k));
            for (std::size_t r = k + 1; r <= last_row; ++r) {
                if (std::abs(at(r, k)) > best) {
                    best = std::abs(at(r, k));
                    p = r;
                }
            }
            if (!(best > 0.0) || !std::isfinite(best)) {
                throw EvalError("singular band matrix at column " + std::to_string(k));
            }
            pivots_[k] = p;
            const std::size_t last_col = std::min(n_ - 1, k + ku_ + kl_);
            if (p != k) {
                for (std::size_t c = k; c <= last_col; ++c) std::swap(at(k, c), at(p, c));
            }
            const double pivot = at(k, k);
            for (std::size_t r = k + 1; r <= last_row; ++r) {
                const double factor = at(r, k) / pivot;
                at(r, k) = factor;
                if (factor == 0.0) continue;
                for (std::size_t c = k + 1; c <= last_col; ++c) at(r, c) -= factor * at(k, c);
            }
        }
        factored_ = true;
    }

    /// Solve A x = b after factor().
    [[nodiscard]] Eigen::VectorXd solve(Eigen::VectorXd b) const {
        if (!factored_) throw ArgumentError("BandMatrix::solve called before factor()");
        for (std::size_t k = 0; k < n_; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            if (pivots_[k] != k) std::swap(b(kk), b(static_cast<Eigen::Index>(pivots_[k])));
            const std::size_t last_row = std::min(n_ - 1, k + kl_);
            for (std::size_t r = k + 1; r <= last_row; ++r) {
                b(static_cast<Eigen::Index>(r)) -= at(r, k) * b(kk);
            }
        }
        for (std::size_t k = n_; k-- > 0;) {
            const std::size_t last_col = std::min(n_ - 1, k + ku_ + kl_);
            double sum = b(static_cast<Eigen::Index>(k));
            for (std::size_t c = k + 1; c <= last_col; ++c) {
                sum -= at(k, c) * b(static_cast<Eigen::Index>(c));
            }
            b(static_cast<Eigen::Index>(k)) = sum / at(k, k);
        }
        return b;
    }

private:
    std::size_t n_;
    std::size_t kl_;
    std::size_t ku_;
    std::size_t width_;
    std::vector<double> data_;
    std::vector<std::size_t> pivots_;
    bool factored_ = false;
};

/// Square matrix of `block_rows` x `block_rows` blocks of size `block` where
/// block row l is nonzero only in block columns [first_col[l], last_col[l]].
class BlockRowMatrix {
public:
    BlockRowMatrix(std::size_t block, std::vector<std::size_t> first_col,
                   std::vector<std::size_t> last_col)
        : block_(block), first_(std::move(first_col)), last_(std::move(last_col)) {
        rows_.reserve(first_.size());
        for (std::size_t l = 0; l < first_.size(); ++l) {
            const auto width = static_cast<Eigen::Index>((last_[l] - first_[l] + 1) * block_);
            rows_.emplace_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(block_), width));
        }
    }

    [[nodiscard]] std::size_t block_size() const noexcept { return block_; }
    [[nodiscard]] std::size_t block_rows() const noexcept { return first_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return block_ * first_.size(); }
    [[nodiscard]] std::size_t first_col(std::size_t l) const { return first_[l]; }
    [[nodiscard]] std::size_t last_col(std::size_t l) const { return last_[l]; }

    /// Block (l, i); i must lie in the stored column range of row l.
    auto block(std::size_t l, std::size_t i) {
        return rows_[l].block(0, static_cast<Eigen::Index>((i - first_[l]) * block_),
                              static_cast<Eigen::Index>(block_), static_cast<Eigen::Index>(block_));
    }
    [[nodiscard]] Eigen::MatrixXd block(std::size_t l, std::size_t i) const {
        if (i < first_[l] || i > last_[l]) {
            return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(block_),
                                         static_cast<Eigen::Index>(block_));
        }
        return rows_[l].block(0, static_cast<Eigen::Index>((i - first_[l]) * block_),
                              static_cast<Eigen::Index>(block_), static_cast<Eigen::Index>(block_));
    }
    [[nodiscard]] const Eigen::MatrixXd& row(std::size_t l) const { return rows_[l]; }

    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        Eigen::VectorXd y(static_cast<Eigen::Index>(size()));
        const auto nb = static_cast<Eigen::Index>(block_);
        for (std::size_t l = 0; l < first_.size(); ++l) {
            y.segment(static_cast<Eigen::Index>(l) * nb, nb) =
                rows_[l] * x.segment(static_cast<Eigen::Index>(first_[l]) * nb, rows_[l].cols());
        }
        return y;
    }

    [[nodiscard]] Eigen::MatrixXd to_dense() const {
        const auto n = static_cast<Eigen::Index>(size());
        const auto nb = static_cast<Eigen::Index>(block_);
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t l = 0; l < first_.size(); ++l) {
            d.block(static_cast<Eigen::Index>(l) * nb, static_cast<Eigen::Index>(first_[l]) * nb, nb,
                    rows_[l].cols()) = rows_[l];
        }
        return d;
    }

    /// Scalar lower / upper bandwidth of the stored pattern.
    [[nodiscard]] std::pair<std::size_t, std::size_t> bandwidth() const {
        std::size_t kl = 0;
        std::size_t ku = 0;
        for (std::size_t l = 0; l < first_.size(); ++l) {
            const std::size_t row_lo = l * block_;
            const std::size_t row_hi = row_lo + block_ - 1;
            const std::size_t col_lo = first_[l] * block_;
            const std::size_t col_hi = (last_[l] + 1) * block_ - 1;
            if (row_hi > col_lo) kl = std::max(kl, row_hi - col_lo);
            if (col_hi > row_lo) ku = std::max(ku, col_hi - row_lo);
        }
        return {kl, ku};
    }

    [[nodiscard]] BandMatrix to_band() const {
        const auto [kl, ku] = bandwidth();
        BandMatrix band(size(), kl, ku);
        for (std::size_t l = 0; l < first_.size(); ++l) {
            for (Eigen::Index r = 0; r < rows_[l].rows(); ++r) {
                for (Eigen::Index c = 0; c < rows_[l].cols(); ++c) {
                    const double v = rows_[l](r, c);
                    if (v != 0.0) {
                        band.at(l * block_ + static_cast<std::size_t>(r),
                                first_[l] * block_ + static_cast<std::size_t>(c)) = v;
                    }
                }
            }
        }
        return band;
    }

private:
    std::size_t block_;
    std::vector<std::size_t> first_;
    std::vector<std::size_t> last_;
    std::vector<Eigen::MatrixXd> rows_;
};

/// Unknown count below which the dense LU is used instead of the band solver.
inline constexpr std::size_t kDenseSolveLimit = 2000;

/// Solve J x = rhs, picking dense partial-pivot LU for small systems and the
/// band solver otherwise. One step of iterative refinement follows: short
/// spans at source corners make J badly scaled, and the plain solve then
/// leaves residuals well above the Newton tolerance.
inline Eigen::VectorXd solve_block_system(const BlockRowMatrix& jac, const Eigen::VectorXd& rhs) {
    Eigen::VectorXd x;
    if (jac.size() <= kDenseSolveLimit) {
        const Eigen::MatrixXd dense = jac.to_dense();
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
        x = lu.solve(rhs);
        if (x.allFinite()) x += lu.solve(rhs - dense * x);
    } else {
        BandMatrix band = jac.to_band();
        band.factor();
        x = band.solve(rhs);
        if (x.allFinite()) x += band.solve(rhs - jac.apply(x));
    }
    if (!x.allFinite()) throw EvalError("linear solve produced non-finite values (singular Jacobian)");
    return x;
}

}  // namespace wavesim
