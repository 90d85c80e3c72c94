#ifndef DCI_CHOLESKY_HPP_
#define DCI_CHOLESKY_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dci {

/// Thrown when a matrix that must be positive definite is not.
class NotPositiveDefinite : public std::runtime_error {
public:
  NotPositiveDefinite(std::size_t pivot, double value)
      : std::runtime_error("matrix is not positive definite: pivot " + std::to_string(pivot) +
                           " has value " + std::to_string(value)),
        pivot_(pivot), value_(value) {}
  std::size_t pivot() const { return pivot_; }
  double value() const { return value_; }

private:
  std::size_t pivot_;
  double value_;
};

/*
 * Cholesky factor L Lᵀ = A[S, S] of a principal submatrix of a fixed
 * symmetric matrix A, where the index set S can grow (append) and shrink
 * (remove) at O(|S|²) cost per change. Used by the active-set QP solver
 * to keep the free-variable block factored across working-set changes.
 */
class UpdatableCholesky {
public:
  explicit UpdatableCholesky(const Eigen::MatrixXd &a) : a_(&a), l_(a.rows(), a.rows()) {}

  std::size_t size() const { return index_.size(); }
  const std::vector<std::size_t> &indices() const { return index_; }

  /// Add row/column `j` of A at the end of the factored block.
  void append(std::size_t j) {
    const auto k = static_cast<Eigen::Index>(index_.size());
    Eigen::VectorXd col(k);
    for (Eigen::Index r = 0; r < k; ++r)
      col(r) = (*a_)(static_cast<Eigen::Index>(index_[static_cast<std::size_t>(r)]),
                     static_cast<Eigen::Index>(j));
    if (k > 0)
      l_.topLeftCorner(k, k).triangularView<Eigen::Lower>().solveInPlace(col);
    const double diag2 = (*a_)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) -
                         (k > 0 ? col.squaredNorm() : 0.0);
    const double floor = 1e-14 * std::abs((*a_)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)));
    if (!(diag2 > floor))
      throw NotPositiveDefinite(j, diag2);
    if (k > 0)
      l_.block(k, 0, 1, k) = col.transpose();
    l_(k, k) = std::sqrt(diag2);
    index_.push_back(j);
  }

  /// Remove the entry at position `pos` of indices().
  void remove_at(std::size_t pos) {
    const auto k = static_cast<Eigen::Index>(index_.size());
    const auto p = static_cast<Eigen::Index>(pos);
    if (p >= k)
      throw std::out_of_range("UpdatableCholesky::remove_at");
    const Eigen::Index tail = k - p - 1;
    if (tail > 0) {
      // Column p below the diagonal becomes a rank-one update of the trailing block.
      Eigen::VectorXd v = l_.block(p + 1, p, tail, 1);
      // Shift rows/cols up-left by one.
      for (Eigen::Index r = p + 1; r < k; ++r) {
        for (Eigen::Index c = 0; c < p; ++c)
          l_(r - 1, c) = l_(r, c);
        for (Eigen::Index c = p + 1; c <= r; ++c)
          l_(r - 1, c - 1) = l_(r, c);
      }
      rank_one_update(p, tail, v);
    }
    for (Eigen::Index c = 0; c < k; ++c)
      l_(k - 1, c) = 0.0;
    index_.erase(index_.begin() + static_cast<std::ptrdiff_t>(pos));
  }

  /// Solve A[S,S] x = rhs in place.
  void solve_in_place(Eigen::VectorXd &rhs) const {
    const auto k = static_cast<Eigen::Index>(index_.size());
    auto lk = l_.topLeftCorner(k, k);
    lk.triangularView<Eigen::Lower>().solveInPlace(rhs);
    lk.transpose().triangularView<Eigen::Upper>().solveInPlace(rhs);
  }

private:
  // L22 L22ᵀ += v vᵀ for the trailing block starting at `start` of size m.
  void rank_one_update(Eigen::Index start, Eigen::Index m, Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index r = start + i;
      const double lii = l_(r, r);
      const double rr = std::hypot(lii, v(i));
      const double c = rr / lii;
      const double s = v(i) / lii;
      l_(r, r) = rr;
      for (Eigen::Index j = i + 1; j < m; ++j) {
        const Eigen::Index rj = start + j;
        l_(rj, r) = (l_(rj, r) + s * v(j)) / c;
        v(j) = c * v(j) - s * l_(rj, r);
      }
    }
  }

  const Eigen::MatrixXd *a_;
  Eigen::MatrixXd l_;
  std::vector<std::size_t> index_;
};

/// Plain Cholesky check. Returns the first failing pivot, if any.
inline std::optional<std::size_t> cholesky_failure(const Eigen::MatrixXd &a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success)
    return std::nullopt;
  // LLT does not expose the pivot; rerun a column-by-column factorisation.
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0))
      return static_cast<std::size_t>(j);
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return std::nullopt;
}

} // namespace dci

#endif // DCI_CHOLESKY_HPP_
