#ifndef DCI_EDF_HPP_
#define DCI_EDF_HPP_

#include "dci/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace dci {

/// A distribution function evaluated at a point of R^d.
using Cdf = std::function<double(std::span<const double>)>;

/// Fraction of samples component-wise ≤ the query point.
inline double edf_eval(const SampleSet &samples, std::span<const double> point) {
  if (point.size() != samples.dim())
    throw std::invalid_argument("edf_eval: dimension mismatch");
  if (samples.empty())
    throw std::invalid_argument("edf_eval: empty sample set");
  std::size_t count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (dominated_by(samples.point(i), point))
      ++count;
  return static_cast<double>(count) / static_cast<double>(samples.size());
}

/*
 * Weighted step distribution function
 *
 *   MeanOne:  F(x) = (1/n) Σ w_i I(q^i ⪯ x)
 *   SumOne:   F(x) =       Σ u_i I(q^i ⪯ x)
 *
 * One-dimensional instances keep a sorted copy of the support with
 * cumulative weights so evaluation is a binary search.
 */
class WeightedEdf {
public:
  WeightedEdf(SampleSet samples, WeightVector weights)
      : samples_(std::move(samples)), weights_(std::move(weights)) {
    if (samples_.size() != weights_.size())
      throw std::invalid_argument("WeightedEdf: sample and weight counts differ");
    if (samples_.dim() == 1)
      build_sorted();
  }

  /// Plain EDF: all weights equal.
  static WeightedEdf unweighted(SampleSet samples) {
    const auto n = samples.size();
    return WeightedEdf(std::move(samples), WeightVector::uniform(n, Normalization::MeanOne));
  }

  const SampleSet &samples() const { return samples_; }
  const WeightVector &weights() const { return weights_; }
  std::size_t dim() const { return samples_.dim(); }

  double operator()(std::span<const double> x) const {
    if (x.size() != samples_.dim())
      throw std::invalid_argument("WeightedEdf: dimension mismatch");
    if (samples_.dim() == 1) {
      auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x[0]);
      const auto count = static_cast<std::size_t>(it - sorted_.begin());
      return finish(count == 0 ? 0.0 : cumulative_[count - 1]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < samples_.size(); ++i)
      if (dominated_by(samples_.point(i), x))
        acc += weights_[i];
    return finish(acc);
  }

  double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }

  /// Distinct support coordinates in increasing order (d = 1 only).
  const std::vector<double> &sorted_support() const {
    if (samples_.dim() != 1)
      throw std::logic_error("WeightedEdf::sorted_support: only defined for d = 1");
    return sorted_;
  }

  Cdf as_cdf() const {
    return [self = *this](std::span<const double> x) { return self(x); };
  }

private:
  double finish(double acc) const {
    if (weights_.normalization() == Normalization::MeanOne)
      return acc / static_cast<double>(samples_.size());
    return acc;
  }

  void build_sorted() {
    const std::size_t n = samples_.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return samples_(a, 0) < samples_(b, 0);
    });
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = samples_(order[j], 0);
      acc += weights_[order[j]];
      if (!sorted_.empty() && sorted_.back() == x) {
        cumulative_.back() = acc;
      } else {
        sorted_.push_back(x);
        cumulative_.push_back(acc);
      }
    }
  }

  SampleSet samples_;
  WeightVector weights_;
  std::vector<double> sorted_;
  std::vector<double> cumulative_;
};

inline double wedf_eval(const WeightedEdf &wedf, std::span<const double> point) {
  return wedf(point);
}

inline std::size_t default_grid_per_dim(std::size_t dim) {
  if (dim == 1)
    return 512;
  if (dim == 2)
    return 128;
  return 16;
}

namespace detail {

// Calls fn(point) at the midpoint of every cell of a grid_per_dim^d grid on box.
template <typename Fn>
void for_each_midpoint(const BoxScaler &box, std::size_t grid_per_dim, Fn &&fn) {
  if (grid_per_dim < 2)
    throw std::invalid_argument("distance: grid_per_dim must be at least 2");
  const std::size_t d = box.dim();
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> x(d);
  while (true) {
    for (std::size_t k = 0; k < d; ++k)
      x[k] = box.lower()[k] + (static_cast<double>(idx[k]) + 0.5) * box.width(k) /
                                  static_cast<double>(grid_per_dim);
    fn(std::span<const double>(x));
    std::size_t k = 0;
    while (k < d && ++idx[k] == grid_per_dim)
      idx[k++] = 0;
    if (k == d)
      break;
  }
}

inline double cell_volume(const BoxScaler &box, std::size_t grid_per_dim) {
  return box.volume() / std::pow(static_cast<double>(grid_per_dim), static_cast<double>(box.dim()));
}

} // namespace detail

/// Midpoint-rule approximation of (∫_box (F − G)²)^{1/2}.
inline double l2_distance(const Cdf &f, const Cdf &g, const BoxScaler &box,
                          std::size_t grid_per_dim) {
  double acc = 0.0;
  detail::for_each_midpoint(box, grid_per_dim, [&](std::span<const double> x) {
    const double diff = f(x) - g(x);
    acc += diff * diff;
  });
  return std::sqrt(acc * detail::cell_volume(box, grid_per_dim));
}

/// Midpoint-rule approximation of ∫_box |F − G|.
inline double l1_distance(const Cdf &f, const Cdf &g, const BoxScaler &box,
                          std::size_t grid_per_dim) {
  double acc = 0.0;
  detail::for_each_midpoint(box, grid_per_dim,
                            [&](std::span<const double> x) { acc += std::abs(f(x) - g(x)); });
  return acc * detail::cell_volume(box, grid_per_dim);
}

/// Maximum of |F − G| over the grid midpoints.
inline double sup_distance(const Cdf &f, const Cdf &g, const BoxScaler &box,
                           std::size_t grid_per_dim) {
  double best = 0.0;
  detail::for_each_midpoint(box, grid_per_dim, [&](std::span<const double> x) {
    best = std::max(best, std::abs(f(x) - g(x)));
  });
  return best;
}

/*
 * Exact sup-norm in one dimension between two right-continuous monotone
 * distribution functions, at least one of which is constant between
 * consecutive `breakpoints`. The breakpoints must include every jump of
 * both functions. Both functions are compared at each breakpoint and just
 * to its left, which is where |F − G| attains its supremum on each piece.
 */
inline double sup_distance_1d(const Cdf &f, const Cdf &g, std::vector<double> breakpoints) {
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());
  double best = 0.0;
  for (double b : breakpoints) {
    const double left = std::nextafter(b, -std::numeric_limits<double>::infinity());
    best = std::max(best, std::abs(f(std::span<const double>(&b, 1)) - g(std::span<const double>(&b, 1))));
    best = std::max(best, std::abs(f(std::span<const double>(&left, 1)) -
                                   g(std::span<const double>(&left, 1))));
  }
  return best;
}

} // namespace dci

#endif // DCI_EDF_HPP_
