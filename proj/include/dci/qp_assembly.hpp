#ifndef DCI_QP_ASSEMBLY_HPP_
#define DCI_QP_ASSEMBLY_HPP_

#include "dci/core.hpp"
#include "dci/edf.hpp"
#include "dci/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dci {

/// H and b of the weight-fitting quadratic program on ℓ unit-box samples.
struct QpProblem {
  Eigen::MatrixXd h;
  Eigen::VectorXd b;

  std::size_t ell() const { return static_cast<std::size_t>(b.size()); }
};

/// A target known through its CDF in data coordinates.
struct ExactCdf {
  Cdf cdf;
  /// Optional closed form of ∫_a^b F(x) dx for one-dimensional targets.
  std::function<double(double, double)> integral_1d;
  std::string name = "exact";
};

/// Either an evaluable CDF or m observed samples (used through their EDF).
using TargetDistribution = std::variant<ExactCdf, SampleSet>;

inline bool is_empirical(const TargetDistribution &t) { return std::holds_alternative<SampleSet>(t); }

/// The target's distribution function in data coordinates.
inline Cdf target_cdf(const TargetDistribution &t) {
  if (const auto *e = std::get_if<ExactCdf>(&t))
    return e->cdf;
  return WeightedEdf::unweighted(std::get<SampleSet>(t)).as_cdf();
}

inline constexpr double kUnitBoxSlack = 1e-12;

namespace detail {

inline void check_unit_box(const SampleSet &samples, const char *who) {
  for (double v : samples.flat())
    if (v < -kUnitBoxSlack || v > 1.0 + kUnitBoxSlack)
      throw std::invalid_argument(std::string(who) + ": coordinate " + std::to_string(v) +
                                  " lies outside the unit box");
}

inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace detail

/// H_ij = (1/ℓ²) ∏_k (1 − max(q_k^i, q_k^j)).
inline Eigen::MatrixXd assemble_h(const SampleSet &unit_samples, std::size_t threads = 1) {
  detail::check_unit_box(unit_samples, "assemble_h");
  const std::size_t ell = unit_samples.size();
  const std::size_t d = unit_samples.dim();
  if (ell == 0)
    throw std::invalid_argument("assemble_h: empty sample set");
  const double scale = 1.0 / (static_cast<double>(ell) * static_cast<double>(ell));
  Eigen::MatrixXd h(static_cast<Eigen::Index>(ell), static_cast<Eigen::Index>(ell));
  parallel_for(ell, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double prod = scale;
      for (std::size_t k = 0; k < d; ++k)
        prod *= 1.0 - detail::clamp_unit(std::max(unit_samples(i, k), unit_samples(j, k)));
      h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = prod;
    }
  });
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      h(j, i) = h(i, j);
  return h;
}

/*
 * b_i = (1/(ℓ m)) Σ_j ∏_k max(0, 1 − max(q_k^i, y_k^j)),
 * the exact integral over [q^i, 1] of the target EDF. Target samples may
 * fall outside the unit box: those below contribute as if at 0 and those
 * above 1 in any coordinate contribute nothing, which is the exact
 * integral of their indicator over the box.
 */
inline Eigen::VectorXd assemble_b_empirical(const SampleSet &unit_samples,
                                            const SampleSet &unit_target) {
  if (unit_target.empty())
    throw std::invalid_argument("assemble_b_empirical: empty target sample set");
  if (unit_samples.dim() != unit_target.dim())
    throw std::invalid_argument("assemble_b_empirical: dimension mismatch");
  detail::check_unit_box(unit_samples, "assemble_b_empirical");
  const std::size_t ell = unit_samples.size();
  const std::size_t m = unit_target.size();
  const std::size_t d = unit_samples.dim();
  const double scale = 1.0 / (static_cast<double>(ell) * static_cast<double>(m));
  Eigen::VectorXd b(static_cast<Eigen::Index>(ell));

  if (d == 1) {
    // Sorted targets with suffix sums of (1 − y): b_i·ℓm = #{y ≤ q}(1 − q) + Σ_{q<y≤1}(1 − y).
    std::vector<double> y = unit_target.flat();
    std::sort(y.begin(), y.end());
    std::vector<double> suffix(m + 1, 0.0);
    for (std::size_t j = m; j-- > 0;)
      suffix[j] = suffix[j + 1] + std::max(0.0, 1.0 - y[j]);
    for (std::size_t i = 0; i < ell; ++i) {
      const double q = detail::clamp_unit(unit_samples(i, 0));
      const auto below = static_cast<std::size_t>(std::upper_bound(y.begin(), y.end(), q) - y.begin());
      b(static_cast<Eigen::Index>(i)) =
          scale * (static_cast<double>(below) * (1.0 - q) + suffix[below]);
    }
    return b;
  }

  for (std::size_t i = 0; i < ell; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k)
        prod *= std::max(0.0, 1.0 - std::max(detail::clamp_unit(unit_samples(i, k)), unit_target(j, k)));
      acc += prod;
    }
    b(static_cast<Eigen::Index>(i)) = scale * acc;
  }
  return b;
}

/// Gauss–Legendre nodes and weights on [0, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussLegendre(std::size_t count) : nodes(count), weights(count) {
    if (count < 1)
      throw std::invalid_argument("GaussLegendre: need at least one node");
    const std::size_t half = (count + 1) / 2;
    const double n = static_cast<double>(count);
    for (std::size_t i = 0; i < half; ++i) {
      double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1.0, p1 = 0.0;
        for (std::size_t j = 0; j < count; ++j) {
          const double p2 = p1;
          p1 = p0;
          const double jj = static_cast<double>(j);
          p0 = ((2.0 * jj + 1.0) * z * p1 - jj * p2) / (jj + 1.0);
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double z1 = z;
        z = z1 - p0 / dp;
        if (std::abs(z - z1) < 1e-15)
          break;
      }
      const double w = 2.0 / ((1.0 - z * z) * dp * dp);
      // Map from [-1, 1] to [0, 1].
      nodes[i] = 0.5 * (1.0 - z);
      nodes[count - 1 - i] = 0.5 * (1.0 + z);
      weights[i] = 0.5 * w;
      weights[count - 1 - i] = 0.5 * w;
    }
  }
};

inline constexpr std::size_t kDefaultQuadPoints = 64;

/// b_i ≈ (1/ℓ) ∫_{[q^i, 1]} F, F given on the unit box, by tensor Gauss–Legendre.
inline Eigen::VectorXd assemble_b_exact(const SampleSet &unit_samples, const Cdf &unit_cdf,
                                        std::size_t quad_points_per_dim = kDefaultQuadPoints) {
  if (!unit_cdf)
    throw std::invalid_argument("assemble_b_exact: target CDF is not evaluable");
  if (quad_points_per_dim < 2)
    throw std::invalid_argument("assemble_b_exact: need at least 2 quadrature points per dimension");
  detail::check_unit_box(unit_samples, "assemble_b_exact");
  const std::size_t ell = unit_samples.size();
  const std::size_t d = unit_samples.dim();
  const GaussLegendre gl(quad_points_per_dim);
  Eigen::VectorXd b(static_cast<Eigen::Index>(ell));
  std::vector<std::size_t> idx(d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < ell; ++i) {
    double vol = 1.0;
    for (std::size_t k = 0; k < d; ++k)
      vol *= 1.0 - detail::clamp_unit(unit_samples(i, k));
    if (vol == 0.0) {
      b(static_cast<Eigen::Index>(i)) = 0.0;
      continue;
    }
    std::fill(idx.begin(), idx.end(), 0);
    double acc = 0.0;
    while (true) {
      double w = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double lo = detail::clamp_unit(unit_samples(i, k));
        x[k] = lo + (1.0 - lo) * gl.nodes[idx[k]];
        w *= gl.weights[idx[k]];
      }
      acc += w * unit_cdf(std::span<const double>(x));
      std::size_t k = 0;
      while (k < d && ++idx[k] == quad_points_per_dim)
        idx[k++] = 0;
      if (k == d)
        break;
    }
    b(static_cast<Eigen::Index>(i)) = acc * vol / static_cast<double>(ell);
  }
  return b;
}

/*
 * b for a target given in data coordinates, with samples already scaled
 * into the unit box by `box`. Empirical targets are scaled with the same
 * box; exact one-dimensional targets with a closed-form integral skip
 * quadrature.
 */
inline Eigen::VectorXd assemble_b(const SampleSet &unit_samples, const TargetDistribution &target,
                                  const BoxScaler &box,
                                  std::size_t quad_points_per_dim = kDefaultQuadPoints) {
  if (unit_samples.dim() != box.dim())
    throw std::invalid_argument("assemble_b: dimension mismatch between samples and box");
  if (const auto *samples = std::get_if<SampleSet>(&target))
    return assemble_b_empirical(unit_samples, scale_to_unit(*samples, box));

  const auto &exact = std::get<ExactCdf>(target);
  const std::size_t ell = unit_samples.size();
  if (box.dim() == 1 && exact.integral_1d) {
    detail::check_unit_box(unit_samples, "assemble_b");
    Eigen::VectorXd b(static_cast<Eigen::Index>(ell));
    const double upper = box.upper()[0];
    for (std::size_t i = 0; i < ell; ++i) {
      const double lo = box.unscale(0, detail::clamp_unit(unit_samples(i, 0)));
      b(static_cast<Eigen::Index>(i)) =
          exact.integral_1d(lo, upper) / box.width(0) / static_cast<double>(ell);
    }
    return b;
  }
  Cdf unit_cdf = [&box, cdf = exact.cdf](std::span<const double> s) {
    const auto x = box.unscale(s);
    return cdf(std::span<const double>(x));
  };
  return assemble_b_exact(unit_samples, unit_cdf, quad_points_per_dim);
}

/// Result of perturbing coincident points apart.
struct JitterReport {
  SampleSet samples;
  std::size_t perturbed = 0;
};

inline constexpr double kDuplicateJitter = 1e-10;

/*
 * Duplicate unit-box points make H singular. Every point that coincides
 * with an earlier one gets a uniform perturbation of magnitude at most
 * kDuplicateJitter per coordinate (clamped to the box), repeated until all
 * points are distinct.
 */
inline JitterReport jitter_duplicates(const SampleSet &unit_samples, std::uint64_t seed = 0) {
  const std::size_t n = unit_samples.size();
  const std::size_t d = unit_samples.dim();
  std::vector<double> flat = unit_samples.flat();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> jitter(-kDuplicateJitter, kDuplicateJitter);
  std::size_t perturbed = 0;
  for (int pass = 0; pass < 64; ++pass) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(flat.begin() + static_cast<std::ptrdiff_t>(a * d),
                                          flat.begin() + static_cast<std::ptrdiff_t>((a + 1) * d),
                                          flat.begin() + static_cast<std::ptrdiff_t>(b * d),
                                          flat.begin() + static_cast<std::ptrdiff_t>((b + 1) * d));
    };
    std::stable_sort(order.begin(), order.end(), less);
    bool changed = false;
    for (std::size_t r = 1; r < n; ++r) {
      const std::size_t a = order[r - 1], b = order[r];
      if (!less(a, b) && !less(b, a)) {
        const std::size_t victim = std::max(a, b);
        for (std::size_t k = 0; k < d; ++k)
          flat[victim * d + k] = std::clamp(flat[victim * d + k] + jitter(gen), 0.0, 1.0);
        ++perturbed;
        changed = true;
      }
    }
    if (!changed)
      break;
  }
  return {SampleSet(d, std::move(flat), unit_samples.labels()), perturbed};
}

inline constexpr double kQpBoxMargin = 1e-3;

/*
 * A sample on the upper face of the unit box has a zero row in H, which
 * leaves H singular even for distinct points. Boxes fitted for the QP are
 * therefore extended on the upper side by kQpBoxMargin times their width.
 */
inline BoxScaler with_upper_margin(const BoxScaler &box, double margin = kQpBoxMargin) {
  std::vector<double> hi = box.upper();
  for (std::size_t k = 0; k < box.dim(); ++k)
    hi[k] += margin * box.width(k);
  return BoxScaler(box.lower(), std::move(hi), box.widened_dimensions());
}

/// Bounding box of the samples with the upper margin applied.
inline BoxScaler qp_box(const SampleSet &samples) { return with_upper_margin(fit_box(samples)); }

/// Scale ℓ data-space samples into `box`, perturb duplicates and assemble H and b.
struct AssembledProblem {
  QpProblem problem;
  SampleSet unit_samples;
  std::size_t jittered = 0;
};

inline AssembledProblem assemble_problem(const SampleSet &samples, const TargetDistribution &target,
                                         const BoxScaler &box,
                                         std::size_t quad_points_per_dim = kDefaultQuadPoints,
                                         std::size_t threads = 1) {
  SampleSet unit = scale_to_unit(samples, box);
  for (double v : unit.flat())
    if (v < -kUnitBoxSlack || v > 1.0 + kUnitBoxSlack)
      throw std::invalid_argument("assemble_problem: samples must lie inside the scaling box");
  auto jittered = jitter_duplicates(unit);
  AssembledProblem out;
  out.unit_samples = std::move(jittered.samples);
  out.jittered = jittered.perturbed;
  out.problem.h = assemble_h(out.unit_samples, threads);
  out.problem.b = assemble_b(out.unit_samples, target, box, quad_points_per_dim);
  return out;
}

} // namespace dci

#endif // DCI_QP_ASSEMBLY_HPP_
