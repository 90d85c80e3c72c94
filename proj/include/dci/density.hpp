#ifndef DCI_DENSITY_HPP_
#define DCI_DENSITY_HPP_

#include "dci/core.hpp"
#include "dci/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dci {

enum class BandwidthRule { Scott, Silverman, Fixed };

inline std::string to_string(BandwidthRule r) {
  switch (r) {
  case BandwidthRule::Scott:
    return "scott";
  case BandwidthRule::Silverman:
    return "silverman";
  case BandwidthRule::Fixed:
    return "fixed";
  }
  return "scott";
}

inline BandwidthRule bandwidth_rule_from_string(const std::string &s) {
  if (s == "scott")
    return BandwidthRule::Scott;
  if (s == "silverman")
    return BandwidthRule::Silverman;
  if (s == "fixed")
    return BandwidthRule::Fixed;
  throw std::invalid_argument("unknown bandwidth rule '" + s + "'");
}

inline constexpr double kCovarianceFloor = 1e-12;
inline constexpr double kDensityFloor = 1e-300;

// Beyond this many bandwidths exp(−z²/2) underflows to exactly zero.
inline constexpr double kUnderflowBandwidths = 39.0;

enum class KdeEvaluation { Auto, Exact, Binned };

/*
 * Gaussian kernel density estimate with a full bandwidth matrix H:
 *   π(x) = (1/n) Σ_i N(x; x_i, H).
 * Immutable after construction.
 */
class KdeModel {
public:
  KdeModel(SampleSet points, Eigen::MatrixXd bandwidth, BandwidthRule rule)
      : points_(std::move(points)), bandwidth_(std::move(bandwidth)), rule_(rule) {
    const auto d = static_cast<Eigen::Index>(points_.dim());
    if (points_.empty() || bandwidth_.rows() != d || bandwidth_.cols() != d)
      throw std::invalid_argument("KdeModel: bandwidth matrix does not match the sample dimension");
    Eigen::LLT<Eigen::MatrixXd> llt(bandwidth_);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("KdeModel: bandwidth matrix is not positive definite");
    lower_ = llt.matrixL();
    double log_det = 0.0;
    for (Eigen::Index k = 0; k < d; ++k)
      log_det += 2.0 * std::log(lower_(k, k));
    log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det) -
                std::log(static_cast<double>(points_.size()));
    if (d == 1) {
      h_ = lower_(0, 0);
      sorted_ = points_.flat();
      std::sort(sorted_.begin(), sorted_.end());
    }
  }

  const SampleSet &points() const { return points_; }
  const Eigen::MatrixXd &bandwidth_matrix() const { return bandwidth_; }
  BandwidthRule rule() const { return rule_; }
  std::size_t dim() const { return points_.dim(); }

  double density(std::span<const double> x) const {
    if (x.size() != dim())
      throw std::invalid_argument("KdeModel::density: dimension mismatch");
    if (dim() == 1)
      return density_1d(x[0]);
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::VectorXd diff(d);
    double acc = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      for (Eigen::Index k = 0; k < d; ++k)
        diff(k) = x[static_cast<std::size_t>(k)] - points_(i, static_cast<std::size_t>(k));
      lower_.triangularView<Eigen::Lower>().solveInPlace(diff);
      acc += std::exp(-0.5 * diff.squaredNorm());
    }
    return acc * std::exp(log_norm_);
  }

  double density(double x) const { return density(std::span<const double>(&x, 1)); }

  /*
   * Density at many points. One-dimensional models with many samples and
   * queries use linear binning on a fine grid with the kernel truncated at
   * 8 bandwidths and linear interpolation between grid nodes; queries off
   * the grid are evaluated exactly.
   */
  std::vector<double> evaluate(const SampleSet &queries, std::size_t threads = 1,
                               KdeEvaluation mode = KdeEvaluation::Auto) const {
    if (queries.dim() != dim())
      throw std::invalid_argument("KdeModel::evaluate: dimension mismatch");
    const double work = static_cast<double>(queries.size()) * static_cast<double>(points_.size());
    const bool binned = dim() == 1 && (mode == KdeEvaluation::Binned || (mode == KdeEvaluation::Auto && work > 5e7));
    std::vector<double> out(queries.size());
    if (!binned) {
      parallel_for(queries.size(), threads, [&](std::size_t i) { out[i] = density(queries.point(i)); });
      return out;
    }
    const BinnedGrid grid = binned_grid(threads);
    parallel_for(queries.size(), threads, [&](std::size_t i) {
      const double x = queries(i, 0);
      const double pos = (x - grid.lower) / grid.spacing;
      if (!(pos >= 0.0) || pos >= static_cast<double>(grid.values.size() - 1)) {
        out[i] = density_1d(x);
        return;
      }
      const auto j = static_cast<std::size_t>(pos);
      const double t = pos - static_cast<double>(j);
      out[i] = (1.0 - t) * grid.values[j] + t * grid.values[j + 1];
    });
    return out;
  }

private:
  struct BinnedGrid {
    double lower = 0.0;
    double spacing = 1.0;
    std::vector<double> values;
  };

  static constexpr std::size_t kGridNodes = 16384;
  static constexpr double kTruncation = 8.0;

  double density_1d(double x) const {
    const double reach = kUnderflowBandwidths * h_;
    auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), x - reach);
    auto hi = std::upper_bound(lo, sorted_.end(), x + reach);
    double acc = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double z = (x - *it) / h_;
      acc += std::exp(-0.5 * z * z);
    }
    return acc * std::exp(log_norm_);
  }

  BinnedGrid binned_grid(std::size_t threads) const {
    BinnedGrid g;
    g.lower = sorted_.front() - kTruncation * h_;
    const double upper = sorted_.back() + kTruncation * h_;
    const std::size_t nodes = kGridNodes;
    g.spacing = (upper - g.lower) / static_cast<double>(nodes - 1);
    std::vector<double> counts(nodes, 0.0);
    for (double x : sorted_) {
      const double pos = (x - g.lower) / g.spacing;
      const auto j = std::min(static_cast<std::size_t>(pos), nodes - 2);
      const double t = pos - static_cast<double>(j);
      counts[j] += 1.0 - t;
      counts[j + 1] += t;
    }
    const auto reach = static_cast<std::size_t>(std::ceil(kTruncation * h_ / g.spacing));
    std::vector<double> kernel(reach + 1);
    for (std::size_t r = 0; r <= reach; ++r) {
      const double z = static_cast<double>(r) * g.spacing / h_;
      kernel[r] = std::exp(-0.5 * z * z);
    }
    const double scale = std::exp(log_norm_);
    g.values.assign(nodes, 0.0);
    parallel_for(nodes, threads, [&](std::size_t i) {
      const std::size_t from = i > reach ? i - reach : 0;
      const std::size_t to = std::min(nodes - 1, i + reach);
      double acc = 0.0;
      for (std::size_t j = from; j <= to; ++j)
        acc += counts[j] * kernel[i > j ? i - j : j - i];
      g.values[i] = acc * scale;
    });
    return g;
  }

  SampleSet points_;
  Eigen::MatrixXd bandwidth_;
  BandwidthRule rule_;
  Eigen::MatrixXd lower_;
  double log_norm_ = 0.0;
  double h_ = 0.0;
  std::vector<double> sorted_;
};

/// Sample covariance (n − 1 denominator).
inline Eigen::MatrixXd sample_covariance(const SampleSet &s) {
  const auto d = static_cast<Eigen::Index>(s.dim());
  const auto n = static_cast<double>(s.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (Eigen::Index k = 0; k < d; ++k)
      mean(k) += s(i, static_cast<std::size_t>(k));
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < s.size(); ++i) {
    Eigen::VectorXd diff(d);
    for (Eigen::Index k = 0; k < d; ++k)
      diff(k) = s(i, static_cast<std::size_t>(k)) - mean(k);
    cov += diff * diff.transpose();
  }
  return cov / (n - 1.0);
}

/*
 * Gaussian KDE with bandwidth matrix H = f²·Σ, Σ the sample covariance:
 *   Scott      f = n^(−1/(d+4))
 *   Silverman  f = (n(d+2)/4)^(−1/(d+4))
 *   Fixed      H = h²·I
 * A singular covariance falls back to its diagonal with variances floored
 * at kCovarianceFloor.
 */
inline KdeModel kde_fit(const SampleSet &samples, BandwidthRule rule = BandwidthRule::Scott,
                        double fixed_bandwidth = 0.0) {
  if (samples.size() < 2)
    throw std::invalid_argument("kde_fit: need at least 2 samples");
  const auto d = static_cast<Eigen::Index>(samples.dim());
  if (rule == BandwidthRule::Fixed) {
    if (!(fixed_bandwidth > 0.0))
      throw std::invalid_argument("kde_fit: fixed bandwidth must be positive");
    return KdeModel(samples, fixed_bandwidth * fixed_bandwidth * Eigen::MatrixXd::Identity(d, d), rule);
  }
  Eigen::MatrixXd cov = sample_covariance(samples);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double max_diag = cov.diagonal().maxCoeff();
  bool singular = llt.info() != Eigen::Success;
  if (!singular)
    for (Eigen::Index k = 0; k < d; ++k)
      singular = singular || !(llt.matrixL()(k, k) * llt.matrixL()(k, k) > 1e-14 * std::max(max_diag, 0.0));
  if (singular) {
    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index k = 0; k < d; ++k)
      diag(k, k) = std::max(cov(k, k), kCovarianceFloor);
    cov = diag;
  }
  const double n = static_cast<double>(samples.size());
  const double dd = static_cast<double>(d);
  const double factor = rule == BandwidthRule::Scott ? std::pow(n, -1.0 / (dd + 4.0))
                                                     : std::pow(n * (dd + 2.0) / 4.0, -1.0 / (dd + 4.0));
  return KdeModel(samples, factor * factor * cov, rule);
}

struct RatioValue {
  double value = 0.0;
  bool violation = false;
};

/// r = π_obs(q)/π_pred(q); a predicted density below kDensityFloor gives +∞ and a violation flag.
inline RatioValue ratio_from_densities(double observed, double predicted) {
  if (!(predicted >= kDensityFloor))
    return {std::numeric_limits<double>::infinity(), true};
  return {observed / predicted, false};
}

inline RatioValue density_ratio(const KdeModel &observed, const KdeModel &predicted, std::span<const double> q) {
  return ratio_from_densities(observed.density(q), predicted.density(q));
}

inline RatioValue density_ratio(const KdeModel &observed, const KdeModel &predicted, double q) {
  return density_ratio(observed, predicted, std::span<const double>(&q, 1));
}

/// E_init(r) estimated by the sample mean.
inline double diagnostic(const std::vector<double> &r) {
  if (r.empty())
    throw std::invalid_argument("diagnostic: no ratio values");
  double acc = 0.0;
  for (double v : r)
    acc += v;
  return acc / static_cast<double>(r.size());
}

struct RejectionResult {
  SampleSet accepted;
  std::vector<std::size_t> indices;
};

/// Accept sample i with probability r_i / max r.
inline RejectionResult rejection_sample(const SampleSet &samples, const std::vector<double> &r, std::uint64_t seed) {
  if (r.size() != samples.size())
    throw std::invalid_argument("rejection_sample: ratio count does not match sample count");
  double max_r = 0.0;
  for (double v : r) {
    if (!std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("rejection_sample: ratios must be finite and nonnegative");
    max_r = std::max(max_r, v);
  }
  if (!(max_r > 0.0))
    throw std::invalid_argument("rejection_sample: all ratios are zero");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RejectionResult out;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (u(gen) < r[i] / max_r)
      out.indices.push_back(i);
  out.accepted = samples.select(out.indices);
  return out;
}

struct UpdateProbability {
  /// (1/n) Σ r_i I(λ_i ∈ A)
  double unnormalized = 0.0;
  /// Σ r_i I(λ_i ∈ A) / Σ r_i
  double self_normalized = 0.0;
};

/// Closed axis-aligned box in Λ. An empty box (lower > upper somewhere) contains nothing.
struct Region {
  std::vector<double> lower;
  std::vector<double> upper;

  bool contains(std::span<const double> x) const {
    for (std::size_t k = 0; k < x.size(); ++k)
      if (!(x[k] >= lower[k] && x[k] <= upper[k]))
        return false;
    return true;
  }
};

inline UpdateProbability update_probability(const Region &region, const SampleSet &samples,
                                            const std::vector<double> &r) {
  if (r.size() != samples.size() || samples.empty())
    throw std::invalid_argument("update_probability: need one ratio per sample");
  if (region.lower.size() != samples.dim() || region.upper.size() != samples.dim())
    throw std::invalid_argument("update_probability: region dimension mismatch");
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += r[i];
    if (region.contains(samples.point(i)))
      inside += r[i];
  }
  UpdateProbability p;
  p.unnormalized = inside / static_cast<double>(samples.size());
  p.self_normalized = total > 0.0 ? inside / total : 0.0;
  return p;
}

struct DensityUpdate {
  std::vector<double> r;
  std::size_t violations = 0;
  double diagnostic = 0.0;
  BandwidthRule rule = BandwidthRule::Scott;
};

/// Density-based update: KDEs of observed and predicted data, r at every predicted sample.
inline DensityUpdate density_update(const SampleSet &predicted, const SampleSet &observed,
                                    BandwidthRule rule = BandwidthRule::Scott, double fixed_bandwidth = 0.0,
                                    std::size_t threads = 1) {
  const KdeModel obs = kde_fit(observed, rule, fixed_bandwidth);
  const KdeModel pred = kde_fit(predicted, rule, fixed_bandwidth);
  const auto num = obs.evaluate(predicted, threads);
  const auto den = pred.evaluate(predicted, threads);
  DensityUpdate out;
  out.rule = rule;
  out.r.resize(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto rv = ratio_from_densities(num[i], den[i]);
    out.r[i] = rv.value;
    out.violations += rv.violation ? 1 : 0;
  }
  out.diagnostic = diagnostic(out.r);
  return out;
}

} // namespace dci

#endif // DCI_DENSITY_HPP_
