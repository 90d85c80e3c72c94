#ifndef DCI_CORE_HPP_
#define DCI_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dci {

inline constexpr const char *kVersion = "0.1.0";

/// Ordered collection of d-dimensional points, stored row-major.
///
/// Index i always refers to the same sample. All coordinates are finite.
class SampleSet {
public:
  SampleSet() = default;

  SampleSet(std::size_t dim, std::vector<double> flat,
            std::vector<std::string> labels = {})
      : dim_(dim), data_(std::move(flat)), labels_(std::move(labels)) {
    if (dim_ == 0)
      throw std::invalid_argument("SampleSet: dimension must be positive");
    if (data_.size() % dim_ != 0)
      throw std::invalid_argument(
          "SampleSet: flat storage size is not a multiple of the dimension");
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i]))
        throw std::invalid_argument("SampleSet: non-finite coordinate in sample " +
                                    std::to_string(i / dim_));
    }
    if (!labels_.empty() && labels_.size() != size())
      throw std::invalid_argument("SampleSet: label count does not match sample count");
  }

  /// Build from a list of points; every point must have the same length.
  static SampleSet from_points(const std::vector<std::vector<double>> &points) {
    if (points.empty())
      throw std::invalid_argument("SampleSet: cannot infer dimension of an empty point list");
    const std::size_t d = points.front().size();
    std::vector<double> flat;
    flat.reserve(points.size() * d);
    for (const auto &p : points) {
      if (p.size() != d)
        throw std::invalid_argument("SampleSet: ragged point list");
      flat.insert(flat.end(), p.begin(), p.end());
    }
    return SampleSet(d, std::move(flat));
  }

  /// One-dimensional convenience constructor.
  static SampleSet from_scalars(std::vector<double> values) {
    return SampleSet(1, std::move(values));
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return data_.empty(); }

  std::span<const double> point(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  double operator()(std::size_t i, std::size_t k) const { return data_[i * dim_ + k]; }

  const std::vector<double> &flat() const { return data_; }
  const std::vector<std::string> &labels() const { return labels_; }

  /// First `count` samples, in order.
  SampleSet prefix(std::size_t count) const {
    if (count > size())
      throw std::invalid_argument("SampleSet::prefix: count exceeds sample count");
    std::vector<double> flat(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(count * dim_));
    std::vector<std::string> labels;
    if (!labels_.empty())
      labels.assign(labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(count));
    return SampleSet(dim_, std::move(flat), std::move(labels));
  }

  /// Samples at the given indices, in the given order.
  SampleSet select(std::span<const std::size_t> indices) const {
    std::vector<double> flat;
    flat.reserve(indices.size() * dim_);
    for (auto i : indices) {
      auto p = point(i);
      flat.insert(flat.end(), p.begin(), p.end());
    }
    return SampleSet(dim_, std::move(flat));
  }

  /// Concatenation; dimensions must agree. Labels are dropped unless both carry them.
  SampleSet append(const SampleSet &other) const {
    if (empty())
      return other;
    if (other.empty())
      return *this;
    if (other.dim_ != dim_)
      throw std::invalid_argument("SampleSet::append: dimension mismatch");
    std::vector<double> flat = data_;
    flat.insert(flat.end(), other.data_.begin(), other.data_.end());
    std::vector<std::string> labels;
    if (!labels_.empty() && !other.labels_.empty()) {
      labels = labels_;
      labels.insert(labels.end(), other.labels_.begin(), other.labels_.end());
    }
    return SampleSet(dim_, std::move(flat), std::move(labels));
  }

  std::vector<double> column(std::size_t k) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i)
      out[i] = (*this)(i, k);
    return out;
  }

private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<std::string> labels_;
};

enum class Normalization { MeanOne, SumOne };

inline constexpr double kNormalizationTolerance = 1e-8;

/// Nonnegative weights with either (1/n)Σw = 1 or Σu = 1.
class WeightVector {
public:
  WeightVector() = default;

  WeightVector(std::vector<double> values, Normalization norm)
      : values_(std::move(values)), norm_(norm) {
    if (values_.empty())
      throw std::invalid_argument("WeightVector: empty weight vector");
    double total = 0.0;
    for (double v : values_) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("WeightVector: weights must be finite and nonnegative");
      total += v;
    }
    const double target = norm_ == Normalization::MeanOne ? static_cast<double>(values_.size()) : 1.0;
    const double mass = norm_ == Normalization::MeanOne ? total / static_cast<double>(values_.size()) : total;
    if (std::abs(mass - 1.0) > kNormalizationTolerance)
      throw std::invalid_argument("WeightVector: normalization violated (mass " +
                                  std::to_string(mass) + ", expected total " +
                                  std::to_string(target) + ")");
  }

  /// Rescale arbitrary nonnegative values to the requested normalization.
  static WeightVector normalized(std::vector<double> values, Normalization norm) {
    double total = std::accumulate(values.begin(), values.end(), 0.0);
    if (!(total > 0.0))
      throw std::invalid_argument("WeightVector::normalized: total weight must be positive");
    const double scale = norm == Normalization::MeanOne ? static_cast<double>(values.size()) / total
                                                        : 1.0 / total;
    for (auto &v : values)
      v *= scale;
    return WeightVector(std::move(values), norm);
  }

  static WeightVector uniform(std::size_t n, Normalization norm) {
    const double v = norm == Normalization::MeanOne ? 1.0 : 1.0 / static_cast<double>(n);
    return WeightVector(std::vector<double>(n, v), norm);
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double> &values() const { return values_; }
  Normalization normalization() const { return norm_; }

  /// Weights on the mean-one scale, whatever the stored normalization.
  std::vector<double> mean_one_values() const {
    if (norm_ == Normalization::MeanOne)
      return values_;
    std::vector<double> out(values_);
    for (auto &v : out)
      v *= static_cast<double>(values_.size());
    return out;
  }

private:
  std::vector<double> values_;
  Normalization norm_ = Normalization::MeanOne;
};

/// Population variance of the weights on the mean-one scale.
inline double weight_variance(const WeightVector &w) {
  const auto v = w.mean_one_values();
  double mean = 0.0;
  for (double x : v)
    mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v)
    acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

/// Axis-aligned bounding box used to map samples into the unit hypercube.
class BoxScaler {
public:
  BoxScaler() = default;

  BoxScaler(std::vector<double> lower, std::vector<double> upper,
            std::vector<std::size_t> widened = {})
      : lower_(std::move(lower)), upper_(std::move(upper)), widened_(std::move(widened)) {
    if (lower_.empty() || lower_.size() != upper_.size())
      throw std::invalid_argument("BoxScaler: bounds must be nonempty and of equal length");
    for (std::size_t k = 0; k < lower_.size(); ++k) {
      if (!std::isfinite(lower_[k]) || !std::isfinite(upper_[k]) || !(upper_[k] > lower_[k]))
        throw std::invalid_argument("BoxScaler: upper bound must exceed lower bound in dimension " +
                                    std::to_string(k));
    }
  }

  std::size_t dim() const { return lower_.size(); }
  const std::vector<double> &lower() const { return lower_; }
  const std::vector<double> &upper() const { return upper_; }
  double width(std::size_t k) const { return upper_[k] - lower_[k]; }
  double volume() const {
    double v = 1.0;
    for (std::size_t k = 0; k < dim(); ++k)
      v *= width(k);
    return v;
  }

  /// Dimensions that had zero sample width and were widened when fitting.
  const std::vector<std::size_t> &widened_dimensions() const { return widened_; }

  double scale(std::size_t k, double x) const { return (x - lower_[k]) / width(k); }
  double unscale(std::size_t k, double s) const { return lower_[k] + s * width(k); }

  std::vector<double> scale(std::span<const double> x) const {
    check_dim(x.size());
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
      out[k] = scale(k, x[k]);
    return out;
  }
  std::vector<double> unscale(std::span<const double> s) const {
    check_dim(s.size());
    std::vector<double> out(s.size());
    for (std::size_t k = 0; k < s.size(); ++k)
      out[k] = unscale(k, s[k]);
    return out;
  }

  bool contains(std::span<const double> x) const {
    check_dim(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k] < lower_[k] || x[k] > upper_[k])
        return false;
    return true;
  }

private:
  void check_dim(std::size_t d) const {
    if (d != dim())
      throw std::invalid_argument("BoxScaler: dimension mismatch (" + std::to_string(d) +
                                  " vs " + std::to_string(dim()) + ")");
  }

  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<std::size_t> widened_;
};

/// Half-width added to a zero-width dimension when fitting a box.
inline constexpr double kDegenerateWidening = 1e-9;

/// Component-wise bounding box of the samples, each side extended by
/// `padding` times the width. Zero-width dimensions are widened by
/// kDegenerateWidening on both sides and listed in widened_dimensions().
inline BoxScaler fit_box(const SampleSet &samples, double padding = 0.0) {
  if (samples.empty())
    throw std::invalid_argument("fit_box: empty sample set");
  if (!(padding >= 0.0))
    throw std::invalid_argument("fit_box: padding must be nonnegative");
  const std::size_t d = samples.dim();
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      lo[k] = std::min(lo[k], samples(i, k));
      hi[k] = std::max(hi[k], samples(i, k));
    }
  }
  std::vector<std::size_t> widened;
  for (std::size_t k = 0; k < d; ++k) {
    double w = hi[k] - lo[k];
    if (!(w > 0.0)) {
      widened.push_back(k);
      lo[k] -= kDegenerateWidening;
      hi[k] += kDegenerateWidening;
      w = hi[k] - lo[k];
    }
    lo[k] -= padding * w;
    hi[k] += padding * w;
  }
  return BoxScaler(std::move(lo), std::move(hi), std::move(widened));
}

inline SampleSet scale_to_unit(const SampleSet &samples, const BoxScaler &box) {
  if (samples.dim() != box.dim())
    throw std::invalid_argument("scale_to_unit: dimension mismatch");
  std::vector<double> flat(samples.flat().size());
  const std::size_t d = samples.dim();
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t k = 0; k < d; ++k)
      flat[i * d + k] = box.scale(k, samples(i, k));
  return SampleSet(d, std::move(flat), samples.labels());
}

inline SampleSet unscale_from_unit(const SampleSet &samples, const BoxScaler &box) {
  if (samples.dim() != box.dim())
    throw std::invalid_argument("unscale_from_unit: dimension mismatch");
  std::vector<double> flat(samples.flat().size());
  const std::size_t d = samples.dim();
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t k = 0; k < d; ++k)
      flat[i * d + k] = box.unscale(k, samples(i, k));
  return SampleSet(d, std::move(flat), samples.labels());
}

/// x ⪯ y component-wise.
inline bool dominated_by(std::span<const double> x, std::span<const double> y) {
  for (std::size_t k = 0; k < x.size(); ++k)
    if (x[k] > y[k])
      return false;
  return true;
}

} // namespace dci

#endif // DCI_CORE_HPP_
