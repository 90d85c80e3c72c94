#ifndef DCI_BINNING_HPP_
#define DCI_BINNING_HPP_

#include "dci/core.hpp"
#include "dci/edf.hpp"
#include "dci/io.hpp"
#include "dci/kmeans.hpp"
#include "dci/models.hpp"
#include "dci/parallel.hpp"
#include "dci/qp_assembly.hpp"
#include "dci/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dci {

enum class PartitionKind { RegularGrid, KMeans };

inline std::string to_string(PartitionKind k) { return k == PartitionKind::RegularGrid ? "grid" : "kmeans"; }

/*
 * A partition {C^k} of the data space with representative points c^k.
 * Cell indices are zero-based. Grid cells are numbered with the first
 * dimension varying fastest.
 */
class Partition {
public:
  static Partition regular_grid(const BoxScaler &box, std::vector<std::size_t> cells_per_dim) {
    if (cells_per_dim.size() != box.dim())
      throw std::invalid_argument("make_regular_grid: need one cell count per dimension");
    std::size_t p = 1;
    for (auto c : cells_per_dim) {
      if (c == 0)
        throw std::invalid_argument("make_regular_grid: zero cells in a dimension");
      p *= c;
    }
    const std::size_t d = box.dim();
    std::vector<double> reps(p * d);
    for (std::size_t cell = 0; cell < p; ++cell) {
      std::size_t rest = cell;
      for (std::size_t k = 0; k < d; ++k) {
        const std::size_t idx = rest % cells_per_dim[k];
        rest /= cells_per_dim[k];
        reps[cell * d + k] = box.unscale(k, (static_cast<double>(idx) + 0.5) / static_cast<double>(cells_per_dim[k]));
      }
    }
    Partition out;
    out.kind_ = PartitionKind::RegularGrid;
    out.box_ = box;
    out.cells_per_dim_ = std::move(cells_per_dim);
    out.reps_ = SampleSet(d, std::move(reps));
    return out;
  }

  static Partition kmeans(SampleSet centroids) {
    if (centroids.empty())
      throw std::invalid_argument("Partition: no centroids");
    Partition out;
    out.kind_ = PartitionKind::KMeans;
    out.reps_ = std::move(centroids);
    return out;
  }

  PartitionKind kind() const { return kind_; }
  std::size_t size() const { return reps_.size(); }
  std::size_t dim() const { return reps_.dim(); }
  const SampleSet &reps() const { return reps_; }
  const std::vector<std::size_t> &cells_per_dim() const { return cells_per_dim_; }
  const BoxScaler &box() const { return box_; }

  /// Q^p: total on finite points. Grid points outside the box clamp to boundary cells.
  std::size_t classify(std::span<const double> q) const {
    if (q.size() != dim())
      throw std::invalid_argument("classify: dimension mismatch");
    if (kind_ == PartitionKind::KMeans)
      return detail::nearest(reps_.flat(), dim(), q);
    std::size_t cell = 0, stride = 1;
    for (std::size_t k = 0; k < dim(); ++k) {
      const double c = static_cast<double>(cells_per_dim_[k]);
      const double pos = std::floor(box_.scale(k, q[k]) * c);
      const double clamped = std::clamp(pos, 0.0, c - 1.0);
      cell += static_cast<std::size_t>(clamped) * stride;
      stride *= cells_per_dim_[k];
    }
    return cell;
  }

  std::size_t classify(double q) const { return classify(std::span<const double>(&q, 1)); }

  std::vector<std::size_t> classify_all(const SampleSet &data, std::size_t threads = 1) const {
    std::vector<std::size_t> out(data.size());
    parallel_for(data.size(), threads, [&](std::size_t i) { out[i] = classify(data.point(i)); });
    return out;
  }

private:
  PartitionKind kind_ = PartitionKind::RegularGrid;
  BoxScaler box_;
  std::vector<std::size_t> cells_per_dim_;
  SampleSet reps_;
};

inline Partition make_regular_grid(const BoxScaler &box, std::vector<std::size_t> cells_per_dim) {
  return Partition::regular_grid(box, std::move(cells_per_dim));
}

inline Partition make_kmeans(const SampleSet &predicted, std::size_t p, std::uint64_t seed, std::size_t max_iter = 300) {
  return Partition::kmeans(kmeans(predicted, p, seed, max_iter).centroids);
}

inline std::size_t classify(const Partition &partition, std::span<const double> q) { return partition.classify(q); }

struct BinnedSolution {
  WeightVector cell_weights;
  WeightVector sample_weights;
  std::vector<std::size_t> assignments;
  std::vector<std::size_t> counts;
};

inline constexpr double kDefaultWeightFloor = 1e-6;

/// u_i = w_k/(p·n_k) for samples in cell k; zero where w_k = 0.
inline BinnedSolution distribute_weights(const WeightVector &cell_weights, std::vector<std::size_t> assignments) {
  if (cell_weights.normalization() != Normalization::MeanOne)
    throw std::invalid_argument("distribute_weights: cell weights must be MeanOne");
  const std::size_t p = cell_weights.size();
  std::vector<std::size_t> counts(p, 0);
  for (auto a : assignments) {
    if (a >= p)
      throw std::invalid_argument("distribute_weights: assignment out of range");
    ++counts[a];
  }
  for (std::size_t k = 0; k < p; ++k)
    if (cell_weights[k] > 0.0 && counts[k] == 0)
      throw std::invalid_argument("distribute_weights: cell " + std::to_string(k) + " has weight but no samples");
  std::vector<double> u(assignments.size());
  const double pd = static_cast<double>(p);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const std::size_t k = assignments[i];
    u[i] = cell_weights[k] > 0.0 ? cell_weights[k] / (pd * static_cast<double>(counts[k])) : 0.0;
  }
  BinnedSolution out{cell_weights, WeightVector(std::move(u), Normalization::SumOne), std::move(assignments),
                     std::move(counts)};
  return out;
}

/// F^p_{D;w}(q) = (1/p) Σ w_k I(c^k ⪯ q).
inline WeightedEdf pushforward_binned(const BinnedSolution &solution, const Partition &partition) {
  if (solution.cell_weights.size() != partition.size())
    throw std::invalid_argument("pushforward_binned: solution was built on a different partition");
  return WeightedEdf(partition.reps(), solution.cell_weights);
}

/// Zero cell weights at or below `floor` and rescale the rest to mean one.
inline WeightVector apply_weight_floor(const WeightVector &w, double floor) {
  std::vector<double> v = w.mean_one_values();
  for (auto &x : v)
    if (x <= floor)
      x = 0.0;
  return WeightVector::normalized(std::move(v), Normalization::MeanOne);
}

class UnreachableCell : public std::runtime_error {
public:
  UnreachableCell(std::size_t cell, double weight, std::size_t have, std::size_t need, const std::string &why)
      : std::runtime_error("cell " + std::to_string(cell) + " (weight " + format_double(weight) + ") has " +
                           std::to_string(have) + " of " + std::to_string(need) + " required samples " + why +
                           "; try fewer bins"),
        cell_(cell), weight_(weight) {}
  std::size_t cell() const { return cell_; }
  double weight() const { return weight_; }

private:
  std::size_t cell_;
  double weight_;
};

struct PartitionSpec {
  PartitionKind kind = PartitionKind::RegularGrid;
  /// Grid cells per data dimension; a single entry is broadcast.
  std::vector<std::size_t> cells_per_dim{20};
  /// k-means cluster count.
  std::size_t p = 20;
  std::uint64_t seed = 0;
  std::size_t max_iter = 300;
  /// Data box for the grid and for QP scaling; fitted to the pilot batch when absent.
  std::optional<BoxScaler> data_box;
};

struct BinningOptions {
  std::size_t n_batch = 1000;
  /// Total number of samples the min-fill policy aims for.
  std::size_t target_samples = 10000;
  double weight_floor = kDefaultWeightFloor;
  std::size_t max_batches = 1000;
  QpOptions qp;
  std::size_t threads = 1;
};

/// Draws the next `count` (λ, q) pairs; may return fewer when exhausted.
using BatchSource = std::function<SamplePairs(std::size_t count)>;

/// Live model with a uniform initial distribution on `lambda_box`.
inline BatchSource model_source(Model model, BoxScaler lambda_box, std::uint64_t seed, std::size_t threads = 1) {
  auto gen = std::make_shared<std::mt19937_64>(seed);
  return [model = std::move(model), lambda_box = std::move(lambda_box), gen, threads](std::size_t count) {
    SampleSet lambda = uniform_sampler(lambda_box, count, *gen);
    SampleSet q = push_forward(model, lambda, threads);
    return SamplePairs{std::move(lambda), std::move(q)};
  };
}

/// Precomputed pairs consumed in row order.
inline BatchSource pairs_source(SamplePairs pairs) {
  auto state = std::make_shared<std::pair<SamplePairs, std::size_t>>(std::move(pairs), 0);
  return [state](std::size_t count) {
    auto &[all, pos] = *state;
    const std::size_t take = std::min(count, all.parameters.size() - pos);
    std::vector<std::size_t> idx(take);
    std::iota(idx.begin(), idx.end(), pos);
    pos += take;
    return SamplePairs{all.parameters.select(idx), all.data.select(idx)};
  };
}

struct BinningRun {
  BinnedSolution solution;
  Partition partition;
  SampleSet parameters;
  SampleSet data;
  BoxScaler data_box;
  QpResult qp;
  std::vector<std::size_t> min_counts;
  std::size_t batches = 0;
};

namespace detail {

inline Partition build_partition(const PartitionSpec &spec, const SampleSet &pilot, const BoxScaler &box) {
  if (spec.kind == PartitionKind::KMeans)
    return make_kmeans(pilot, spec.p, spec.seed, spec.max_iter);
  auto cells = spec.cells_per_dim;
  if (cells.size() == 1 && box.dim() > 1)
    cells.assign(box.dim(), cells[0]);
  return make_regular_grid(box, cells);
}

// Representatives can sit outside the scaling box (k-means on a fixed box);
// the QP scaling box covers both, with the upper margin.
inline BoxScaler covering_box(const BoxScaler &box, const SampleSet &reps) {
  std::vector<double> lo = box.lower(), hi = box.upper();
  for (std::size_t i = 0; i < reps.size(); ++i)
    for (std::size_t k = 0; k < reps.dim(); ++k) {
      lo[k] = std::min(lo[k], reps(i, k));
      hi[k] = std::max(hi[k], reps(i, k));
    }
  return with_upper_margin(BoxScaler(lo, hi));
}

inline QpResult solve_on_reps(const SampleSet &reps, const TargetDistribution &target, const BoxScaler &box,
                              const BinningOptions &opt) {
  auto assembled = assemble_problem(reps, target, covering_box(box, reps), kDefaultQuadPoints, opt.threads);
  return solve_qp(assembled.problem, opt.qp);
}

} // namespace detail

/*
 * Binning inversion. The first batch fixes the data box and the partition;
 * the QP is solved on the representatives; batches are then drawn until
 * every cell with n_{k,min} = ceil(s·w_k) > 0 holds that many samples,
 * with s = target_samples/p.
 */
inline BinningRun solve_binning(const BatchSource &source, const TargetDistribution &target,
                                const PartitionSpec &spec, const BinningOptions &opt = {}) {
  if (opt.n_batch == 0)
    throw std::invalid_argument("solve_binning: n_batch must be positive");
  BinningRun run;
  auto pilot = source(opt.n_batch);
  if (pilot.parameters.empty())
    throw std::invalid_argument("solve_binning: the sample source is empty");
  run.batches = 1;
  run.parameters = std::move(pilot.parameters);
  run.data = std::move(pilot.data);
  run.data_box = spec.data_box ? *spec.data_box : fit_box(run.data);
  run.partition = detail::build_partition(spec, run.data, run.data_box);
  run.qp = detail::solve_on_reps(run.partition.reps(), target, run.data_box, opt);

  const std::size_t p = run.partition.size();
  const WeightVector w = apply_weight_floor(run.qp.weights, opt.weight_floor);
  const double s = static_cast<double>(opt.target_samples) / static_cast<double>(p);
  run.min_counts.assign(p, 0);
  for (std::size_t k = 0; k < p; ++k)
    if (w[k] > 0.0)
      run.min_counts[k] = static_cast<std::size_t>(std::ceil(s * w[k]));

  std::vector<std::size_t> assignments = run.partition.classify_all(run.data, opt.threads);
  std::vector<std::size_t> counts(p, 0);
  for (auto a : assignments)
    ++counts[a];
  auto first_unfilled = [&]() -> std::optional<std::size_t> {
    std::optional<std::size_t> worst;
    for (std::size_t k = 0; k < p; ++k)
      if (counts[k] < run.min_counts[k] && (!worst || w[k] > w[*worst]))
        worst = k;
    return worst;
  };

  while (auto k = first_unfilled()) {
    if (run.batches >= opt.max_batches)
      throw UnreachableCell(*k, w[*k], counts[*k], run.min_counts[*k],
                            "after " + std::to_string(run.batches) + " batches");
    auto batch = source(opt.n_batch);
    if (batch.parameters.empty())
      throw UnreachableCell(*k, w[*k], counts[*k], run.min_counts[*k], "when the sample source ran out");
    ++run.batches;
    const auto new_assign = run.partition.classify_all(batch.data, opt.threads);
    for (auto a : new_assign)
      ++counts[a];
    assignments.insert(assignments.end(), new_assign.begin(), new_assign.end());
    run.parameters = run.parameters.append(batch.parameters);
    run.data = run.data.append(batch.data);
  }
  run.solution = distribute_weights(w, std::move(assignments));
  return run;
}

/*
 * Binning on a fixed sample set, as in the convergence study. Cells that
 * received no samples are dropped from the QP, which is re-solved on the
 * occupied representatives; the returned cell weights are zero on empty
 * cells and still have mean one over all p cells.
 */
inline BinningRun bin_fixed_samples(const SampleSet &parameters, const SampleSet &data,
                                    const TargetDistribution &target, const PartitionSpec &spec,
                                    const BinningOptions &opt = {}) {
  if (parameters.size() != data.size() || data.empty())
    throw std::invalid_argument("bin_fixed_samples: need equally many nonzero parameters and data samples");
  BinningRun run;
  run.batches = 1;
  run.parameters = parameters;
  run.data = data;
  run.data_box = spec.data_box ? *spec.data_box : fit_box(data);
  run.partition = detail::build_partition(spec, data, run.data_box);
  const std::size_t p = run.partition.size();
  auto assignments = run.partition.classify_all(data, opt.threads);
  std::vector<std::size_t> counts(p, 0);
  for (auto a : assignments)
    ++counts[a];
  std::vector<std::size_t> occupied;
  for (std::size_t k = 0; k < p; ++k)
    if (counts[k] > 0)
      occupied.push_back(k);

  std::vector<double> w(p, 0.0);
  if (occupied.size() == p) {
    run.qp = detail::solve_on_reps(run.partition.reps(), target, run.data_box, opt);
    w = run.qp.weights.mean_one_values();
  } else {
    run.qp = detail::solve_on_reps(run.partition.reps().select(occupied), target, run.data_box, opt);
    const auto sub = run.qp.weights.mean_one_values();
    const double scale = static_cast<double>(p) / static_cast<double>(occupied.size());
    for (std::size_t j = 0; j < occupied.size(); ++j)
      w[occupied[j]] = sub[j] * scale;
  }
  const WeightVector cell_w = apply_weight_floor(WeightVector::normalized(std::move(w), Normalization::MeanOne),
                                                 opt.weight_floor);
  run.min_counts.assign(p, 0);
  run.solution = distribute_weights(cell_w, std::move(assignments));
  return run;
}

/// Naive inversion: weights from the QP on every predicted sample, applied to the parameters.
struct NaiveResult {
  WeightedEdf parameter_edf;
  WeightedEdf pushforward;
  QpResult qp;
  BoxScaler data_box;
  std::size_t jittered = 0;
};

inline NaiveResult solve_naive(const SampleSet &parameters, const SampleSet &data, const TargetDistribution &target,
                               std::optional<BoxScaler> data_box = std::nullopt, const QpOptions &qp = {},
                               std::size_t threads = 1) {
  if (parameters.size() != data.size() || data.empty())
    throw std::invalid_argument("solve_naive: need equally many nonzero parameters and data samples");
  const BoxScaler box = data_box ? *data_box : qp_box(data);
  auto assembled = assemble_problem(data, target, box, kDefaultQuadPoints, threads);
  auto result = solve_qp(assembled.problem, qp);
  NaiveResult out{WeightedEdf(parameters, result.weights), WeightedEdf(data, result.weights), std::move(result), box,
                  assembled.jittered};
  return out;
}

} // namespace dci

#endif // DCI_BINNING_HPP_
