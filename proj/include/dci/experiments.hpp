#ifndef DCI_EXPERIMENTS_HPP_
#define DCI_EXPERIMENTS_HPP_

#include "dci/binning.hpp"
#include "dci/core.hpp"
#include "dci/density.hpp"
#include "dci/edf.hpp"
#include "dci/io.hpp"
#include "dci/models.hpp"
#include "dci/parallel.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dci {

// ---------------------------------------------------------------------------
// Problem setup shared by the CLI and the experiments

enum class ModelKind { HeatRod, Pairs };

struct ModelSpec {
  ModelKind kind = ModelKind::HeatRod;
  HeatRodParams heat;
  std::string params_csv;
  std::string data_csv;
};

/// The first n initial samples and their data. Heat rod: uniform on Λ under `seed`. Pairs: the first n rows.
inline SamplePairs draw_initial(const ModelSpec &spec, std::size_t n, std::uint64_t seed, std::size_t threads = 1) {
  if (n == 0)
    throw std::invalid_argument("draw_initial: n must be positive");
  if (spec.kind == ModelKind::HeatRod) {
    SampleSet lambda = uniform_sampler(spec.heat.lambda_box, n, seed);
    SampleSet q = push_forward(HeatRodModel(spec.heat).model(), lambda, threads);
    return {std::move(lambda), std::move(q)};
  }
  auto pairs = load_pairs(spec.params_csv, spec.data_csv);
  if (pairs.parameters.size() < n)
    throw std::invalid_argument("draw_initial: " + spec.params_csv + " has " +
                                std::to_string(pairs.parameters.size()) + " rows, " + std::to_string(n) +
                                " requested");
  return {pairs.parameters.prefix(n), pairs.data.prefix(n)};
}

enum class TargetKind { Normal, Uniform, Mixture, SamplesCsv, Pushforward };

struct TargetSpec {
  TargetKind kind = TargetKind::Normal;
  double mu = 0.59;
  double sigma = 0.005;
  double lower = 0.0;
  double upper = 1.0;
  MixtureOfUniforms mixture = MixtureOfUniforms::benchmark();
  std::string samples_csv;
  std::uint64_t seed = 1;
  std::size_t m = 10000;
  /// Use the m samples (EDF) rather than the exact CDF as the QP target.
  bool empirical = true;
};

struct RealizedTarget {
  std::optional<ExactCdf> exact;
  SampleSet samples;
  bool empirical = true;

  TargetDistribution for_qp() const {
    if (empirical || !exact)
      return samples;
    return *exact;
  }
};

/// Exact CDF where one exists, plus m observed samples drawn under the target seed.
inline RealizedTarget realize_target(const TargetSpec &spec, const ModelSpec &model, std::size_t threads = 1) {
  RealizedTarget out;
  out.empirical = spec.empirical;
  std::mt19937_64 gen(spec.seed);
  switch (spec.kind) {
  case TargetKind::Normal:
    out.exact = normal_target(spec.mu, spec.sigma);
    out.samples = normal_sampler(spec.mu, spec.sigma, spec.m, gen);
    break;
  case TargetKind::Uniform: {
    out.exact = uniform_target(spec.lower, spec.upper);
    out.samples = uniform_sampler(BoxScaler({spec.lower}, {spec.upper}), spec.m, gen);
    break;
  }
  case TargetKind::Mixture:
    out.exact = mixture_target(spec.mixture);
    out.samples = mixture_sampler(spec.mixture, spec.m, gen);
    break;
  case TargetKind::SamplesCsv:
    out.samples = read_samples_csv(spec.samples_csv).samples;
    break;
  case TargetKind::Pushforward:
    out.samples = draw_initial(model, spec.m, spec.seed, threads).data;
    break;
  }
  if (out.samples.empty())
    throw std::invalid_argument("target: no samples");
  return out;
}

/// L² distance on the unit-scaled box, i.e. (∫_box (F − G)² / |box|)^{1/2}.
inline double unit_l2_distance(const Cdf &f, const Cdf &g, const BoxScaler &box, std::size_t grid_per_dim) {
  return l2_distance(f, g, box, grid_per_dim) / std::sqrt(box.volume());
}

inline std::vector<double> breakpoints_of(std::initializer_list<const SampleSet *> sets) {
  std::vector<double> out;
  for (const auto *s : sets)
    out.insert(out.end(), s->flat().begin(), s->flat().end());
  return out;
}

// ---------------------------------------------------------------------------
// Convergence study

struct ReferenceSpec {
  std::size_t n = 100000;
  std::size_t m = 100000;
  std::size_t trials = 10;
  std::uint64_t seed = 1000;
  BandwidthRule rule = BandwidthRule::Scott;
};

struct ConvergenceSpec {
  std::vector<std::size_t> n_grid{1000, 3000, 10000};
  std::vector<std::size_t> p_grid{20, 60, 160};
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  Region region_a{{2.01, 0.95}, {2.02, 1.0}};
  /// Event in D; Q(A) bounded over a dense grid on A when absent.
  std::optional<Region> region_b;
  PartitionKind partition = PartitionKind::RegularGrid;
  ModelSpec model;
  TargetSpec target;
  ReferenceSpec reference;
  double weight_floor = kDefaultWeightFloor;
  QpOptions qp;
  std::size_t threads = 1;

  void validate() const {
    auto increasing = [](const std::vector<std::size_t> &v) {
      if (v.empty() || v[0] == 0)
        return false;
      for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] <= v[i - 1])
          return false;
      return true;
    };
    if (!increasing(n_grid))
      throw std::invalid_argument("n_grid must be positive and strictly increasing");
    if (!increasing(p_grid))
      throw std::invalid_argument("p_grid must be positive and strictly increasing");
    if (trials < 1)
      throw std::invalid_argument("trials must be at least 1");
    if (model.kind != ModelKind::HeatRod)
      throw std::invalid_argument("the convergence study needs a live model");
    if (region_a.lower.size() != 2 || region_a.upper.size() != 2)
      throw std::invalid_argument("region_A must be a box in the two-dimensional parameter space");
  }
};

class ReferenceFailed : public std::runtime_error {
public:
  ReferenceFailed(std::size_t trial, double value)
      : std::runtime_error("reference baseline failed: diagnostic " + format_double(value) + " in reference trial " +
                           std::to_string(trial) + " lies outside [0.8, 1.2]"),
        value_(value) {}
  double value() const { return value_; }

private:
  double value_;
};

struct Summary {
  double mean = 0.0;
  /// Sample standard deviation over trials (zero for a single trial).
  double std = 0.0;
  /// Mean over trials of |P − P_ref|.
  double mean_abs_error = 0.0;
  /// |mean(P) − P_ref|.
  double abs_error_of_mean = 0.0;
};

inline Summary summarize(const std::vector<double> &values, double reference) {
  Summary s;
  const double n = static_cast<double>(values.size());
  for (double v : values) {
    s.mean += v;
    s.mean_abs_error += std::abs(v - reference);
  }
  s.mean /= n;
  s.mean_abs_error /= n;
  s.abs_error_of_mean = std::abs(s.mean - reference);
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values)
      acc += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(acc / (n - 1.0));
  }
  return s;
}

struct ReferenceResult {
  double p_b = 0.0;
  double p_a = 0.0;
  std::vector<double> p_b_trials;
  std::vector<double> p_a_trials;
  std::vector<double> diagnostics;
  std::vector<std::uint64_t> seeds;
};

inline const std::vector<std::string> &convergence_quantities() {
  static const std::vector<std::string> q{"pred_B", "pred_B_samples", "init_A"};
  return q;
}

struct ConvergenceResult {
  std::vector<std::size_t> n_grid;
  std::vector<std::size_t> p_grid;
  std::size_t trials = 0;
  Region region_a;
  Region region_b;
  ReferenceResult reference;
  /// values[quantity][trial][i_n][i_p]
  std::vector<std::vector<std::vector<std::vector<double>>>> values;

  Summary summary(std::size_t quantity, std::size_t i_n, std::size_t i_p) const {
    std::vector<double> v;
    for (const auto &trial : values[quantity])
      v.push_back(trial[i_n][i_p]);
    const double ref = quantity == 2 ? reference.p_a : reference.p_b;
    return summarize(v, ref);
  }
};

/// Bounding interval of Q over a (resolution+1)² grid on A.
inline Region image_bounds(const ModelSpec &model, const Region &a, std::size_t resolution = 200) {
  const HeatRodModel heat(model.heat);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i <= resolution; ++i)
    for (std::size_t j = 0; j <= resolution; ++j) {
      const double l = a.lower[0] + (a.upper[0] - a.lower[0]) * static_cast<double>(i) / static_cast<double>(resolution);
      const double k = a.lower[1] + (a.upper[1] - a.lower[1]) * static_cast<double>(j) / static_cast<double>(resolution);
      const double q = heat_qoi(heat.params(), l, k);
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
  return Region{{lo}, {hi}};
}

/// Density-method baselines P_ref(B) and P_ref(A), self-normalized, averaged over reference trials.
inline ReferenceResult run_reference(const ConvergenceSpec &spec, const Region &region_b) {
  ReferenceResult out;
  const std::size_t trials = spec.reference.trials;
  out.p_a_trials.resize(trials);
  out.p_b_trials.resize(trials);
  out.diagnostics.resize(trials);
  for (std::size_t t = 0; t < trials; ++t)
    out.seeds.push_back(spec.reference.seed + t);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto pairs = draw_initial(spec.model, spec.reference.n, out.seeds[t], spec.threads);
    TargetSpec obs_spec = spec.target;
    obs_spec.m = spec.reference.m;
    obs_spec.seed = out.seeds[t] + 500000;
    const auto observed = realize_target(obs_spec, spec.model, spec.threads);
    const auto update = density_update(pairs.data, observed.samples, spec.reference.rule, 0.0, spec.threads);
    out.diagnostics[t] = update.diagnostic;
    if (!(update.diagnostic >= 0.8 && update.diagnostic <= 1.2))
      throw ReferenceFailed(t, update.diagnostic);
    out.p_a_trials[t] = update_probability(spec.region_a, pairs.parameters, update.r).self_normalized;
    out.p_b_trials[t] = update_probability(region_b, pairs.data, update.r).self_normalized;
  }
  for (std::size_t t = 0; t < trials; ++t) {
    out.p_a += out.p_a_trials[t] / static_cast<double>(trials);
    out.p_b += out.p_b_trials[t] / static_cast<double>(trials);
  }
  return out;
}

/*
 * Convergence study over (n, p). Each trial draws n_max initial samples
 * under seed + trial and uses prefixes for the smaller n. The observed
 * samples (the QP target) are shared by all trials. Cells left empty by a
 * prefix are dropped (see bin_fixed_samples).
 */
inline ConvergenceResult run_convergence(const ConvergenceSpec &spec,
                                         const std::function<void(const std::string &)> &progress = {}) {
  spec.validate();
  ConvergenceResult out;
  out.n_grid = spec.n_grid;
  out.p_grid = spec.p_grid;
  out.trials = spec.trials;
  out.region_a = spec.region_a;
  out.region_b = spec.region_b ? *spec.region_b : image_bounds(spec.model, spec.region_a);
  if (progress)
    progress("reference baseline: " + std::to_string(spec.reference.trials) + " trials");
  out.reference = run_reference(spec, out.region_b);

  const auto observed = realize_target(spec.target, spec.model, spec.threads);
  const TargetDistribution target = observed.for_qp();
  const std::size_t n_max = spec.n_grid.back();
  const std::size_t nq = convergence_quantities().size();
  out.values.assign(nq, std::vector<std::vector<std::vector<double>>>(
                            spec.trials, std::vector<std::vector<double>>(spec.n_grid.size(),
                                                                          std::vector<double>(spec.p_grid.size()))));

  parallel_for(spec.trials, spec.threads, [&](std::size_t trial) {
    const auto pairs = draw_initial(spec.model, n_max, spec.seed + trial, 1);
    for (std::size_t in = 0; in < spec.n_grid.size(); ++in) {
      const SampleSet lambda = pairs.parameters.prefix(spec.n_grid[in]);
      const SampleSet q = pairs.data.prefix(spec.n_grid[in]);
      for (std::size_t ip = 0; ip < spec.p_grid.size(); ++ip) {
        PartitionSpec part;
        part.kind = spec.partition;
        part.cells_per_dim = {spec.p_grid[ip]};
        part.p = spec.p_grid[ip];
        part.seed = spec.seed + trial;
        BinningOptions opt;
        opt.weight_floor = spec.weight_floor;
        opt.qp = spec.qp;
        const auto run = bin_fixed_samples(lambda, q, target, part, opt);
        const auto &w = run.solution.cell_weights;
        const auto &u = run.solution.sample_weights;
        const double p = static_cast<double>(run.partition.size());
        double pred_b = 0.0, pred_b_samples = 0.0, init_a = 0.0;
        for (std::size_t k = 0; k < run.partition.size(); ++k)
          if (out.region_b.contains(run.partition.reps().point(k)))
            pred_b += w[k] / p;
        for (std::size_t i = 0; i < q.size(); ++i) {
          if (out.region_b.contains(q.point(i)))
            pred_b_samples += u[i];
          if (spec.region_a.contains(lambda.point(i)))
            init_a += u[i];
        }
        out.values[0][trial][in][ip] = std::clamp(pred_b, 0.0, 1.0);
        out.values[1][trial][in][ip] = std::clamp(pred_b_samples, 0.0, 1.0);
        out.values[2][trial][in][ip] = std::clamp(init_a, 0.0, 1.0);
      }
    }
    if (progress)
      progress("trial " + std::to_string(trial + 1) + "/" + std::to_string(spec.trials) + " done");
  });
  return out;
}

inline nlohmann::json region_json(const Region &r) { return {{"lower", r.lower}, {"upper", r.upper}}; }

inline nlohmann::json to_json(const ConvergenceResult &r) {
  using nlohmann::json;
  json j;
  j["n_grid"] = r.n_grid;
  j["p_grid"] = r.p_grid;
  j["trials"] = r.trials;
  j["region_A"] = region_json(r.region_a);
  j["region_B"] = region_json(r.region_b);
  j["reference"] = {{"P_B", r.reference.p_b},
                    {"P_A", r.reference.p_a},
                    {"P_B_trials", r.reference.p_b_trials},
                    {"P_A_trials", r.reference.p_a_trials},
                    {"diagnostics", r.reference.diagnostics},
                    {"seeds", r.reference.seeds},
                    {"estimator", "density method, self-normalized"}};
  json surfaces = json::object();
  const auto &names = convergence_quantities();
  for (std::size_t qi = 0; qi < names.size(); ++qi) {
    json cells = json::array();
    for (std::size_t in = 0; in < r.n_grid.size(); ++in)
      for (std::size_t ip = 0; ip < r.p_grid.size(); ++ip) {
        const auto s = r.summary(qi, in, ip);
        std::vector<double> per_trial;
        for (const auto &t : r.values[qi])
          per_trial.push_back(t[in][ip]);
        cells.push_back({{"n", r.n_grid[in]},
                         {"p", r.p_grid[ip]},
                         {"mean", s.mean},
                         {"std", s.std},
                         {"mean_abs_error", s.mean_abs_error},
                         {"abs_error_of_mean", s.abs_error_of_mean},
                         {"trials", per_trial}});
      }
    surfaces[names[qi]] = cells;
  }
  j["surfaces"] = surfaces;
  return j;
}

/// surface_<quantity>_<statistic>.csv files: rows n, columns p.
inline std::vector<std::string> write_surfaces(const ConvergenceResult &r, const std::string &dir) {
  std::vector<std::string> written;
  const auto &names = convergence_quantities();
  const std::vector<std::string> stats{"mean_abs_error", "std", "mean", "abs_error_of_mean"};
  for (std::size_t qi = 0; qi < names.size(); ++qi)
    for (const auto &stat : stats) {
      const std::string name = "surface_" + names[qi] + "_" + stat + ".csv";
      std::ofstream out(dir + "/" + name);
      if (!out)
        throw std::runtime_error("cannot write " + dir + "/" + name);
      out << "n";
      for (auto p : r.p_grid)
        out << ",p=" << p;
      out << '\n';
      for (std::size_t in = 0; in < r.n_grid.size(); ++in) {
        out << r.n_grid[in];
        for (std::size_t ip = 0; ip < r.p_grid.size(); ++ip) {
          const auto s = r.summary(qi, in, ip);
          const double v = stat == "mean_abs_error" ? s.mean_abs_error
                           : stat == "std"          ? s.std
                           : stat == "mean"         ? s.mean
                                                    : s.abs_error_of_mean;
          out << ',' << format_double(v);
        }
        out << '\n';
      }
      written.push_back(name);
    }
  return written;
}

// ---------------------------------------------------------------------------
// Method comparison

struct CompareSpec {
  ModelSpec model;
  TargetSpec target;
  std::size_t n = 200;
  std::uint64_t seed = 0;
  /// Grid cells (one dimension) and k-means clusters.
  std::size_t p = 10;
  BandwidthRule rule = BandwidthRule::Scott;
  /// The naive QP is dense in n; larger n skips the naive row.
  std::size_t naive_max_n = 5000;
  double weight_floor = kDefaultWeightFloor;
  QpOptions qp;
  std::size_t grid_per_dim = 0;
  std::size_t threads = 1;
};

struct CompareRow {
  std::string method;
  bool skipped = false;
  std::string note;
  /// Push-forward of the weighted initial samples.
  std::optional<WeightedEdf> pushforward;
  double l2_exact = std::numeric_limits<double>::quiet_NaN();
  double sup_exact = std::numeric_limits<double>::quiet_NaN();
  double l2_edf = std::numeric_limits<double>::quiet_NaN();
  double sup_edf = std::numeric_limits<double>::quiet_NaN();
  /// Binning only: the EDF over representatives with weights w.
  double sup_exact_reps = std::numeric_limits<double>::quiet_NaN();
  double weight_variance = std::numeric_limits<double>::quiet_NaN();
  double diagnostic = std::numeric_limits<double>::quiet_NaN();
  bool converged = true;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  BoxScaler data_box;
  std::size_t n = 0;
  std::size_t m = 0;

  const CompareRow &row(const std::string &method) const {
    for (const auto &r : rows)
      if (r.method == method)
        return r;
    throw std::out_of_range("no comparison row '" + method + "'");
  }
};

/*
 * Push-forward of each method on one shared sample set, compared with the
 * exact target CDF (when known) and with the EDF of the m target samples.
 * L² distances are taken on the unit-scaled box of the naive QP (fitted to
 * the predicted data); one-dimensional sup-norms are exact.
 */
inline CompareResult compare_methods(const CompareSpec &spec) {
  const auto pairs = draw_initial(spec.model, spec.n, spec.seed, spec.threads);
  const auto target = realize_target(spec.target, spec.model, spec.threads);
  const TargetDistribution qp_target = target.for_qp();
  const SampleSet &q = pairs.data;
  const std::size_t d = q.dim();
  if (target.samples.dim() != d)
    throw std::invalid_argument("compare_methods: target and data dimensions differ");

  CompareResult out;
  out.n = spec.n;
  out.m = target.samples.size();
  out.data_box = qp_box(q);
  const std::size_t grid = spec.grid_per_dim ? spec.grid_per_dim : (d == 1 ? 20000 : default_grid_per_dim(d));
  const Cdf target_edf = WeightedEdf::unweighted(target.samples).as_cdf();

  auto score = [&](CompareRow &row) {
    const Cdf f = row.pushforward->as_cdf();
    row.l2_edf = unit_l2_distance(f, target_edf, out.data_box, grid);
    if (d == 1)
      row.sup_edf = sup_distance_1d(f, target_edf, breakpoints_of({&q, &target.samples}));
    else
      row.sup_edf = sup_distance(f, target_edf, out.data_box, grid);
    if (target.exact) {
      row.l2_exact = unit_l2_distance(f, target.exact->cdf, out.data_box, grid);
      row.sup_exact = d == 1 ? sup_distance_1d(f, target.exact->cdf, breakpoints_of({&q}))
                             : sup_distance(f, target.exact->cdf, out.data_box, grid);
    }
  };

  {
    CompareRow row;
    row.method = "unweighted";
    row.pushforward = WeightedEdf::unweighted(q);
    row.weight_variance = 0.0;
    score(row);
    out.rows.push_back(std::move(row));
  }
  {
    CompareRow row;
    row.method = "naive";
    if (spec.n > spec.naive_max_n) {
      row.skipped = true;
      row.note = "n exceeds naive_max_n";
    } else {
      auto naive = solve_naive(pairs.parameters, q, qp_target, out.data_box, spec.qp, spec.threads);
      row.converged = naive.qp.converged;
      row.weight_variance = weight_variance(naive.qp.weights);
      row.pushforward = naive.pushforward;
      score(row);
    }
    out.rows.push_back(std::move(row));
  }
  for (auto kind : {PartitionKind::RegularGrid, PartitionKind::KMeans}) {
    CompareRow row;
    row.method = "binning-" + to_string(kind);
    PartitionSpec part;
    part.kind = kind;
    part.cells_per_dim = {spec.p};
    part.p = spec.p;
    part.seed = spec.seed;
    part.data_box = out.data_box;
    BinningOptions opt;
    opt.weight_floor = spec.weight_floor;
    opt.qp = spec.qp;
    opt.threads = spec.threads;
    const auto run = bin_fixed_samples(pairs.parameters, q, qp_target, part, opt);
    row.converged = run.qp.converged;
    row.weight_variance = weight_variance(run.solution.sample_weights);
    row.pushforward = WeightedEdf(q, run.solution.sample_weights);
    score(row);
    if (target.exact && d == 1) {
      const auto reps_edf = pushforward_binned(run.solution, run.partition);
      row.sup_exact_reps =
          sup_distance_1d(reps_edf.as_cdf(), target.exact->cdf, breakpoints_of({&run.partition.reps()}));
    }
    out.rows.push_back(std::move(row));
  }
  {
    CompareRow row;
    row.method = "density";
    const auto update = density_update(q, target.samples, spec.rule, 0.0, spec.threads);
    row.diagnostic = update.diagnostic;
    std::vector<double> r = update.r;
    bool finite = true;
    for (double v : r)
      finite = finite && std::isfinite(v);
    if (!finite) {
      row.skipped = true;
      row.note = "predictability violation";
    } else {
      const auto w = WeightVector::normalized(std::move(r), Normalization::SumOne);
      row.weight_variance = weight_variance(w);
      row.pushforward = WeightedEdf(q, w);
      score(row);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline nlohmann::json json_number(double v) {
  if (std::isfinite(v))
    return v;
  return nullptr;
}

inline nlohmann::json to_json(const CompareResult &r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto &row : r.rows)
    rows.push_back({{"method", row.method},
                    {"skipped", row.skipped},
                    {"note", row.note},
                    {"l2_exact", json_number(row.l2_exact)},
                    {"sup_exact", json_number(row.sup_exact)},
                    {"l2_edf", json_number(row.l2_edf)},
                    {"sup_edf", json_number(row.sup_edf)},
                    {"sup_exact_reps", json_number(row.sup_exact_reps)},
                    {"weight_variance", json_number(row.weight_variance)},
                    {"diagnostic", json_number(row.diagnostic)},
                    {"converged", row.converged}});
  return {{"n", r.n}, {"m", r.m}, {"rows", rows}};
}

inline void write_compare_csv(const CompareResult &r, std::ostream &out) {
  auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };
  out << "method,skipped,l2_exact,sup_exact,l2_edf,sup_edf,sup_exact_reps,weight_variance,diagnostic\n";
  for (const auto &row : r.rows)
    out << row.method << ',' << (row.skipped ? 1 : 0) << ',' << num(row.l2_exact) << ',' << num(row.sup_exact) << ','
        << num(row.l2_edf) << ',' << num(row.sup_edf) << ',' << num(row.sup_exact_reps) << ','
        << num(row.weight_variance) << ',' << num(row.diagnostic) << '\n';
}

} // namespace dci

#endif // DCI_EXPERIMENTS_HPP_
