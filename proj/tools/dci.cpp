// dci: command-line front end for distribution-based data-consistent inversion.
//
// Exit codes: 0 ok, 1 other failure, 2 configuration or input error,
// 3 solver did not converge, 4 unreachable cell, 5 diagnostic outside [0.8, 1.2].

#include "dci/dci.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNotConverged = 3, kUnreachable = 4, kDiagnostic = 5 };

class NotConverged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

void log(const std::string &msg) { std::cerr << "dci: " << msg << std::endl; }

std::size_t resolve_threads(int flag) { return flag > 0 ? static_cast<std::size_t>(flag) : dci::default_thread_count(); }

dci::SolveConfig load_solve_config(const std::string &path) {
  const json j = dci::config::read_json_file(path);
  return dci::parse_solve_config(j, fs::path(path).parent_path());
}

void write_json(const fs::path &path, const json &j) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void prepare_dir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create " + dir + ": " + ec.message());
}

json qp_json(const dci::QpResult &r) {
  return {{"converged", r.converged},
          {"iterations", r.iterations},
          {"method", r.method == dci::QpMethod::ActiveSet ? "active_set" : "projected_gradient"},
          {"cycle_guard_triggered", r.cycle_guard_triggered},
          {"objective", r.objective},
          {"kkt",
           {{"stationarity", r.kkt.stationarity_residual},
            {"feasibility", r.kkt.feasibility_residual},
            {"complementarity", r.kkt.complementarity_residual}}}};
}

void check_converged(const dci::QpResult &r) {
  if (!r.converged)
    throw NotConverged("QP solver did not converge after " + std::to_string(r.iterations) +
                       " iterations (stationarity residual " + dci::format_double(r.kkt.stationarity_residual) + ")");
}

struct SolveOutput {
  dci::SampleSet parameters;
  dci::SampleSet data;
  std::vector<double> weights;
  std::string extra_name;
  std::vector<double> extra;
};

void write_weights(const fs::path &path, const SolveOutput &s) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << "index";
  for (std::size_t k = 0; k < s.parameters.dim(); ++k)
    out << ",lambda" << k + 1;
  for (std::size_t k = 0; k < s.data.dim(); ++k)
    out << ",q" << k + 1;
  out << ",weight";
  if (!s.extra_name.empty())
    out << ',' << s.extra_name;
  out << '\n';
  for (std::size_t i = 0; i < s.parameters.size(); ++i) {
    out << i;
    for (std::size_t k = 0; k < s.parameters.dim(); ++k)
      out << ',' << dci::format_double(s.parameters(i, k));
    for (std::size_t k = 0; k < s.data.dim(); ++k)
      out << ',' << dci::format_double(s.data(i, k));
    out << ',' << dci::format_double(s.weights[i]);
    if (!s.extra_name.empty())
      out << ',' << dci::format_double(s.extra[i]);
    out << '\n';
  }
}

// Push-forward, unweighted predicted and target CDFs on a regular grid over the data.
json write_pushforward(const fs::path &path, const SolveOutput &s, const dci::RealizedTarget &target) {
  const dci::WeightedEdf push(s.data, dci::WeightVector::normalized(s.weights, dci::Normalization::SumOne));
  const auto unweighted = dci::WeightedEdf::unweighted(s.data);
  const auto target_edf = dci::WeightedEdf::unweighted(target.samples);
  const auto box = dci::fit_box(s.data.append(target.samples));
  const std::size_t d = s.data.dim();
  const std::size_t per_dim = d == 1 ? 201 : d == 2 ? 41 : 11;

  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  for (std::size_t k = 0; k < d; ++k)
    out << 'q' << k + 1 << ',';
  out << "pushforward,unweighted,target_edf" << (target.exact ? ",target_cdf" : "") << '\n';
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> x(d);
  while (true) {
    for (std::size_t k = 0; k < d; ++k)
      x[k] = box.unscale(k, static_cast<double>(idx[k]) / static_cast<double>(per_dim - 1));
    for (double v : x)
      out << dci::format_double(v) << ',';
    out << dci::format_double(push(x)) << ',' << dci::format_double(unweighted(x)) << ','
        << dci::format_double(target_edf(x));
    if (target.exact)
      out << ',' << dci::format_double(target.exact->cdf(x));
    out << '\n';
    std::size_t k = 0;
    while (k < d && ++idx[k] == per_dim)
      idx[k++] = 0;
    if (k == d)
      break;
  }

  json dist;
  const auto fit = dci::qp_box(s.data);
  const std::size_t grid = d == 1 ? 20000 : dci::default_grid_per_dim(d);
  dist["l2_target_edf"] = dci::unit_l2_distance(push.as_cdf(), target_edf.as_cdf(), fit, grid);
  if (d == 1)
    dist["sup_target_edf"] =
        dci::sup_distance_1d(push.as_cdf(), target_edf.as_cdf(), dci::breakpoints_of({&s.data, &target.samples}));
  if (target.exact) {
    dist["l2_target_cdf"] = dci::unit_l2_distance(push.as_cdf(), target.exact->cdf, fit, grid);
    if (d == 1)
      dist["sup_target_cdf"] = dci::sup_distance_1d(push.as_cdf(), target.exact->cdf, dci::breakpoints_of({&s.data}));
  }
  return dist;
}

int run_solve(const std::string &method, const std::string &config_path, const std::string &out_dir,
              std::size_t threads) {
  const auto start = std::chrono::steady_clock::now();
  const auto cfg = load_solve_config(config_path);
  const auto target = dci::realize_target(cfg.target, cfg.model, threads);
  const auto qp_target = target.for_qp();

  json meta;
  meta["version"] = dci::kVersion;
  meta["command"] = "solve";
  meta["method"] = method;
  meta["config"] = dci::to_json(cfg);
  meta["seeds"] = {{"initial", cfg.seed}, {"target", cfg.target.seed}};
  meta["target_samples"] = target.samples.size();

  SolveOutput s;
  if (method == "naive") {
    auto pairs = dci::draw_initial(cfg.model, cfg.n, cfg.seed, threads);
    log("naive: solving the QP on " + std::to_string(cfg.n) + " samples");
    auto naive = dci::solve_naive(pairs.parameters, pairs.data, qp_target, std::nullopt, cfg.solver, threads);
    meta["qp"] = qp_json(naive.qp);
    check_converged(naive.qp);
    meta["jittered_duplicates"] = naive.jittered;
    meta["weight_variance"] = dci::weight_variance(naive.qp.weights);
    s.parameters = std::move(pairs.parameters);
    s.data = std::move(pairs.data);
    for (double w : naive.qp.weights.values())
      s.weights.push_back(w / static_cast<double>(cfg.n));
  } else if (method == "binning-grid" || method == "binning-kmeans") {
    dci::PartitionSpec part;
    part.kind = method == "binning-grid" ? dci::PartitionKind::RegularGrid : dci::PartitionKind::KMeans;
    part.cells_per_dim = cfg.binning.cells_per_dim;
    part.p = cfg.binning.p;
    part.seed = cfg.seed;
    part.max_iter = cfg.binning.kmeans_max_iter;
    dci::BinningOptions opt;
    opt.n_batch = cfg.binning.n_batch;
    opt.target_samples = cfg.binning.target_samples;
    opt.weight_floor = cfg.binning.weight_floor;
    opt.max_batches = cfg.binning.max_batches;
    opt.qp = cfg.solver;
    opt.threads = threads;
    dci::BinningRun run;
    if (cfg.binning.mode == "fixed") {
      auto pairs = dci::draw_initial(cfg.model, cfg.n, cfg.seed, threads);
      run = dci::bin_fixed_samples(pairs.parameters, pairs.data, qp_target, part, opt);
    } else {
      dci::BatchSource source;
      if (cfg.model.kind == dci::ModelKind::HeatRod)
        source = dci::model_source(dci::HeatRodModel(cfg.model.heat).model(), cfg.model.heat.lambda_box, cfg.seed,
                                   threads);
      else
        source = dci::pairs_source(dci::load_pairs(cfg.model.params_csv, cfg.model.data_csv));
      run = dci::solve_binning(source, qp_target, part, opt);
    }
    meta["qp"] = qp_json(run.qp);
    check_converged(run.qp);
    meta["seeds"]["kmeans"] = cfg.seed;
    meta["p"] = run.partition.size();
    meta["batches"] = run.batches;
    meta["n"] = run.parameters.size();
    meta["cell_weights"] = run.solution.cell_weights.values();
    meta["cell_counts"] = run.solution.counts;
    meta["min_counts"] = run.min_counts;
    meta["weight_variance"] = dci::weight_variance(run.solution.sample_weights);
    s.parameters = run.parameters;
    s.data = run.data;
    s.weights = run.solution.sample_weights.values();
    s.extra_name = "cell";
    for (auto a : run.solution.assignments)
      s.extra.push_back(static_cast<double>(a));
  } else {
    auto pairs = dci::draw_initial(cfg.model, cfg.n, cfg.seed, threads);
    const auto update =
        dci::density_update(pairs.data, target.samples, cfg.kde.rule, cfg.kde.bandwidth, threads);
    meta["diagnostic"] = update.diagnostic;
    meta["violations"] = update.violations;
    meta["kde_rule"] = dci::to_string(cfg.kde.rule);
    meta["seeds"]["rejection"] = cfg.rejection_seed;
    double total = 0.0;
    for (double r : update.r)
      total += r;
    if (update.violations > 0 || !(total > 0.0))
      throw std::runtime_error("density update has " + std::to_string(update.violations) +
                               " predictability violations; weights are undefined");
    const auto accepted = dci::rejection_sample(pairs.parameters, update.r, cfg.rejection_seed);
    meta["rejection_accepted"] = accepted.indices.size();
    for (double r : update.r)
      s.weights.push_back(r / total);
    meta["weight_variance"] =
        dci::weight_variance(dci::WeightVector::normalized(update.r, dci::Normalization::SumOne));
    s.parameters = std::move(pairs.parameters);
    s.data = std::move(pairs.data);
    s.extra_name = "r";
    s.extra = update.r;
  }
  if (!meta.contains("n"))
    meta["n"] = s.parameters.size();

  prepare_dir(out_dir);
  write_weights(fs::path(out_dir) / "weights.csv", s);
  meta["distances"] = write_pushforward(fs::path(out_dir) / "pushforward.csv", s, target);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  meta["runtime"] = {{"wall_clock_seconds", secs}, {"threads", threads}};
  write_json(fs::path(out_dir) / "meta.json", meta);
  log("wrote " + out_dir + "/weights.csv, pushforward.csv, meta.json");
  return kOk;
}

int run_diagnose(const std::string &config_path, std::size_t threads) {
  const auto cfg = load_solve_config(config_path);
  const auto target = dci::realize_target(cfg.target, cfg.model, threads);
  const auto pairs = dci::draw_initial(cfg.model, cfg.n, cfg.seed, threads);
  const auto update = dci::density_update(pairs.data, target.samples, cfg.kde.rule, cfg.kde.bandwidth, threads);
  json out{{"diagnostic", dci::json_number(update.diagnostic)},
           {"violations", update.violations},
           {"n", pairs.data.size()},
           {"m", target.samples.size()}};
  std::cout << out.dump() << std::endl;
  const bool ok = update.diagnostic >= 0.8 && update.diagnostic <= 1.2;
  if (!ok)
    log("diagnostic " + dci::format_double(update.diagnostic) + " lies outside [0.8, 1.2]");
  return ok ? kOk : kDiagnostic;
}

int run_convergence_cmd(const std::string &spec_path, const std::string &out_dir, std::size_t threads) {
  const auto start = std::chrono::steady_clock::now();
  const json j = dci::config::read_json_file(spec_path);
  auto spec = dci::parse_convergence_spec(j, fs::path(spec_path).parent_path());
  spec.threads = threads;
  const auto result = dci::run_convergence(spec, [](const std::string &msg) { log(msg); });
  prepare_dir(out_dir);
  json doc = dci::to_json(result);
  doc["version"] = dci::kVersion;
  doc["spec"] = dci::to_json(spec);
  write_json(fs::path(out_dir) / "result.json", doc);
  const auto files = dci::write_surfaces(result, out_dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json meta{{"version", dci::kVersion},
            {"command", "convergence"},
            {"config", dci::to_json(spec)},
            {"seeds", {{"base", spec.seed}, {"target", spec.target.seed}, {"reference", result.reference.seeds}}},
            {"files", files},
            {"runtime", {{"wall_clock_seconds", secs}, {"threads", threads}}}};
  write_json(fs::path(out_dir) / "meta.json", meta);
  log("wrote " + out_dir + "/result.json and " + std::to_string(files.size()) + " surface files");
  return kOk;
}

int run_compare(const std::string &config_path, const std::string &out_dir, std::size_t threads) {
  const auto start = std::chrono::steady_clock::now();
  const auto cfg = load_solve_config(config_path);
  dci::CompareSpec spec;
  spec.model = cfg.model;
  spec.target = cfg.target;
  spec.n = cfg.n;
  spec.seed = cfg.seed;
  spec.p = cfg.binning.p;
  spec.rule = cfg.kde.rule;
  spec.naive_max_n = cfg.naive_max_n;
  spec.weight_floor = cfg.binning.weight_floor;
  spec.qp = cfg.solver;
  spec.threads = threads;
  const auto result = dci::compare_methods(spec);
  prepare_dir(out_dir);
  json doc = dci::to_json(result);
  doc["version"] = dci::kVersion;
  write_json(fs::path(out_dir) / "compare.json", doc);
  {
    std::ofstream csv(fs::path(out_dir) / "compare.csv");
    dci::write_compare_csv(result, csv);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json meta{{"version", dci::kVersion},
            {"command", "compare"},
            {"config", dci::to_json(cfg)},
            {"seeds", {{"initial", cfg.seed}, {"target", cfg.target.seed}}},
            {"runtime", {{"wall_clock_seconds", secs}, {"threads", threads}}}};
  write_json(fs::path(out_dir) / "meta.json", meta);
  log("wrote " + out_dir + "/compare.json, compare.csv, meta.json");
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Distribution-based data-consistent inversion"};
  app.set_version_flag("--version", std::string(dci::kVersion));
  int threads_flag = 0;
  app.add_option("--threads", threads_flag, "Worker threads (default: DCI_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  app.require_subcommand(1);

  std::string method, config_path, out_dir, spec_path;
  auto *solve = app.add_subcommand("solve", "Weight initial samples with one inversion method");
  solve->add_option("--method", method, "naive, binning-grid, binning-kmeans or density")
      ->required()
      ->check(CLI::IsMember({"naive", "binning-grid", "binning-kmeans", "density"}));
  solve->add_option("--config", config_path, "JSON configuration")->required();
  solve->add_option("--out", out_dir, "Output directory")->required();

  auto *diagnose = app.add_subcommand("diagnose", "Print the predictability diagnostic of the density update");
  diagnose->add_option("--config", config_path, "JSON configuration")->required();

  auto *convergence = app.add_subcommand("convergence", "Run the convergence study");
  convergence->add_option("--spec", spec_path, "JSON study specification")->required();
  convergence->add_option("--out", out_dir, "Output directory")->required();

  auto *compare = app.add_subcommand("compare", "Compare the push-forwards of all methods on one sample set");
  compare->add_option("--config", config_path, "JSON configuration")->required();
  compare->add_option("--out", out_dir, "Output directory")->required();

  for (auto *sub : {solve, diagnose, convergence, compare})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kConfig;
  }

  const std::size_t threads = resolve_threads(threads_flag);
  try {
    if (*solve)
      return run_solve(method, config_path, out_dir, threads);
    if (*diagnose)
      return run_diagnose(config_path, threads);
    if (*convergence)
      return run_convergence_cmd(spec_path, out_dir, threads);
    return run_compare(config_path, out_dir, threads);
  } catch (const dci::ConfigError &e) {
    log(std::string("config error: ") + e.what());
    return kConfig;
  } catch (const dci::ParseError &e) {
    log(std::string("input error: ") + e.what());
    return kConfig;
  } catch (const NotConverged &e) {
    log(e.what());
    return kNotConverged;
  } catch (const dci::UnreachableCell &e) {
    log(std::string("unreachable cell: ") + e.what());
    return kUnreachable;
  } catch (const std::exception &e) {
    log(std::string("error: ") + e.what());
    return kFailure;
  }
}
