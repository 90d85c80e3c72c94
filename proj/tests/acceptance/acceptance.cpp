// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "dci/dci.hpp"

#include "json.hpp"
#include "oracles.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

using namespace dci;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::size_t hw_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

Eigen::VectorXd as_eigen(const WeightVector &w) {
  return Eigen::Map<const Eigen::VectorXd>(w.values().data(), static_cast<Eigen::Index>(w.size()));
}

std::vector<std::vector<double>> rows_of(const SampleSet &s) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    out.emplace_back(s.point(i).begin(), s.point(i).end());
  return out;
}

// 1. Active-set solutions agree with exhaustive enumeration / grid search.
Outcome qp_against_oracles() {
  double worst = 0.0, worst_kkt = 0.0, solve_secs = 0.0;
  bool all_converged = true;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const std::size_t ell = 2 + i % 3, d = 1 + (i / 3) % 2;
    std::mt19937_64 gen(1000 + i);
    std::uniform_real_distribution<double> u(0.0, 0.95);
    std::normal_distribution<double> z(0.6, 0.15);
    std::vector<double> q(ell * d), y(40 * d);
    for (auto &v : q)
      v = u(gen);
    for (auto &v : y)
      v = z(gen);
    const SampleSet qs(d, q), ys(d, y);
    const QpProblem p{assemble_h(qs), assemble_b_empirical(qs, ys)};
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = solve_qp(p);
    solve_secs += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all_converged = all_converged && r.converged;
    const Eigen::VectorXd expect = ell <= 3 ? oracle::enumerate_qp(p.h, p.b) : oracle::grid_search_qp(p.h, p.b, 1e-3);
    worst = std::max(worst, (as_eigen(r.weights) - expect).cwiseAbs().maxCoeff());
    worst_kkt = std::max(worst_kkt, verify_kkt(p, r.weights.values(), 1e-8).stationarity_residual);
  }
  const bool pass = all_converged && worst <= 2e-3 && worst_kkt <= 1e-8 && solve_secs < 10.0;
  return {pass, "max|w - w_oracle| = " + fmt(worst) + " (tol 2e-3), max KKT residual = " + fmt(worst_kkt) +
                    ", solver time " + fmt(solve_secs) + " s over 50 instances"};
}

// 2. H and b against midpoint quadrature on lattice-aligned points, where the rule is exact.
Outcome assembly_against_quadrature() {
  double worst_h = 0.0, worst_b = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::size_t d = i < 10 ? 1 : 2;
    const std::size_t lattice = d == 1 ? 100000 : 1000;
    std::mt19937_64 gen(2000 + i);
    std::uniform_int_distribution<std::size_t> k(0, lattice - 1), ell_d(2, 8), m_d(5, 30);
    const std::size_t ell = ell_d(gen), m = m_d(gen);
    std::vector<double> q(ell * d), y(m * d);
    for (auto &v : q)
      v = static_cast<double>(k(gen)) / static_cast<double>(lattice);
    for (auto &v : y)
      v = static_cast<double>(k(gen)) / static_cast<double>(lattice);
    const SampleSet qs(d, q), ys(d, y);
    const auto h = assemble_h(qs);
    const auto b = assemble_b_empirical(qs, ys);
    worst_h = std::max(worst_h, (h - oracle::midpoint_h(rows_of(qs), lattice)).cwiseAbs().maxCoeff());
    worst_b = std::max(worst_b, (b - oracle::midpoint_b_empirical(rows_of(qs), rows_of(ys), lattice)).cwiseAbs().maxCoeff());
  }
  return {worst_h <= 1e-6 && worst_b <= 1e-6,
          "max|H - H_quad| = " + fmt(worst_h) + ", max|b - b_quad| = " + fmt(worst_b) + " (tol 1e-6, 20 instances)"};
}

// 3. Target equal to the predicted samples gives w = 1.
Outcome identity_weights() {
  double worst = 0.0;
  bool converged = true;
  for (std::size_t d : {1, 2})
    for (std::size_t ell : {2, 20, 100, 200}) {
      const auto s = uniform_sampler(BoxScaler(std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)), ell,
                                     3000 + ell + d);
      const QpProblem p{assemble_h(s), assemble_b_empirical(s, s)};
      const auto r = solve_qp(p);
      converged = converged && r.converged;
      for (double w : r.weights.mean_one_values())
        worst = std::max(worst, std::abs(w - 1.0));
      const auto naive = solve_naive(s, s, TargetDistribution(s));
      converged = converged && naive.qp.converged;
      for (double w : naive.qp.weights.mean_one_values())
        worst = std::max(worst, std::abs(w - 1.0));
    }
  return {converged && worst <= 1e-6, "max|w - 1| = " + fmt(worst) + " for l in {2,20,100,200}, d in {1,2}"};
}

// 4. Σu = 1, shared weight inside a cell, Σ_{cell} u = w_k/p.
Outcome binning_structure() {
  double sum_err = 0.0, cell_err = 0.0;
  bool shared = true;
  auto check = [&](const BinnedSolution &s) {
    const double p = static_cast<double>(s.cell_weights.size());
    std::vector<double> per_cell(s.cell_weights.size(), 0.0);
    std::map<std::size_t, double> first;
    double total = 0.0;
    for (std::size_t i = 0; i < s.sample_weights.size(); ++i) {
      const double u = s.sample_weights[i];
      total += u;
      per_cell[s.assignments[i]] += u;
      auto [it, fresh] = first.emplace(s.assignments[i], u);
      shared = shared && (fresh || it->second == u);
    }
    sum_err = std::max(sum_err, std::abs(total - 1.0));
    for (std::size_t k = 0; k < per_cell.size(); ++k)
      cell_err = std::max(cell_err, std::abs(per_cell[k] - s.cell_weights[k] / p));
  };
  const HeatRodModel heat;
  const auto target = normal_sampler(0.59, 0.005, 10000, 1);
  for (auto kind : {PartitionKind::RegularGrid, PartitionKind::KMeans}) {
    PartitionSpec spec;
    spec.kind = kind;
    spec.p = 20;
    spec.seed = 4;
    BinningOptions opt;
    opt.n_batch = 1000;
    opt.target_samples = 10000;
    check(solve_binning(model_source(heat.model(), heat.params().lambda_box, 4), TargetDistribution(target), spec, opt)
              .solution);
    const auto pairs = draw_initial(ModelSpec{}, 3000, 5);
    spec.cells_per_dim = {60};
    spec.p = 60;
    check(bin_fixed_samples(pairs.parameters, pairs.data, TargetDistribution(target), spec).solution);
  }
  return {sum_err <= 1e-8 && cell_err <= 1e-10 && shared,
          "max|sum u - 1| = " + fmt(sum_err) + ", max|sum_cell u - w_k/p| = " + fmt(cell_err) +
              ", equal weights within cells: " + (shared ? "yes" : "no")};
}

// 5. Predictability diagnostic on the heat rod.
Outcome heat_rod_diagnostic() {
  const ModelSpec model;
  const auto pairs = draw_initial(model, 2000, 0);
  const TargetSpec ok;
  const auto good = density_update(pairs.data, realize_target(ok, model).samples);
  TargetSpec bad;
  bad.mu = 0.568;
  bad.sigma = 0.005;
  const auto violating = density_update(pairs.data, realize_target(bad, model).samples);
  double qmin = std::numeric_limits<double>::infinity();
  for (double q : pairs.data.flat())
    qmin = std::min(qmin, q);
  const double mass_below = normal_cdf(0.568, 0.005, qmin);
  const bool pass = good.diagnostic >= 0.9 && good.diagnostic <= 1.1 && violating.diagnostic < 0.9 &&
                    mass_below >= 0.4;
  return {pass, "N(0.59,0.005): E(r) = " + fmt(good.diagnostic) + " (want [0.9,1.1]); N(0.568,0.005): E(r) = " +
                    fmt(violating.diagnostic) + " (want < 0.9), target mass below min Q = " + fmt(mass_below)};
}

// 6. Binning beats the density method in sup-norm on the mixture target.
Outcome mixture_sup_norm() {
  CompareSpec spec;
  spec.target.kind = TargetKind::Mixture;
  spec.target.empirical = false;
  spec.target.m = 10000;
  spec.n = 20000;
  spec.p = 400;
  spec.threads = hw_threads();
  const auto r = compare_methods(spec);
  const double bin = r.row("binning-grid").sup_exact, dens = r.row("density").sup_exact;
  return {bin <= 0.01 && bin < dens, "binning-grid sup = " + fmt(bin) + " (want <= 0.01), density sup = " + fmt(dens) +
                                         ", binning-kmeans sup = " + fmt(r.row("binning-kmeans").sup_exact)};
}

// 7. Convergence study errors shrink with n and p.
Outcome convergence_study() {
  ConvergenceSpec spec;
  spec.threads = hw_threads();
  const auto r = run_convergence(spec);
  const std::size_t last_n = spec.n_grid.size() - 1, last_p = spec.p_grid.size() - 1;
  const double b_small = r.summary(0, 0, 0).mean_abs_error, b_big = r.summary(0, last_n, last_p).mean_abs_error;
  const double a_small = r.summary(2, 0, 0).mean_abs_error, a_big = r.summary(2, last_n, last_p).mean_abs_error;
  bool std_shrinks = true;
  std::string stds;
  for (std::size_t ip = 0; ip < spec.p_grid.size(); ++ip) {
    const double s0 = r.summary(2, 0, ip).std, s1 = r.summary(2, last_n, ip).std;
    std_shrinks = std_shrinks && s1 < s0;
    stds += " p=" + std::to_string(spec.p_grid[ip]) + ":" + fmt(s0) + "->" + fmt(s1);
  }
  const bool pass = b_big < b_small && a_big < a_small && std_shrinks;
  return {pass, "P(B) err " + fmt(b_small) + " -> " + fmt(b_big) + ", P(A) err " + fmt(a_small) + " -> " +
                    fmt(a_big) + ", init_A std n=1e3->1e4:" + stds};
}

// 8. Naive weights are more variable than binned ones but fit the target EDF at least as well.
Outcome naive_vs_binning() {
  CompareSpec spec;
  spec.n = 200;
  spec.p = 10;
  spec.threads = hw_threads();
  const auto r = compare_methods(spec);
  const auto &naive = r.row("naive");
  std::string detail;
  bool pass = true;
  for (const char *name : {"binning-grid", "binning-kmeans"}) {
    const auto &bin = r.row(name);
    const bool var_ok = naive.weight_variance > bin.weight_variance;
    const bool l2_ok = naive.l2_edf <= bin.l2_edf + 1e-3;
    pass = pass && var_ok && l2_ok;
    detail += std::string(name) + ": var naive " + fmt(naive.weight_variance) + " vs " + fmt(bin.weight_variance) +
              ", L2 naive " + fmt(naive.l2_edf) + " vs " + fmt(bin.l2_edf) + "; ";
  }
  return {pass && naive.converged, detail};
}

// 9. The CLI is deterministic and independent of the thread count.
struct CliRun {
  int code;
  std::string out;
};

CliRun run_cli(const std::string &args) {
  const auto capture = fs::temp_directory_path() / ("dci_acc_" + std::to_string(std::random_device{}()));
  const std::string cmd = std::string(DCI_CLI_PATH) + " " + args + " > " + capture.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  std::ifstream in(capture);
  std::stringstream ss;
  ss << in.rdbuf();
  fs::remove(capture);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every file in the directory; meta.json without its runtime block.
std::map<std::string, std::string> snapshot(const fs::path &dir) {
  std::map<std::string, std::string> out;
  for (const auto &e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name == "meta.json") {
      auto j = json::parse(slurp(e.path()));
      j.erase("runtime");
      out[name] = j.dump();
    } else {
      out[name] = slurp(e.path());
    }
  }
  return out;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("dci_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(root);
  const json cfg = json::parse(R"({
    "model": {"kind": "heat_rod"},
    "target": {"kind": "normal", "params": {"mu": 0.59, "sigma": 0.005}, "m": 5000, "seed": 2},
    "n": 1000, "seed": 3,
    "binning": {"p": 20, "n_batch": 1000, "target_samples": 4000}})");
  const json spec = json::parse(R"({
    "n_grid": [200, 500], "p_grid": [5, 10], "trials": 3,
    "reference": {"n": 5000, "m": 5000, "trials": 2},
    "target": {"kind": "normal", "m": 5000}})");
  std::ofstream(root / "cfg.json") << cfg.dump(2);
  std::ofstream(root / "spec.json") << spec.dump(2);
  const std::string c = (root / "cfg.json").string(), s = (root / "spec.json").string();

  std::vector<std::pair<std::string, std::string>> commands;
  for (const char *m : {"naive", "binning-grid", "binning-kmeans", "density"})
    commands.emplace_back(std::string("solve_") + m, std::string("solve --method ") + m + " --config " + c);
  commands.emplace_back("compare", "compare --config " + c);
  commands.emplace_back("convergence", "convergence --spec " + s);

  std::size_t compared = 0;
  std::vector<std::string> failures;
  for (const auto &[name, args] : commands) {
    std::vector<std::map<std::string, std::string>> snaps;
    for (const char *threads : {"1", "1", "4"}) {
      const auto dir = root / (name + "_" + std::to_string(snaps.size()));
      const auto r = run_cli(std::string("--threads ") + threads + " " + args + " --out " + dir.string());
      if (r.code != 0) {
        failures.push_back(name + " exit " + std::to_string(r.code));
        break;
      }
      snaps.push_back(snapshot(dir));
    }
    if (snaps.size() == 3) {
      compared += snaps[0].size();
      if (snaps[0] != snaps[1])
        failures.push_back(name + " differs between identical runs");
      if (snaps[0] != snaps[2])
        failures.push_back(name + " differs between 1 and 4 threads");
    }
  }
  std::vector<std::string> diag;
  for (const char *threads : {"1", "1", "4"}) {
    const auto r = run_cli(std::string("--threads ") + threads + " diagnose --config " + c);
    diag.push_back(std::to_string(r.code) + ":" + r.out);
  }
  if (diag[0] != diag[1] || diag[0] != diag[2])
    failures.push_back("diagnose output differs");
  std::error_code ec;
  fs::remove_all(root, ec);
  std::string detail = std::to_string(commands.size() + 1) + " commands, " + std::to_string(compared) +
                       " output files compared across 3 runs (1, 1, 4 threads)";
  for (const auto &f : failures)
    detail += "; " + f;
  return {failures.empty(), detail};
}

// 10. WEDF monotonicity and limits; classification always lands in a cell.
Outcome wedf_and_classify() {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> nd(1, 25), dd(1, 3);
  std::size_t bad_monotone = 0, bad_limits = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = dd(gen), n = nd(gen);
    std::vector<double> flat(n * d), w(n);
    for (auto &v : flat)
      v = u(gen);
    for (auto &v : w)
      v = u(gen) < 0.2 ? 0.0 : u(gen);
    w[0] += 0.1;
    const auto norm = t % 2 ? Normalization::SumOne : Normalization::MeanOne;
    const WeightedEdf f(SampleSet(d, flat), WeightVector::normalized(w, norm));
    for (int k = 0; k < 20; ++k) {
      std::vector<double> x(d), y(d);
      for (std::size_t j = 0; j < d; ++j) {
        x[j] = 1.4 * u(gen) - 0.2;
        y[j] = x[j] + (u(gen) < 0.3 ? 0.0 : 0.5 * u(gen));
      }
      if (f(x) > f(y) + 1e-12)
        ++bad_monotone;
    }
    const std::vector<double> below(d, -0.01), above(d, 1.0);
    if (f(below) != 0.0 || std::abs(f(above) - 1.0) > 1e-12)
      ++bad_limits;
  }
  std::size_t bad_cells = 0;
  const auto data = uniform_sampler(BoxScaler({0.0, 0.0}, {1.0, 1.0}), 2000, 11);
  const auto grid = make_regular_grid(BoxScaler({0.0, 0.0}, {1.0, 1.0}), {7, 5});
  const auto km = make_kmeans(data, 30, 12);
  for (const auto *part : {&grid, &km})
    for (int k = 0; k < 1000; ++k) {
      const std::vector<double> q{6.0 * u(gen) - 2.5, 6.0 * u(gen) - 2.5};
      if (part->classify(q) >= part->size())
        ++bad_cells;
    }
  return {bad_monotone == 0 && bad_limits == 0 && bad_cells == 0,
          "1000 WEDFs: " + std::to_string(bad_monotone) + " monotonicity and " + std::to_string(bad_limits) +
              " limit violations; 2000 classify calls: " + std::to_string(bad_cells) + " out of range"};
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"qp solver vs oracles", qp_against_oracles},
      {"assembly vs quadrature", assembly_against_quadrature},
      {"identity target gives w = 1", identity_weights},
      {"binning weight structure", binning_structure},
      {"heat rod predictability diagnostic", heat_rod_diagnostic},
      {"mixture target sup-norm", mixture_sup_norm},
      {"convergence study", convergence_study},
      {"naive vs binning", naive_vs_binning},
      {"cli determinism", cli_determinism},
      {"wedf and classification", wedf_and_classify},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
              << " (" << fmt(secs) << " s)" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
