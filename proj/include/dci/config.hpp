#ifndef DCI_CONFIG_HPP_
#define DCI_CONFIG_HPP_

#include "dci/binning.hpp"
#include "dci/density.hpp"
#include "dci/experiments.hpp"
#include "dci/models.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dci {

/// Invalid configuration; `pointer` is the JSON pointer of the offending key.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string pointer, const std::string &what)
      : std::runtime_error((pointer.empty() ? std::string("/") : pointer) + ": " + what), pointer_(std::move(pointer)) {}
  const std::string &pointer() const { return pointer_; }

private:
  std::string pointer_;
};

namespace config {

using nlohmann::json;

// Typed access into one JSON object, tracking its JSON pointer.
class Node {
public:
  Node(const json &j, std::string pointer) : j_(&j), pointer_(std::move(pointer)) {
    if (!j.is_object())
      throw ConfigError(pointer_, "expected an object");
  }

  const std::string &pointer() const { return pointer_; }
  std::string child(const std::string &key) const { return pointer_ + "/" + key; }
  bool has(const std::string &key) const { return j_->contains(key); }

  void allow(std::initializer_list<const char *> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!ok.count(it.key()))
        throw ConfigError(child(it.key()), "unknown key");
  }

  Node object(const std::string &key) const {
    if (!has(key))
      throw ConfigError(child(key), "missing required object");
    return Node(j_->at(key), child(key));
  }

  double number(const std::string &key, std::optional<double> fallback = std::nullopt) const {
    if (!has(key)) {
      if (!fallback)
        throw ConfigError(child(key), "missing required number");
      return *fallback;
    }
    const auto &v = j_->at(key);
    if (!v.is_number())
      throw ConfigError(child(key), "expected a number");
    return v.get<double>();
  }

  std::uint64_t count(const std::string &key, std::optional<std::uint64_t> fallback = std::nullopt,
                      std::uint64_t minimum = 0) const {
    if (!has(key)) {
      if (!fallback)
        throw ConfigError(child(key), "missing required integer");
      return *fallback;
    }
    return as_count(j_->at(key), child(key), minimum);
  }

  bool boolean(const std::string &key, bool fallback) const {
    if (!has(key))
      return fallback;
    const auto &v = j_->at(key);
    if (!v.is_boolean())
      throw ConfigError(child(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string &key, std::optional<std::string> fallback = std::nullopt) const {
    if (!has(key)) {
      if (!fallback)
        throw ConfigError(child(key), "missing required string");
      return *fallback;
    }
    const auto &v = j_->at(key);
    if (!v.is_string())
      throw ConfigError(child(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string &key) const {
    const auto &v = array(key);
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ConfigError(child(key) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string &key, std::uint64_t minimum = 1) const {
    const auto &v = array(key);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(as_count(v[i], child(key) + "/" + std::to_string(i), minimum));
    return out;
  }

  const json &array(const std::string &key) const {
    if (!has(key))
      throw ConfigError(child(key), "missing required array");
    const auto &v = j_->at(key);
    if (!v.is_array() || v.empty())
      throw ConfigError(child(key), "expected a nonempty array");
    return v;
  }

  const json &raw() const { return *j_; }

  static std::uint64_t as_count(const json &v, const std::string &pointer, std::uint64_t minimum) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(pointer, "expected a nonnegative integer");
    const auto value = v.get<std::uint64_t>();
    if (value < minimum)
      throw ConfigError(pointer, "must be at least " + std::to_string(minimum));
    return value;
  }

private:
  const json *j_;
  std::string pointer_;
};

inline std::string resolve_path(const std::string &path, const std::filesystem::path &base) {
  std::filesystem::path p(path);
  if (p.is_relative() && !base.empty())
    p = base / p;
  return p.string();
}

inline Region parse_region(const Node &n, std::size_t dim) {
  n.allow({"lower", "upper"});
  Region r{n.numbers("lower"), n.numbers("upper")};
  if (r.lower.size() != dim)
    throw ConfigError(n.child("lower"), "expected " + std::to_string(dim) + " entries");
  if (r.upper.size() != dim)
    throw ConfigError(n.child("upper"), "expected " + std::to_string(dim) + " entries");
  return r;
}

inline ModelSpec parse_model(const Node &n, const std::filesystem::path &base) {
  ModelSpec m;
  const auto kind = n.string("kind");
  if (kind == "heat_rod") {
    n.allow({"kind", "x_star", "t_star", "truncation", "variant", "lambda_box"});
    m.kind = ModelKind::HeatRod;
    m.heat.x_star = n.number("x_star", m.heat.x_star);
    m.heat.t_star = n.number("t_star", m.heat.t_star);
    m.heat.truncation = n.count("truncation", m.heat.truncation, 1);
    try {
      m.heat.variant = heat_rod_variant_from_string(n.string("variant", "normalized"));
    } catch (const std::invalid_argument &e) {
      throw ConfigError(n.child("variant"), e.what());
    }
    if (n.has("lambda_box")) {
      const auto box = parse_region(n.object("lambda_box"), 2);
      try {
        m.heat.lambda_box = BoxScaler(box.lower, box.upper);
      } catch (const std::invalid_argument &e) {
        throw ConfigError(n.child("lambda_box"), e.what());
      }
    }
    try {
      m.heat.validate();
    } catch (const std::invalid_argument &e) {
      throw ConfigError(n.pointer(), e.what());
    }
  } else if (kind == "pairs") {
    n.allow({"kind", "params_csv", "data_csv"});
    m.kind = ModelKind::Pairs;
    m.params_csv = resolve_path(n.string("params_csv"), base);
    m.data_csv = resolve_path(n.string("data_csv"), base);
  } else {
    throw ConfigError(n.child("kind"), "expected \"heat_rod\" or \"pairs\"");
  }
  return m;
}

inline TargetSpec parse_target(const Node &n, const std::filesystem::path &base) {
  n.allow({"kind", "params", "seed", "m", "empirical"});
  TargetSpec t;
  t.seed = n.count("seed", t.seed);
  t.m = n.count("m", t.m, 1);
  t.empirical = n.boolean("empirical", t.empirical);
  const auto kind = n.string("kind");
  const json empty = json::object();
  const Node params = n.has("params") ? n.object("params") : Node(empty, n.child("params"));
  if (kind == "normal") {
    params.allow({"mu", "sigma"});
    t.kind = TargetKind::Normal;
    t.mu = params.number("mu", t.mu);
    t.sigma = params.number("sigma", t.sigma);
    if (!(t.sigma > 0.0))
      throw ConfigError(params.child("sigma"), "must be positive");
  } else if (kind == "uniform") {
    params.allow({"lower", "upper"});
    t.kind = TargetKind::Uniform;
    t.lower = params.number("lower");
    t.upper = params.number("upper");
    if (!(t.upper > t.lower))
      throw ConfigError(params.child("upper"), "must exceed lower");
  } else if (kind == "mixture") {
    params.allow({"components"});
    t.kind = TargetKind::Mixture;
    if (params.has("components")) {
      const auto &arr = params.array("components");
      std::vector<UniformComponent> comps;
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const Node c(arr[i], params.child("components") + "/" + std::to_string(i));
        c.allow({"weight", "lower", "upper"});
        comps.push_back({c.number("weight"), c.number("lower"), c.number("upper")});
      }
      try {
        t.mixture = MixtureOfUniforms(std::move(comps));
      } catch (const std::invalid_argument &e) {
        throw ConfigError(params.child("components"), e.what());
      }
    }
  } else if (kind == "samples_csv") {
    params.allow({"path"});
    t.kind = TargetKind::SamplesCsv;
    t.samples_csv = resolve_path(params.string("path"), base);
  } else if (kind == "pushforward") {
    params.allow({});
    t.kind = TargetKind::Pushforward;
  } else {
    throw ConfigError(n.child("kind"), "expected one of normal, uniform, mixture, samples_csv, pushforward");
  }
  return t;
}

inline QpOptions parse_solver(const Node &n) {
  n.allow({"tol", "max_iter"});
  QpOptions o;
  o.tol = n.number("tol", o.tol);
  if (!(o.tol > 0.0))
    throw ConfigError(n.child("tol"), "must be positive");
  o.max_iter = n.count("max_iter", 0);
  return o;
}

struct KdeSettings {
  BandwidthRule rule = BandwidthRule::Scott;
  double bandwidth = 0.0;
};

inline KdeSettings parse_kde(const Node &n) {
  n.allow({"rule", "bandwidth"});
  KdeSettings k;
  try {
    k.rule = bandwidth_rule_from_string(n.string("rule", "scott"));
  } catch (const std::invalid_argument &e) {
    throw ConfigError(n.child("rule"), e.what());
  }
  k.bandwidth = n.number("bandwidth", 0.0);
  if (k.rule == BandwidthRule::Fixed && !(k.bandwidth > 0.0))
    throw ConfigError(n.child("bandwidth"), "a positive bandwidth is required for the fixed rule");
  return k;
}

inline json read_json_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError("", std::string("malformed JSON in ") + path + ": " + e.what());
  }
}

} // namespace config

struct BinningSettings {
  std::vector<std::size_t> cells_per_dim{20};
  std::size_t p = 20;
  std::size_t n_batch = 1000;
  std::size_t target_samples = 10000;
  double weight_floor = kDefaultWeightFloor;
  std::size_t max_batches = 1000;
  std::size_t kmeans_max_iter = 300;
  /// "batched": draw batches from a live model until every cell is filled; "fixed": bin the n initial samples as drawn.
  std::string mode = "batched";
};

/// Everything `solve`, `diagnose` and `compare` need.
struct SolveConfig {
  ModelSpec model;
  TargetSpec target;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  BinningSettings binning;
  QpOptions solver;
  config::KdeSettings kde;
  std::uint64_t rejection_seed = 0;
  std::size_t naive_max_n = 5000;
  nlohmann::json raw;
};

inline SolveConfig parse_solve_config(const nlohmann::json &j, const std::filesystem::path &base = {}) {
  using config::Node;
  const Node root(j, "");
  root.allow({"model", "target", "n", "seed", "binning", "solver", "kde", "rejection_seed", "naive_max_n"});
  SolveConfig c;
  c.raw = j;
  c.model = config::parse_model(root.object("model"), base);
  c.target = config::parse_target(root.object("target"), base);
  c.n = root.count("n", c.n, 1);
  c.seed = root.count("seed", c.seed);
  c.rejection_seed = root.count("rejection_seed", c.seed + 7);
  c.naive_max_n = root.count("naive_max_n", c.naive_max_n, 1);
  if (root.has("binning")) {
    const Node b = root.object("binning");
    b.allow({"p", "cells_per_dim", "n_batch", "target_samples", "weight_floor", "max_batches", "kmeans_max_iter",
             "mode"});
    auto &s = c.binning;
    if (b.has("cells_per_dim"))
      s.cells_per_dim = b.counts("cells_per_dim", 1);
    s.p = b.count("p", s.p, 1);
    if (!b.has("cells_per_dim") && b.has("p"))
      s.cells_per_dim = {s.p};
    s.n_batch = b.count("n_batch", c.n, 1);
    s.target_samples = b.count("target_samples", c.n, 1);
    s.weight_floor = b.number("weight_floor", s.weight_floor);
    s.max_batches = b.count("max_batches", s.max_batches, 1);
    s.kmeans_max_iter = b.count("kmeans_max_iter", s.kmeans_max_iter, 1);
    s.mode = b.string("mode", s.mode);
    if (s.mode != "batched" && s.mode != "fixed")
      throw ConfigError(b.child("mode"), "expected \"batched\" or \"fixed\"");
  } else {
    c.binning.n_batch = c.n;
    c.binning.target_samples = c.n;
  }
  if (root.has("solver"))
    c.solver = config::parse_solver(root.object("solver"));
  if (root.has("kde"))
    c.kde = config::parse_kde(root.object("kde"));
  return c;
}

inline ConvergenceSpec parse_convergence_spec(const nlohmann::json &j, const std::filesystem::path &base = {}) {
  using config::Node;
  const Node root(j, "");
  root.allow({"n_grid", "p_grid", "trials", "seed", "region_A", "region_B", "partition", "model", "target",
              "reference", "weight_floor", "solver"});
  ConvergenceSpec s;
  if (root.has("n_grid"))
    s.n_grid = root.counts("n_grid", 1);
  if (root.has("p_grid"))
    s.p_grid = root.counts("p_grid", 1);
  for (const char *key : {"n_grid", "p_grid"}) {
    const auto &v = std::string(key) == "n_grid" ? s.n_grid : s.p_grid;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] <= v[i - 1])
        throw ConfigError(root.child(key) + "/" + std::to_string(i), "grid must be strictly increasing");
  }
  s.trials = root.count("trials", s.trials, 1);
  s.seed = root.count("seed", s.seed);
  if (root.has("region_A"))
    s.region_a = config::parse_region(root.object("region_A"), 2);
  if (root.has("region_B"))
    s.region_b = config::parse_region(root.object("region_B"), 1);
  const auto kind = root.string("partition", "grid");
  if (kind == "grid")
    s.partition = PartitionKind::RegularGrid;
  else if (kind == "kmeans")
    s.partition = PartitionKind::KMeans;
  else
    throw ConfigError(root.child("partition"), "expected \"grid\" or \"kmeans\"");
  if (root.has("model"))
    s.model = config::parse_model(root.object("model"), base);
  if (s.model.kind != ModelKind::HeatRod)
    throw ConfigError(root.child("model") + "/kind", "the convergence study needs the heat_rod model");
  if (root.has("target"))
    s.target = config::parse_target(root.object("target"), base);
  if (root.has("reference")) {
    const Node r = root.object("reference");
    r.allow({"n", "m", "trials", "seed", "rule"});
    s.reference.n = r.count("n", s.reference.n, 2);
    s.reference.m = r.count("m", s.reference.m, 2);
    s.reference.trials = r.count("trials", s.reference.trials, 1);
    s.reference.seed = r.count("seed", s.reference.seed);
    try {
      s.reference.rule = bandwidth_rule_from_string(r.string("rule", "scott"));
    } catch (const std::invalid_argument &e) {
      throw ConfigError(r.child("rule"), e.what());
    }
    if (s.reference.rule == BandwidthRule::Fixed)
      throw ConfigError(r.child("rule"), "the reference baseline needs scott or silverman");
  }
  s.weight_floor = root.number("weight_floor", s.weight_floor);
  if (root.has("solver"))
    s.qp = config::parse_solver(root.object("solver"));
  return s;
}

inline nlohmann::json to_json(const ModelSpec &m) {
  if (m.kind == ModelKind::Pairs)
    return {{"kind", "pairs"}, {"params_csv", m.params_csv}, {"data_csv", m.data_csv}};
  const auto &h = m.heat;
  return {{"kind", "heat_rod"},
          {"x_star", h.x_star},
          {"t_star", h.t_star},
          {"truncation", h.truncation},
          {"variant", to_string(h.variant)},
          {"lambda_box", {{"lower", h.lambda_box.lower()}, {"upper", h.lambda_box.upper()}}}};
}

inline nlohmann::json to_json(const TargetSpec &t) {
  nlohmann::json j{{"seed", t.seed}, {"m", t.m}, {"empirical", t.empirical}};
  switch (t.kind) {
  case TargetKind::Normal:
    j["kind"] = "normal";
    j["params"] = {{"mu", t.mu}, {"sigma", t.sigma}};
    break;
  case TargetKind::Uniform:
    j["kind"] = "uniform";
    j["params"] = {{"lower", t.lower}, {"upper", t.upper}};
    break;
  case TargetKind::Mixture: {
    j["kind"] = "mixture";
    nlohmann::json comps = nlohmann::json::array();
    for (const auto &c : t.mixture.components())
      comps.push_back({{"weight", c.weight}, {"lower", c.lower}, {"upper", c.upper}});
    j["params"] = {{"components", comps}};
    break;
  }
  case TargetKind::SamplesCsv:
    j["kind"] = "samples_csv";
    j["params"] = {{"path", t.samples_csv}};
    break;
  case TargetKind::Pushforward:
    j["kind"] = "pushforward";
    j["params"] = nlohmann::json::object();
    break;
  }
  return j;
}

inline nlohmann::json to_json(const SolveConfig &c) {
  const auto &b = c.binning;
  return {{"model", to_json(c.model)},
          {"target", to_json(c.target)},
          {"n", c.n},
          {"seed", c.seed},
          {"rejection_seed", c.rejection_seed},
          {"naive_max_n", c.naive_max_n},
          {"binning",
           {{"cells_per_dim", b.cells_per_dim},
            {"p", b.p},
            {"n_batch", b.n_batch},
            {"target_samples", b.target_samples},
            {"weight_floor", b.weight_floor},
            {"max_batches", b.max_batches},
            {"kmeans_max_iter", b.kmeans_max_iter},
            {"mode", b.mode}}},
          {"solver", {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}}},
          {"kde", {{"rule", to_string(c.kde.rule)}, {"bandwidth", c.kde.bandwidth}}}};
}

inline nlohmann::json to_json(const ConvergenceSpec &s) {
  nlohmann::json j;
  j["n_grid"] = s.n_grid;
  j["p_grid"] = s.p_grid;
  j["trials"] = s.trials;
  j["seed"] = s.seed;
  j["region_A"] = region_json(s.region_a);
  if (s.region_b)
    j["region_B"] = region_json(*s.region_b);
  j["partition"] = to_string(s.partition);
  j["reference"] = {{"n", s.reference.n},
                    {"m", s.reference.m},
                    {"trials", s.reference.trials},
                    {"seed", s.reference.seed},
                    {"rule", to_string(s.reference.rule)}};
  j["weight_floor"] = s.weight_floor;
  j["solver"] = {{"tol", s.qp.tol}, {"max_iter", s.qp.max_iter}};
  j["model"] = to_json(s.model);
  j["target"] = to_json(s.target);
  return j;
}

} // namespace dci

#endif // DCI_CONFIG_HPP_
