// End-to-end checks of the dci executable.
#include "json.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Workspace {
public:
  Workspace() {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("dci_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  fs::path path(const std::string &name) const { return dir_ / name; }

  fs::path write(const std::string &name, const std::string &content) const {
    std::ofstream(path(name)) << content;
    return path(name);
  }
  fs::path write_json(const std::string &name, const json &j) const { return write(name, j.dump(2)); }

private:
  fs::path dir_;
};

struct Run {
  int code = -1;
  std::string out;
};

Run dci(const std::string &args, const std::string &env = "") {
  const auto capture = fs::temp_directory_path() / ("dci_cli_stdout_" + std::to_string(std::random_device{}()));
  const std::string cmd = env + " " + std::string(DCI_CLI_PATH) + " " + args + " > " + capture.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(capture);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  fs::remove(capture);
  return r;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json meta_without_runtime(const fs::path &p) {
  auto j = json::parse(slurp(p));
  j.erase("runtime");
  return j;
}

json small_config() {
  return json::parse(R"({
    "model": {"kind": "heat_rod"},
    "target": {"kind": "normal", "params": {"mu": 0.59, "sigma": 0.005}, "m": 2000, "seed": 2},
    "n": 300,
    "seed": 5,
    "binning": {"p": 10, "n_batch": 300, "target_samples": 600, "mode": "batched"}
  })");
}

} // namespace

TEST(Cli, VersionAndUsage) {
  EXPECT_EQ(dci("--version").code, 0);
  EXPECT_EQ(dci("").code, 2);
  EXPECT_EQ(dci("solve --method bogus --config x --out y").code, 2);
}

TEST(Cli, SolveEveryMethodDeterministically) {
  Workspace ws;
  const auto cfg = ws.write_json("cfg.json", small_config());
  for (const std::string method : {"naive", "binning-grid", "binning-kmeans", "density"}) {
    const auto a = ws.path(method + "_a"), b = ws.path(method + "_b"), c = ws.path(method + "_c");
    ASSERT_EQ(dci("solve --method " + method + " --config " + cfg.string() + " --out " + a.string()).code, 0) << method;
    ASSERT_EQ(dci("solve --method " + method + " --config " + cfg.string() + " --out " + b.string()).code, 0);
    ASSERT_EQ(dci("--threads 3 solve --method " + method + " --config " + cfg.string() + " --out " + c.string()).code,
              0);
    for (const char *file : {"weights.csv", "pushforward.csv"}) {
      EXPECT_EQ(slurp(a / file), slurp(b / file)) << method << " " << file;
      EXPECT_EQ(slurp(a / file), slurp(c / file)) << method << " " << file;
    }
    EXPECT_EQ(meta_without_runtime(a / "meta.json"), meta_without_runtime(b / "meta.json"));
    EXPECT_EQ(meta_without_runtime(a / "meta.json"), meta_without_runtime(c / "meta.json"));
    const auto meta = json::parse(slurp(a / "meta.json"));
    EXPECT_TRUE(meta.contains("runtime"));
    EXPECT_EQ(meta["method"], method);

    // Weights sum to one.
    std::istringstream rows(slurp(a / "weights.csv"));
    std::string line;
    std::getline(rows, line);
    const auto header = line;
    std::size_t weight_col = 0, col = 0;
    for (std::size_t pos = 0, next; ; pos = next + 1, ++col) {
      next = header.find(',', pos);
      if (header.substr(pos, next - pos) == "weight")
        weight_col = col;
      if (next == std::string::npos)
        break;
    }
    double total = 0.0;
    std::size_t count = 0;
    while (std::getline(rows, line)) {
      std::istringstream fields(line);
      std::string f;
      for (std::size_t k = 0; k <= weight_col; ++k)
        std::getline(fields, f, ',');
      total += std::stod(f);
      ++count;
    }
    EXPECT_GE(count, 300u);
    EXPECT_NEAR(total, 1.0, 1e-8) << method;
  }
}

TEST(Cli, ThreadsFromEnvironment) {
  Workspace ws;
  const auto cfg = ws.write_json("cfg.json", small_config());
  ASSERT_EQ(dci("solve --method binning-grid --config " + cfg.string() + " --out " + ws.path("a").string(),
                "DCI_THREADS=1")
                .code,
            0);
  ASSERT_EQ(dci("solve --method binning-grid --config " + cfg.string() + " --out " + ws.path("b").string(),
                "DCI_THREADS=4")
                .code,
            0);
  EXPECT_EQ(slurp(ws.path("a") / "weights.csv"), slurp(ws.path("b") / "weights.csv"));
  EXPECT_EQ(json::parse(slurp(ws.path("b") / "meta.json"))["runtime"]["threads"], 4);
}

TEST(Cli, ConfigErrorsExitTwo) {
  Workspace ws;
  auto bad = small_config();
  bad["binning"]["foo"] = 1;
  const auto cfg = ws.write_json("bad.json", bad);
  EXPECT_EQ(dci("solve --method naive --config " + cfg.string() + " --out " + ws.path("o").string()).code, 2);
  EXPECT_EQ(dci("solve --method naive --config " + ws.write("broken.json", "{ not json").string() + " --out " +
                ws.path("o").string())
                .code,
            2);
  EXPECT_EQ(dci("diagnose --config " + ws.path("missing.json").string()).code, 2);

  ws.write("params.csv", "");
  ws.write("data.csv", "");
  const auto pairs = ws.write_json("pairs.json", json::parse(R"({
    "model": {"kind": "pairs", "params_csv": "params.csv", "data_csv": "data.csv"},
    "target": {"kind": "uniform", "params": {"lower": 0.0, "upper": 1.0}, "m": 100},
    "n": 10})"));
  EXPECT_EQ(dci("solve --method naive --config " + pairs.string() + " --out " + ws.path("o").string()).code, 2);
}

TEST(Cli, NotConvergedExitsThree) {
  Workspace ws;
  auto j = small_config();
  j["n"] = 200;
  j["solver"] = {{"max_iter", 1}};
  const auto cfg = ws.write_json("cfg.json", j);
  EXPECT_EQ(dci("solve --method naive --config " + cfg.string() + " --out " + ws.path("o").string()).code, 3);
}

TEST(Cli, UnreachableCellExitsFour) {
  Workspace ws;
  auto j = small_config();
  j["binning"] = {{"p", 10}, {"n_batch", 50}, {"target_samples", 100000}, {"max_batches", 1}};
  const auto cfg = ws.write_json("cfg.json", j);
  EXPECT_EQ(dci("solve --method binning-grid --config " + cfg.string() + " --out " + ws.path("o").string()).code, 4);
}

TEST(Cli, DiagnoseFlagsViolation) {
  Workspace ws;
  auto ok = small_config();
  ok["n"] = 2000;
  const auto good = dci("diagnose --config " + ws.write_json("ok.json", ok).string());
  EXPECT_EQ(good.code, 0);
  const auto gj = json::parse(good.out);
  EXPECT_GE(gj["diagnostic"].get<double>(), 0.8);
  EXPECT_LE(gj["diagnostic"].get<double>(), 1.2);

  auto bad = ok;
  bad["target"]["params"] = {{"mu", 0.568}, {"sigma", 0.005}};
  const auto r = dci("diagnose --config " + ws.write_json("bad.json", bad).string());
  EXPECT_EQ(r.code, 5);
  EXPECT_LT(json::parse(r.out)["diagnostic"].get<double>(), 0.8);
}

TEST(Cli, CompareWritesAllRows) {
  Workspace ws;
  const auto cfg = ws.write_json("cfg.json", small_config());
  ASSERT_EQ(dci("compare --config " + cfg.string() + " --out " + ws.path("a").string()).code, 0);
  ASSERT_EQ(dci("--threads 2 compare --config " + cfg.string() + " --out " + ws.path("b").string()).code, 0);
  EXPECT_EQ(slurp(ws.path("a") / "compare.json"), slurp(ws.path("b") / "compare.json"));
  EXPECT_EQ(slurp(ws.path("a") / "compare.csv"), slurp(ws.path("b") / "compare.csv"));
  const auto j = json::parse(slurp(ws.path("a") / "compare.json"));
  EXPECT_EQ(j["rows"].size(), 5u);
}

TEST(Cli, TinyConvergenceStudy) {
  Workspace ws;
  const auto spec = ws.write_json("spec.json", json::parse(R"({
    "n_grid": [200, 400], "p_grid": [5, 10], "trials": 2,
    "reference": {"n": 2000, "m": 2000, "trials": 2},
    "target": {"kind": "normal", "m": 2000}})"));
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(dci("convergence --spec " + spec.string() + " --out " + ws.path("a").string()).code, 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 60.0);
  ASSERT_EQ(dci("--threads 3 convergence --spec " + spec.string() + " --out " + ws.path("b").string()).code, 0);
  EXPECT_EQ(slurp(ws.path("a") / "result.json"), slurp(ws.path("b") / "result.json"));
  const auto meta = json::parse(slurp(ws.path("a") / "meta.json"));
  for (const auto &f : meta["files"])
    EXPECT_EQ(slurp(ws.path("a") / f.get<std::string>()), slurp(ws.path("b") / f.get<std::string>()));
}
