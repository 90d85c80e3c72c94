#include "dci/experiments.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dci;

TEST(Summarize, SampleStatistics) {
  const auto s = summarize({1.0, 2.0, 4.0}, 2.0);
  EXPECT_DOUBLE_EQ(s.mean, 7.0 / 3.0);
  const double m = 7.0 / 3.0;
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(((1 - m) * (1 - m) + (2 - m) * (2 - m) + (4 - m) * (4 - m)) / 2.0));
  EXPECT_DOUBLE_EQ(s.mean_abs_error, (1.0 + 0.0 + 2.0) / 3.0);
  EXPECT_DOUBLE_EQ(s.abs_error_of_mean, 1.0 / 3.0);
  EXPECT_EQ(summarize({0.5}, 0.0).std, 0.0);
}

TEST(DrawInitial, PrefixProperty) {
  const ModelSpec model;
  const auto big = draw_initial(model, 300, 7);
  const auto small = draw_initial(model, 100, 7);
  EXPECT_EQ(big.parameters.prefix(100).flat(), small.parameters.flat());
  EXPECT_EQ(big.data.prefix(100).flat(), small.data.flat());
  EXPECT_THROW(draw_initial(model, 0, 7), std::invalid_argument);
}

TEST(ImageBounds, ContainsImageOfRegion) {
  const ModelSpec model;
  const Region a{{2.01, 0.95}, {2.02, 1.0}};
  const auto b = image_bounds(model, a);
  ASSERT_LT(b.lower[0], b.upper[0]);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> l(2.01, 2.02), k(0.95, 1.0);
  const HeatRodModel heat;
  for (int i = 0; i < 1000; ++i) {
    const double q = heat_qoi(heat.params(), l(gen), k(gen));
    EXPECT_GE(q, b.lower[0] - 1e-6);
    EXPECT_LE(q, b.upper[0] + 1e-6);
  }
  const double corner = heat_qoi(heat.params(), 2.01, 0.95);
  EXPECT_TRUE(corner >= b.lower[0] && corner <= b.upper[0]);
}

namespace {

ConvergenceSpec tiny_convergence() {
  ConvergenceSpec spec;
  spec.n_grid = {200, 400};
  spec.p_grid = {5, 10};
  spec.trials = 3;
  spec.reference.n = 2000;
  spec.reference.m = 2000;
  spec.reference.trials = 2;
  spec.target.m = 2000;
  return spec;
}

} // namespace

TEST(Convergence, WholeSpacesHaveProbabilityOne) {
  auto spec = tiny_convergence();
  spec.region_a = Region{{1.9, 0.5}, {2.1, 1.5}};
  spec.region_b = Region{{0.0}, {10.0}};
  const auto r = run_convergence(spec);
  EXPECT_NEAR(r.reference.p_a, 1.0, 1e-12);
  EXPECT_NEAR(r.reference.p_b, 1.0, 1e-12);
  for (std::size_t qi = 0; qi < 3; ++qi)
    for (std::size_t in = 0; in < 2; ++in)
      for (std::size_t ip = 0; ip < 2; ++ip) {
        const auto s = r.summary(qi, in, ip);
        EXPECT_NEAR(s.mean, 1.0, 1e-9);
        EXPECT_NEAR(s.mean_abs_error, 0.0, 1e-9);
      }
}

TEST(Convergence, DeterministicAcrossThreadCounts) {
  auto spec = tiny_convergence();
  spec.threads = 1;
  const auto a = to_json(run_convergence(spec)).dump();
  spec.threads = 3;
  const auto b = to_json(run_convergence(spec)).dump();
  EXPECT_EQ(a, b);
}

TEST(Convergence, ReferenceFailsForViolatingTarget) {
  auto spec = tiny_convergence();
  spec.target.mu = 0.568;
  spec.target.sigma = 0.005;
  EXPECT_THROW(run_reference(spec, Region{{0.59}, {0.5936}}), ReferenceFailed);
}

TEST(Convergence, ValidateRejectsBadGrids) {
  auto spec = tiny_convergence();
  spec.n_grid = {400, 200};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = tiny_convergence();
  spec.p_grid = {};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = tiny_convergence();
  spec.trials = 0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Compare, IdentityTarget) {
  CompareSpec spec;
  spec.n = 150;
  spec.seed = 4;
  spec.target.kind = TargetKind::Pushforward;
  spec.target.seed = 4;
  spec.target.m = 150;
  const auto r = compare_methods(spec);
  const auto &naive = r.row("naive");
  ASSERT_FALSE(naive.skipped);
  EXPECT_LT(naive.weight_variance, 1e-10);
  EXPECT_LT(naive.sup_edf, 1e-8);
  const auto &density = r.row("density");
  EXPECT_DOUBLE_EQ(density.diagnostic, 1.0);
  EXPECT_LT(density.weight_variance, 1e-20);
  EXPECT_EQ(r.row("unweighted").sup_edf, 0.0);
  EXPECT_TRUE(std::isnan(naive.sup_exact));
  EXPECT_THROW(r.row("nope"), std::out_of_range);
}

TEST(Compare, JsonDeterministicAcrossThreads) {
  CompareSpec spec;
  spec.n = 300;
  spec.target.m = 2000;
  spec.threads = 1;
  const auto a = to_json(compare_methods(spec)).dump();
  spec.threads = 4;
  const auto b = to_json(compare_methods(spec)).dump();
  EXPECT_EQ(a, b);
  const auto r = compare_methods(spec);
  EXPECT_EQ(r.rows.size(), 5u);
  std::ostringstream csv;
  write_compare_csv(r, csv);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
}

TEST(Compare, NaiveSkippedAboveLimit) {
  CompareSpec spec;
  spec.n = 300;
  spec.naive_max_n = 100;
  spec.target.m = 500;
  const auto r = compare_methods(spec);
  EXPECT_TRUE(r.row("naive").skipped);
  EXPECT_FALSE(r.row("binning-grid").skipped);
}
