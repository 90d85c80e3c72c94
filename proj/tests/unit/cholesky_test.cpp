#include "dci/cholesky.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dci;

namespace {

Eigen::MatrixXd random_spd(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      a(i, j) = z(gen);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

Eigen::VectorXd direct_solve(const Eigen::MatrixXd &a, const std::vector<std::size_t> &idx, const Eigen::VectorXd &rhs) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c)
      sub(r, c) = a(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]),
                    static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)]));
  return sub.fullPivLu().solve(rhs);
}

} // namespace

TEST(UpdatableCholesky, AppendThenSolve) {
  const auto a = random_spd(8, 1);
  UpdatableCholesky chol(a);
  for (std::size_t j : {3u, 0u, 7u, 5u})
    chol.append(j);
  Eigen::VectorXd rhs(4);
  rhs << 1.0, -2.0, 0.5, 3.0;
  Eigen::VectorXd x = rhs;
  chol.solve_in_place(x);
  EXPECT_LT((x - direct_solve(a, chol.indices(), rhs)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(UpdatableCholesky, RemoveKeepsFactorConsistent) {
  const auto a = random_spd(10, 2);
  UpdatableCholesky chol(a);
  for (std::size_t j = 0; j < 10; ++j)
    chol.append(j);
  std::mt19937_64 gen(9);
  for (int round = 0; round < 6; ++round) {
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, chol.size() - 1)(gen);
    chol.remove_at(pos);
    Eigen::VectorXd rhs = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(chol.size()), -1.0, 2.0);
    Eigen::VectorXd x = rhs;
    chol.solve_in_place(x);
    EXPECT_LT((x - direct_solve(a, chol.indices(), rhs)).cwiseAbs().maxCoeff(), 1e-9);
  }
  chol.append(0);
  Eigen::VectorXd rhs = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(chol.size()));
  Eigen::VectorXd x = rhs;
  chol.solve_in_place(x);
  EXPECT_LT((x - direct_solve(a, chol.indices(), rhs)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(chol.remove_at(chol.size()), std::out_of_range);
}

TEST(UpdatableCholesky, ReportsOffendingPivot) {
  Eigen::MatrixXd a(3, 3);
  a << 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0;
  UpdatableCholesky chol(a);
  chol.append(0);
  try {
    chol.append(1);
    FAIL() << "expected NotPositiveDefinite";
  } catch (const NotPositiveDefinite &e) {
    EXPECT_EQ(e.pivot(), 1u);
  }
  EXPECT_EQ(cholesky_failure(a), std::optional<std::size_t>(1));
  EXPECT_FALSE(cholesky_failure(random_spd(4, 3)).has_value());
}
