#ifndef DCI_QP_SOLVER_HPP_
#define DCI_QP_SOLVER_HPP_

#include "dci/cholesky.hpp"
#include "dci/core.hpp"
#include "dci/qp_assembly.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dci {

/*
 * Weight fitting problem
 *
 *   minimize   ½ wᵀHw − bᵀw
 *   subject to w ⪰ 0,  (1/ℓ) Σ w_i = 1
 *
 * ½∫(F_w − F)² expands to exactly this objective plus a constant, so its
 * minimiser is the L²-optimal weighted EDF.
 */

struct QpOptions {
  double tol = 1e-8;
  /// 0 selects 50·ℓ.
  std::size_t max_iter = 0;
  /// Feasible starting point (projected onto the scaled simplex); all-ones when empty.
  std::vector<double> initial;
  /// Skip the active-set method and run projected gradient directly.
  bool force_projected_gradient = false;
};

struct KktReport {
  double stationarity_residual = 0.0;
  double feasibility_residual = 0.0;
  double complementarity_residual = 0.0;
  bool pass = false;
};

enum class QpMethod { ActiveSet, ProjectedGradient };

struct QpResult {
  WeightVector weights;
  bool converged = false;
  std::size_t iterations = 0;
  QpMethod method = QpMethod::ActiveSet;
  bool cycle_guard_triggered = false;
  KktReport kkt;
  double objective = 0.0;
  /// Objective value after every accepted iterate.
  std::vector<double> objective_history;
};

inline double qp_objective(const QpProblem &problem, const Eigen::VectorXd &w) {
  return 0.5 * w.dot(problem.h * w) - problem.b.dot(w);
}

inline double qp_objective(const QpProblem &problem, const std::vector<double> &w) {
  return qp_objective(problem, Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())));
}

/*
 * KKT certificate for a candidate w. With g = Hw − b and c the mean of g
 * over the support {w_i > 0}, the multipliers are ν = −ℓc for the
 * equality and μ_i = max(0, g_i − c) for the bounds. Residuals:
 *   stationarity    max_i |g_i − c − μ_i|
 *   feasibility     max(|mean(w) − 1|, max_i max(0, −w_i))
 *   complementarity max_i |μ_i w_i|
 */
inline KktReport verify_kkt(const QpProblem &problem, const std::vector<double> &w, double tol) {
  const auto ell = static_cast<Eigen::Index>(problem.ell());
  if (static_cast<Eigen::Index>(w.size()) != ell || problem.h.rows() != ell || problem.h.cols() != ell)
    throw std::invalid_argument("verify_kkt: dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), ell);
  const Eigen::VectorXd g = problem.h * wv - problem.b;

  KktReport r;
  double sum = 0.0, support_g = 0.0;
  std::size_t support = 0;
  for (Eigen::Index i = 0; i < ell; ++i) {
    sum += wv(i);
    r.feasibility_residual = std::max(r.feasibility_residual, -wv(i));
    if (wv(i) > 0.0) {
      support_g += g(i);
      ++support;
    }
  }
  r.feasibility_residual = std::max(r.feasibility_residual, std::abs(sum / static_cast<double>(ell) - 1.0));
  if (support == 0) {
    r.stationarity_residual = std::numeric_limits<double>::infinity();
    return r;
  }
  const double c = support_g / static_cast<double>(support);
  for (Eigen::Index i = 0; i < ell; ++i) {
    const double mu = std::max(0.0, g(i) - c);
    r.stationarity_residual = std::max(r.stationarity_residual, std::abs(g(i) - c - mu));
    r.complementarity_residual = std::max(r.complementarity_residual, std::abs(mu * wv(i)));
  }
  r.pass = r.stationarity_residual <= tol && r.feasibility_residual <= tol &&
           r.complementarity_residual <= tol;
  return r;
}

/// Euclidean projection onto {w ⪰ 0, Σ w = total}.
inline std::vector<double> project_to_simplex(const std::vector<double> &v, double total) {
  std::vector<double> s(v);
  std::sort(s.begin(), s.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    cumulative += s[j];
    const double t = (cumulative - total) / static_cast<double>(j + 1);
    if (s[j] - t > 0.0)
      theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = std::max(0.0, v[i] - theta);
  return out;
}

namespace detail {

inline void check_problem(const QpProblem &problem) {
  const auto ell = problem.h.rows();
  if (ell == 0 || problem.h.cols() != ell || problem.b.size() != ell)
    throw std::invalid_argument("solve_qp: H must be square and match b");
  if (!problem.b.allFinite() || !problem.h.allFinite())
    throw std::invalid_argument("solve_qp: non-finite entries in H or b");
}

// Clip [−tol, 0) to zero and rescale to mean one.
inline std::vector<double> cleanup_weights(std::vector<double> w) {
  double sum = 0.0;
  for (auto &v : w) {
    v = std::max(0.0, v);
    sum += v;
  }
  const double scale = static_cast<double>(w.size()) / sum;
  for (auto &v : w)
    v *= scale;
  return w;
}

inline QpResult finish(const QpProblem &problem, std::vector<double> w, double tol, QpResult r) {
  w = cleanup_weights(std::move(w));
  r.kkt = verify_kkt(problem, w, tol);
  r.objective = qp_objective(problem, w);
  r.converged = r.converged && r.kkt.pass;
  r.weights = WeightVector(std::move(w), Normalization::MeanOne);
  return r;
}

inline QpResult projected_gradient(const QpProblem &problem, std::vector<double> w, const QpOptions &opt,
                                   std::size_t max_iter, QpResult r) {
  const auto ell = static_cast<Eigen::Index>(problem.ell());
  // Row-sum bound on the largest eigenvalue (H has nonnegative entries).
  const double lipschitz = problem.h.cwiseAbs().rowwise().sum().maxCoeff();
  const double step = 1.0 / lipschitz;
  r.method = QpMethod::ProjectedGradient;
  r.objective_history.push_back(qp_objective(problem, w));
  for (std::size_t it = 0; it < max_iter; ++it) {
    ++r.iterations;
    const Eigen::Map<const Eigen::VectorXd> wv(w.data(), ell);
    const Eigen::VectorXd g = problem.h * wv - problem.b;
    std::vector<double> trial(static_cast<std::size_t>(ell));
    for (Eigen::Index i = 0; i < ell; ++i)
      trial[static_cast<std::size_t>(i)] = wv(i) - step * g(i);
    w = project_to_simplex(trial, static_cast<double>(ell));
    r.objective_history.push_back(qp_objective(problem, w));
    if (verify_kkt(problem, w, opt.tol).pass) {
      r.converged = true;
      break;
    }
  }
  return finish(problem, std::move(w), opt.tol, std::move(r));
}

} // namespace detail

/*
 * Primal active-set method over the scaled simplex.
 *
 * The working set W holds indices fixed at zero; the free block H[F,F] is
 * kept Cholesky-factored and updated as indices enter or leave F. Each
 * iteration solves the equality-constrained subproblem on F, steps towards
 * its solution until a weight hits zero, and releases the bound with the
 * most negative multiplier once the subproblem optimum is feasible. A
 * working set seen twice at a subproblem optimum switches to projected
 * gradient.
 */
inline QpResult solve_qp(const QpProblem &problem, const QpOptions &opt = {}) {
  detail::check_problem(problem);
  const std::size_t ell = problem.ell();
  const std::size_t max_iter = opt.max_iter == 0 ? 50 * ell : opt.max_iter;
  const double total = static_cast<double>(ell);

  std::vector<double> w(ell, 1.0);
  if (!opt.initial.empty()) {
    if (opt.initial.size() != ell)
      throw std::invalid_argument("solve_qp: initial point has the wrong length");
    w = project_to_simplex(opt.initial, total);
  }

  QpResult result;
  if (opt.force_projected_gradient)
    return detail::projected_gradient(problem, std::move(w), opt, max_iter, std::move(result));

  std::vector<char> in_working(ell, 0);
  UpdatableCholesky chol(problem.h);
  for (std::size_t i = 0; i < ell; ++i) {
    if (w[i] > 0.0)
      chol.append(i);
    else {
      in_working[i] = 1;
      w[i] = 0.0;
    }
  }

  std::set<std::vector<std::size_t>> visited;
  result.objective_history.push_back(qp_objective(problem, w));
  const auto as_index = [](std::size_t i) { return static_cast<Eigen::Index>(i); };

  while (result.iterations < max_iter) {
    ++result.iterations;
    const auto &free_idx = chol.indices();
    const auto k = static_cast<Eigen::Index>(free_idx.size());

    // Subproblem on F: H_FF x = b_F − c·1, Σ x = ℓ.
    Eigen::VectorXd hb(k), h1 = Eigen::VectorXd::Ones(k);
    for (Eigen::Index r = 0; r < k; ++r)
      hb(r) = problem.b(as_index(free_idx[static_cast<std::size_t>(r)]));
    chol.solve_in_place(hb);
    chol.solve_in_place(h1);
    const double c = (hb.sum() - total) / h1.sum();
    Eigen::VectorXd target = hb - c * h1;

    // Step towards the subproblem solution, stopping at the first bound hit.
    double alpha = 1.0;
    std::optional<std::size_t> blocking;
    for (Eigen::Index r = 0; r < k; ++r) {
      const double cur = w[free_idx[static_cast<std::size_t>(r)]];
      if (target(r) < cur && target(r) < 0.0) {
        const double a = cur / (cur - target(r));
        if (a < alpha) {
          alpha = a;
          blocking = static_cast<std::size_t>(r);
        }
      }
    }
    for (Eigen::Index r = 0; r < k; ++r) {
      auto &wi = w[free_idx[static_cast<std::size_t>(r)]];
      wi += alpha * (target(r) - wi);
    }

    if (blocking) {
      const std::size_t j = free_idx[*blocking];
      w[j] = 0.0;
      in_working[j] = 1;
      chol.remove_at(*blocking);
      result.objective_history.push_back(qp_objective(problem, w));
      continue;
    }
    result.objective_history.push_back(qp_objective(problem, w));

    // Subproblem optimum reached: check bound multipliers μ_i = g_i + c.
    const Eigen::VectorXd g = problem.h * Eigen::Map<const Eigen::VectorXd>(w.data(), as_index(ell)) - problem.b;
    double most_negative = -opt.tol;
    std::optional<std::size_t> release;
    for (std::size_t i = 0; i < ell; ++i) {
      if (!in_working[i])
        continue;
      const double mu = g(as_index(i)) + c;
      if (mu < most_negative) {
        most_negative = mu;
        release = i;
      }
    }
    if (!release) {
      result.converged = true;
      return detail::finish(problem, std::move(w), opt.tol, std::move(result));
    }

    std::vector<std::size_t> working;
    for (std::size_t i = 0; i < ell; ++i)
      if (in_working[i])
        working.push_back(i);
    if (!visited.insert(working).second) {
      result.cycle_guard_triggered = true;
      return detail::projected_gradient(problem, std::move(w), opt, max_iter, std::move(result));
    }
    in_working[*release] = 0;
    chol.append(*release);
  }
  return detail::finish(problem, std::move(w), opt.tol, std::move(result));
}

} // namespace dci

#endif // DCI_QP_SOLVER_HPP_
