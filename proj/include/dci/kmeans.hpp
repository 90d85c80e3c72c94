#ifndef DCI_KMEANS_HPP_
#define DCI_KMEANS_HPP_

#include "dci/core.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dci {

struct KMeansResult {
  SampleSet centroids;
  std::vector<std::size_t> assignments;
  /// Inertia after initialization and after every Lloyd iteration.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
  std::size_t reseeded = 0;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc;
}

// Nearest centroid; ties go to the lowest index.
inline std::size_t nearest(const std::vector<double> &centroids, std::size_t dim, std::span<const double> x,
                           double *dist = nullptr) {
  const std::size_t p = centroids.size() / dim;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < p; ++c) {
    const double dd = squared_distance(std::span<const double>(centroids.data() + c * dim, dim), x);
    if (dd < best_d) {
      best_d = dd;
      best = c;
    }
  }
  if (dist)
    *dist = best_d;
  return best;
}

inline std::size_t count_distinct(const SampleSet &s) {
  std::vector<std::vector<double>> rows;
  rows.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    rows.emplace_back(s.point(i).begin(), s.point(i).end());
  std::sort(rows.begin(), rows.end());
  return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

} // namespace detail

/*
 * Lloyd's algorithm with k-means++ seeding. An empty cluster is re-seeded at
 * the point farthest from its current centroid. Stops when assignments no
 * longer change or after max_iter iterations.
 */
inline KMeansResult kmeans(const SampleSet &points, std::size_t p, std::uint64_t seed, std::size_t max_iter = 300) {
  const std::size_t n = points.size();
  const std::size_t d = points.dim();
  if (p == 0)
    throw std::invalid_argument("kmeans: p must be positive");
  if (max_iter == 0)
    throw std::invalid_argument("kmeans: max_iter must be positive");
  const std::size_t distinct = detail::count_distinct(points);
  if (p > distinct)
    throw std::invalid_argument("kmeans: p = " + std::to_string(p) + " exceeds the " + std::to_string(distinct) +
                                " distinct points");

  std::mt19937_64 gen(seed);
  std::vector<double> centers;
  centers.reserve(p * d);
  auto add_center = [&](std::size_t i) { centers.insert(centers.end(), points.point(i).begin(), points.point(i).end()); };

  add_center(std::uniform_int_distribution<std::size_t>(0, n - 1)(gen));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = detail::squared_distance(points.point(i), std::span<const double>(centers.data(), d));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centers.size() < p * d) {
    double total = 0.0;
    for (double v : d2)
      total += v;
    const double r = unit(gen) * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0)
        continue;
      acc += d2[i];
      pick = i;
      if (acc > r)
        break;
    }
    add_center(pick);
    const std::span<const double> c(centers.data() + centers.size() - d, d);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], detail::squared_distance(points.point(i), c));
  }

  KMeansResult out;
  out.assignments.assign(n, p);
  std::vector<double> dist(n);
  auto assign = [&] {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = detail::nearest(centers, d, points.point(i), &dist[i]);
      inertia += dist[i];
      if (a != out.assignments[i]) {
        out.assignments[i] = a;
        changed = true;
      }
    }
    out.inertia_history.push_back(inertia);
    return changed;
  };

  assign();
  for (std::size_t it = 0; it < max_iter; ++it) {
    ++out.iterations;
    std::vector<double> sums(p * d, 0.0);
    std::vector<std::size_t> counts(p, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = out.assignments[i];
      ++counts[a];
      for (std::size_t k = 0; k < d; ++k)
        sums[a * d + k] += points(i, k);
    }
    for (std::size_t c = 0; c < p; ++c) {
      if (counts[c] == 0) {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        for (std::size_t k = 0; k < d; ++k)
          centers[c * d + k] = points(far, k);
        dist[far] = 0.0;
        ++out.reseeded;
        continue;
      }
      for (std::size_t k = 0; k < d; ++k)
        centers[c * d + k] = sums[c * d + k] / static_cast<double>(counts[c]);
    }
    if (!assign())
      break;
  }
  out.centroids = SampleSet(d, std::move(centers));
  return out;
}

} // namespace dci

#endif // DCI_KMEANS_HPP_
