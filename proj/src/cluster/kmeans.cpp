#include "cgid/cluster/kmeans.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"

namespace cgid {
namespace {

std::size_t nearest(const DenseMatrix& centroids, std::span<const double> point, double* dist_out = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(centroids.row(c), point);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

// Index drawn with probability proportional to weights[i]; zero-weight entries are never drawn.
std::size_t weighted_pick(const std::vector<double>& weights, double total, Rng& rng) {
  double r = uniform01(rng) * total;
  std::size_t pick = weights.size() - 1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    r -= weights[i];
    if (r < 0.0) {
      pick = i;
      break;
    }
  }
  while (weights[pick] <= 0.0) --pick;  // rounding tail landed on a chosen point
  return pick;
}

// Greedy k-means++: each step draws 2 + ln(k) candidates by D² weighting and keeps the one that
// lowers the potential most.
DenseMatrix plus_plus_init(const DenseMatrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  DenseMatrix centroids;
  centroids.append_row(x.row(uniform_index(rng, n)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), centroids.row(0));
  std::vector<double> candidate_d2(n), best_d2(n);
  while (centroids.rows() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) {
      centroids.append_row(x.row(uniform_index(rng, n)));
      continue;
    }
    std::size_t best = n;
    double best_potential = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t c = weighted_pick(d2, total, rng);
      double potential = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        candidate_d2[i] = std::min(d2[i], squared_distance(x.row(i), x.row(c)));
        potential += candidate_d2[i];
      }
      if (potential < best_potential) {
        best_potential = potential;
        best = c;
        best_d2.swap(candidate_d2);
      }
    }
    centroids.append_row(x.row(best));
    d2.swap(best_d2);
  }
  return centroids;
}

DenseMatrix centroids_of(const DenseMatrix& x, const std::vector<std::size_t>& assign, std::size_t k,
                         const DenseMatrix& previous) {
  DenseMatrix sums(k, x.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto s = sums.row(assign[i]);
    auto r = x.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) s[j] += r[j];
    ++counts[assign[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    auto s = sums.row(c);
    if (counts[c] == 0) {
      auto p = previous.row(c);
      std::copy(p.begin(), p.end(), s.begin());
      continue;
    }
    for (double& v : s) v /= static_cast<double>(counts[c]);
  }
  return sums;
}

double inertia_of(const DenseMatrix& x, const std::vector<std::size_t>& assign, const DenseMatrix& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) total += squared_distance(x.row(i), centroids.row(assign[i]));
  return total;
}

}  // namespace

std::vector<std::size_t> ClusteringResult::cluster_sizes() const {
  std::vector<std::size_t> sizes(centroids.rows(), 0);
  for (std::size_t a : assignments) ++sizes[a];
  return sizes;
}

ClusteringResult kmeans(const DenseMatrix& x, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  if (k == 0) throw ConfigError("kmeans: k must be positive");
  if (k > x.rows()) {
    throw ConfigError("kmeans: k=" + std::to_string(k) + " exceeds the " + std::to_string(x.rows()) + " samples");
  }
  Rng rng(derive_seed(seed, tag("kmeans++")));
  ClusteringResult result;
  result.centroids = plus_plus_init(x, k, rng);
  std::vector<std::size_t> assign(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) assign[i] = nearest(result.centroids, x.row(i));

  const std::size_t budget = std::max<std::size_t>(max_iters, 1);
  for (std::size_t it = 0; it < budget; ++it) {
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : assign) ++counts[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // Farthest point from its own centroid, among clusters that can spare one.
      std::size_t far = x.rows();
      double far_d = -1.0;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        if (counts[assign[i]] < 2) continue;
        const double d = squared_distance(x.row(i), result.centroids.row(assign[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == x.rows()) break;
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      auto dst = result.centroids.row(c);
      auto src = x.row(far);
      std::copy(src.begin(), src.end(), dst.begin());
      ++result.empty_reseeds;
    }
    result.centroids = centroids_of(x, assign, k, result.centroids);
    result.inertia_history.push_back(inertia_of(x, assign, result.centroids));
    ++result.iterations_run;

    std::vector<std::size_t> next(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      // Keep the current cluster on exact ties so the fixpoint test is stable.
      double d_best = 0.0;
      const std::size_t cand = nearest(result.centroids, x.row(i), &d_best);
      const double d_cur = squared_distance(x.row(i), result.centroids.row(assign[i]));
      next[i] = d_cur <= d_best ? assign[i] : cand;
    }
    if (next == assign) break;
    assign = std::move(next);
  }
  result.centroids = centroids_of(x, assign, k, result.centroids);
  result.assignments = std::move(assign);
  result.inertia = inertia_of(x, result.assignments, result.centroids);
  return result;
}

std::size_t estimate_num_classes(const DenseMatrix& x, std::size_t k_prime, std::uint64_t seed, std::size_t max_iters,
                                 std::size_t restarts) {
  ClusteringResult clusters = kmeans(x, k_prime, max_iters, derive_seed(seed, tag("estimate"), 0));
  for (std::size_t r = 1; r < restarts; ++r) {
    ClusteringResult next = kmeans(x, k_prime, max_iters, derive_seed(seed, tag("estimate"), r));
    if (next.inertia < clusters.inertia) clusters = std::move(next);
  }
  const double threshold = static_cast<double>(x.rows()) / static_cast<double>(k_prime);
  std::size_t estimate = 0;
  for (std::size_t size : clusters.cluster_sizes())
    if (static_cast<double>(size) >= threshold) ++estimate;
  return estimate;
}

}  // namespace cgid
