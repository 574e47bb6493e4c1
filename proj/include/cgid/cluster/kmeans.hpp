#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cgid/numeric/matrix.hpp"

namespace cgid {

struct ClusteringResult {
  std::vector<std::size_t> assignments;
  DenseMatrix centroids;
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  // Inertia after every centroid update; non-increasing.
  std::vector<double> inertia_history;
  // Number of times an empty cluster was re-seeded with the farthest point.
  std::size_t empty_reseeds = 0;

  std::vector<std::size_t> cluster_sizes() const;
};

// k-means++ seeding followed by Lloyd iterations until the assignment is a fixpoint or max_iters.
// Empty clusters take the point farthest from its current centroid. Ties go to the lowest index.
ClusteringResult kmeans(const DenseMatrix& x, std::size_t k, std::size_t max_iters, std::uint64_t seed);

// Over-clusters with k_prime (best inertia over `restarts` seeded runs) and counts clusters
// holding at least N / k_prime points.
std::size_t estimate_num_classes(const DenseMatrix& x, std::size_t k_prime, std::uint64_t seed = 0,
                                 std::size_t max_iters = 100, std::size_t restarts = 10);

}  // namespace cgid
