#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cgid/types.hpp"
#include "cgid/numeric/matrix.hpp"

namespace cgid {

inline constexpr Label kUnmatched = -1;

// Optimal pairing between source ids (predicted clusters) and target ids (reference classes).
struct AssignmentMap {
  std::vector<Label> sources;  // ascending
  std::vector<Label> targets;  // target per source, kUnmatched when padded out
  double objective = 0.0;      // matched count (alignment) or total cost (centroids)

  Label map(Label source) const;
  std::size_t matched_pairs() const;
};

// Minimum-cost perfect assignment on a rectangular cost matrix; the smaller side is padded
// with zero-cost dummies. Returns the column for each row, or -1 if the row went to a dummy.
std::vector<int> solve_min_cost_assignment(const DenseMatrix& cost);

// Contingency-maximizing mapping from predicted ids to ground-truth ids.
AssignmentMap hungarian_align(std::span<const Label> predicted, std::span<const Label> truth);

// Maps each new centroid index to an old centroid index minimizing total squared distance.
AssignmentMap align_centroids(const DenseMatrix& old_centroids, const DenseMatrix& new_centroids);

}  // namespace cgid
