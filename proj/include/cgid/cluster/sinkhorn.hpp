#pragma once

#include <cstddef>
#include <vector>

#include "cgid/numeric/matrix.hpp"

namespace cgid {

struct SinkhornResult {
  DenseMatrix assignment;                 // batch × K, rows sum to 1
  std::vector<double> last_column_sums;   // column sums right after the final column pass
};

// Balanced soft assignment Q ∝ exp(logits / epsilon): each iteration rescales columns to sum
// batch/K, then rows to sum 1. Computed in the log domain.
SinkhornResult sinkhorn_calibrate(const DenseMatrix& logits, double epsilon, std::size_t iterations);

}  // namespace cgid
