#pragma once

#include <cstddef>
#include <vector>

#include "coconolab/attention.hpp"

namespace coconolab {

// n×n row-major; (i, j) is the overlap of segment i with cross map j.
struct CostMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

// perm[i] is the subject token assigned to segment i.
struct AssignmentMatrix {
  std::vector<std::size_t> perm;

  std::size_t n() const noexcept { return perm.size(); }
  /// Row-major 0/1 matrix with a one at (i, perm[i]).
  std::vector<int> matrix() const;
  /// Segment assigned to each token.
  std::vector<std::size_t> inverse() const;
};

CostMatrix cost_matrix(const SegmentSet& segments, const CrossAttentionStack& cross);

/// Σᵢ cost(i, perm[i]), summed in row order.
double assignment_trace(const CostMatrix& cost, const AssignmentMatrix& assign);

/// Matched-pair view of the cost: M(i, k) = cost(i, perm[k]), so the diagonal
/// holds each segment's assigned overlap and off-diagonals the interference.
CostMatrix assigned_cost(const CostMatrix& cost, const AssignmentMatrix& assign);

/// Permutation maximizing the trace (Hungarian method). Among maximizers the
/// lexicographically smallest permutation is returned.
AssignmentMatrix optimal_assignment(const CostMatrix& cost);

}  // namespace coconolab
