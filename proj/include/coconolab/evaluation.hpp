#pragma once

// Subject-separation metrics over binary masks: how many distinct subject
// regions exist, and how much the regions of different subjects overlap.

#include <cstddef>
#include <string>
#include <vector>

#include "coconolab/attention.hpp"
#include "coconolab/losses.hpp"

namespace coconolab {

struct MaskSet {
  std::size_t r = 0;
  std::vector<Mask> masks;
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return masks.size(); }
  void validate() const;
};

inline constexpr double kDistinctOverlapCutoff = 0.5;

/// |A∩B| / min(|A|, |B|); 0 when either mask is empty.
double overlap_ratio(const Mask& a, const Mask& b);

/// Masks with area ≥ min_area whose overlap ratio with every previously
/// counted mask stays below the cutoff.
std::size_t count_distinct_segments(const MaskSet& masks, std::size_t min_area,
                                    double cutoff = kDistinctOverlapCutoff);

/// Mean overlap ratio over unordered mask pairs. Requires at least two masks.
double pairwise_overlap(const MaskSet& masks);

/// Four cells at r = 16, scaled with area; at least one cell.
std::size_t default_min_area(std::size_t r);

/// The segment masks of an evaluation, labelled by their assigned subject.
MaskSet masks_from_segments(const SegmentSet& segments, const AssignmentMatrix& assignment);

/// Per-subject region: its assigned segment joined with the support
/// (value ≥ support_level) of its smoothed cross map.
MaskSet subject_masks(const LossEvaluation& eval, double support_level = 0.5);

}  // namespace coconolab
