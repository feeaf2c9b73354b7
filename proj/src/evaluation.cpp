#include "coconolab/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "coconolab/error.hpp"

namespace coconolab {

void MaskSet::validate() const {
  require(labels.empty() || labels.size() == masks.size(), ErrorCode::shape_mismatch,
          "mask label count does not match the number of masks");
  for (const Mask& m : masks) {
    require(m.r == r && m.cells() == r * r, ErrorCode::shape_mismatch, "mask resolution differs from the set");
    for (auto x : m.v) require(x == 0 || x == 1, ErrorCode::invalid_argument, "mask entries must be 0 or 1");
  }
}

double overlap_ratio(const Mask& a, const Mask& b) {
  require(a.cells() == b.cells(), ErrorCode::shape_mismatch, "mask sizes differ");
  std::size_t inter = 0;
  for (std::size_t c = 0; c < a.cells(); ++c) inter += (a[c] && b[c]) ? 1 : 0;
  const std::size_t smaller = std::min(a.area(), b.area());
  return smaller == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(smaller);
}

std::size_t count_distinct_segments(const MaskSet& masks, std::size_t min_area, double cutoff) {
  masks.validate();
  std::vector<const Mask*> counted;
  for (const Mask& m : masks.masks) {
    if (m.area() < min_area || m.area() == 0) continue;
    const bool distinct = std::all_of(counted.begin(), counted.end(),
                                      [&](const Mask* prev) { return overlap_ratio(m, *prev) < cutoff; });
    if (distinct) counted.push_back(&m);
  }
  return counted.size();
}

double pairwise_overlap(const MaskSet& masks) {
  masks.validate();
  require(masks.size() >= 2, ErrorCode::invalid_argument, "pairwise overlap needs at least two masks");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t j = i + 1; j < masks.size(); ++j) {
      total += overlap_ratio(masks.masks[i], masks.masks[j]);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

std::size_t default_min_area(std::size_t r) {
  const double scaled = 4.0 * static_cast<double>(r * r) / 256.0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(scaled)));
}

MaskSet masks_from_segments(const SegmentSet& segments, const AssignmentMatrix& assignment) {
  require(assignment.n() == segments.n(), ErrorCode::shape_mismatch, "assignment and segments disagree on n");
  MaskSet out;
  out.r = segments.masks.empty() ? 0 : segments.masks.front().r;
  const auto seg_of_token = assignment.inverse();
  for (std::size_t token = 0; token < seg_of_token.size(); ++token) {
    out.masks.push_back(segments.masks[seg_of_token[token]]);
    out.labels.push_back("subject" + std::to_string(token));
  }
  return out;
}

MaskSet subject_masks(const LossEvaluation& eval, double support_level) {
  MaskSet out = masks_from_segments(eval.chosen.segments, eval.chosen.assignment);
  const auto& cross = eval.smoothed_cross;
  for (std::size_t token = 0; token < out.size(); ++token)
    for (std::size_t c = 0; c < out.masks[token].cells(); ++c)
      if (cross.maps[token][c] >= support_level) out.masks[token][c] = 1;
  if (!cross.token_labels.empty()) out.labels = cross.token_labels;
  return out;
}

}  // namespace coconolab
