#include "semsplat/mask_pipeline.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "semsplat/error.hpp"

namespace semsplat {

MergedCandidates merge_scales(std::span<const CandidateMask> subpart,
                              std::span<const CandidateMask> part,
                              std::span<const CandidateMask> whole) {
  const Bitmap* reference = nullptr;
  for (auto group : {subpart, part, whole}) {
    for (const auto& c : group) {
      if (reference == nullptr) {
        reference = &c.bitmap;
      } else {
        check_same_shape(*reference, c.bitmap);
      }
    }
  }
  MergedCandidates out;
  out.sp.assign(subpart.begin(), subpart.end());
  out.sp.insert(out.sp.end(), part.begin(), part.end());
  out.wp.assign(whole.begin(), whole.end());
  out.wp.insert(out.wp.end(), part.begin(), part.end());
  return out;
}

std::vector<Mask> filter_masks(std::span<const CandidateMask> candidates,
                               const FilterThresholds& thresholds, int frame_id, Scale scale,
                               int first_mask_id, std::vector<std::size_t>* sources) {
  if (sources) sources->clear();
  for (double t : {thresholds.min_pred_iou, thresholds.min_stability, thresholds.max_overlap}) {
    require(t >= 0.0 && t <= 1.0, ErrorCode::kInvalidConfig, "filter thresholds must lie in [0, 1]");
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.pred_iou >= thresholds.min_pred_iou && c.stability >= thresholds.min_stability) {
      order.push_back(i);
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].pred_iou * candidates[a].stability >
           candidates[b].pred_iou * candidates[b].stability;
  });

  std::vector<Mask> accepted;
  Bitmap claimed;
  for (std::size_t i : order) {
    const CandidateMask& c = candidates[i];
    if (claimed.size() == 0) claimed = Bitmap(c.bitmap.width(), c.bitmap.height());
    const std::size_t area = c.bitmap.count();
    if (area == 0) continue;
    const std::size_t overlap = intersection_count(c.bitmap, claimed);
    if (static_cast<double>(overlap) / static_cast<double>(area) > thresholds.max_overlap) continue;
    Bitmap residual = bitmap_and_not(c.bitmap, claimed);
    if (residual.none()) continue;
    claimed = bitmap_or(claimed, residual);
    Mask m;
    m.mask_id = first_mask_id + static_cast<int>(accepted.size());
    m.frame_id = frame_id;
    m.scale = scale;
    m.region = std::move(residual);
    m.pred_iou = c.pred_iou;
    m.stability = c.stability;
    m.label = kUnmatched;
    accepted.push_back(std::move(m));
    if (sources) sources->push_back(i);
  }
  return accepted;
}

double iou(const Bitmap& a, const Bitmap& b) {
  check_same_shape(a, b);
  const std::size_t u = union_count(a, b);
  if (u == 0) return 0.0;
  return static_cast<double>(intersection_count(a, b)) / static_cast<double>(u);
}

std::vector<int> associate_labels(std::span<const Mask> frame_masks,
                                  const PropagatedMaskSet& propagated, double threshold) {
  std::vector<int> labels;
  labels.reserve(frame_masks.size());
  for (const Mask& m : frame_masks) {
    double best = -1.0;
    int best_k = kUnmatched;
    for (std::size_t k = 0; k < propagated.masks.size(); ++k) {
      const double v = iou(m.region, propagated.masks[k]);
      if (v > best) {
        best = v;
        best_k = static_cast<int>(k) + 1;
      }
    }
    labels.push_back(best > threshold ? best_k : kUnmatched);
  }
  return labels;
}

void associate_frame(std::span<Mask> frame_masks, const PropagatedMaskSet& propagated,
                     double threshold) {
  const auto labels = associate_labels(frame_masks, propagated, threshold);
  for (std::size_t i = 0; i < frame_masks.size(); ++i) frame_masks[i].label = labels[i];
}

void associate_dataset(Dataset& dataset, double threshold) {
  std::map<std::pair<Scale, int>, const PropagatedMaskSet*> by_frame;
  for (const auto& p : dataset.propagated) by_frame[{p.scale, p.frame_id}] = &p;
  const PropagatedMaskSet empty;
  for (auto& [scale, layer] : dataset.layers) {
    std::size_t i = 0;
    while (i < layer.masks.size()) {
      std::size_t j = i;
      while (j < layer.masks.size() && layer.masks[j].frame_id == layer.masks[i].frame_id) ++j;
      auto it = by_frame.find({scale, layer.masks[i].frame_id});
      associate_frame(std::span<Mask>(layer.masks).subspan(i, j - i),
                      it == by_frame.end() ? empty : *it->second, threshold);
      i = j;
    }
  }
}

PropagatedMaskSet oracle_propagate(const GroundTruth& truth, int frame_id, Scale scale,
                                   int erosion_radius) {
  const GroundTruthView& view = truth.view(frame_id);
  PropagatedMaskSet out;
  out.frame_id = frame_id;
  out.scale = scale;
  const auto& source = scale == Scale::kWholePart ? view.category_masks : view.part_masks;
  for (const Bitmap& b : source) out.masks.push_back(erode(b, erosion_radius));
  return out;
}

}  // namespace semsplat
