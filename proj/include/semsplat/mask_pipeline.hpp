#pragma once

#include <span>
#include <vector>

#include "semsplat/bitmap.hpp"
#include "semsplat/feature_store.hpp"
#include "semsplat/ground_truth.hpp"

namespace semsplat {

enum class SourceScale { kSubpart, kPart, kWhole };

struct CandidateMask {
  Bitmap bitmap;
  double pred_iou = 0.0;
  double stability = 0.0;
  SourceScale source_scale = SourceScale::kPart;
};

struct MergedCandidates {
  std::vector<CandidateMask> sp;  // subpart then part
  std::vector<CandidateMask> wp;  // whole then part
};

// Plain unions, no filtering. All candidates must share one frame size.
MergedCandidates merge_scales(std::span<const CandidateMask> subpart,
                              std::span<const CandidateMask> part,
                              std::span<const CandidateMask> whole);

struct FilterThresholds {
  double min_pred_iou = 0.88;
  double min_stability = 0.9;
  double max_overlap = 0.8;
};

// Quality gate, then greedy acceptance in descending pred_iou * stability
// order (ties keep input order). Each later candidate loses the pixels already
// claimed; it is dropped when more than max_overlap of its area was claimed or
// nothing is left. Output regions are pairwise disjoint, labels are -1, and
// mask ids count up from first_mask_id in acceptance order. `sources`, when
// given, receives the candidate index of each accepted mask.
std::vector<Mask> filter_masks(std::span<const CandidateMask> candidates,
                               const FilterThresholds& thresholds, int frame_id, Scale scale,
                               int first_mask_id = 0, std::vector<std::size_t>* sources = nullptr);

// |a & b| / |a | b|, 0 when both are empty.
double iou(const Bitmap& a, const Bitmap& b);

// Label of each mask: 1-based index of the propagated mask with the highest
// IoU when that IoU exceeds the threshold, else -1. Ties go to the lowest
// category index.
std::vector<int> associate_labels(std::span<const Mask> frame_masks,
                                  const PropagatedMaskSet& propagated, double threshold = 0.5);
// Same, writing into the masks' label fields.
void associate_frame(std::span<Mask> frame_masks, const PropagatedMaskSet& propagated,
                     double threshold = 0.5);

// Labels every mask of every scale, frame by frame. Frames without a
// propagated set get -1 throughout.
void associate_dataset(Dataset& dataset, double threshold = 0.5);

// Stand-in for a video tracker on synthetic scenes: the ground-truth object
// (WP) or part (SP) bitmaps of a frame, each eroded by `erosion_radius` pixels.
PropagatedMaskSet oracle_propagate(const GroundTruth& truth, int frame_id, Scale scale,
                                   int erosion_radius = 0);

}  // namespace semsplat
