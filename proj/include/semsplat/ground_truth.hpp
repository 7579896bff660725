#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semsplat/bitmap.hpp"
#include "semsplat/feature_store.hpp"
#include "semsplat/linalg.hpp"

namespace semsplat {

// Hidden truth emitted next to a synthetic dataset (ground_truth.json). Only
// the oracle propagator and evaluation read it; training never does.
struct GroundTruthView {
  Frame frame;
  bool held_out = false;
  std::vector<Bitmap> category_masks;  // K entries, entry k-1 is category k
  std::vector<Bitmap> part_masks;      // per object part, see part_category
};

struct MaskTruth {
  int frame_id = 0;
  int mask_id = 0;
  int category = 0;  // 0 = background, 1..K objects
  bool occluded = false;
  double blur_lambda = 0.0;
  int blur_partner = 0;  // category mixed in (0 = background)
};

struct GroundTruth {
  int categories = 0;
  std::vector<std::string> names;  // K object phrases, then "background"
  RowMatrix concept_vectors;       // (K + 1) x d; row K is the background concept
  std::vector<int> part_category;  // category of each part index
  std::vector<int> gaussian_category;  // per Gaussian of the initial scene
  std::vector<GroundTruthView> views;
  std::vector<MaskTruth> sp_masks;
  std::vector<MaskTruth> wp_masks;

  const GroundTruthView& view(int frame_id) const;
  const std::vector<MaskTruth>& mask_truth(Scale scale) const {
    return scale == Scale::kSubpartPart ? sp_masks : wp_masks;
  }
};

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace semsplat
