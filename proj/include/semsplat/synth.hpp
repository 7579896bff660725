#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "semsplat/feature_store.hpp"
#include "semsplat/ground_truth.hpp"
#include "semsplat/io.hpp"
#include "semsplat/splat.hpp"

namespace semsplat {

struct CorruptionSpec {
  double occlusion_rate = 0.0;  // fraction of object masks cut by a random half-plane
  double blur_mix = 0.0;        // lambda toward a random other concept
  double view_rot_deg = 0.0;    // per-view rotation in a random 2-plane
  std::uint64_t seed = 0;

  bool none() const { return occlusion_rate == 0.0 && blur_mix == 0.0 && view_rot_deg == 0.0; }
  void validate() const;  // throws InvalidConfig
};

struct SynthConfig {
  int categories = 4;
  int views = 8;           // training views
  int held_out_views = 4;  // evaluation-only views, interleaved on the ring
  int width = 64;
  int height = 64;
  int gaussians = 500;
  int feature_dim = 512;
  int field_dim = 8;
  double elevation_deg = 62.0;
  int min_mask_area = 12;        // pixels; smaller visible regions get no mask
  int propagation_erosion = 1;   // oracle tracker imperfection
  CorruptionSpec corruption;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig
};

struct SyntheticScene {
  Dataset dataset;  // training views only, labels still -1
  GroundTruth truth;
  GaussianScene scene;  // geometry + color, zero features of field_dim
  QuerySet queries;     // K object phrases then "background"
  std::vector<Image8> images;  // per training frame
};

// Deterministic in (config, seed). Throws GenerationFailure when the image is
// too small to show every object.
SyntheticScene generate(const SynthConfig& config);

// Dataset layout plus images/, scene/initial.json, queries.json and
// ground_truth.json under `root`.
void write_synthetic(const SyntheticScene& synthetic, const std::filesystem::path& root);

// The corruption applied to one mask feature: blur toward `partner`, then a
// rotation by `angle_rad` toward `direction`. Exposed for property tests.
Eigen::VectorXd corrupt_feature(const Eigen::VectorXd& clean, const Eigen::VectorXd& partner,
                                double blur_lambda, const Eigen::VectorXd& direction,
                                double angle_rad);

struct ConsistencyScore {
  double intra = 0.0;  // mean cosine over same-category pairs
  double inter = 0.0;  // mean cosine over cross-category pairs (NaN when none)
};

// Exact pairwise means. Throws EmptyPairSet when no category has two members.
ConsistencyScore consistency_score(const RowMatrix& features, std::span<const int> categories);

}  // namespace semsplat
