#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semsplat/bitmap.hpp"
#include "semsplat/ccl.hpp"
#include "semsplat/ground_truth.hpp"
#include "semsplat/io.hpp"
#include "semsplat/query.hpp"
#include "semsplat/semantic_field.hpp"

namespace semsplat {

// IoU with the both-empty convention: an absent object predicted absent
// scores 1.
double pair_iou(const Bitmap& pred, const Bitmap& gt);

// Mean pair_iou. Throws ShapeError on a length or size mismatch.
double miou(std::span<const Bitmap> pred, std::span<const Bitmap> gt);

// sum_k max_j |{i : category_i = k, assignment_i = j}| / n over entries with
// category >= 0. Throws EmptyDataset when nothing is counted.
double assignment_purity(std::span<const int> assignments, std::span<const int> categories);

struct DominantPrototypes {
  std::map<int, int> by_category;  // category -> most used prototype (lowest on ties)
  double max_inter_cosine = 0.0;   // over pairs of distinct categories
  double mean_inter_cosine = 0.0;
};
DominantPrototypes dominant_prototypes(std::span<const int> assignments,
                                       std::span<const int> categories, const Codebook& codebook);

enum class Variant { kBaseline, kPullOnly, kPushOnly, kFull };
inline constexpr std::array<Variant, 4> kAllVariants{Variant::kBaseline, Variant::kPullOnly,
                                                     Variant::kPushOnly, Variant::kFull};
std::string variant_name(Variant v);
Variant parse_variant(std::string_view name);
// Zeroes the loss weights the variant leaves out; FULL keeps the config's.
CclConfig apply_variant(CclConfig config, Variant v);

struct ScaleModel {
  Codebook codebook;
  SemanticField field;
};

struct EvalConfig {
  double threshold = 0.5;
  bool normalize = true;       // min-max rescale each relevance map before fusion
  bool held_out_only = true;   // fall back to all views when none is held out
};

struct QueryResult {
  int frame_id = 0;
  std::string phrase;
  double iou = 0.0;
  std::size_t gt_pixels = 0;
  std::size_t pred_pixels = 0;
};

struct EvalReport {
  std::string variant = "FULL";
  std::string config_hash;
  std::vector<QueryResult> queries;
  double miou = 0.0;
  double seconds = 0.0;  // runtime stat, not part of primary artifacts
};

// Object queries (every ground-truth category) on evaluation views. Each view
// renders every scale's field, decodes, takes the argmax prototype, scores it
// against the query set, optionally min-max normalizes, fuses scales with a
// per-pixel max and thresholds. Only pairs whose ground truth is non-empty
// are scored. Optional `figures` receives overlays/ and heatmaps/ PNGs, each
// file name starting with `figure_prefix`.
EvalReport evaluate_segmentation(const std::map<Scale, ScaleModel>& models, const GroundTruth& truth,
                                 const QuerySet& queries, const EvalConfig& config,
                                 const std::optional<std::filesystem::path>& figures = std::nullopt,
                                 const std::string& figure_prefix = "");

// Green: hit, red: false positive, blue: missed, dark gray: true negative.
Image8 overlay_image(const Bitmap& pred, const Bitmap& gt);
// Gray levels, relevance clamped to [0, 1].
Image8 heatmap_image(const RelevanceMap& map);
Image8 mask_image(const Bitmap& mask);

std::string evaluation_protocol(const EvalConfig& config);

void write_metrics_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);
void write_ablation_markdown(const std::filesystem::path& path, std::span<const EvalReport> reports,
                             const EvalConfig& config);

}  // namespace semsplat
