#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "semsplat/bitmap.hpp"
#include "semsplat/feature_store.hpp"
#include "semsplat/semantic_field.hpp"
#include "semsplat/splat.hpp"

namespace semsplat {

struct RelevanceMap {
  std::string phrase;
  Scale scale = Scale::kWholePart;
  int width = 0;
  int height = 0;
  std::vector<double> grid;  // row-major, values in [0, 1]
};

// p(tau | x) = exp(cos(x, phi(tau))) / sum_s exp(cos(x, phi(s))) for each row
// x; returns one column per phrase. Throws EmptyQuerySet / ShapeError.
Eigen::MatrixXd relevance_scores(const RowMatrix& features, const QuerySet& queries);

// Relevance of `phrase` for every pixel of refined features (width*height
// rows). Throws EmptyQuerySet, MissingArtifact when the phrase is absent.
RelevanceMap relevance_map(const RowMatrix& refined, int width, int height,
                           const std::string& phrase, const QuerySet& queries,
                           Scale scale = Scale::kWholePart);

// Same values without materializing F~: scores each prototype once and looks
// the pixel's argmax index up.
RelevanceMap relevance_map_from_indices(std::span<const int> indices, int width, int height,
                                        const Codebook& codebook, const std::string& phrase,
                                        const QuerySet& queries, Scale scale = Scale::kWholePart);

// Rescales to [0, 1] by the map's own min and max (a constant map becomes 0).
RelevanceMap normalize_relevance(const RelevanceMap& map);

// Per pixel max over the given maps, then `> threshold`.
Bitmap segment(std::span<const RelevanceMap> maps, double threshold = 0.5);

struct GaussianClass {
  int index = 0;           // argmax prototype
  double confidence = 0.0; // its softmax probability
};

// Decoder applied to each Gaussian's feature directly, no rasterization.
std::vector<GaussianClass> classify_gaussians(const GaussianScene& scene, const Decoder& decoder);

enum class EditOp { kExtract, kDelete, kRecolor };

struct GaussianSelection {
  std::string phrase;
  std::vector<int> prototypes;  // codebook rows selected for the phrase
  std::vector<int> indices;     // selected Gaussians, ascending
  std::vector<int> categories;  // argmax prototype per selected Gaussian
  std::vector<double> confidences;
  bool empty() const { return prototypes.empty(); }
};

struct EditResult {
  GaussianScene scene;
  GaussianSelection selection;
};

// Prototype relevance is p(tau | T_j) over the query set; with `normalize` the
// scores are min-max rescaled across prototypes before the threshold test.
// Gaussians whose classify_gaussians argmax is a selected prototype are kept
// (EXTRACT), removed (DELETE) or recolored (RECOLOR); nothing else changes.
// An empty prototype selection leaves the scene untouched; callers report it.
EditResult select_and_edit(const GaussianScene& scene, const Decoder& decoder,
                           const Codebook& codebook, const std::string& phrase,
                           const QuerySet& queries, EditOp op, double threshold = 0.5,
                           bool normalize = true,
                           const Eigen::Vector3d& color = Eigen::Vector3d(1.0, 0.0, 0.0));

nlohmann::json selection_to_json(const GaussianSelection& selection);

}  // namespace semsplat
