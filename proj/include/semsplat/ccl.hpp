#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "semsplat/adam.hpp"
#include "semsplat/feature_store.hpp"
#include "semsplat/linalg.hpp"

namespace semsplat {

enum class PrototypeInit { kKMeansPlusPlus, kRandom };

struct CclConfig {
  double lambda_pull = 0.25;
  double lambda_push = 0.25;
  double margin = 0.7;
  int n_prototypes = 128;
  int steps = 1000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  PrototypeInit init = PrototypeInit::kRandom;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig
};

struct PrototypeMatch {
  int index = 0;
  double similarity = 0.0;
};

// argmax_j cos(feature, T_j), lowest index on ties. Throws DegenerateFeature
// for a zero (or non-finite) feature.
PrototypeMatch nearest_prototype(std::span<const double> feature, const Codebook& codebook);

struct LabeledFeatureBatch {
  RowMatrix features;            // B x d, unit rows
  std::vector<int> labels;       // 1..K or -1
  std::vector<int> assignments;  // prototype index per row
};

// Recomputes assignments with nearest_prototype.
void assign_prototypes(LabeledFeatureBatch& batch, const Codebook& codebook);

struct LossTerms {
  double max = 0.0;
  double pull = 0.0;
  double push = 0.0;
  double total = 0.0;
};

// Each term is the mean over its contributing entries: L_max over all rows,
// pull over unordered same-label pairs (label != -1), push over unordered
// different-label pairs (both != -1). Empty pair sets contribute 0. When
// `gradient` is given it receives dL_total/dT (N x d) for the frozen
// assignments.
LossTerms evaluate_losses(const LabeledFeatureBatch& batch, const Codebook& codebook,
                          const CclConfig& config, RowMatrix* gradient = nullptr);

double loss_max(const LabeledFeatureBatch& batch, const Codebook& codebook);
double loss_pull(const LabeledFeatureBatch& batch, const Codebook& codebook);
double loss_push(const LabeledFeatureBatch& batch, const Codebook& codebook, double margin);
double total_loss(const LabeledFeatureBatch& batch, const Codebook& codebook,
                  const CclConfig& config);

class CodebookOptimizer {
 public:
  CodebookOptimizer(const Codebook& codebook, const CclConfig& config);

  // One step: reassign, evaluate, Adam on every row, re-normalize rows.
  // Throws NumericalFailure (with the step index) on a non-finite gradient.
  LossTerms step(LabeledFeatureBatch& batch, Codebook& codebook);

  std::int64_t steps() const { return adam_.steps(); }

 private:
  CclConfig config_;
  Adam adam_;
};

// Seeded initial prototypes drawn from the feature rows.
Codebook initialize_codebook(const RowMatrix& features, const CclConfig& config);

struct CodebookTrainResult {
  Codebook codebook;
  std::vector<LossTerms> trace;
};

// config.steps mini-batch steps (batches sampled without replacement, seeded).
// Throws EmptyDataset when there are no features.
CodebookTrainResult train_codebook(const RowMatrix& features, std::span<const int> labels,
                                   const CclConfig& config);

// Per-pixel prototype indices for one frame and scale.
struct IndexMap {
  static constexpr std::int32_t kUnassigned = -1;

  int frame_id = 0;
  Scale scale = Scale::kWholePart;
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> grid;

  std::int32_t at(int x, int y) const { return grid[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const IndexMap&, const IndexMap&) = default;
};

// Pixels of mask i get nearest_prototype(F_i); uncovered pixels stay
// kUnassigned. `features` row i belongs to masks[i].
IndexMap build_index_map(const Frame& frame, Scale scale, std::span<const Mask> masks,
                         const RowMatrix& features, const Codebook& codebook);

// Binary file: "SSIX", version, frame count, then per frame
// (frame_id, scale, width, height, width*height int32). Little endian.
void save_index_maps(const std::filesystem::path& path, std::span<const IndexMap> maps);
std::vector<IndexMap> load_index_maps(const std::filesystem::path& path);

}  // namespace semsplat
