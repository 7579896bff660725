#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "semsplat/ccl.hpp"
#include "semsplat/evalkit.hpp"
#include "semsplat/feature_store.hpp"
#include "semsplat/mask_pipeline.hpp"
#include "semsplat/semantic_field.hpp"
#include "semsplat/synth.hpp"

namespace semsplat {

// ---------------------------------------------------------------------------
// In-memory stage helpers

// Unit features and association labels of one scale.
struct LabeledLayer {
  RowMatrix features;
  std::vector<int> labels;
};
LabeledLayer labeled_features(const Dataset& dataset, Scale scale);

std::vector<int> assign_all(const RowMatrix& features, const Codebook& codebook);

// One index map per frame, in frame order.
std::vector<IndexMap> build_index_maps(const Dataset& dataset, Scale scale, const Codebook& codebook);

// `images` is either empty or one RGB image per frame (needed in JOINT mode).
std::vector<FieldView> make_field_views(const Dataset& dataset, std::span<const IndexMap> maps,
                                        std::span<const Image8> images);

struct ScaleRun {
  CodebookTrainResult codebook;
  std::vector<IndexMap> index_maps;
  FieldTrainResult field;
};

// Codebook -> index maps -> field for one scale of an associated dataset.
ScaleRun run_scale(const Dataset& dataset, Scale scale, const GaussianScene& geometry,
                   std::span<const Image8> images, const CclConfig& ccl,
                   const FieldTrainConfig& field);

// ---------------------------------------------------------------------------
// Configuration

struct PathsConfig {
  std::string dataset = "data/synthetic";
  std::string work = "work";
  std::string report = "report";
};

// Sections mirror the stage modules. One seed feeds every stage so variants
// that share it also share their association output.
struct PipelineConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  FilterThresholds mask_filter;
  double association_threshold = 0.5;
  CclConfig ccl;
  FieldTrainConfig field;
  EvalConfig eval;
  std::vector<Scale> scales{Scale::kSubpartPart, Scale::kWholePart};
  PathsConfig paths;

  // Section configs with the shared seed applied.
  SynthConfig synth_config() const;
  CclConfig ccl_config() const;
  FieldTrainConfig field_config() const;

  void validate() const;  // throws InvalidConfig
};

// Full emission with every default filled in.
nlohmann::json to_json(const PipelineConfig& config);
// Missing keys keep their defaults; unknown keys throw InvalidConfig.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// File-based stages
//
// Stage outputs live in <work>/<stage>-<hash>/ where hash chains the upstream
// hash with the stage's own config section, so incompatible artifacts never
// share a directory. A finished stage holds stage.json (resolved config
// snapshot) and is reused as-is on later runs; runtime.json carries timing and
// is the only file that may differ between identical runs.

struct StageInfo {
  std::string name;
  std::string hash;
  std::filesystem::path dir;
  bool reused = false;
};

// SHA-256 over every regular file under root (sorted relative paths + bytes).
std::string hash_directory(const std::filesystem::path& root);

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path dataset);

  const PipelineConfig& config() const { return config_; }
  const std::filesystem::path& dataset_dir() const { return dataset_; }

  StageInfo associate();
  StageInfo train_codebook();
  StageInfo index();
  StageInfo train_field();
  // Renders the evaluation protocol into `report_dir` (metrics.csv,
  // ablation.md, overlays/, heatmaps/) and returns the report.
  EvalReport evaluate(const std::filesystem::path& report_dir, const std::string& variant = "FULL");

  // Loads trained artifacts of the current config (running stages as needed).
  std::map<Scale, ScaleModel> models();
  Dataset associated_dataset();

 private:
  std::string dataset_hash();
  std::string section_hash(const std::string& upstream, const nlohmann::json& section) const;
  StageInfo prepare(const std::string& stage, const std::string& upstream,
                    const nlohmann::json& section);
  void finish(const StageInfo& info, const std::string& upstream, const nlohmann::json& section,
              double seconds);

  PipelineConfig config_;
  std::filesystem::path dataset_;
  std::optional<std::string> dataset_hash_;
};

// Runs BASELINE / PULL_ONLY / PUSH_ONLY / FULL through the file stages with
// shared seeds and writes metrics.csv and ablation.md into report_dir.
std::vector<EvalReport> run_ablation(const PipelineConfig& config,
                                     const std::filesystem::path& dataset,
                                     const std::filesystem::path& report_dir,
                                     std::span<const Variant> variants = kAllVariants);

}  // namespace semsplat
