#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "semsplat/bitmap.hpp"
#include "semsplat/linalg.hpp"
#include "semsplat/rle.hpp"

namespace semsplat {

// The two aggregated mask levels: subpart+part and whole+part.
enum class Scale { kSubpartPart, kWholePart };

inline constexpr std::array<Scale, 2> kAllScales{Scale::kSubpartPart, Scale::kWholePart};
inline constexpr int kUnmatched = -1;

std::string_view scale_tag(Scale scale);
Scale parse_scale(std::string_view tag);

struct CameraPose {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  double cx() const { return intrinsics(0, 2); }
  double cy() const { return intrinsics(1, 2); }

  // Upper-triangular intrinsics with positive focal lengths, orthonormal
  // rotation block (1e-6), rigid bottom row. Throws SchemaViolation.
  void validate() const;
};

struct Frame {
  int frame_id = 0;
  int width = 0;
  int height = 0;
  CameraPose camera;
  std::optional<std::string> image_path;  // relative to the dataset root
};

struct Mask {
  int mask_id = 0;
  int frame_id = 0;
  Scale scale = Scale::kWholePart;
  Bitmap region;
  double pred_iou = 0.0;
  double stability = 0.0;
  int label = kUnmatched;
};

// count x dim embedding records. Keeps the float32 values exactly as stored on
// disk (for bit-exact round trips) next to their unit-normalized f64 form,
// which is what every consumer uses.
class FeatureTable {
 public:
  FeatureTable() = default;
  explicit FeatureTable(int dim) : dim_(dim) { unit_.resize(0, dim); }

  // Validates (finite, nonzero) and normalizes. Throws CorruptFeature.
  static FeatureTable from_raw(int dim, std::vector<float> raw);

  void append(std::span<const double> vector);

  int dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return dim_ == 0 ? 0 : raw_.size() / dim_; }
  std::span<const float> raw(std::size_t i) const {
    return std::span<const float>(raw_).subspan(i * dim_, dim_);
  }
  std::span<const float> raw_data() const noexcept { return raw_; }
  const RowMatrix& unit() const noexcept { return unit_; }
  std::span<const double> unit(std::size_t i) const {
    return {unit_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  // Rows selected by index, same order.
  FeatureTable subset(std::span<const std::size_t> rows) const;

 private:
  int dim_ = 0;
  std::vector<float> raw_;
  RowMatrix unit_;
};

struct ScaleLayer {
  std::vector<Mask> masks;   // ordered by (frame_id, mask_id)
  FeatureTable features;     // row i belongs to masks[i]
};

// K tracked bitmaps for one frame and scale; entry k-1 holds label k.
struct PropagatedMaskSet {
  int frame_id = 0;
  Scale scale = Scale::kWholePart;
  std::vector<Bitmap> masks;
};

struct Manifest {
  std::string name = "dataset";
  int feature_dim = 512;
  int field_dim = 8;
  int color_dim = 3;
  std::vector<Scale> scales{Scale::kSubpartPart, Scale::kWholePart};
  std::optional<std::string> propagated;     // propagated.json
  std::optional<std::string> queries;        // queries.json
  std::optional<std::string> initial_scene;  // scene checkpoint header
};

struct Dataset {
  Manifest manifest;
  std::vector<Frame> frames;  // ordered by frame_id
  std::map<Scale, ScaleLayer> layers;
  std::vector<PropagatedMaskSet> propagated;  // empty when not supplied
  std::filesystem::path root;                 // where it was loaded from, if anywhere

  const Frame& frame(int frame_id) const;
  const ScaleLayer& layer(Scale scale) const;
  ScaleLayer& layer(Scale scale);
};

struct Codebook {
  RowMatrix prototypes;  // N x d

  int size() const { return static_cast<int>(prototypes.rows()); }
  int dim() const { return static_cast<int>(prototypes.cols()); }
  void normalize_rows();
};

struct QuerySet {
  std::vector<std::string> phrases;
  RowMatrix embeddings;  // |phrases| x d, unit rows

  std::size_t size() const { return phrases.size(); }
  int find(std::string_view phrase) const;  // -1 when absent
};

// Directory layout: manifest.json, poses.json, masks_<scale>.json,
// features_<scale>.bin, optional propagated.json / queries.json.
Dataset load_dataset(const std::filesystem::path& root);
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

// Feature file: 16-byte header (magic "SSFT", version, count, dim; u32 LE)
// followed by count * dim float32 LE.
inline constexpr std::uint32_t kFeatureMagic = 0x54465353;  // "SSFT"
inline constexpr std::uint32_t kFeatureVersion = 1;
std::vector<std::uint8_t> encode_feature_records(int dim, std::span<const float> raw);
// Returns (dim, raw values). Throws SchemaViolation on a bad header or size.
std::pair<int, std::vector<float>> decode_feature_records(std::span<const std::uint8_t> bytes);
void write_feature_file(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_feature_file(const std::filesystem::path& path);

// Frame with its pose inlined (intrinsics / world_to_camera, row-major).
nlohmann::json frame_to_json(const Frame& frame);
Frame frame_from_json(const nlohmann::json& j);

nlohmann::json region_to_json(const RunLengthRegion& region);
RunLengthRegion region_from_json(const nlohmann::json& j);
nlohmann::json masks_to_json(std::span<const Mask> masks);
std::vector<Mask> masks_from_json(const nlohmann::json& j, Scale scale);

nlohmann::json propagated_to_json(std::span<const PropagatedMaskSet> sets);
std::vector<PropagatedMaskSet> propagated_from_json(const nlohmann::json& j);

// <stem>.json metadata + <stem>.bin prototype records.
void save_codebook(const std::filesystem::path& json_path, const Codebook& codebook,
                   const nlohmann::json& metadata);
Codebook load_codebook(const std::filesystem::path& json_path);

// queries.json {"phrases": [...], "embeddings": "queries.bin"}.
void save_query_set(const std::filesystem::path& json_path, const QuerySet& queries);
QuerySet load_query_set(const std::filesystem::path& json_path);

}  // namespace semsplat
