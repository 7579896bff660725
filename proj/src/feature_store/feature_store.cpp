#include "semsplat/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "semsplat/error.hpp"
#include "semsplat/io.hpp"

namespace semsplat {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view scale_tag(Scale scale) {
  return scale == Scale::kSubpartPart ? "sp" : "wp";
}

Scale parse_scale(std::string_view tag) {
  if (tag == "sp") return Scale::kSubpartPart;
  if (tag == "wp") return Scale::kWholePart;
  fail(ErrorCode::kSchemaViolation, "unknown scale tag '" + std::string(tag) + "'");
}

void CameraPose::validate() const {
  const Eigen::Matrix3d& k = intrinsics;
  require(k.allFinite() && world_to_camera.allFinite(), ErrorCode::kSchemaViolation,
          "camera has non-finite entries");
  require(k(1, 0) == 0.0 && k(2, 0) == 0.0 && k(2, 1) == 0.0, ErrorCode::kSchemaViolation,
          "intrinsics must be upper-triangular");
  require(k(0, 0) > 0.0 && k(1, 1) > 0.0, ErrorCode::kSchemaViolation,
          "intrinsics need positive focal lengths");
  const Eigen::Matrix3d r = world_to_camera.block<3, 3>(0, 0);
  require((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6,
          ErrorCode::kSchemaViolation, "rotation block is not orthonormal");
  const Eigen::RowVector4d bottom = world_to_camera.row(3);
  require(bottom == Eigen::RowVector4d(0, 0, 0, 1), ErrorCode::kSchemaViolation,
          "extrinsics bottom row must be (0, 0, 0, 1)");
}

// ---------------------------------------------------------------------------
// FeatureTable

namespace {

void normalize_into(std::span<const float> raw, double* out, std::size_t row) {
  double norm2 = 0.0;
  for (float v : raw) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::kCorruptFeature, "non-finite value in feature record " + std::to_string(row));
    }
    norm2 += static_cast<double>(v) * static_cast<double>(v);
  }
  if (!(norm2 > 0.0)) {
    fail(ErrorCode::kCorruptFeature, "zero-norm feature record " + std::to_string(row));
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = static_cast<double>(raw[k]) * inv;
}

}  // namespace

FeatureTable FeatureTable::from_raw(int dim, std::vector<float> raw) {
  require(dim > 0, ErrorCode::kSchemaViolation, "feature dimension must be positive");
  require(raw.size() % static_cast<std::size_t>(dim) == 0, ErrorCode::kSchemaViolation,
          "feature buffer is not a multiple of the dimension");
  FeatureTable table(dim);
  table.raw_ = std::move(raw);
  const std::size_t n = table.count();
  table.unit_.resize(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i) {
    normalize_into(table.raw(i), table.unit_.data() + i * dim, i);
  }
  return table;
}

void FeatureTable::append(std::span<const double> vector) {
  require(static_cast<int>(vector.size()) == dim_, ErrorCode::kSchemaViolation,
          "feature dimension mismatch on append");
  const std::size_t row = count();
  for (double v : vector) raw_.push_back(static_cast<float>(v));
  unit_.conservativeResize(static_cast<Eigen::Index>(row + 1), dim_);
  normalize_into(raw(row), unit_.data() + row * dim_, row);
}

FeatureTable FeatureTable::subset(std::span<const std::size_t> rows) const {
  std::vector<float> raw;
  raw.reserve(rows.size() * dim_);
  for (std::size_t r : rows) {
    auto src = this->raw(r);
    raw.insert(raw.end(), src.begin(), src.end());
  }
  return from_raw(dim_, std::move(raw));
}

// ---------------------------------------------------------------------------
// Dataset accessors

const Frame& Dataset::frame(int frame_id) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), frame_id,
                             [](const Frame& f, int id) { return f.frame_id < id; });
  if (it == frames.end() || it->frame_id != frame_id) {
    fail(ErrorCode::kMissingArtifact, "unknown frame " + std::to_string(frame_id));
  }
  return *it;
}

const ScaleLayer& Dataset::layer(Scale scale) const {
  auto it = layers.find(scale);
  if (it == layers.end()) {
    fail(ErrorCode::kMissingArtifact, "dataset has no " + std::string(scale_tag(scale)) + " layer");
  }
  return it->second;
}

ScaleLayer& Dataset::layer(Scale scale) { return layers[scale]; }

void Codebook::normalize_rows() {
  for (Eigen::Index j = 0; j < prototypes.rows(); ++j) {
    const double n = prototypes.row(j).norm();
    if (n > 0.0) prototypes.row(j) /= n;
  }
}

int QuerySet::find(std::string_view phrase) const {
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (phrases[i] == phrase) return static_cast<int>(i);
  }
  return -1;
}

// ---------------------------------------------------------------------------
// Binary feature records

std::vector<std::uint8_t> encode_feature_records(int dim, std::span<const float> raw) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + raw.size() * 4);
  put_u32(out, kFeatureMagic);
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(dim == 0 ? 0 : raw.size() / dim));
  put_u32(out, static_cast<std::uint32_t>(dim));
  for (float v : raw) put_f32(out, v);
  return out;
}

std::pair<int, std::vector<float>> decode_feature_records(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 16, ErrorCode::kSchemaViolation, "feature file shorter than header");
  require(get_u32(bytes, 0) == kFeatureMagic, ErrorCode::kSchemaViolation, "bad feature magic");
  require(get_u32(bytes, 4) == kFeatureVersion, ErrorCode::kSchemaViolation,
          "unsupported feature file version");
  const std::uint64_t count = get_u32(bytes, 8);
  const std::uint64_t dim = get_u32(bytes, 12);
  require(bytes.size() == 16 + count * dim * 4, ErrorCode::kSchemaViolation,
          "feature payload size does not match header (" + std::to_string(count) + " x " +
              std::to_string(dim) + ")");
  std::vector<float> raw(count * dim);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = get_f32(bytes, 16 + 4 * i);
  return {static_cast<int>(dim), std::move(raw)};
}

void write_feature_file(const fs::path& path, const FeatureTable& table) {
  write_bytes(path, encode_feature_records(table.dim(), table.raw_data()));
}

FeatureTable read_feature_file(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kMissingArtifact, "missing " + path.string());
  auto [dim, raw] = decode_feature_records(read_bytes(path));
  if (raw.empty()) return FeatureTable(dim);
  return FeatureTable::from_raw(dim, std::move(raw));
}

// ---------------------------------------------------------------------------
// JSON records

json region_to_json(const RunLengthRegion& region) {
  json runs = json::array();
  for (const Run& r : region.runs) runs.push_back({r.start, r.length});
  return {{"size", {region.height, region.width}}, {"runs", runs}};
}

RunLengthRegion region_from_json(const json& j) {
  try {
    RunLengthRegion region;
    region.height = j.at("size").at(0).get<int>();
    region.width = j.at("size").at(1).get<int>();
    for (const auto& r : j.at("runs")) {
      region.runs.push_back({r.at(0).get<std::uint32_t>(), r.at(1).get<std::uint32_t>()});
    }
    return region;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("bad rle record: ") + e.what());
  }
}

json masks_to_json(std::span<const Mask> masks) {
  json out = json::array();
  for (const Mask& m : masks) {
    out.push_back({{"mask_id", m.mask_id},
                   {"frame_id", m.frame_id},
                   {"rle", region_to_json(rle_encode(m.region))},
                   {"pred_iou", m.pred_iou},
                   {"stability", m.stability},
                   {"label", m.label}});
  }
  return out;
}

std::vector<Mask> masks_from_json(const json& j, Scale scale) {
  std::vector<Mask> masks;
  try {
    for (const auto& r : j) {
      Mask m;
      m.mask_id = r.at("mask_id").get<int>();
      m.frame_id = r.at("frame_id").get<int>();
      m.scale = scale;
      m.region = rle_decode(region_from_json(r.at("rle")));
      m.pred_iou = r.at("pred_iou").get<double>();
      m.stability = r.at("stability").get<double>();
      m.label = r.value("label", kUnmatched);
      masks.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("bad mask record: ") + e.what());
  }
  return masks;
}

json propagated_to_json(std::span<const PropagatedMaskSet> sets) {
  // One block per scale so each level keeps its own tracked-mask count.
  json blocks = json::array();
  for (Scale scale : kAllScales) {
    json frames = json::array();
    std::size_t k = 0;
    for (const auto& s : sets) {
      if (s.scale != scale) continue;
      k = s.masks.size();
      json masks = json::array();
      for (const auto& b : s.masks) masks.push_back(region_to_json(rle_encode(b)));
      frames.push_back({{"frame_id", s.frame_id}, {"masks", masks}});
    }
    if (!frames.empty())
      blocks.push_back({{"scale", std::string(scale_tag(scale))}, {"k", k}, {"frames", frames}});
  }
  return {{"sets", blocks}};
}

std::vector<PropagatedMaskSet> propagated_from_json(const json& j) {
  std::vector<PropagatedMaskSet> sets;
  try {
    for (const auto& block : j.at("sets")) {
      const Scale scale = parse_scale(block.at("scale").get<std::string>());
      const std::size_t k = block.at("k").get<std::size_t>();
      for (const auto& f : block.at("frames")) {
        PropagatedMaskSet s;
        s.frame_id = f.at("frame_id").get<int>();
        s.scale = scale;
        for (const auto& m : f.at("masks")) s.masks.push_back(rle_decode(region_from_json(m)));
        require(s.masks.size() == k, ErrorCode::kSchemaViolation,
                "propagated frame " + std::to_string(s.frame_id) + " does not carry K masks");
        sets.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("bad propagated record: ") + e.what());
  }
  return sets;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

template <int R, int C>
Eigen::Matrix<double, R, C> matrix_from_json(const json& j) {
  require(j.is_array() && j.size() == R * C, ErrorCode::kSchemaViolation,
          "expected " + std::to_string(R * C) + " matrix entries");
  Eigen::Matrix<double, R, C> m;
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) m(r, c) = j.at(r * C + c).get<double>();
  }
  return m;
}

}  // namespace

json frame_to_json(const Frame& frame) {
  json j = {{"frame_id", frame.frame_id},
            {"width", frame.width},
            {"height", frame.height},
            {"intrinsics", matrix_to_json(frame.camera.intrinsics)},
            {"world_to_camera", matrix_to_json(frame.camera.world_to_camera)}};
  if (frame.image_path) j["image"] = *frame.image_path;
  return j;
}

Frame frame_from_json(const json& j) {
  Frame f;
  try {
    f.frame_id = j.at("frame_id").get<int>();
    f.width = j.at("width").get<int>();
    f.height = j.at("height").get<int>();
    f.camera.intrinsics = matrix_from_json<3, 3>(j.at("intrinsics"));
    f.camera.world_to_camera = matrix_from_json<4, 4>(j.at("world_to_camera"));
    if (j.contains("image")) f.image_path = j["image"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("bad frame record: ") + e.what());
  }
  require(f.width > 0 && f.height > 0, ErrorCode::kSchemaViolation, "frame size must be positive");
  f.camera.validate();
  return f;
}

namespace {

fs::path require_file(const fs::path& root, const std::string& name) {
  fs::path p = root / name;
  if (!fs::exists(p)) fail(ErrorCode::kMissingArtifact, "missing " + p.string());
  return p;
}

std::string features_name(Scale s) { return "features_" + std::string(scale_tag(s)) + ".bin"; }
std::string masks_name(Scale s) { return "masks_" + std::string(scale_tag(s)) + ".json"; }

}  // namespace

// ---------------------------------------------------------------------------
// Dataset IO

Dataset load_dataset(const fs::path& root) {
  const json manifest = read_json(require_file(root, "manifest.json"));
  Dataset ds;
  ds.root = root;
  try {
    require(manifest.value("format", "") == "semsplat-dataset", ErrorCode::kSchemaViolation,
            "manifest.json is not a semsplat dataset");
    ds.manifest.name = manifest.value("name", "dataset");
    ds.manifest.feature_dim = manifest.at("feature_dim").get<int>();
    ds.manifest.field_dim = manifest.value("field_dim", 8);
    ds.manifest.color_dim = manifest.value("color_dim", 3);
    ds.manifest.scales.clear();
    for (const auto& s : manifest.at("scales")) ds.manifest.scales.push_back(parse_scale(s.get<std::string>()));
    if (manifest.contains("propagated")) ds.manifest.propagated = manifest["propagated"].get<std::string>();
    if (manifest.contains("queries")) ds.manifest.queries = manifest["queries"].get<std::string>();
    if (manifest.contains("initial_scene")) {
      ds.manifest.initial_scene = manifest["initial_scene"].get<std::string>();
    }

    for (const auto& f : manifest.at("frames")) {
      Frame frame;
      frame.frame_id = f.at("frame_id").get<int>();
      frame.width = f.at("width").get<int>();
      frame.height = f.at("height").get<int>();
      if (f.contains("image")) frame.image_path = f["image"].get<std::string>();
      require(frame.width > 0 && frame.height > 0, ErrorCode::kSchemaViolation,
              "frame " + std::to_string(frame.frame_id) + " has empty size");
      ds.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("manifest.json: ") + e.what());
  }
  require(ds.manifest.feature_dim > 0, ErrorCode::kSchemaViolation, "feature_dim must be positive");
  std::sort(ds.frames.begin(), ds.frames.end(),
            [](const Frame& a, const Frame& b) { return a.frame_id < b.frame_id; });
  for (std::size_t i = 1; i < ds.frames.size(); ++i) {
    require(ds.frames[i].frame_id != ds.frames[i - 1].frame_id, ErrorCode::kSchemaViolation,
            "duplicate frame_id " + std::to_string(ds.frames[i].frame_id));
  }

  const json poses = read_json(require_file(root, "poses.json"));
  std::set<int> posed;
  try {
    for (const auto& p : poses.at("frames")) {
      const int id = p.at("frame_id").get<int>();
      auto it = std::find_if(ds.frames.begin(), ds.frames.end(),
                             [id](const Frame& f) { return f.frame_id == id; });
      require(it != ds.frames.end(), ErrorCode::kSchemaViolation,
              "pose for unknown frame " + std::to_string(id));
      it->camera.intrinsics = matrix_from_json<3, 3>(p.at("intrinsics"));
      it->camera.world_to_camera = matrix_from_json<4, 4>(p.at("world_to_camera"));
      it->camera.validate();
      posed.insert(id);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("poses.json: ") + e.what());
  }
  for (const Frame& f : ds.frames) {
    require(posed.count(f.frame_id) == 1, ErrorCode::kSchemaViolation,
            "frame " + std::to_string(f.frame_id) + " has no pose");
  }

  for (Scale scale : ds.manifest.scales) {
    ScaleLayer layer;
    layer.masks = masks_from_json(read_json(require_file(root, masks_name(scale))), scale);
    auto [dim, raw] = decode_feature_records(read_bytes(require_file(root, features_name(scale))));
    require(dim == ds.manifest.feature_dim, ErrorCode::kSchemaViolation,
            features_name(scale) + " has dim " + std::to_string(dim) + ", manifest declares " +
                std::to_string(ds.manifest.feature_dim));
    require(raw.size() == layer.masks.size() * static_cast<std::size_t>(dim),
            ErrorCode::kSchemaViolation,
            features_name(scale) + " record count does not match " + masks_name(scale));
    FeatureTable table = raw.empty() ? FeatureTable(dim) : FeatureTable::from_raw(dim, std::move(raw));

    for (const Mask& m : layer.masks) {
      const Frame& f = ds.frame(m.frame_id);
      require(m.region.width() == f.width && m.region.height() == f.height,
              ErrorCode::kSchemaViolation,
              "mask " + std::to_string(m.mask_id) + " region does not match frame size");
      require(m.pred_iou >= 0.0 && m.pred_iou <= 1.0 && m.stability >= 0.0 && m.stability <= 1.0,
              ErrorCode::kSchemaViolation, "mask scores must lie in [0, 1]");
    }
    // Deterministic (frame_id, mask_id) order, features permuted alongside.
    std::vector<std::size_t> order(layer.masks.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const Mask& ma = layer.masks[a];
      const Mask& mb = layer.masks[b];
      return std::pair(ma.frame_id, ma.mask_id) < std::pair(mb.frame_id, mb.mask_id);
    });
    if (!std::is_sorted(order.begin(), order.end())) {
      std::vector<Mask> sorted;
      for (std::size_t i : order) sorted.push_back(std::move(layer.masks[i]));
      layer.masks = std::move(sorted);
      table = table.subset(order);
    }
    layer.features = std::move(table);
    ds.layers[scale] = std::move(layer);
  }

  if (ds.manifest.propagated) {
    ds.propagated = propagated_from_json(read_json(require_file(root, *ds.manifest.propagated)));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& root) {
  fs::create_directories(root);
  json frames = json::array();
  json poses = json::array();
  for (const Frame& f : ds.frames) {
    json jf = {{"frame_id", f.frame_id}, {"width", f.width}, {"height", f.height}};
    if (f.image_path) {
      jf["image"] = *f.image_path;
      if (!ds.root.empty() && fs::exists(ds.root / *f.image_path) &&
          !fs::equivalent(ds.root, root)) {
        fs::create_directories((root / *f.image_path).parent_path());
        fs::copy_file(ds.root / *f.image_path, root / *f.image_path,
                      fs::copy_options::overwrite_existing);
      }
    }
    frames.push_back(jf);
    poses.push_back({{"frame_id", f.frame_id},
                     {"intrinsics", matrix_to_json(f.camera.intrinsics)},
                     {"world_to_camera", matrix_to_json(f.camera.world_to_camera)}});
  }
  json scales = json::array();
  for (Scale s : ds.manifest.scales) scales.push_back(scale_tag(s));
  json manifest = {{"format", "semsplat-dataset"},
                   {"version", 1},
                   {"name", ds.manifest.name},
                   {"feature_dim", ds.manifest.feature_dim},
                   {"field_dim", ds.manifest.field_dim},
                   {"color_dim", ds.manifest.color_dim},
                   {"scales", scales},
                   {"frames", frames},
                   {"poses", "poses.json"}};
  json masks_index = json::object();
  json features_index = json::object();
  for (Scale s : ds.manifest.scales) {
    masks_index[std::string(scale_tag(s))] = masks_name(s);
    features_index[std::string(scale_tag(s))] = features_name(s);
  }
  manifest["masks"] = masks_index;
  manifest["features"] = features_index;
  if (ds.manifest.propagated) manifest["propagated"] = *ds.manifest.propagated;
  if (ds.manifest.queries) manifest["queries"] = *ds.manifest.queries;
  if (ds.manifest.initial_scene) manifest["initial_scene"] = *ds.manifest.initial_scene;

  write_json(root / "manifest.json", manifest);
  write_json(root / "poses.json", json{{"frames", poses}});
  for (Scale s : ds.manifest.scales) {
    const ScaleLayer& layer = ds.layer(s);
    require(layer.features.count() == layer.masks.size(), ErrorCode::kSchemaViolation,
            "feature count does not match mask count");
    write_json(root / masks_name(s), masks_to_json(layer.masks));
    FeatureTable table = layer.features;
    if (table.dim() == 0) table = FeatureTable(ds.manifest.feature_dim);
    write_feature_file(root / features_name(s), table);
  }
  if (ds.manifest.propagated) {
    write_json(root / *ds.manifest.propagated, propagated_to_json(ds.propagated));
  }
}

// ---------------------------------------------------------------------------
// Codebook and query sets

void save_codebook(const fs::path& json_path, const Codebook& codebook, const json& metadata) {
  fs::path bin = json_path;
  bin.replace_extension(".bin");
  std::vector<float> raw(static_cast<std::size_t>(codebook.prototypes.size()));
  for (Eigen::Index i = 0; i < codebook.prototypes.size(); ++i) {
    raw[static_cast<std::size_t>(i)] = static_cast<float>(codebook.prototypes.data()[i]);
  }
  write_bytes(bin, encode_feature_records(codebook.dim(), raw));
  json meta = metadata;
  meta["n_prototypes"] = codebook.size();
  meta["dim"] = codebook.dim();
  meta["records"] = bin.filename().string();
  write_json(json_path, meta);
}

Codebook load_codebook(const fs::path& json_path) {
  const json meta = read_json(json_path);
  const fs::path bin = json_path.parent_path() / meta.at("records").get<std::string>();
  auto [dim, raw] = decode_feature_records(read_bytes(bin));
  const int n = meta.at("n_prototypes").get<int>();
  require(dim == meta.at("dim").get<int>() && raw.size() == static_cast<std::size_t>(n) * dim,
          ErrorCode::kSchemaViolation, "codebook records do not match metadata");
  require(n >= 2, ErrorCode::kSchemaViolation, "codebook needs at least two prototypes");
  Codebook cb;
  cb.prototypes.resize(n, dim);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    require(std::isfinite(raw[i]), ErrorCode::kCorruptFeature, "non-finite codebook entry");
    cb.prototypes.data()[i] = static_cast<double>(raw[i]);
  }
  return cb;
}

void save_query_set(const fs::path& json_path, const QuerySet& queries) {
  require(static_cast<Eigen::Index>(queries.phrases.size()) == queries.embeddings.rows(),
          ErrorCode::kSchemaViolation, "query phrases and embeddings differ in count");
  fs::path bin = json_path;
  bin.replace_extension(".bin");
  std::vector<float> raw(static_cast<std::size_t>(queries.embeddings.size()));
  for (Eigen::Index i = 0; i < queries.embeddings.size(); ++i) {
    raw[static_cast<std::size_t>(i)] = static_cast<float>(queries.embeddings.data()[i]);
  }
  write_bytes(bin, encode_feature_records(static_cast<int>(queries.embeddings.cols()), raw));
  write_json(json_path, json{{"phrases", queries.phrases}, {"embeddings", bin.filename().string()}});
}

QuerySet load_query_set(const fs::path& json_path) {
  const json meta = read_json(json_path);
  QuerySet q;
  try {
    q.phrases = meta.at("phrases").get<std::vector<std::string>>();
    const fs::path bin = json_path.parent_path() / meta.at("embeddings").get<std::string>();
    auto [dim, raw] = decode_feature_records(read_bytes(bin));
    require(raw.size() == q.phrases.size() * static_cast<std::size_t>(dim),
            ErrorCode::kSchemaViolation, "query embedding count does not match phrases");
    const bool empty = raw.empty();
    FeatureTable table = empty ? FeatureTable(dim) : FeatureTable::from_raw(dim, std::move(raw));
    q.embeddings = table.unit();
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("bad query set: ") + e.what());
  }
  return q;
}

}  // namespace semsplat
