#include "semsplat/ground_truth.hpp"

#include <string>

#include "semsplat/error.hpp"
#include "semsplat/io.hpp"
#include "semsplat/rle.hpp"

namespace semsplat {

using nlohmann::json;

const GroundTruthView& GroundTruth::view(int frame_id) const {
  for (const auto& v : views)
    if (v.frame.frame_id == frame_id) return v;
  fail(ErrorCode::kMissingArtifact, "no ground truth for frame " + std::to_string(frame_id));
}

namespace {

json bitmaps_to_json(const std::vector<Bitmap>& maps) {
  json out = json::array();
  for (const Bitmap& b : maps) out.push_back(region_to_json(rle_encode(b)));
  return out;
}

std::vector<Bitmap> bitmaps_from_json(const json& j) {
  std::vector<Bitmap> out;
  for (const auto& r : j) out.push_back(rle_decode(region_from_json(r)));
  return out;
}

json mask_truth_to_json(const std::vector<MaskTruth>& truths) {
  json out = json::array();
  for (const MaskTruth& t : truths)
    out.push_back({{"frame_id", t.frame_id},
                   {"mask_id", t.mask_id},
                   {"category", t.category},
                   {"occluded", t.occluded},
                   {"blur_lambda", t.blur_lambda},
                   {"blur_partner", t.blur_partner}});
  return out;
}

std::vector<MaskTruth> mask_truth_from_json(const json& j) {
  std::vector<MaskTruth> out;
  for (const auto& r : j) {
    MaskTruth t;
    t.frame_id = r.at("frame_id").get<int>();
    t.mask_id = r.at("mask_id").get<int>();
    t.category = r.at("category").get<int>();
    t.occluded = r.at("occluded").get<bool>();
    t.blur_lambda = r.at("blur_lambda").get<double>();
    t.blur_partner = r.at("blur_partner").get<int>();
    out.push_back(t);
  }
  return out;
}

}  // namespace

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  json concepts = json::array();
  for (Eigen::Index r = 0; r < truth.concept_vectors.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < truth.concept_vectors.cols(); ++c)
      row.push_back(truth.concept_vectors(r, c));
    concepts.push_back(row);
  }
  json views = json::array();
  for (const auto& v : truth.views)
    views.push_back({{"frame", frame_to_json(v.frame)},
                     {"held_out", v.held_out},
                     {"category_masks", bitmaps_to_json(v.category_masks)},
                     {"part_masks", bitmaps_to_json(v.part_masks)}});
  write_json(path, {{"format", "semsplat-ground-truth"},
                    {"version", 1},
                    {"categories", truth.categories},
                    {"names", truth.names},
                    {"concept_vectors", concepts},
                    {"part_category", truth.part_category},
                    {"gaussian_category", truth.gaussian_category},
                    {"views", views},
                    {"sp_masks", mask_truth_to_json(truth.sp_masks)},
                    {"wp_masks", mask_truth_to_json(truth.wp_masks)}});
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  const json j = read_json(path);
  GroundTruth t;
  try {
    require(j.at("format").get<std::string>() == "semsplat-ground-truth",
            ErrorCode::kSchemaViolation, path.string() + " is not a ground-truth bundle");
    t.categories = j.at("categories").get<int>();
    t.names = j.at("names").get<std::vector<std::string>>();
    const json& concepts = j.at("concept_vectors");
    const std::size_t rows = concepts.size();
    const std::size_t cols = rows == 0 ? 0 : concepts.at(0).size();
    t.concept_vectors.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      require(concepts[r].size() == cols, ErrorCode::kSchemaViolation, "ragged concept vectors");
      for (std::size_t c = 0; c < cols; ++c)
        t.concept_vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            concepts[r][c].get<double>();
    }
    t.part_category = j.at("part_category").get<std::vector<int>>();
    t.gaussian_category = j.at("gaussian_category").get<std::vector<int>>();
    for (const auto& v : j.at("views")) {
      GroundTruthView view;
      view.frame = frame_from_json(v.at("frame"));
      view.held_out = v.at("held_out").get<bool>();
      view.category_masks = bitmaps_from_json(v.at("category_masks"));
      view.part_masks = bitmaps_from_json(v.at("part_masks"));
      t.views.push_back(std::move(view));
    }
    t.sp_masks = mask_truth_from_json(j.at("sp_masks"));
    t.wp_masks = mask_truth_from_json(j.at("wp_masks"));
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaViolation, path.string() + ": " + e.what());
  }
  require(static_cast<int>(t.names.size()) == t.categories + 1 &&
              t.concept_vectors.rows() == t.categories + 1,
          ErrorCode::kSchemaViolation, "ground truth needs K names/concepts plus background");
  return t;
}

}  // namespace semsplat
