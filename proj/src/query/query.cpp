#include "semsplat/query.hpp"

#include <algorithm>
#include <cmath>

#include "semsplat/error.hpp"

namespace semsplat {

namespace {

int phrase_index(const QuerySet& queries, const std::string& phrase) {
  if (queries.size() == 0) fail(ErrorCode::kEmptyQuerySet, "query set is empty");
  const int q = queries.find(phrase);
  if (q < 0) fail(ErrorCode::kMissingArtifact, "phrase '" + phrase + "' is not in the query set");
  return q;
}

}  // namespace

Eigen::MatrixXd relevance_scores(const RowMatrix& features, const QuerySet& queries) {
  if (queries.size() == 0) fail(ErrorCode::kEmptyQuerySet, "query set is empty");
  require(features.cols() == queries.embeddings.cols(), ErrorCode::kShapeError,
          "feature and query embedding widths differ");
  Eigen::MatrixXd cos = features * queries.embeddings.transpose();
  const Eigen::VectorXd norms = features.rowwise().norm();
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    if (norms[i] > 0.0) cos.row(i) /= norms[i];
    else cos.row(i).setZero();
  }
  // cos is bounded by 1, so exp never overflows; no shift needed.
  Eigen::MatrixXd p = cos.array().exp().matrix();
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
  return p;
}

RelevanceMap relevance_map(const RowMatrix& refined, int width, int height,
                           const std::string& phrase, const QuerySet& queries, Scale scale) {
  const int q = phrase_index(queries, phrase);
  require(refined.rows() == static_cast<Eigen::Index>(width) * height, ErrorCode::kShapeError,
          "refined feature rows != width*height");
  const Eigen::MatrixXd p = relevance_scores(refined, queries);
  RelevanceMap map{phrase, scale, width, height, std::vector<double>(p.rows())};
  for (Eigen::Index i = 0; i < p.rows(); ++i) map.grid[i] = p(i, q);
  return map;
}

RelevanceMap relevance_map_from_indices(std::span<const int> indices, int width, int height,
                                        const Codebook& codebook, const std::string& phrase,
                                        const QuerySet& queries, Scale scale) {
  const int q = phrase_index(queries, phrase);
  require(indices.size() == static_cast<std::size_t>(width) * height, ErrorCode::kShapeError,
          "index count != width*height");
  const Eigen::MatrixXd p = relevance_scores(codebook.prototypes, queries);
  RelevanceMap map{phrase, scale, width, height, std::vector<double>(indices.size())};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < codebook.size(), ErrorCode::kShapeError,
            "prototype index out of range");
    map.grid[i] = p(indices[i], q);
  }
  return map;
}

RelevanceMap normalize_relevance(const RelevanceMap& map) {
  RelevanceMap out = map;
  if (map.grid.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.grid.begin(), map.grid.end());
  const double span = *hi - *lo;
  for (double& v : out.grid) v = span > 0.0 ? (v - *lo) / span : 0.0;
  return out;
}

Bitmap segment(std::span<const RelevanceMap> maps, double threshold) {
  require(!maps.empty(), ErrorCode::kShapeError, "segment needs at least one relevance map");
  const int w = maps.front().width, h = maps.front().height;
  for (const auto& m : maps)
    require(m.width == w && m.height == h && m.grid.size() == static_cast<std::size_t>(w) * h,
            ErrorCode::kShapeError, "relevance maps differ in size");
  Bitmap out(w, h);
  for (std::size_t p = 0; p < out.size(); ++p) {
    double best = maps.front().grid[p];
    for (const auto& m : maps) best = std::max(best, m.grid[p]);
    out.set(p, best > threshold);
  }
  return out;
}

std::vector<GaussianClass> classify_gaussians(const GaussianScene& scene, const Decoder& decoder) {
  require(scene.feature_dim == decoder.input_dim(), ErrorCode::kShapeError,
          "decoder input width does not match the scene features");
  std::vector<double> flat;
  flat.reserve(scene.size() * scene.feature_dim);
  for (const Gaussian& g : scene.gaussians)
    for (int c = 0; c < scene.feature_dim; ++c) flat.push_back(g.feature[c]);
  std::vector<GaussianClass> out(scene.size());
  if (scene.size() == 0) return out;
  const DecodedMap decoded = decode(flat, static_cast<int>(scene.size()), 1, decoder);
  const std::vector<int> idx = argmax_indices(decoded);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {idx[i], decoded.probs(idx[i], static_cast<Eigen::Index>(i))};
  return out;
}

EditResult select_and_edit(const GaussianScene& scene, const Decoder& decoder,
                           const Codebook& codebook, const std::string& phrase,
                           const QuerySet& queries, EditOp op, double threshold, bool normalize,
                           const Eigen::Vector3d& color) {
  const int q = phrase_index(queries, phrase);
  require(decoder.classes() == codebook.size(), ErrorCode::kShapeError,
          "decoder width does not match the codebook");
  Eigen::VectorXd score = relevance_scores(codebook.prototypes, queries).col(q);
  if (normalize) {
    const double lo = score.minCoeff(), hi = score.maxCoeff();
    if (hi > lo) score = ((score.array() - lo) / (hi - lo)).matrix();
    else score.setZero();
  }
  EditResult result;
  result.selection.phrase = phrase;
  std::vector<char> chosen(codebook.size(), 0);
  for (int j = 0; j < codebook.size(); ++j)
    if (score[j] > threshold) {
      chosen[j] = 1;
      result.selection.prototypes.push_back(j);
    }
  if (result.selection.empty()) {
    result.scene = scene;
    return result;
  }
  const std::vector<GaussianClass> classes = classify_gaussians(scene, decoder);
  result.scene.feature_dim = scene.feature_dim;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const bool hit = chosen[classes[i].index] != 0;
    if (hit) {
      result.selection.indices.push_back(static_cast<int>(i));
      result.selection.categories.push_back(classes[i].index);
      result.selection.confidences.push_back(classes[i].confidence);
    }
    switch (op) {
      case EditOp::kExtract:
        if (hit) result.scene.gaussians.push_back(scene.gaussians[i]);
        break;
      case EditOp::kDelete:
        if (!hit) result.scene.gaussians.push_back(scene.gaussians[i]);
        break;
      case EditOp::kRecolor:
        result.scene.gaussians.push_back(scene.gaussians[i]);
        if (hit) result.scene.gaussians.back().color = color;
        break;
    }
  }
  return result;
}

nlohmann::json selection_to_json(const GaussianSelection& selection) {
  return {{"phrase", selection.phrase},
          {"prototypes", selection.prototypes},
          {"indices", selection.indices},
          {"categories", selection.categories},
          {"confidences", selection.confidences}};
}

}  // namespace semsplat
