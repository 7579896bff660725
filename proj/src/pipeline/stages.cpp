#include "semsplat/error.hpp"
#include "semsplat/pipeline.hpp"

namespace semsplat {

LabeledLayer labeled_features(const Dataset& dataset, Scale scale) {
  const ScaleLayer& layer = dataset.layer(scale);
  LabeledLayer out;
  out.features = layer.features.unit();
  out.labels.reserve(layer.masks.size());
  for (const Mask& m : layer.masks) out.labels.push_back(m.label);
  return out;
}

std::vector<int> assign_all(const RowMatrix& features, const Codebook& codebook) {
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        nearest_prototype({features.row(i).data(), static_cast<std::size_t>(features.cols())},
                          codebook)
            .index;
  }
  return out;
}

std::vector<IndexMap> build_index_maps(const Dataset& dataset, Scale scale,
                                       const Codebook& codebook) {
  const ScaleLayer& layer = dataset.layer(scale);
  std::vector<IndexMap> maps;
  maps.reserve(dataset.frames.size());
  std::size_t begin = 0;
  for (const Frame& frame : dataset.frames) {
    // masks are ordered by frame, so each frame is a contiguous run
    while (begin < layer.masks.size() && layer.masks[begin].frame_id < frame.frame_id) ++begin;
    std::size_t end = begin;
    while (end < layer.masks.size() && layer.masks[end].frame_id == frame.frame_id) ++end;
    const RowMatrix rows = layer.features.unit().middleRows(
        static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    maps.push_back(build_index_map(
        frame, scale, std::span<const Mask>(layer.masks).subspan(begin, end - begin), rows,
        codebook));
    begin = end;
  }
  return maps;
}

std::vector<FieldView> make_field_views(const Dataset& dataset, std::span<const IndexMap> maps,
                                        std::span<const Image8> images) {
  require(maps.size() == dataset.frames.size(), ErrorCode::kShapeError,
          "one index map per frame expected");
  require(images.empty() || images.size() == dataset.frames.size(), ErrorCode::kShapeError,
          "one image per frame expected");
  std::vector<FieldView> views;
  views.reserve(maps.size());
  for (std::size_t f = 0; f < maps.size(); ++f) {
    const Frame& frame = dataset.frames[f];
    require(maps[f].frame_id == frame.frame_id, ErrorCode::kShapeError,
            "index map order does not match frames");
    FieldView view{Camera::from_frame(frame), maps[f], {}};
    if (!images.empty()) {
      const Image8& img = images[f];
      require(img.width == frame.width && img.height == frame.height && img.channels == 3,
              ErrorCode::kShapeError, "image size mismatch for frame " +
                                          std::to_string(frame.frame_id));
      view.rgb.resize(img.pixels.size());
      for (std::size_t i = 0; i < img.pixels.size(); ++i) view.rgb[i] = img.pixels[i] / 255.0;
    }
    views.push_back(std::move(view));
  }
  return views;
}

ScaleRun run_scale(const Dataset& dataset, Scale scale, const GaussianScene& geometry,
                   std::span<const Image8> images, const CclConfig& ccl,
                   const FieldTrainConfig& field) {
  ScaleRun run;
  const LabeledLayer layer = labeled_features(dataset, scale);
  run.codebook = train_codebook(layer.features, layer.labels, ccl);
  run.index_maps = build_index_maps(dataset, scale, run.codebook.codebook);
  const auto views = make_field_views(dataset, run.index_maps,
                                      field.mode == FieldMode::kJoint ? images
                                                                      : std::span<const Image8>{});
  const SemanticField initial = initialize_field(geometry, dataset.manifest.field_dim,
                                                 run.codebook.codebook.size(), field);
  run.field = train_field(initial, views, field);
  return run;
}

}  // namespace semsplat
