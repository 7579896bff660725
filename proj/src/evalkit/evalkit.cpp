#include "semsplat/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "semsplat/error.hpp"
#include "semsplat/io.hpp"

namespace semsplat {

double pair_iou(const Bitmap& pred, const Bitmap& gt) {
  check_same_shape(pred, gt);
  const std::size_t u = union_count(pred, gt);
  if (u == 0) return 1.0;
  return static_cast<double>(intersection_count(pred, gt)) / static_cast<double>(u);
}

double miou(std::span<const Bitmap> pred, std::span<const Bitmap> gt) {
  require(pred.size() == gt.size(), ErrorCode::kShapeError,
          "miou needs paired lists of equal length");
  require(!pred.empty(), ErrorCode::kShapeError, "miou needs at least one pair");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += pair_iou(pred[i], gt[i]);
  return total / static_cast<double>(pred.size());
}

double assignment_purity(std::span<const int> assignments, std::span<const int> categories) {
  require(assignments.size() == categories.size(), ErrorCode::kShapeError,
          "assignments and categories differ in length");
  std::map<int, std::map<int, std::size_t>> counts;
  std::size_t n = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (categories[i] < 0) continue;
    ++counts[categories[i]][assignments[i]];
    ++n;
  }
  if (n == 0) fail(ErrorCode::kEmptyDataset, "purity over an empty feature set");
  std::size_t top_total = 0;
  for (const auto& [category, hist] : counts) {
    std::size_t top = 0;
    for (const auto& [proto, c] : hist) top = std::max(top, c);
    top_total += top;
  }
  return static_cast<double>(top_total) / static_cast<double>(n);
}

DominantPrototypes dominant_prototypes(std::span<const int> assignments,
                                       std::span<const int> categories, const Codebook& codebook) {
  require(assignments.size() == categories.size(), ErrorCode::kShapeError,
          "assignments and categories differ in length");
  std::map<int, std::map<int, std::size_t>> counts;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (categories[i] >= 0) ++counts[categories[i]][assignments[i]];
  DominantPrototypes out;
  for (const auto& [category, hist] : counts) {
    int best = -1;
    std::size_t top = 0;
    for (const auto& [proto, c] : hist)
      if (c > top) {  // map order makes the lowest index win ties
        top = c;
        best = proto;
      }
    out.by_category[category] = best;
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  out.max_inter_cosine = -1.0;
  for (auto a = out.by_category.begin(); a != out.by_category.end(); ++a)
    for (auto b = std::next(a); b != out.by_category.end(); ++b) {
      const auto ta = codebook.prototypes.row(a->second);
      const auto tb = codebook.prototypes.row(b->second);
      const double c = ta.dot(tb) / (ta.norm() * tb.norm());
      out.max_inter_cosine = std::max(out.max_inter_cosine, c);
      sum += c;
      ++pairs;
    }
  out.mean_inter_cosine = pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
  if (pairs == 0) out.max_inter_cosine = 0.0;
  return out;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "BASELINE";
    case Variant::kPullOnly: return "PULL_ONLY";
    case Variant::kPushOnly: return "PUSH_ONLY";
    case Variant::kFull: return "FULL";
  }
  return "FULL";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == name) return v;
  fail(ErrorCode::kInvalidConfig, "unknown variant '" + std::string(name) + "'");
}

CclConfig apply_variant(CclConfig config, Variant v) {
  if (v == Variant::kBaseline || v == Variant::kPushOnly) config.lambda_pull = 0.0;
  if (v == Variant::kBaseline || v == Variant::kPullOnly) config.lambda_push = 0.0;
  return config;
}

Image8 overlay_image(const Bitmap& pred, const Bitmap& gt) {
  Image8 img{pred.width(), pred.height(), 3, std::vector<std::uint8_t>(pred.size() * 3, 0)};
  for (std::size_t p = 0; p < pred.size(); ++p) {
    const bool a = pred.at(p), b = gt.at(p);
    std::uint8_t* px = &img.pixels[p * 3];
    if (a && b) px[1] = 220;
    else if (a) px[0] = 220;
    else if (b) px[2] = 220;
    else px[0] = px[1] = px[2] = 30;
  }
  return img;
}

Image8 heatmap_image(const RelevanceMap& map) {
  Image8 img{map.width, map.height, 1, std::vector<std::uint8_t>(map.grid.size())};
  for (std::size_t p = 0; p < map.grid.size(); ++p)
    img.pixels[p] = static_cast<std::uint8_t>(std::lround(std::clamp(map.grid[p], 0.0, 1.0) * 255.0));
  return img;
}

Image8 mask_image(const Bitmap& mask) {
  Image8 img{mask.width(), mask.height(), 1, std::vector<std::uint8_t>(mask.size())};
  for (std::size_t p = 0; p < mask.size(); ++p) img.pixels[p] = mask.at(p) ? 255 : 0;
  return img;
}

EvalReport evaluate_segmentation(const std::map<Scale, ScaleModel>& models, const GroundTruth& truth,
                                 const QuerySet& queries, const EvalConfig& config,
                                 const std::optional<std::filesystem::path>& figures,
                                 const std::string& figure_prefix) {
  require(!models.empty(), ErrorCode::kMissingArtifact, "no trained scale to evaluate");
  std::vector<const GroundTruthView*> views;
  for (const auto& v : truth.views)
    if (v.held_out || !config.held_out_only) views.push_back(&v);
  if (views.empty())
    for (const auto& v : truth.views) views.push_back(&v);
  if (figures) {
    std::filesystem::create_directories(*figures / "overlays");
    std::filesystem::create_directories(*figures / "heatmaps");
  }

  EvalReport report;
  double total = 0.0;
  for (const GroundTruthView* view : views) {
    const Camera camera = Camera::from_frame(view->frame);
    std::map<Scale, std::vector<int>> indices;
    for (const auto& [scale, model] : models) {
      const SplatOutput out = render(model.field.scene, camera);
      indices[scale] =
          argmax_indices(decode(out.feature, out.width, out.height, model.field.decoder));
    }
    for (int k = 1; k <= truth.categories; ++k) {
      const Bitmap& gt = view->category_masks[k - 1];
      if (gt.none()) continue;
      const std::string& phrase = truth.names[k - 1];
      std::vector<RelevanceMap> maps;
      for (const auto& [scale, model] : models) {
        RelevanceMap m = relevance_map_from_indices(indices[scale], camera.width, camera.height,
                                                    model.codebook, phrase, queries, scale);
        maps.push_back(config.normalize ? normalize_relevance(m) : m);
      }
      const Bitmap pred = segment(maps, config.threshold);
      QueryResult r{view->frame.frame_id, phrase, pair_iou(pred, gt), gt.count(), pred.count()};
      total += r.iou;
      report.queries.push_back(r);
      if (figures) {
        const std::string stem =
            figure_prefix + "frame" + std::to_string(view->frame.frame_id) + "_" + phrase;
        write_png(*figures / "overlays" / (stem + ".png"), overlay_image(pred, gt));
        for (const auto& m : maps)
          write_png(*figures / "heatmaps" / (stem + "_" + std::string(scale_tag(m.scale)) + ".png"),
                    heatmap_image(m));
      }
    }
  }
  require(!report.queries.empty(), ErrorCode::kEmptyDataset,
          "no evaluation view shows any ground-truth object");
  report.miou = total / static_cast<double>(report.queries.size());
  return report;
}

std::string evaluation_protocol(const EvalConfig& config) {
  std::ostringstream s;
  s << "Protocol: every ground-truth object is queried on each "
    << (config.held_out_only ? "held-out view" : "view") << " where it is visible. Per scale, the "
    << "field is rendered, decoded, and each pixel takes its argmax prototype; relevance is the "
    << "softmax of cosine similarity over the full query set (objects plus background)"
    << (config.normalize ? ", min-max normalized per map" : "")
    << ". Scales are fused with a per-pixel max and thresholded at " << config.threshold
    << ". IoU is averaged over (view, query) pairs.";
  return s.str();
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  std::ostringstream s;
  s << "variant,config_hash,frame_id,query,iou,gt_pixels,pred_pixels\n";
  char buf[64];
  for (const auto& r : reports)
    for (const auto& q : r.queries) {
      std::snprintf(buf, sizeof buf, "%.6f", q.iou);
      s << r.variant << ',' << r.config_hash << ',' << q.frame_id << ',' << q.phrase << ',' << buf
        << ',' << q.gt_pixels << ',' << q.pred_pixels << '\n';
    }
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.6f", r.miou);
    s << r.variant << ',' << r.config_hash << ",all,mIoU," << buf << ",,\n";
  }
  write_text(path, s.str());
}

void write_ablation_markdown(const std::filesystem::path& path, std::span<const EvalReport> reports,
                             const EvalConfig& config) {
  std::ostringstream s;
  s << "# Ablation\n\n" << evaluation_protocol(config) << "\n\n";
  std::set<std::string> phrases;
  for (const auto& r : reports)
    for (const auto& q : r.queries) phrases.insert(q.phrase);
  s << "| Variant |";
  for (const auto& p : phrases) s << ' ' << p << " |";
  s << " mIoU |\n|---|";
  for (std::size_t i = 0; i < phrases.size(); ++i) s << "---|";
  s << "---|\n";
  char buf[32];
  for (const auto& r : reports) {
    s << "| " << r.variant << " |";
    for (const auto& p : phrases) {
      double sum = 0.0;
      int n = 0;
      for (const auto& q : r.queries)
        if (q.phrase == p) sum += q.iou, ++n;
      std::snprintf(buf, sizeof buf, "%.1f", n ? 100.0 * sum / n : 0.0);
      s << ' ' << buf << " |";
    }
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * r.miou);
    s << ' ' << buf << " |\n";
  }
  write_text(path, s.str());
}

}  // namespace semsplat
