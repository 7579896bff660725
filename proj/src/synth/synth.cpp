#include "semsplat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "semsplat/error.hpp"
#include "semsplat/mask_pipeline.hpp"
#include "semsplat/rng.hpp"

namespace semsplat {

namespace {

constexpr double kObjectRadius = 0.3;

// Stream ids for derive_seed; kept apart so changing one knob (e.g. the
// corruption) leaves everything else byte-identical.
enum Stream : std::uint64_t {
  kConceptStream = 1,
  kLayoutStream = 2,
  kGaussianStream = 3,
  kViewStream = 0x1000,        // + frame_id
  kCorruptionStream = 0x2000,  // + frame_id
};

Eigen::VectorXd random_unit(Rng& rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v.normalized();
}

// Shared component keeps every pairwise cosine near 0.25 so that blur mixing
// between two concepts never lowers the cosine to the clean vector below
// (1 - lambda) / |mix|.
RowMatrix concept_vectors(int count, int dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kConceptStream));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Eigen::VectorXd shared = random_unit(rng, dim);
    RowMatrix out(count, dim);
    for (int k = 0; k < count; ++k) {
      Eigen::VectorXd v = (0.5 * shared + std::sqrt(0.75) * random_unit(rng, dim)).normalized();
      // Float-representable entries so stored records equal the truth exactly.
      out.row(k) = v.cast<float>().cast<double>().transpose();
    }
    bool ok = true;
    for (int a = 0; a < count && ok; ++a)
      for (int b = a + 1; b < count && ok; ++b) {
        const double c = out.row(a).dot(out.row(b)) / (out.row(a).norm() * out.row(b).norm());
        ok = c >= 0.0 && c < 0.5;
      }
    if (ok) return out;
  }
  fail(ErrorCode::kGenerationFailure, "could not draw concept vectors with pairwise cos in [0, 0.5)");
}

Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Eigen::Vector3d rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb + Eigen::Vector3d::Constant(v - c);
}

// OpenCV convention: x right, y down, z forward; world z is up.
Frame ring_frame(int frame_id, double azimuth, double elevation, double distance, double focal,
                 int width, int height) {
  const Eigen::Vector3d eye(distance * std::cos(elevation) * std::cos(azimuth),
                            distance * std::cos(elevation) * std::sin(azimuth),
                            distance * std::sin(elevation));
  const Eigen::Vector3d forward = (-eye).normalized();
  const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  Frame f;
  f.frame_id = frame_id;
  f.width = width;
  f.height = height;
  f.camera.intrinsics << focal, 0, width / 2.0, 0, focal, height / 2.0, 0, 0, 1;
  f.camera.world_to_camera.setIdentity();
  f.camera.world_to_camera.topLeftCorner<3, 3>() = r;
  f.camera.world_to_camera.topRightCorner<3, 1>() = -r * eye;
  return f;
}

struct Layout {
  GaussianScene scene;
  std::vector<int> gaussian_category;  // 1..K
  std::vector<int> gaussian_part;
  std::vector<int> part_category;
  std::vector<Eigen::Vector3d> centers;
};

Layout build_layout(const SynthConfig& config) {
  const int k_count = config.categories;
  Rng layout_rng(derive_seed(config.seed, kLayoutStream));
  Rng rng(derive_seed(config.seed, kGaussianStream));
  const double ring = std::max(0.8, k_count * (2.0 * kObjectRadius + 0.25) / (2.0 * std::numbers::pi));
  Layout out;
  out.scene.feature_dim = config.field_dim;
  for (int k = 0; k < k_count; ++k) {
    const double angle =
        2.0 * std::numbers::pi * k / k_count + layout_rng.uniform(-0.15, 0.15) / k_count;
    out.centers.emplace_back(ring * std::cos(angle), ring * std::sin(angle),
                             layout_rng.uniform(-0.05, 0.05));
  }
  for (int k = 0; k < k_count; ++k) {
    const int count = config.gaussians / k_count + (k < config.gaussians % k_count ? 1 : 0);
    const Eigen::Vector3d base_color = hsv_to_rgb(static_cast<double>(k) / k_count, 0.75, 0.9);
    std::vector<Gaussian> members;
    for (int i = 0; i < count; ++i) {
      Eigen::Vector3d u;
      do {
        u = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      } while (u.squaredNorm() > 1.0);
      Gaussian g;
      g.position = out.centers[k] + 0.75 * kObjectRadius * u;
      g.rotation = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
      for (int a = 0; a < 3; ++a) g.scale[a] = kObjectRadius * rng.uniform(0.22, 0.36);
      g.alpha_logit = 2.0;
      for (int c = 0; c < 3; ++c)
        g.color[c] = std::clamp(base_color[c] + rng.uniform(-0.03, 0.03), 0.0, 1.0);
      g.feature = Eigen::VectorXd::Zero(config.field_dim);
      members.push_back(g);
    }
    // 2-4 spatial parts: nearest of a few random directions from the center.
    const int parts = 2 + static_cast<int>(rng.index(3));
    std::vector<Eigen::Vector3d> seeds;
    for (int p = 0; p < parts; ++p) {
      Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
      seeds.push_back(out.centers[k] + 0.6 * kObjectRadius * dir.normalized());
    }
    std::vector<int> local(members.size());
    std::vector<int> used(parts, 0);
    for (std::size_t i = 0; i < members.size(); ++i) {
      int best = 0;
      for (int p = 1; p < parts; ++p)
        if ((members[i].position - seeds[p]).squaredNorm() <
            (members[i].position - seeds[best]).squaredNorm())
          best = p;
      local[i] = best;
      ++used[best];
    }
    std::vector<int> global(parts, -1);
    for (int p = 0; p < parts; ++p) {
      if (used[p] == 0) continue;
      global[p] = static_cast<int>(out.part_category.size());
      out.part_category.push_back(k + 1);
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      out.scene.gaussians.push_back(members[i]);
      out.gaussian_category.push_back(k + 1);
      out.gaussian_part.push_back(global[local[i]]);
    }
  }
  return out;
}

// Per-pixel part ownership: argmax over a one-hot part render where the
// object coverage reaches 0.5, else -1.
std::vector<int> part_ownership(const Layout& layout, const Camera& camera) {
  const int parts = static_cast<int>(layout.part_category.size());
  GaussianScene onehot = layout.scene;
  onehot.feature_dim = parts;
  for (std::size_t i = 0; i < onehot.size(); ++i) {
    onehot.gaussians[i].feature = Eigen::VectorXd::Zero(parts);
    onehot.gaussians[i].feature[layout.gaussian_part[i]] = 1.0;
  }
  const SplatOutput out = render(onehot, camera);
  std::vector<int> owner(out.pixel_count(), -1);
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (out.weight_sum[p] < 0.5) continue;
    int best = 0;
    for (int j = 1; j < parts; ++j)
      if (out.feature[p * parts + j] > out.feature[p * parts + best]) best = j;
    owner[p] = best;
  }
  return owner;
}

// Keeps the pixels on one side of a random line so that a fraction in
// [0.35, 0.65] of the region survives.
Bitmap half_plane_cut(const Bitmap& region, Rng& rng) {
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double nx = std::cos(theta), ny = std::sin(theta);
  std::vector<std::pair<double, int>> proj;
  for (int y = 0; y < region.height(); ++y)
    for (int x = 0; x < region.width(); ++x)
      if (region(x, y)) proj.emplace_back(nx * x + ny * y, y * region.width() + x);
  std::sort(proj.begin(), proj.end());
  const double keep = rng.uniform(0.35, 0.65);
  const std::size_t kept = std::max<std::size_t>(1, static_cast<std::size_t>(keep * proj.size()));
  Bitmap out(region.width(), region.height());
  for (std::size_t i = 0; i < kept; ++i) out.set(static_cast<std::size_t>(proj[i].second), true);
  return out;
}

}  // namespace

void CorruptionSpec::validate() const {
  require(occlusion_rate >= 0.0 && occlusion_rate <= 1.0 && blur_mix >= 0.0 && blur_mix <= 1.0,
          ErrorCode::kInvalidConfig, "corruption rates must lie in [0, 1]");
  require(view_rot_deg >= 0.0 && view_rot_deg <= 180.0, ErrorCode::kInvalidConfig,
          "view_rot_deg must lie in [0, 180]");
}

void SynthConfig::validate() const {
  require(categories >= 2, ErrorCode::kInvalidConfig, "synthetic scenes need K >= 2");
  require(views >= 2, ErrorCode::kInvalidConfig, "synthetic scenes need at least 2 views");
  require(held_out_views >= 0, ErrorCode::kInvalidConfig, "held_out_views must be >= 0");
  require(width > 0 && height > 0, ErrorCode::kInvalidConfig, "resolution must be positive");
  require(gaussians >= 2 * categories, ErrorCode::kInvalidConfig,
          "need at least two Gaussians per category");
  require(feature_dim >= 2 && field_dim >= 1, ErrorCode::kInvalidConfig, "bad feature dimensions");
  require(elevation_deg > 0.0 && elevation_deg < 90.0, ErrorCode::kInvalidConfig,
          "elevation_deg must lie in (0, 90)");
  require(min_mask_area >= 1 && propagation_erosion >= 0, ErrorCode::kInvalidConfig,
          "bad mask area / erosion settings");
  corruption.validate();
}

Eigen::VectorXd corrupt_feature(const Eigen::VectorXd& clean, const Eigen::VectorXd& partner,
                                double blur_lambda, const Eigen::VectorXd& direction,
                                double angle_rad) {
  Eigen::VectorXd f = clean;
  if (blur_lambda != 0.0) f = ((1.0 - blur_lambda) * clean + blur_lambda * partner).normalized();
  if (angle_rad != 0.0) {
    f.normalize();
    Eigen::VectorXd e = direction - direction.dot(f) * f;
    const double n = e.norm();
    if (n > 1e-12) f = std::cos(angle_rad) * f + std::sin(angle_rad) * (e / n);
  }
  return f;
}

SyntheticScene generate(const SynthConfig& config) {
  config.validate();
  const int k_count = config.categories;
  const int d = config.feature_dim;
  SyntheticScene out;

  Layout layout = build_layout(config);
  out.scene = layout.scene;

  GroundTruth& truth = out.truth;
  truth.categories = k_count;
  for (int k = 1; k <= k_count; ++k) truth.names.push_back("object_" + std::to_string(k));
  truth.names.push_back("background");
  truth.concept_vectors = concept_vectors(k_count + 1, d, config.seed);
  truth.part_category = layout.part_category;
  truth.gaussian_category = layout.gaussian_category;

  out.queries.phrases = truth.names;
  out.queries.embeddings = truth.concept_vectors;
  out.queries.embeddings.rowwise().normalize();

  // Ring cameras: fit the object ring into ~84% of the shorter image side.
  const double ring = out.scene.gaussians.empty()
                          ? 1.0
                          : std::max(0.8, k_count * (2.0 * kObjectRadius + 0.25) /
                                              (2.0 * std::numbers::pi));
  const double extent = ring + kObjectRadius;
  const double distance = 3.0 * extent;
  const double focal = 0.42 * std::min(config.width, config.height) * distance / extent;
  const double object_px = focal * kObjectRadius / distance;
  if (object_px < 2.5)
    fail(ErrorCode::kGenerationFailure,
         "resolution " + std::to_string(config.width) + "x" + std::to_string(config.height) +
             " too small to place " + std::to_string(k_count) + " objects");
  const double elevation = config.elevation_deg * std::numbers::pi / 180.0;

  std::vector<Frame> frames;
  for (int i = 0; i < config.views; ++i)
    frames.push_back(ring_frame(i, 2.0 * std::numbers::pi * i / config.views, elevation, distance,
                                focal, config.width, config.height));
  for (int i = 0; i < config.held_out_views; ++i)
    frames.push_back(ring_frame(config.views + i,
                                2.0 * std::numbers::pi * (i + 0.37) / config.held_out_views,
                                elevation, distance, focal, config.width, config.height));

  const int parts = static_cast<int>(layout.part_category.size());
  std::vector<int> visible(k_count + 1, 0);
  Dataset& ds = out.dataset;
  ds.manifest.name = "synthetic";
  ds.manifest.feature_dim = d;
  ds.manifest.field_dim = config.field_dim;
  ds.manifest.propagated = "propagated.json";
  ds.manifest.queries = "queries.json";
  ds.manifest.initial_scene = "scene/initial.json";
  ScaleLayer& sp_layer = ds.layers[Scale::kSubpartPart];
  ScaleLayer& wp_layer = ds.layers[Scale::kWholePart];
  sp_layer.features = FeatureTable(d);
  wp_layer.features = FeatureTable(d);

  for (Frame& frame : frames) {
    const bool held_out = frame.frame_id >= config.views;
    const Camera camera = Camera::from_frame(frame);
    const std::vector<int> owner = part_ownership(layout, camera);
    GroundTruthView view;
    view.held_out = held_out;
    view.category_masks.assign(k_count, Bitmap(frame.width, frame.height));
    view.part_masks.assign(parts, Bitmap(frame.width, frame.height));
    Bitmap background(frame.width, frame.height);
    for (std::size_t p = 0; p < owner.size(); ++p) {
      if (owner[p] < 0) {
        background.set(p, true);
        continue;
      }
      view.part_masks[owner[p]].set(p, true);
      view.category_masks[layout.part_category[owner[p]] - 1].set(p, true);
    }

    if (!held_out) {
      const std::string image = "images/frame_" + std::to_string(frame.frame_id) + ".png";
      frame.image_path = image;
      out.images.push_back(color_to_image(render(out.scene, camera)));
      for (int k = 0; k < k_count; ++k)
        if (static_cast<int>(view.category_masks[k].count()) >= config.min_mask_area) ++visible[k];

      Rng view_rng(derive_seed(config.seed, kViewStream + frame.frame_id));
      Rng bad_rng(derive_seed(config.corruption.seed, kCorruptionStream + frame.frame_id));
      const Eigen::VectorXd direction = random_unit(bad_rng, d);
      const double angle = config.corruption.view_rot_deg * std::numbers::pi / 180.0;

      for (Scale scale : kAllScales) {
        ScaleLayer& layer = ds.layers[scale];
        auto& truths = scale == Scale::kWholePart ? truth.wp_masks : truth.sp_masks;
        const auto& regions = scale == Scale::kWholePart ? view.category_masks : view.part_masks;
        int mask_id = 0;
        auto emit = [&](const Bitmap& full, int category) {
          if (static_cast<int>(full.count()) < config.min_mask_area) return;
          MaskTruth mt;
          mt.frame_id = frame.frame_id;
          mt.mask_id = mask_id;
          mt.category = category;
          Mask m;
          m.mask_id = mask_id++;
          m.frame_id = frame.frame_id;
          m.scale = scale;
          m.region = full;
          m.pred_iou = view_rng.uniform(0.9, 1.0);
          m.stability = view_rng.uniform(0.9, 1.0);
          // Draw every corruption decision unconditionally so each knob's
          // stream stays aligned when another knob changes.
          const bool cut = bad_rng.uniform() < config.corruption.occlusion_rate;
          const int partner_draw = static_cast<int>(bad_rng.index(k_count));
          if (category != 0 && cut) {
            m.region = half_plane_cut(full, bad_rng);
            mt.occluded = true;
          }
          const int own_row = category == 0 ? k_count : category - 1;
          const int partner_row = partner_draw >= own_row ? partner_draw + 1 : partner_draw;
          mt.blur_lambda = config.corruption.blur_mix;
          mt.blur_partner = partner_row == k_count ? 0 : partner_row + 1;
          const Eigen::VectorXd f =
              corrupt_feature(truth.concept_vectors.row(own_row).transpose(),
                              truth.concept_vectors.row(partner_row).transpose(),
                              config.corruption.blur_mix, direction, angle);
          layer.features.append(std::span<const double>(f.data(), static_cast<std::size_t>(d)));
          layer.masks.push_back(std::move(m));
          truths.push_back(mt);
        };
        for (std::size_t r = 0; r < regions.size(); ++r)
          emit(regions[r], scale == Scale::kWholePart ? static_cast<int>(r) + 1
                                                      : layout.part_category[r]);
        emit(background, 0);
      }
      ds.frames.push_back(frame);
    }
    view.frame = frame;
    truth.views.push_back(std::move(view));
  }
  for (int k = 0; k < k_count; ++k)
    if (visible[k] == 0)
      fail(ErrorCode::kGenerationFailure,
           "category " + std::to_string(k + 1) + " is not visible in any training view");

  for (const Frame& f : ds.frames)
    for (Scale scale : kAllScales)
      ds.propagated.push_back(oracle_propagate(truth, f.frame_id, scale, config.propagation_erosion));
  return out;
}

void write_synthetic(const SyntheticScene& synthetic, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "scene");
  save_dataset(synthetic.dataset, root);
  for (std::size_t i = 0; i < synthetic.dataset.frames.size(); ++i)
    write_png(root / *synthetic.dataset.frames[i].image_path, synthetic.images[i]);
  save_scene(root / "scene" / "initial.json", synthetic.scene);
  save_query_set(root / "queries.json", synthetic.queries);
  save_ground_truth(root / "ground_truth.json", synthetic.truth);
}

ConsistencyScore consistency_score(const RowMatrix& features, std::span<const int> categories) {
  require(static_cast<std::size_t>(features.rows()) == categories.size(), ErrorCode::kShapeError,
          "one category per feature row expected");
  RowMatrix unit = features;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double n = unit.row(i).norm();
    require(n > 0.0 && std::isfinite(n), ErrorCode::kDegenerateFeature, "zero feature row");
    unit.row(i) /= n;
  }
  const Eigen::MatrixXd gram = unit * unit.transpose();
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < gram.rows(); ++i)
    for (Eigen::Index j = i + 1; j < gram.cols(); ++j) {
      if (categories[i] == categories[j]) {
        intra += gram(i, j);
        ++n_intra;
      } else {
        inter += gram(i, j);
        ++n_inter;
      }
    }
  if (n_intra == 0) fail(ErrorCode::kEmptyPairSet, "no category has two features");
  return {intra / static_cast<double>(n_intra),
          n_inter == 0 ? std::nan("") : inter / static_cast<double>(n_inter)};
}

}  // namespace semsplat
