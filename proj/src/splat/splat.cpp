#include "semsplat/splat.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "semsplat/error.hpp"
#include "semsplat/io.hpp"
#include "semsplat/parallel.hpp"

namespace semsplat {

Camera Camera::from_frame(const Frame& frame) {
  Camera cam;
  cam.width = frame.width;
  cam.height = frame.height;
  cam.fx = frame.camera.fx();
  cam.fy = frame.camera.fy();
  cam.cx = frame.camera.cx();
  cam.cy = frame.camera.cy();
  cam.rotation = frame.camera.world_to_camera.topLeftCorner<3, 3>();
  cam.translation = frame.camera.world_to_camera.topRightCorner<3, 1>();
  return cam;
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& quaternion) {
  const Eigen::Vector4d q = quaternion.normalized();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d covariance3d(const Gaussian& g) {
  const Eigen::Matrix3d m = rotation_matrix(g.rotation) * g.scale.asDiagonal();
  return m * m.transpose();
}

namespace {

bool finite_gaussian(const Gaussian& g) {
  return g.position.allFinite() && g.rotation.allFinite() && g.scale.allFinite() &&
         std::isfinite(g.alpha_logit) && g.color.allFinite() && g.feature.allFinite() &&
         g.rotation.norm() > 0.0;
}

int tile_count_x(int width) { return (width + kTileSize - 1) / kTileSize; }
int tile_count_y(int height) { return (height + kTileSize - 1) / kTileSize; }

// Alpha of a projected Gaussian at a pixel center, before the floor test.
// `clamped` reports whether the 0.99 cap was hit.
inline double eval_alpha(const ProjectedGaussian& pg, double px, double py, double& falloff,
                         bool& clamped) {
  const double dx = px - pg.mean.x();
  const double dy = py - pg.mean.y();
  const double power = -0.5 * (pg.conic(0, 0) * dx * dx + 2.0 * pg.conic(0, 1) * dx * dy +
                               pg.conic(1, 1) * dy * dy);
  falloff = std::exp(power);
  const double a = pg.opacity * falloff;
  clamped = a > kAlphaCap;
  return clamped ? kAlphaCap : a;
}

std::uint64_t mix(std::uint64_t h, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::optional<ProjectedGaussian> project(const Gaussian& g, const Camera& camera) {
  if (!finite_gaussian(g)) fail(ErrorCode::kNumericalFailure, "non-finite Gaussian parameters");
  const Eigen::Vector3d t = camera.rotation * g.position + camera.translation;
  if (t.z() <= camera.near_plane) return std::nullopt;

  ProjectedGaussian pg;
  pg.camera_point = t;
  pg.depth = t.z();
  pg.opacity = g.opacity();
  pg.mean = {camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy};
  const double iz = 1.0 / t.z();
  pg.jacobian << camera.fx * iz, 0.0, -camera.fx * t.x() * iz * iz,
      0.0, camera.fy * iz, -camera.fy * t.y() * iz * iz;
  pg.cov3d = covariance3d(g);
  const Eigen::Matrix<double, 2, 3> tw = pg.jacobian * camera.rotation;
  pg.cov = tw * pg.cov3d * tw.transpose();
  pg.cov(0, 0) += kCovarianceDilation;
  pg.cov(1, 1) += kCovarianceDilation;
  pg.cov(0, 1) = pg.cov(1, 0) = 0.5 * (pg.cov(0, 1) + pg.cov(1, 0));
  const double det = pg.cov.determinant();
  if (!(det > 0.0) || !pg.mean.allFinite())
    fail(ErrorCode::kNumericalFailure, "degenerate projected covariance");
  pg.conic << pg.cov(1, 1) / det, -pg.cov(0, 1) / det, -pg.cov(1, 0) / det, pg.cov(0, 0) / det;

  // alpha >= 1/255 needs Mahalanobis^2 <= 2 ln(255 * opacity).
  if (pg.opacity * 255.0 <= 1.0) return std::nullopt;
  const double r2 = 2.0 * std::log(255.0 * pg.opacity);
  const double ex = std::sqrt(r2 * pg.cov(0, 0));
  const double ey = std::sqrt(r2 * pg.cov(1, 1));
  // One pixel of slack so rounding never drops a contributing pixel.
  const double lo_x = std::floor(pg.mean.x() - ex - 0.5) - 1.0;
  const double hi_x = std::ceil(pg.mean.x() + ex - 0.5) + 1.0;
  const double lo_y = std::floor(pg.mean.y() - ey - 0.5) - 1.0;
  const double hi_y = std::ceil(pg.mean.y() + ey - 0.5) + 1.0;
  if (hi_x < 0.0 || hi_y < 0.0 || lo_x > camera.width - 1 || lo_y > camera.height - 1)
    return std::nullopt;
  pg.min_x = static_cast<int>(std::max(lo_x, 0.0));
  pg.max_x = static_cast<int>(std::min(hi_x, static_cast<double>(camera.width - 1)));
  pg.min_y = static_cast<int>(std::max(lo_y, 0.0));
  pg.max_y = static_cast<int>(std::min(hi_y, static_cast<double>(camera.height - 1)));
  return pg;
}

std::uint64_t scene_fingerprint(const GaussianScene& scene, const Camera& camera) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double v : {static_cast<double>(camera.width), static_cast<double>(camera.height),
                   camera.fx, camera.fy, camera.cx, camera.cy, camera.near_plane})
    h = mix(h, v);
  for (int i = 0; i < 9; ++i) h = mix(h, camera.rotation.data()[i]);
  for (int i = 0; i < 3; ++i) h = mix(h, camera.translation[i]);
  h = mix(h, static_cast<double>(scene.feature_dim));
  h = mix(h, static_cast<double>(scene.size()));
  for (const Gaussian& g : scene.gaussians) {
    for (int i = 0; i < 3; ++i) h = mix(h, g.position[i]);
    for (int i = 0; i < 4; ++i) h = mix(h, g.rotation[i]);
    for (int i = 0; i < 3; ++i) h = mix(h, g.scale[i]);
    h = mix(h, g.alpha_logit);
    for (int i = 0; i < 3; ++i) h = mix(h, g.color[i]);
    for (Eigen::Index i = 0; i < g.feature.size(); ++i) h = mix(h, g.feature[i]);
  }
  return h;
}

SplatOutput render(const GaussianScene& scene, const Camera& camera) {
  require(camera.width > 0 && camera.height > 0, ErrorCode::kShapeError,
          "camera has an empty image plane");
  const int d = scene.feature_dim;
  for (const Gaussian& g : scene.gaussians)
    require(g.feature.size() == d, ErrorCode::kShapeError, "Gaussian feature size != feature_dim");

  SplatOutput out;
  out.width = camera.width;
  out.height = camera.height;
  out.feature_dim = d;
  const std::size_t pixels = out.pixel_count();
  out.color.assign(pixels * 3, 0.0);
  out.feature.assign(pixels * d, 0.0);
  out.weight_sum.assign(pixels, 0.0);
  out.final_transmittance.assign(pixels, 1.0);
  out.contributor_end.assign(pixels, 0);
  out.fingerprint = scene_fingerprint(scene, camera);

  const std::size_t n = scene.size();
  out.projections.resize(n);
  parallel_for(n, [&](std::size_t i) { out.projections[i] = project(scene.gaussians[i], camera); });

  std::vector<int> order;
  for (std::size_t i = 0; i < n; ++i)
    if (out.projections[i]) order.push_back(static_cast<int>(i));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = out.projections[a]->depth, db = out.projections[b]->depth;
    return da != db ? da < db : a < b;
  });

  const int tx = tile_count_x(camera.width), ty = tile_count_y(camera.height);
  out.tile_lists.assign(static_cast<std::size_t>(tx) * ty, {});
  for (int id : order) {
    const ProjectedGaussian& pg = *out.projections[id];
    for (int y = pg.min_y / kTileSize; y <= pg.max_y / kTileSize; ++y)
      for (int x = pg.min_x / kTileSize; x <= pg.max_x / kTileSize; ++x)
        out.tile_lists[static_cast<std::size_t>(y) * tx + x].push_back(id);
  }

  parallel_for(out.tile_lists.size(), [&](std::size_t tile) {
    const auto& list = out.tile_lists[tile];
    const int x0 = static_cast<int>(tile % tx) * kTileSize;
    const int y0 = static_cast<int>(tile / tx) * kTileSize;
    const int x1 = std::min(x0 + kTileSize, camera.width);
    const int y1 = std::min(y0 + kTileSize, camera.height);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
        double* color = &out.color[p * 3];
        double* feat = &out.feature[p * d];
        double T = 1.0;
        std::uint32_t end = 0;
        for (std::uint32_t k = 0; k < list.size(); ++k) {
          const ProjectedGaussian& pg = *out.projections[list[k]];
          if (x < pg.min_x || x > pg.max_x || y < pg.min_y || y > pg.max_y) continue;
          double falloff;
          bool clamped;
          const double alpha = eval_alpha(pg, x + 0.5, y + 0.5, falloff, clamped);
          if (alpha < kAlphaFloor) continue;
          const double test_t = T * (1.0 - alpha);
          if (test_t < kMinTransmittance) break;
          const double w = alpha * T;
          const Gaussian& g = scene.gaussians[list[k]];
          for (int c = 0; c < 3; ++c) color[c] += w * g.color[c];
          for (int c = 0; c < d; ++c) feat[c] += w * g.feature[c];
          T = test_t;
          end = k + 1;
        }
        out.final_transmittance[p] = T;
        out.weight_sum[p] = 1.0 - T;
        out.contributor_end[p] = end;
      }
    }
  });
  (void)ty;
  return out;
}

namespace {

// Per-Gaussian partials w.r.t. screen-space quantities.
struct ScreenGrad {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();
  double opacity = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  Eigen::VectorXd feature;
};

const std::array<Eigen::Matrix3d, 4> rotation_partials(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Eigen::Matrix3d, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

}  // namespace

SplatGradients render_backward(const GaussianScene& scene, const Camera& camera,
                               const SplatOutput& output, std::span<const double> d_color,
                               std::span<const double> d_feature, bool geometry) {
  if (output.fingerprint != scene_fingerprint(scene, camera) ||
      output.projections.size() != scene.size())
    fail(ErrorCode::kStaleState, "render state does not match the scene/camera");
  const int d = scene.feature_dim;
  const std::size_t pixels = output.pixel_count();
  const bool use_color = !d_color.empty();
  const bool use_feature = !d_feature.empty();
  require(!use_color || d_color.size() == pixels * 3, ErrorCode::kShapeError,
          "color gradient size mismatch");
  require(!use_feature || d_feature.size() == pixels * static_cast<std::size_t>(d),
          ErrorCode::kShapeError, "feature gradient size mismatch");

  const int tx = tile_count_x(camera.width);
  const std::size_t tiles = output.tile_lists.size();
  std::vector<std::vector<ScreenGrad>> partial(tiles);

  parallel_for(tiles, [&](std::size_t tile) {
    const auto& list = output.tile_lists[tile];
    auto& acc = partial[tile];
    acc.assign(list.size(), ScreenGrad{});
    for (auto& a : acc) a.feature = Eigen::VectorXd::Zero(d);
    const int x0 = static_cast<int>(tile % tx) * kTileSize;
    const int y0 = static_cast<int>(tile / tx) * kTileSize;
    const int x1 = std::min(x0 + kTileSize, camera.width);
    const int y1 = std::min(y0 + kTileSize, camera.height);
    std::vector<double> rest_f(d);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
        const double* gc = use_color ? &d_color[p * 3] : nullptr;
        const double* gf = use_feature ? &d_feature[p * d] : nullptr;
        double T = output.final_transmittance[p];
        double rest_c[3] = {0, 0, 0};
        std::fill(rest_f.begin(), rest_f.end(), 0.0);
        const double px = x + 0.5, py = y + 0.5;
        for (std::uint32_t k = output.contributor_end[p]; k-- > 0;) {
          const int id = list[k];
          const ProjectedGaussian& pg = *output.projections[id];
          if (x < pg.min_x || x > pg.max_x || y < pg.min_y || y > pg.max_y) continue;
          double falloff;
          bool clamped;
          const double alpha = eval_alpha(pg, px, py, falloff, clamped);
          if (alpha < kAlphaFloor) continue;
          T /= (1.0 - alpha);  // transmittance in front of this contributor
          const Gaussian& g = scene.gaussians[id];
          ScreenGrad& sg = acc[k];
          const double w = alpha * T;
          double d_alpha = 0.0;
          if (gc) {
            for (int c = 0; c < 3; ++c) {
              sg.color[c] += w * gc[c];
              d_alpha += T * (g.color[c] - rest_c[c]) * gc[c];
              rest_c[c] = alpha * g.color[c] + (1.0 - alpha) * rest_c[c];
            }
          }
          if (gf) {
            for (int c = 0; c < d; ++c) {
              sg.feature[c] += w * gf[c];
              d_alpha += T * (g.feature[c] - rest_f[c]) * gf[c];
              rest_f[c] = alpha * g.feature[c] + (1.0 - alpha) * rest_f[c];
            }
          }
          if (clamped) continue;
          sg.opacity += d_alpha * falloff;
          // alpha = opacity * exp(power); dpower/dmean = conic * (pix - mean).
          const double d_power = d_alpha * alpha;
          const Eigen::Vector2d delta(px - pg.mean.x(), py - pg.mean.y());
          sg.mean += d_power * (pg.conic * delta);
          sg.conic += (-0.5 * d_power) * (delta * delta.transpose());
        }
      }
    }
  });

  const std::size_t n = scene.size();
  SplatGradients grads;
  grads.color = RowMatrix::Zero(n, 3);
  grads.feature = RowMatrix::Zero(n, d);
  grads.alpha_logit.assign(n, 0.0);
  std::vector<ScreenGrad> screen(n);
  for (auto& s : screen) s.feature = Eigen::VectorXd::Zero(d);
  for (std::size_t tile = 0; tile < tiles; ++tile) {
    const auto& list = output.tile_lists[tile];
    for (std::size_t k = 0; k < list.size(); ++k) {
      ScreenGrad& s = screen[list[k]];
      const ScreenGrad& a = partial[tile][k];
      s.mean += a.mean;
      s.conic += a.conic;
      s.opacity += a.opacity;
      s.color += a.color;
      s.feature += a.feature;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    grads.color.row(i) = screen[i].color.transpose();
    grads.feature.row(i) = screen[i].feature.transpose();
    const double op = scene.gaussians[i].opacity();
    grads.alpha_logit[i] = screen[i].opacity * op * (1.0 - op);
  }
  if (!geometry) return grads;

  grads.has_geometry = true;
  grads.position = RowMatrix::Zero(n, 3);
  grads.rotation = RowMatrix::Zero(n, 4);
  grads.scale = RowMatrix::Zero(n, 3);
  const Eigen::Matrix3d& W = camera.rotation;
  for (std::size_t i = 0; i < n; ++i) {
    if (!output.projections[i]) continue;
    const ProjectedGaussian& pg = *output.projections[i];
    const Gaussian& g = scene.gaussians[i];
    const ScreenGrad& s = screen[i];

    // conic = cov^-1  =>  dL/dcov = -conic^T G conic^T.
    const Eigen::Matrix2d g_cov = -pg.conic.transpose() * s.conic * pg.conic.transpose();
    const Eigen::Matrix<double, 2, 3> tw = pg.jacobian * W;
    const Eigen::Matrix3d g_sigma = tw.transpose() * g_cov * tw;
    const Eigen::Matrix<double, 2, 3> g_tw = (g_cov + g_cov.transpose()) * tw * pg.cov3d;
    const Eigen::Matrix<double, 2, 3> g_j = g_tw * W.transpose();

    const Eigen::Vector3d& t = pg.camera_point;
    const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    Eigen::Vector3d g_t;
    g_t.x() = s.mean.x() * camera.fx * iz - g_j(0, 2) * camera.fx * iz2;
    g_t.y() = s.mean.y() * camera.fy * iz - g_j(1, 2) * camera.fy * iz2;
    g_t.z() = -s.mean.x() * camera.fx * t.x() * iz2 - s.mean.y() * camera.fy * t.y() * iz2 -
              g_j(0, 0) * camera.fx * iz2 + g_j(0, 2) * 2.0 * camera.fx * t.x() * iz3 -
              g_j(1, 1) * camera.fy * iz2 + g_j(1, 2) * 2.0 * camera.fy * t.y() * iz3;
    grads.position.row(i) = (W.transpose() * g_t).transpose();

    // Sigma = M M^T with M = R S.
    const Eigen::Vector4d q_hat = g.rotation.normalized();
    const Eigen::Matrix3d R = rotation_matrix(g.rotation);
    const Eigen::Matrix3d M = R * g.scale.asDiagonal();
    const Eigen::Matrix3d g_m = (g_sigma + g_sigma.transpose()) * M;
    for (int k = 0; k < 3; ++k) grads.scale(i, k) = g_m.col(k).dot(R.col(k));
    const Eigen::Matrix3d g_r = g_m * g.scale.asDiagonal();
    const auto partials = rotation_partials(q_hat);
    Eigen::Vector4d g_q_hat;
    for (int c = 0; c < 4; ++c) g_q_hat[c] = (g_r.array() * partials[c].array()).sum();
    const Eigen::Vector4d g_q =
        (g_q_hat - q_hat * q_hat.dot(g_q_hat)) / g.rotation.norm();
    grads.rotation.row(i) = g_q.transpose();
  }
  return grads;
}

void save_scene(const std::filesystem::path& json_path, const GaussianScene& scene,
                const nlohmann::json& extra) {
  const int d = scene.feature_dim;
  const int stride = 3 + 4 + 3 + 1 + 3 + d;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(scene.size() * stride * 4);
  for (const Gaussian& g : scene.gaussians) {
    require(g.feature.size() == d, ErrorCode::kShapeError, "Gaussian feature size != feature_dim");
    for (int i = 0; i < 3; ++i) put_f32(bytes, static_cast<float>(g.position[i]));
    for (int i = 0; i < 4; ++i) put_f32(bytes, static_cast<float>(g.rotation[i]));
    for (int i = 0; i < 3; ++i) put_f32(bytes, static_cast<float>(g.scale[i]));
    put_f32(bytes, static_cast<float>(g.alpha_logit));
    for (int i = 0; i < 3; ++i) put_f32(bytes, static_cast<float>(g.color[i]));
    for (int i = 0; i < d; ++i) put_f32(bytes, static_cast<float>(g.feature[i]));
  }
  std::filesystem::path bin = json_path;
  bin.replace_extension(".bin");
  nlohmann::json header = extra;
  header["format"] = "semsplat-scene";
  header["version"] = 1;
  header["count"] = scene.size();
  header["color_dim"] = 3;
  header["feature_dim"] = d;
  header["layout"] = "p3 q4 s3 alpha_logit1 c3 f" + std::to_string(d);
  header["records"] = bin.filename().string();
  write_bytes(bin, bytes);
  write_json(json_path, header);
}

GaussianScene load_scene(const std::filesystem::path& json_path) {
  const nlohmann::json header = read_json(json_path);
  GaussianScene scene;
  std::size_t count = 0;
  std::string records;
  try {
    require(header.at("format").get<std::string>() == "semsplat-scene",
            ErrorCode::kSchemaViolation, "not a scene checkpoint: " + json_path.string());
    require(header.at("color_dim").get<int>() == 3, ErrorCode::kSchemaViolation,
            "only 3-channel color is supported");
    scene.feature_dim = header.at("feature_dim").get<int>();
    count = header.at("count").get<std::size_t>();
    records = header.at("records").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchemaViolation, json_path.string() + ": " + e.what());
  }
  require(scene.feature_dim > 0, ErrorCode::kSchemaViolation, "feature_dim must be positive");
  const std::vector<std::uint8_t> bytes = read_bytes(json_path.parent_path() / records);
  const std::size_t stride = 14 + static_cast<std::size_t>(scene.feature_dim);
  require(bytes.size() == count * stride * 4, ErrorCode::kSchemaViolation,
          "scene record file size does not match header");
  std::span<const std::uint8_t> in(bytes);
  std::size_t off = 0;
  auto next = [&] {
    const double v = get_f32(in, off);
    off += 4;
    return v;
  };
  scene.gaussians.resize(count);
  for (Gaussian& g : scene.gaussians) {
    for (int i = 0; i < 3; ++i) g.position[i] = next();
    for (int i = 0; i < 4; ++i) g.rotation[i] = next();
    for (int i = 0; i < 3; ++i) g.scale[i] = next();
    g.alpha_logit = next();
    for (int i = 0; i < 3; ++i) g.color[i] = next();
    g.feature.resize(scene.feature_dim);
    for (int i = 0; i < scene.feature_dim; ++i) g.feature[i] = next();
    require(finite_gaussian(g), ErrorCode::kSchemaViolation, "non-finite scene record");
  }
  return scene;
}

Image8 color_to_image(const SplatOutput& output) {
  Image8 image;
  image.width = output.width;
  image.height = output.height;
  image.channels = 3;
  image.pixels.resize(output.color.size());
  for (std::size_t i = 0; i < output.color.size(); ++i)
    image.pixels[i] =
        static_cast<std::uint8_t>(std::lround(std::clamp(output.color[i], 0.0, 1.0) * 255.0));
  return image;
}

void write_feature_map(const std::filesystem::path& path, const SplatOutput& output) {
  // "SSFM", version, height, width, dim, then float32 pixel-major values.
  std::vector<std::uint8_t> bytes;
  put_u32(bytes, 0x4d465353u);
  put_u32(bytes, 1);
  put_u32(bytes, static_cast<std::uint32_t>(output.height));
  put_u32(bytes, static_cast<std::uint32_t>(output.width));
  put_u32(bytes, static_cast<std::uint32_t>(output.feature_dim));
  for (double v : output.feature) put_f32(bytes, static_cast<float>(v));
  write_bytes(path, bytes);
}

}  // namespace semsplat
