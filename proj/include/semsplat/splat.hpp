#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "semsplat/feature_store.hpp"
#include "semsplat/io.hpp"
#include "semsplat/linalg.hpp"

namespace semsplat {

inline constexpr double kCovarianceDilation = 0.3;  // pixels^2 added to the 2D covariance
inline constexpr double kAlphaFloor = 1.0 / 255.0;
inline constexpr double kAlphaCap = 0.99;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr int kTileSize = 16;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Gaussian {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};  // quaternion (w, x, y, z)
  Eigen::Vector3d scale{0.1, 0.1, 0.1};
  double alpha_logit = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  Eigen::VectorXd feature;

  double opacity() const { return sigmoid(alpha_logit); }
};

struct GaussianScene {
  int feature_dim = 8;
  std::vector<Gaussian> gaussians;

  std::size_t size() const { return gaussians.size(); }
};

// Pinhole camera; pixel (x, y) has its center at (x + 0.5, y + 0.5).
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double near_plane = 0.01;

  static Camera from_frame(const Frame& frame);
};

struct ProjectedGaussian {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;    // includes the dilation
  Eigen::Matrix2d conic;  // cov^-1
  double depth = 0.0;
  double opacity = 0.0;
  Eigen::Vector3d camera_point;
  Eigen::Matrix<double, 2, 3> jacobian;
  Eigen::Matrix3d cov3d;
  // Inclusive pixel range that can receive alpha >= kAlphaFloor.
  int min_x = 0;
  int max_x = -1;
  int min_y = 0;
  int max_y = -1;
};

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& quaternion);
Eigen::Matrix3d covariance3d(const Gaussian& g);

// EWA projection. std::nullopt means culled: behind the near plane, too
// transparent to ever reach kAlphaFloor, or entirely off-image. Throws
// NumericalFailure on non-finite parameters.
std::optional<ProjectedGaussian> project(const Gaussian& g, const Camera& camera);

struct SplatOutput {
  int width = 0;
  int height = 0;
  int feature_dim = 0;
  std::vector<double> color;       // H*W*3, pixel-major
  std::vector<double> feature;     // H*W*d_f, pixel-major
  std::vector<double> weight_sum;  // H*W, equals 1 - final transmittance

  // State kept for render_backward.
  std::vector<double> final_transmittance;
  std::vector<std::uint32_t> contributor_end;  // per pixel, into its tile list
  std::vector<std::optional<ProjectedGaussian>> projections;
  std::vector<std::vector<int>> tile_lists;  // front-to-back Gaussian ids per tile
  std::uint64_t fingerprint = 0;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Front-to-back alpha compositing of color and feature channels. Ordering is
// by (depth, input index). alpha = min(0.99, opacity * falloff); alphas below
// 1/255 are skipped; a contributor that would push transmittance below 1e-4
// ends the pixel.
SplatOutput render(const GaussianScene& scene, const Camera& camera);

struct SplatGradients {
  RowMatrix color;                  // n x 3
  RowMatrix feature;                // n x d_f
  std::vector<double> alpha_logit;  // n
  bool has_geometry = false;
  RowMatrix position;  // n x 3
  RowMatrix rotation;  // n x 4, w.r.t. the raw (unnormalized) quaternion
  RowMatrix scale;     // n x 3
};

// Reverse-mode gradients of the blending equations for upstream gradients on
// color and/or feature (either span may be empty). `output` must come from
// render(scene, camera) on the same parameters, else StaleState.
SplatGradients render_backward(const GaussianScene& scene, const Camera& camera,
                               const SplatOutput& output, std::span<const double> d_color,
                               std::span<const double> d_feature, bool geometry = false);

std::uint64_t scene_fingerprint(const GaussianScene& scene, const Camera& camera);

// Checkpoint: <stem>.json header (count, color_dim, feature_dim, records) and
// <stem>.bin float32 LE records of p(3) q(4) s(3) alpha_logit c(3) f(d_f).
void save_scene(const std::filesystem::path& json_path, const GaussianScene& scene,
                const nlohmann::json& extra = nlohmann::json::object());
GaussianScene load_scene(const std::filesystem::path& json_path);

// Helpers for inspection output.
Image8 color_to_image(const SplatOutput& output);
void write_feature_map(const std::filesystem::path& path, const SplatOutput& output);

}  // namespace semsplat
