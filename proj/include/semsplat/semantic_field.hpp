#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "semsplat/ccl.hpp"
#include "semsplat/feature_store.hpp"
#include "semsplat/splat.hpp"

namespace semsplat {

// d_f -> hidden (ReLU) -> N logits.
struct Decoder {
  Eigen::MatrixXd w1;  // hidden x d_f
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // N x hidden
  Eigen::VectorXd b2;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int classes() const { return static_cast<int>(w2.rows()); }

  static Decoder zeros(int input_dim, int hidden_dim, int classes);
  // Uniform in +-sqrt(1/fan_in) for weights and biases.
  static Decoder random(int input_dim, int hidden_dim, int classes, std::uint64_t seed);
};

struct DecoderGrad {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

// Column p of each matrix is pixel p (row-major pixel order).
struct DecodedMap {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd hidden;  // post-ReLU activations
  Eigen::MatrixXd logits;
  Eigen::MatrixXd probs;   // softmax over rows

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  int classes() const { return static_cast<int>(logits.rows()); }
};

// `features` is pixel-major, width*height*d_f values. Throws ShapeError.
DecodedMap decode(std::span<const double> features, int width, int height, const Decoder& decoder);

// Column-wise softmax with max subtraction.
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits);

// Mean over assigned pixels of -log softmax(logits)[target]. When d_logits is
// given it receives the gradient (zero columns for unassigned pixels).
// Throws EmptySupervision when no pixel is assigned, ShapeError on mismatch.
double ce_loss(const DecodedMap& decoded, const IndexMap& target,
               Eigen::MatrixXd* d_logits = nullptr);

// Backprop through the decoder. d_features (optional) receives the
// pixel-major gradient with respect to the input feature map.
DecoderGrad decoder_backward(std::span<const double> features, const DecodedMap& decoded,
                             const Eigen::MatrixXd& d_logits, const Decoder& decoder,
                             std::vector<double>* d_features);

// Per pixel argmax of the distribution; ties go to the lowest index.
std::vector<int> argmax_indices(const DecodedMap& decoded);

// F~(v) = T_{argmax}; pixel-major rows, width*height x d.
RowMatrix refine_pixel_features(const DecodedMap& decoded, const Codebook& codebook);

enum class FieldMode { kSemanticOnly, kJoint };

struct FieldTrainConfig {
  int iterations = 30000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  FieldMode mode = FieldMode::kSemanticOnly;
  double color_loss_weight = 1.0;  // JOINT only
  bool freeze_decoder = false;
  int hidden_dim = 64;
  double feature_init_std = 0.1;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig
};

struct SemanticField {
  GaussianScene scene;
  Decoder decoder;
};

struct FieldView {
  Camera camera;
  IndexMap target;
  std::vector<double> rgb;  // width*height*3 in [0,1]; required in JOINT mode
};

struct FieldTrainResult {
  SemanticField field;
  std::vector<double> loss_trace;  // one entry per iteration
};

// Copies geometry/color/opacity, draws seeded N(0, std^2) features and a
// random decoder with `classes` outputs.
SemanticField initialize_field(const GaussianScene& geometry, int feature_dim, int classes,
                               const FieldTrainConfig& config);

// One seeded view per iteration; Adam on features and decoder (plus color,
// opacity and geometry in JOINT mode). Throws NumericalFailure with the
// iteration index on a non-finite loss.
FieldTrainResult train_field(const SemanticField& initial, std::span<const FieldView> views,
                             const FieldTrainConfig& config);

// Field checkpoint: scene.json/.bin plus decoder.json/.bin (float64 LE).
void save_field(const std::filesystem::path& dir, const SemanticField& field,
                const nlohmann::json& metadata = nlohmann::json::object());
SemanticField load_field(const std::filesystem::path& dir);

}  // namespace semsplat
