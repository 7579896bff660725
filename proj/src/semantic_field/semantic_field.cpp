#include "semsplat/semantic_field.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "semsplat/adam.hpp"
#include "semsplat/error.hpp"
#include "semsplat/io.hpp"
#include "semsplat/rng.hpp"

namespace semsplat {

namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;

ConstMap feature_matrix(std::span<const double> features, int dim, std::size_t pixels) {
  require(features.size() == pixels * static_cast<std::size_t>(dim), ErrorCode::kShapeError,
          "feature map size does not match width*height*d_f");
  return ConstMap(features.data(), dim, static_cast<Eigen::Index>(pixels));
}

}  // namespace

Decoder Decoder::zeros(int input_dim, int hidden_dim, int classes) {
  Decoder d;
  d.w1 = Eigen::MatrixXd::Zero(hidden_dim, input_dim);
  d.b1 = Eigen::VectorXd::Zero(hidden_dim);
  d.w2 = Eigen::MatrixXd::Zero(classes, hidden_dim);
  d.b2 = Eigen::VectorXd::Zero(classes);
  return d;
}

Decoder Decoder::random(int input_dim, int hidden_dim, int classes, std::uint64_t seed) {
  Decoder d = zeros(input_dim, hidden_dim, classes);
  Rng rng(derive_seed(seed, 0xdec0));
  const double a1 = std::sqrt(1.0 / input_dim), a2 = std::sqrt(1.0 / hidden_dim);
  for (Eigen::Index i = 0; i < d.w1.size(); ++i) d.w1.data()[i] = rng.uniform(-a1, a1);
  for (Eigen::Index i = 0; i < d.b1.size(); ++i) d.b1[i] = rng.uniform(-a1, a1);
  for (Eigen::Index i = 0; i < d.w2.size(); ++i) d.w2.data()[i] = rng.uniform(-a2, a2);
  for (Eigen::Index i = 0; i < d.b2.size(); ++i) d.b2[i] = rng.uniform(-a2, a2);
  return d;
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd probs = logits;
  const Eigen::RowVectorXd top = probs.colwise().maxCoeff();
  probs.rowwise() -= top;
  probs = probs.array().exp().matrix();
  const Eigen::RowVectorXd inv = probs.colwise().sum().cwiseInverse();
  probs *= inv.asDiagonal();
  return probs;
}

DecodedMap decode(std::span<const double> features, int width, int height, const Decoder& decoder) {
  require(width > 0 && height > 0, ErrorCode::kShapeError, "empty feature map");
  DecodedMap out;
  out.width = width;
  out.height = height;
  const ConstMap x = feature_matrix(features, decoder.input_dim(), out.pixel_count());
  out.hidden = ((decoder.w1 * x).colwise() + decoder.b1).cwiseMax(0.0);
  out.logits = (decoder.w2 * out.hidden).colwise() + decoder.b2;
  out.probs = softmax_columns(out.logits);
  return out;
}

double ce_loss(const DecodedMap& decoded, const IndexMap& target, Eigen::MatrixXd* d_logits) {
  require(target.width == decoded.width && target.height == decoded.height,
          ErrorCode::kShapeError, "index map and decoded map differ in size");
  const int n = decoded.classes();
  std::size_t supervised = 0;
  for (std::int32_t t : target.grid) {
    if (t == IndexMap::kUnassigned) continue;
    require(t >= 0 && t < n, ErrorCode::kShapeError,
            "index map entry " + std::to_string(t) + " outside the decoder's " +
                std::to_string(n) + " classes");
    ++supervised;
  }
  if (supervised == 0) fail(ErrorCode::kEmptySupervision, "no assigned pixel in the index map");
  if (d_logits) *d_logits = Eigen::MatrixXd::Zero(n, decoded.logits.cols());
  const double inv = 1.0 / static_cast<double>(supervised);
  double total = 0.0;
  for (std::size_t p = 0; p < target.grid.size(); ++p) {
    const std::int32_t t = target.grid[p];
    if (t == IndexMap::kUnassigned) continue;
    const double prob = decoded.probs(t, static_cast<Eigen::Index>(p));
    if (prob > 1e-200) {
      total -= std::log(prob);
    } else {
      const auto col = decoded.logits.col(static_cast<Eigen::Index>(p));
      const double top = col.maxCoeff();
      total += top + std::log((col.array() - top).exp().sum()) - col[t];
    }
    if (d_logits) {
      auto g = d_logits->col(static_cast<Eigen::Index>(p));
      g = decoded.probs.col(static_cast<Eigen::Index>(p)) * inv;
      g[t] -= inv;
    }
  }
  return total * inv;
}

DecoderGrad decoder_backward(std::span<const double> features, const DecodedMap& decoded,
                             const Eigen::MatrixXd& d_logits, const Decoder& decoder,
                             std::vector<double>* d_features) {
  const ConstMap x = feature_matrix(features, decoder.input_dim(), decoded.pixel_count());
  DecoderGrad g;
  g.w2 = d_logits * decoded.hidden.transpose();
  g.b2 = d_logits.rowwise().sum();
  const Eigen::MatrixXd d_hidden =
      ((decoder.w2.transpose() * d_logits).array() * (decoded.hidden.array() > 0.0).cast<double>())
          .matrix();
  g.w1 = d_hidden * x.transpose();
  g.b1 = d_hidden.rowwise().sum();
  if (d_features) {
    d_features->resize(features.size());
    Eigen::Map<Eigen::MatrixXd>(d_features->data(), decoder.input_dim(), x.cols()) =
        decoder.w1.transpose() * d_hidden;
  }
  return g;
}

std::vector<int> argmax_indices(const DecodedMap& decoded) {
  std::vector<int> out(decoded.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto col = decoded.probs.col(static_cast<Eigen::Index>(p));
    int best = 0;
    for (int j = 1; j < col.size(); ++j)
      if (col[j] > col[best]) best = j;
    out[p] = best;
  }
  return out;
}

RowMatrix refine_pixel_features(const DecodedMap& decoded, const Codebook& codebook) {
  require(decoded.classes() == codebook.size(), ErrorCode::kShapeError,
          "decoder width does not match the codebook");
  const std::vector<int> idx = argmax_indices(decoded);
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), codebook.dim());
  for (std::size_t p = 0; p < idx.size(); ++p)
    out.row(static_cast<Eigen::Index>(p)) = codebook.prototypes.row(idx[p]);
  return out;
}

void FieldTrainConfig::validate() const {
  require(iterations >= 1, ErrorCode::kInvalidConfig, "iterations must be >= 1");
  require(learning_rate > 0.0, ErrorCode::kInvalidConfig, "learning_rate must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorCode::kInvalidConfig,
          "adam betas must lie in [0, 1)");
  require(color_loss_weight >= 0.0, ErrorCode::kInvalidConfig,
          "color_loss_weight must be non-negative");
  require(hidden_dim >= 1, ErrorCode::kInvalidConfig, "hidden_dim must be >= 1");
  require(feature_init_std >= 0.0, ErrorCode::kInvalidConfig,
          "feature_init_std must be non-negative");
}

SemanticField initialize_field(const GaussianScene& geometry, int feature_dim, int classes,
                               const FieldTrainConfig& config) {
  config.validate();
  require(feature_dim >= 1 && classes >= 1, ErrorCode::kInvalidConfig,
          "field needs positive feature_dim and class count");
  SemanticField field;
  field.scene = geometry;
  field.scene.feature_dim = feature_dim;
  Rng rng(derive_seed(config.seed, 0xfea7));
  for (Gaussian& g : field.scene.gaussians) {
    g.feature.resize(feature_dim);
    for (int c = 0; c < feature_dim; ++c) g.feature[c] = config.feature_init_std * rng.normal();
  }
  field.decoder = Decoder::random(feature_dim, config.hidden_dim, classes, config.seed);
  return field;
}

namespace {

// Flat views over per-Gaussian parameters so a single Adam instance can own
// each parameter group.
template <typename Get>
std::vector<double> gather(const GaussianScene& scene, int width, Get get) {
  std::vector<double> out;
  out.reserve(scene.size() * width);
  for (const Gaussian& g : scene.gaussians)
    for (int c = 0; c < width; ++c) out.push_back(get(g, c));
  return out;
}

template <typename Set>
void scatter(GaussianScene& scene, int width, const std::vector<double>& flat, Set set) {
  std::size_t k = 0;
  for (Gaussian& g : scene.gaussians)
    for (int c = 0; c < width; ++c) set(g, c, flat[k++]);
}

std::vector<double> flatten(const RowMatrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

void adam_matrix(Adam& adam, Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad) {
  adam.step({param.data(), static_cast<std::size_t>(param.size())},
            {grad.data(), static_cast<std::size_t>(grad.size())});
}

}  // namespace

FieldTrainResult train_field(const SemanticField& initial, std::span<const FieldView> views,
                             const FieldTrainConfig& config) {
  config.validate();
  if (views.empty()) fail(ErrorCode::kEmptyDataset, "train_field needs at least one view");
  const bool joint = config.mode == FieldMode::kJoint;
  const int d = initial.scene.feature_dim;
  require(initial.decoder.input_dim() == d, ErrorCode::kShapeError,
          "decoder input width does not match the field dimension");
  for (const FieldView& v : views) {
    require(v.target.width == v.camera.width && v.target.height == v.camera.height,
            ErrorCode::kShapeError, "index map size differs from its camera");
    if (joint)
      require(v.rgb.size() == static_cast<std::size_t>(v.camera.width) * v.camera.height * 3,
              ErrorCode::kShapeError, "JOINT mode needs an RGB target for every view");
  }

  FieldTrainResult result;
  result.field = initial;
  GaussianScene& scene = result.field.scene;
  Decoder& decoder = result.field.decoder;
  const std::size_t n = scene.size();
  const AdamConfig ac{config.learning_rate, config.beta1, config.beta2, 1e-8};

  Adam feature_adam(n * d, ac);
  std::vector<double> features = gather(scene, d, [](const Gaussian& g, int c) { return g.feature[c]; });
  Adam w1_adam(decoder.w1.size(), ac), b1_adam(decoder.b1.size(), ac);
  Adam w2_adam(decoder.w2.size(), ac), b2_adam(decoder.b2.size(), ac);
  Adam color_adam(n * 3, ac), logit_adam(n, ac), pos_adam(n * 3, ac), rot_adam(n * 4, ac),
      scale_adam(n * 3, ac);

  Rng rng(derive_seed(config.seed, 0x7a1e));
  result.loss_trace.reserve(config.iterations);
  std::vector<double> d_features;
  std::vector<double> d_color;
  for (int it = 0; it < config.iterations; ++it) {
    const FieldView& view = views[rng.index(views.size())];
    const SplatOutput out = render(scene, view.camera);
    const DecodedMap decoded = decode(out.feature, out.width, out.height, decoder);
    Eigen::MatrixXd d_logits;
    double loss = ce_loss(decoded, view.target, &d_logits);
    const DecoderGrad dg = decoder_backward(out.feature, decoded, d_logits, decoder, &d_features);

    if (joint) {
      const double scale = config.color_loss_weight / static_cast<double>(out.color.size());
      d_color.resize(out.color.size());
      double l1 = 0.0;
      for (std::size_t i = 0; i < out.color.size(); ++i) {
        const double r = out.color[i] - view.rgb[i];
        l1 += std::abs(r);
        d_color[i] = r > 0.0 ? scale : (r < 0.0 ? -scale : 0.0);
      }
      loss += l1 * scale;
    }
    if (!std::isfinite(loss))
      fail(ErrorCode::kNumericalFailure, "non-finite field loss at iteration " + std::to_string(it));
    result.loss_trace.push_back(loss);

    const SplatGradients sg = render_backward(scene, view.camera, out,
                                              joint ? std::span<const double>(d_color)
                                                    : std::span<const double>(),
                                              d_features, joint);
    feature_adam.step(features, flatten(sg.feature));
    scatter(scene, d, features, [](Gaussian& g, int c, double v) { g.feature[c] = v; });
    if (!config.freeze_decoder) {
      adam_matrix(w1_adam, decoder.w1, dg.w1);
      adam_matrix(b1_adam, decoder.b1, dg.b1);
      adam_matrix(w2_adam, decoder.w2, dg.w2);
      adam_matrix(b2_adam, decoder.b2, dg.b2);
    }
    if (joint) {
      auto step_group = [&](Adam& adam, int width, const RowMatrix& grad, auto get, auto set) {
        std::vector<double> values = gather(scene, width, get);
        adam.step(values, flatten(grad));
        scatter(scene, width, values, set);
      };
      step_group(color_adam, 3, sg.color, [](const Gaussian& g, int c) { return g.color[c]; },
                 [](Gaussian& g, int c, double v) { g.color[c] = v; });
      step_group(pos_adam, 3, sg.position,
                 [](const Gaussian& g, int c) { return g.position[c]; },
                 [](Gaussian& g, int c, double v) { g.position[c] = v; });
      step_group(rot_adam, 4, sg.rotation,
                 [](const Gaussian& g, int c) { return g.rotation[c]; },
                 [](Gaussian& g, int c, double v) { g.rotation[c] = v; });
      step_group(scale_adam, 3, sg.scale, [](const Gaussian& g, int c) { return g.scale[c]; },
                 [](Gaussian& g, int c, double v) { g.scale[c] = std::max(v, 1e-6); });
      std::vector<double> logits = gather(scene, 1, [](const Gaussian& g, int) { return g.alpha_logit; });
      logit_adam.step(logits, sg.alpha_logit);
      scatter(scene, 1, logits, [](Gaussian& g, int, double v) { g.alpha_logit = v; });
      for (Gaussian& g : scene.gaussians) g.rotation.normalize();
    }
  }
  return result;
}

namespace {

void put_matrix(std::vector<std::uint8_t>& bytes, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    put_u32(bytes, static_cast<std::uint32_t>(bits & 0xffffffffu));
    put_u32(bytes, static_cast<std::uint32_t>(bits >> 32));
  }
}

void get_matrix(std::span<const std::uint8_t> in, std::size_t& off, Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint64_t lo = get_u32(in, off), hi = get_u32(in, off + 4);
    m.data()[i] = std::bit_cast<double>(lo | (hi << 32));
    off += 8;
  }
}

}  // namespace

void save_field(const std::filesystem::path& dir, const SemanticField& field,
                const nlohmann::json& metadata) {
  std::filesystem::create_directories(dir);
  save_scene(dir / "scene.json", field.scene);
  const Decoder& d = field.decoder;
  std::vector<std::uint8_t> bytes;
  put_matrix(bytes, d.w1);
  put_matrix(bytes, d.b1);
  put_matrix(bytes, d.w2);
  put_matrix(bytes, d.b2);
  write_bytes(dir / "decoder.bin", bytes);
  nlohmann::json header = metadata;
  header["format"] = "semsplat-decoder";
  header["version"] = 1;
  header["input_dim"] = d.input_dim();
  header["hidden_dim"] = d.hidden_dim();
  header["classes"] = d.classes();
  header["layout"] = "w1 b1 w2 b2, float64 LE, column-major";
  header["records"] = "decoder.bin";
  write_json(dir / "decoder.json", header);
}

SemanticField load_field(const std::filesystem::path& dir) {
  SemanticField field;
  field.scene = load_scene(dir / "scene.json");
  const nlohmann::json header = read_json(dir / "decoder.json");
  int in = 0, hidden = 0, classes = 0;
  try {
    require(header.at("format").get<std::string>() == "semsplat-decoder",
            ErrorCode::kSchemaViolation, "not a decoder checkpoint");
    in = header.at("input_dim").get<int>();
    hidden = header.at("hidden_dim").get<int>();
    classes = header.at("classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("decoder.json: ") + e.what());
  }
  require(in == field.scene.feature_dim && hidden > 0 && classes > 0, ErrorCode::kSchemaViolation,
          "decoder dimensions do not match the scene");
  field.decoder = Decoder::zeros(in, hidden, classes);
  const std::vector<std::uint8_t> bytes = read_bytes(dir / "decoder.bin");
  const std::size_t expected =
      8 * static_cast<std::size_t>(hidden * in + hidden + classes * hidden + classes);
  require(bytes.size() == expected, ErrorCode::kSchemaViolation, "decoder.bin has the wrong size");
  std::size_t off = 0;
  Eigen::MatrixXd b1(hidden, 1), b2(classes, 1);
  get_matrix(bytes, off, field.decoder.w1);
  get_matrix(bytes, off, b1);
  get_matrix(bytes, off, field.decoder.w2);
  get_matrix(bytes, off, b2);
  field.decoder.b1 = b1;
  field.decoder.b2 = b2;
  return field;
}

}  // namespace semsplat
