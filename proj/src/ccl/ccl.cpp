#include "semsplat/ccl.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "semsplat/error.hpp"
#include "semsplat/io.hpp"
#include "semsplat/rng.hpp"

namespace semsplat {

void CclConfig::validate() const {
  require(margin > 0.0 && margin < 1.0, ErrorCode::kInvalidConfig, "ccl margin must lie in (0, 1)");
  require(lambda_pull >= 0.0 && lambda_push >= 0.0, ErrorCode::kInvalidConfig,
          "ccl loss weights must be non-negative");
  require(n_prototypes >= 2, ErrorCode::kInvalidConfig, "codebook needs at least two prototypes");
  require(steps >= 0 && batch_size >= 1, ErrorCode::kInvalidConfig,
          "ccl steps must be >= 0 and batch_size >= 1");
  require(learning_rate > 0.0, ErrorCode::kInvalidConfig, "ccl learning rate must be positive");
}

namespace {

std::vector<double> row_norms(const RowMatrix& m) {
  std::vector<double> norms(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) norms[r] = m.row(r).norm();
  return norms;
}

PrototypeMatch scan(std::span<const double> feature, const Codebook& codebook,
                    std::span<const double> norms) {
  require(static_cast<int>(feature.size()) == codebook.dim(), ErrorCode::kShapeError,
          "feature dimension does not match codebook");
  double fnorm2 = 0.0;
  for (double v : feature) fnorm2 += v * v;
  if (!(fnorm2 > 0.0) || !std::isfinite(fnorm2)) {
    fail(ErrorCode::kDegenerateFeature, "zero or non-finite feature vector");
  }
  const double fnorm = std::sqrt(fnorm2);
  PrototypeMatch best{0, -std::numeric_limits<double>::infinity()};
  const int d = codebook.dim();
  for (int j = 0; j < codebook.size(); ++j) {
    const double* t = codebook.prototypes.data() + static_cast<std::size_t>(j) * d;
    double dot = 0.0;
    for (int k = 0; k < d; ++k) dot += feature[k] * t[k];
    const double denom = fnorm * norms[j];
    const double c = denom > 0.0 ? dot / denom : 0.0;
    if (c > best.similarity) best = {j, c};
  }
  return best;
}

double cosine(const double* a, const double* b, int d, double na, double nb) {
  double dot = 0.0;
  for (int k = 0; k < d; ++k) dot += a[k] * b[k];
  return dot / (na * nb);
}

// out_a += w * d cos(a, b) / d a
void add_cos_grad(double* out_a, const double* a, const double* b, int d, double na, double nb,
                  double c, double w) {
  const double s1 = w / (na * nb);
  const double s2 = w * c / (na * na);
  for (int k = 0; k < d; ++k) out_a[k] += s1 * b[k] - s2 * a[k];
}

}  // namespace

PrototypeMatch nearest_prototype(std::span<const double> feature, const Codebook& codebook) {
  const auto norms = row_norms(codebook.prototypes);
  return scan(feature, codebook, norms);
}

void assign_prototypes(LabeledFeatureBatch& batch, const Codebook& codebook) {
  const auto norms = row_norms(codebook.prototypes);
  const auto d = static_cast<std::size_t>(batch.features.cols());
  batch.assignments.resize(static_cast<std::size_t>(batch.features.rows()));
  for (Eigen::Index i = 0; i < batch.features.rows(); ++i) {
    std::span<const double> f(batch.features.data() + i * d, d);
    batch.assignments[i] = scan(f, codebook, norms).index;
  }
}

LossTerms evaluate_losses(const LabeledFeatureBatch& batch, const Codebook& codebook,
                          const CclConfig& config, RowMatrix* gradient) {
  const auto rows = static_cast<std::size_t>(batch.features.rows());
  require(rows >= 1, ErrorCode::kEmptyDataset, "empty feature batch");
  require(batch.labels.size() == rows && batch.assignments.size() == rows, ErrorCode::kShapeError,
          "batch labels/assignments do not match feature rows");
  require(batch.features.cols() == codebook.dim(), ErrorCode::kShapeError,
          "batch feature dimension does not match codebook");
  const int d = codebook.dim();
  const auto norms = row_norms(codebook.prototypes);
  if (gradient) gradient->setZero(codebook.size(), d);

  LossTerms terms;

  // Matching term over every row, including unmatched (-1) ones.
  for (std::size_t i = 0; i < rows; ++i) {
    const int j = batch.assignments[i];
    require(j >= 0 && j < codebook.size(), ErrorCode::kShapeError, "assignment out of range");
    const double* f = batch.features.data() + i * d;
    const double* t = codebook.prototypes.data() + static_cast<std::size_t>(j) * d;
    const double fn = batch.features.row(static_cast<Eigen::Index>(i)).norm();
    const double c = cosine(f, t, d, fn, norms[j]);
    terms.max += 1.0 - c;
    if (gradient) {
      add_cos_grad(gradient->data() + static_cast<std::size_t>(j) * d, t, f, d, norms[j], fn, c,
                   -1.0 / static_cast<double>(rows));
    }
  }
  terms.max /= static_cast<double>(rows);

  // Pair terms depend on rows only through (label, prototype), so count
  // pairs per prototype pair instead of enumerating all row pairs.
  std::map<int, int> label_ids;
  std::map<int, int> proto_ids;
  for (std::size_t i = 0; i < rows; ++i) {
    if (batch.labels[i] == kUnmatched) continue;
    label_ids.emplace(batch.labels[i], 0);
    proto_ids.emplace(batch.assignments[i], 0);
  }
  {
    int n = 0;
    for (auto& [label, id] : label_ids) id = n++;
    n = 0;
    for (auto& [proto, id] : proto_ids) id = n++;
  }
  const std::size_t n_labels = label_ids.size();
  const std::size_t n_protos = proto_ids.size();
  std::vector<int> protos;
  for (const auto& [proto, id] : proto_ids) protos.push_back(proto);

  // hist[l][p]: rows with label l assigned to prototype p.
  std::vector<double> hist(n_labels * n_protos, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (batch.labels[i] == kUnmatched) continue;
    hist[label_ids[batch.labels[i]] * n_protos + proto_ids[batch.assignments[i]]] += 1.0;
  }
  double labeled = 0.0;
  double same_total = 0.0;
  std::vector<double> per_label(n_labels, 0.0);
  for (std::size_t l = 0; l < n_labels; ++l) {
    for (std::size_t p = 0; p < n_protos; ++p) per_label[l] += hist[l * n_protos + p];
    labeled += per_label[l];
    same_total += per_label[l] * (per_label[l] - 1.0) / 2.0;
  }
  const double diff_total = labeled * (labeled - 1.0) / 2.0 - same_total;

  std::vector<double> proto_count(n_protos, 0.0);
  for (std::size_t p = 0; p < n_protos; ++p) {
    for (std::size_t l = 0; l < n_labels; ++l) proto_count[p] += hist[l * n_protos + p];
  }

  for (std::size_t a = 0; a < n_protos; ++a) {
    for (std::size_t b = a; b < n_protos; ++b) {
      double same = 0.0;
      for (std::size_t l = 0; l < n_labels; ++l) {
        const double ha = hist[l * n_protos + a];
        const double hb = hist[l * n_protos + b];
        same += a == b ? ha * (ha - 1.0) / 2.0 : ha * hb;
      }
      const double all = a == b ? proto_count[a] * (proto_count[a] - 1.0) / 2.0
                                : proto_count[a] * proto_count[b];
      const double diff = all - same;
      if (same == 0.0 && diff == 0.0) continue;

      const int ja = protos[a];
      const int jb = protos[b];
      const double* ta = codebook.prototypes.data() + static_cast<std::size_t>(ja) * d;
      const double* tb = codebook.prototypes.data() + static_cast<std::size_t>(jb) * d;
      // cos(T, T) is identically 1, so a shared prototype has no gradient.
      const double c = a == b ? 1.0 : cosine(ta, tb, d, norms[ja], norms[jb]);

      double dcos = 0.0;
      if (same > 0.0 && same_total > 0.0) {
        terms.pull += same * (1.0 - c);
        dcos -= config.lambda_pull * same / same_total;
      }
      if (diff > 0.0 && diff_total > 0.0 && c > config.margin) {
        terms.push += diff * (c - config.margin);
        dcos += config.lambda_push * diff / diff_total;
      }
      if (gradient && a != b && dcos != 0.0) {
        add_cos_grad(gradient->data() + static_cast<std::size_t>(ja) * d, ta, tb, d, norms[ja],
                     norms[jb], c, dcos);
        add_cos_grad(gradient->data() + static_cast<std::size_t>(jb) * d, tb, ta, d, norms[jb],
                     norms[ja], c, dcos);
      }
    }
  }
  terms.pull = same_total > 0.0 ? terms.pull / same_total : 0.0;
  terms.push = diff_total > 0.0 ? terms.push / diff_total : 0.0;
  terms.total = terms.max + config.lambda_pull * terms.pull + config.lambda_push * terms.push;
  return terms;
}

double loss_max(const LabeledFeatureBatch& batch, const Codebook& codebook) {
  return evaluate_losses(batch, codebook, CclConfig{}).max;
}

double loss_pull(const LabeledFeatureBatch& batch, const Codebook& codebook) {
  return evaluate_losses(batch, codebook, CclConfig{}).pull;
}

double loss_push(const LabeledFeatureBatch& batch, const Codebook& codebook, double margin) {
  CclConfig config;
  config.margin = margin;
  return evaluate_losses(batch, codebook, config).push;
}

double total_loss(const LabeledFeatureBatch& batch, const Codebook& codebook,
                  const CclConfig& config) {
  return evaluate_losses(batch, codebook, config).total;
}

CodebookOptimizer::CodebookOptimizer(const Codebook& codebook, const CclConfig& config)
    : config_(config),
      adam_(static_cast<std::size_t>(codebook.prototypes.size()),
            AdamConfig{config.learning_rate, config.beta1, config.beta2, 1e-8}) {}

LossTerms CodebookOptimizer::step(LabeledFeatureBatch& batch, Codebook& codebook) {
  assign_prototypes(batch, codebook);
  RowMatrix gradient;
  const LossTerms terms = evaluate_losses(batch, codebook, config_, &gradient);
  if (!gradient.allFinite() || !std::isfinite(terms.total)) {
    fail(ErrorCode::kNumericalFailure,
         "non-finite codebook gradient at step " + std::to_string(adam_.steps()));
  }
  adam_.step(std::span<double>(codebook.prototypes.data(), codebook.prototypes.size()),
             std::span<const double>(gradient.data(), gradient.size()));
  codebook.normalize_rows();
  return terms;
}

Codebook initialize_codebook(const RowMatrix& features, const CclConfig& config) {
  const auto n = static_cast<std::size_t>(features.rows());
  require(n >= 1, ErrorCode::kEmptyDataset, "cannot initialize a codebook without features");
  const int d = static_cast<int>(features.cols());
  Rng rng(derive_seed(config.seed, 0x1417));
  Codebook cb;
  cb.prototypes.resize(config.n_prototypes, d);

  if (config.init == PrototypeInit::kRandom) {
    for (Eigen::Index i = 0; i < cb.prototypes.size(); ++i) cb.prototypes.data()[i] = rng.normal();
    cb.normalize_rows();
    return cb;
  }

  // k-means++ seeding under cosine distance 1 - cos.
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(n);
  for (int j = 0; j < config.n_prototypes; ++j) {
    if (j > 0) {
      const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
      if (total <= 1e-12) {
        pick = rng.index(n);
      } else {
        double target = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          target -= dist[i];
          if (target < 0.0) {
            pick = i;
            break;
          }
        }
      }
    }
    cb.prototypes.row(j) = features.row(static_cast<Eigen::Index>(pick));
    const double pn = cb.prototypes.row(j).norm();
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = features.row(static_cast<Eigen::Index>(i));
      const double c = row.dot(cb.prototypes.row(j)) / (row.norm() * pn);
      dist[i] = std::min(dist[i], std::max(0.0, 1.0 - c));
    }
  }
  cb.normalize_rows();
  return cb;
}

CodebookTrainResult train_codebook(const RowMatrix& features, std::span<const int> labels,
                                   const CclConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(features.rows());
  require(n >= 1, ErrorCode::kEmptyDataset, "no features to train the codebook on");
  require(labels.size() == n, ErrorCode::kShapeError, "labels do not match features");

  CodebookTrainResult result;
  result.codebook = initialize_codebook(features, config);
  CodebookOptimizer optimizer(result.codebook, config);
  Rng rng(derive_seed(config.seed, 0xba7c));
  const std::size_t batch_rows = std::min<std::size_t>(n, static_cast<std::size_t>(config.batch_size));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  LabeledFeatureBatch batch;
  batch.features.resize(static_cast<Eigen::Index>(batch_rows), features.cols());
  batch.labels.resize(batch_rows);
  result.trace.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    rng.partial_shuffle(order, batch_rows);
    for (std::size_t r = 0; r < batch_rows; ++r) {
      batch.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(order[r]));
      batch.labels[r] = labels[order[r]];
    }
    result.trace.push_back(optimizer.step(batch, result.codebook));
  }
  return result;
}

IndexMap build_index_map(const Frame& frame, Scale scale, std::span<const Mask> masks,
                         const RowMatrix& features, const Codebook& codebook) {
  require(static_cast<std::size_t>(features.rows()) == masks.size(), ErrorCode::kShapeError,
          "index map needs one feature per mask");
  IndexMap map;
  map.frame_id = frame.frame_id;
  map.scale = scale;
  map.width = frame.width;
  map.height = frame.height;
  map.grid.assign(static_cast<std::size_t>(frame.width) * frame.height, IndexMap::kUnassigned);
  const auto norms = row_norms(codebook.prototypes);
  const auto d = static_cast<std::size_t>(features.cols());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const Mask& m = masks[i];
    require(m.region.width() == frame.width && m.region.height() == frame.height,
            ErrorCode::kShapeError, "mask region does not match frame size");
    const int j = scan(std::span<const double>(features.data() + i * d, d), codebook, norms).index;
    for (std::size_t p = 0; p < m.region.size(); ++p) {
      if (m.region.at(p)) map.grid[p] = j;
    }
  }
  return map;
}

namespace {
constexpr std::uint32_t kIndexMagic = 0x58495353;  // "SSIX"
}

void save_index_maps(const std::filesystem::path& path, std::span<const IndexMap> maps) {
  std::vector<std::uint8_t> out;
  put_u32(out, kIndexMagic);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(maps.size()));
  for (const IndexMap& m : maps) {
    put_i32(out, m.frame_id);
    put_u32(out, m.scale == Scale::kSubpartPart ? 0 : 1);
    put_u32(out, static_cast<std::uint32_t>(m.width));
    put_u32(out, static_cast<std::uint32_t>(m.height));
    for (std::int32_t v : m.grid) put_i32(out, v);
  }
  write_bytes(path, out);
}

std::vector<IndexMap> load_index_maps(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  require(get_u32(bytes, 0) == kIndexMagic && get_u32(bytes, 4) == 1, ErrorCode::kSchemaViolation,
          path.string() + " is not an index map file");
  const std::uint32_t count = get_u32(bytes, 8);
  std::size_t offset = 12;
  std::vector<IndexMap> maps;
  for (std::uint32_t i = 0; i < count; ++i) {
    IndexMap m;
    m.frame_id = get_i32(bytes, offset);
    m.scale = get_u32(bytes, offset + 4) == 0 ? Scale::kSubpartPart : Scale::kWholePart;
    m.width = static_cast<int>(get_u32(bytes, offset + 8));
    m.height = static_cast<int>(get_u32(bytes, offset + 12));
    offset += 16;
    m.grid.resize(static_cast<std::size_t>(m.width) * m.height);
    for (auto& v : m.grid) {
      v = get_i32(bytes, offset);
      offset += 4;
    }
    maps.push_back(std::move(m));
  }
  require(offset == bytes.size(), ErrorCode::kSchemaViolation, "trailing bytes in index map file");
  return maps;
}

}  // namespace semsplat
