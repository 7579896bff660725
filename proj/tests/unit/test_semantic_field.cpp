#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gradient_suite.hpp"
#include "semsplat/error.hpp"
#include "semsplat/semantic_field.hpp"
#include "semsplat/synth.hpp"
#include "test_support.hpp"

namespace semsplat {
namespace {

std::vector<double> random_features(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(gen);
  return v;
}

IndexMap full_map(int w, int h, int value) {
  IndexMap m;
  m.width = w;
  m.height = h;
  m.grid.assign(static_cast<std::size_t>(w) * h, value);
  return m;
}

TEST(Decode, ZeroDecoderIsUniform) {
  std::mt19937_64 gen(1);
  const auto f = random_features(gen, 5 * 4 * 8);
  const DecodedMap d = decode(f, 5, 4, Decoder::zeros(8, 16, 10));
  EXPECT_NEAR((d.probs.array() - 0.1).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(Decode, MatchesScalarMlp) {
  std::mt19937_64 gen(2);
  const Decoder dec = Decoder::random(8, 12, 6, 3);
  const auto f = random_features(gen, 7 * 3 * 8);
  const DecodedMap d = decode(f, 7, 3, dec);
  for (int p = 0; p < 21; ++p) {
    std::vector<double> hidden(12), logits(6);
    for (int h = 0; h < 12; ++h) {
      double a = dec.b1[h];
      for (int c = 0; c < 8; ++c) a += dec.w1(h, c) * f[p * 8 + c];
      hidden[h] = a > 0.0 ? a : 0.0;
    }
    double top = -1e300;
    for (int k = 0; k < 6; ++k) {
      logits[k] = dec.b2[k];
      for (int h = 0; h < 12; ++h) logits[k] += dec.w2(k, h) * hidden[h];
      top = std::max(top, logits[k]);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - top);
    double sum = 0.0;
    for (int k = 0; k < 6; ++k) {
      EXPECT_NEAR(d.logits(k, p), logits[k], 1e-12);
      EXPECT_NEAR(d.probs(k, p), std::exp(logits[k] - top) / z, 1e-12);
      sum += d.probs(k, p);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Decode, WidthMismatchThrows) {
  const std::vector<double> f(4 * 4 * 7);
  EXPECT_THROW(decode(f, 4, 4, Decoder::zeros(8, 4, 3)), Error);
}

TEST(Softmax, RowsSumToOneEvenForHugeLogits) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd logits(9, 50);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 300.0 * nd(gen);
  const Eigen::MatrixXd p = softmax_columns(logits);
  EXPECT_TRUE(p.allFinite());
  for (Eigen::Index c = 0; c < p.cols(); ++c) EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-6);
}

TEST(Softmax, ShiftInvariant) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd logits(6, 20);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 3.0 * nd(gen);
  Eigen::MatrixXd shifted = logits;
  for (Eigen::Index c = 0; c < shifted.cols(); ++c) shifted.col(c).array() += 50.0 * nd(gen);
  EXPECT_LT((softmax_columns(logits) - softmax_columns(shifted)).cwiseAbs().maxCoeff(), 1e-9);
}

DecodedMap from_logits(const Eigen::MatrixXd& logits, int w, int h) {
  DecodedMap d;
  d.width = w;
  d.height = h;
  d.logits = logits;
  d.probs = softmax_columns(logits);
  return d;
}

TEST(CeLoss, ConfidentTargetIsZero) {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(4, 6);
  logits.row(2).setConstant(1000.0);
  EXPECT_NEAR(ce_loss(from_logits(logits, 3, 2), full_map(3, 2, 2)), 0.0, 1e-300);
}

TEST(CeLoss, UniformIsLogN) {
  const DecodedMap d = from_logits(Eigen::MatrixXd::Zero(128, 12), 4, 3);
  EXPECT_NEAR(ce_loss(d, full_map(4, 3, 17)), std::log(128.0), 1e-12);
  EXPECT_NEAR(std::log(128.0), 4.852, 1e-3);
}

TEST(CeLoss, MatchesScalarOracleAndSkipsUnassigned) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd logits(5, 30);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 2.0 * nd(gen);
  const DecodedMap d = from_logits(logits, 6, 5);
  IndexMap t = full_map(6, 5, 0);
  double sum = 0.0;
  int n = 0;
  for (int p = 0; p < 30; ++p) {
    t.grid[p] = static_cast<int>(gen() % 6) - 1;
    if (t.grid[p] < 0) continue;
    double z = 0.0;
    for (int k = 0; k < 5; ++k) z += std::exp(logits(k, p));
    sum += -(logits(t.grid[p], p) - std::log(z));
    ++n;
  }
  ASSERT_GT(n, 0);
  EXPECT_NEAR(ce_loss(d, t), sum / n, 1e-12);
}

TEST(CeLoss, ExtremeLogitsStayFinite) {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(3, 1);
  logits(0, 0) = 2000.0;
  const double l = ce_loss(from_logits(logits, 1, 1), full_map(1, 1, 1));
  EXPECT_NEAR(l, 2000.0, 1e-9);
}

TEST(CeLoss, ErrorsOnBadTargets) {
  const DecodedMap d = from_logits(Eigen::MatrixXd::Zero(3, 4), 2, 2);
  try {
    ce_loss(d, full_map(2, 2, IndexMap::kUnassigned));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptySupervision);
  }
  EXPECT_THROW(ce_loss(d, full_map(2, 2, 3)), Error);
  EXPECT_THROW(ce_loss(d, full_map(2, 3, 0)), Error);
}

TEST(Gradients, CeThroughDecoderMatchesFiniteDifferences) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    worst = std::max(worst, test_support::ce_decode_gradient_error(200 + seed));
  EXPECT_LT(worst, 1e-5);
}

TEST(Gradients, FullChainMatchesFiniteDifferences) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    worst = std::max(worst, test_support::full_chain_gradient_error(300 + seed));
  EXPECT_LT(worst, 1e-4);
}

TEST(Argmax, TiesGoToLowestIndex) {
  Eigen::MatrixXd logits(4, 3);
  logits << 0, 1, 0,  //
      2, 1, 0,        //
      2, 0, 0,        //
      1, 1, 0;
  const DecodedMap d = from_logits(logits, 3, 1);
  EXPECT_EQ(argmax_indices(d), (std::vector<int>{1, 0, 0}));
}

TEST(RefineFeatures, PicksArgmaxPrototype) {
  std::mt19937_64 gen(7);
  Codebook cb;
  cb.prototypes = test_support::random_unit_rows(gen, 8, 5);
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(8, 2);
  logits(7, 0) = 50.0;  // one-hot on 7; column 1 uniform
  const RowMatrix f = refine_pixel_features(from_logits(logits, 2, 1), cb);
  EXPECT_EQ(f.row(0), cb.prototypes.row(7));
  EXPECT_EQ(f.row(1), cb.prototypes.row(0));

  std::normal_distribution<double> nd;
  Eigen::MatrixXd random(8, 40);
  for (Eigen::Index i = 0; i < random.size(); ++i) random.data()[i] = nd(gen);
  const DecodedMap d = from_logits(random, 8, 5);
  const RowMatrix g = refine_pixel_features(d, cb);
  for (int p = 0; p < 40; ++p) {
    Eigen::Index best;
    random.col(p).maxCoeff(&best);
    EXPECT_EQ(g.row(p), cb.prototypes.row(best));
  }
  Codebook small;
  small.prototypes = cb.prototypes.topRows(3);
  EXPECT_THROW(refine_pixel_features(d, small), Error);
}

TEST(Checkpoint, FieldRoundTripIsExact) {
  std::mt19937_64 gen(8);
  test_support::TempDir dir("field");
  const auto inst = test_support::random_chain_instance(9);
  SemanticField field{inst.scene, inst.decoder};
  save_field(dir.path(), field);
  const SemanticField back = load_field(dir.path());
  EXPECT_EQ(back.decoder.w1, field.decoder.w1);
  EXPECT_EQ(back.decoder.b1, field.decoder.b1);
  EXPECT_EQ(back.decoder.w2, field.decoder.w2);
  EXPECT_EQ(back.decoder.b2, field.decoder.b2);
  ASSERT_EQ(back.scene.size(), field.scene.size());
  // scene records are float32 on disk
  for (std::size_t i = 0; i < field.scene.size(); ++i)
    for (int c = 0; c < 8; ++c)
      EXPECT_EQ(back.scene.gaussians[i].feature[c],
                static_cast<double>(static_cast<float>(field.scene.gaussians[i].feature[c])));
}

// Category index maps straight from the synthetic ground truth: object k is
// class k-1, everything else class K.
IndexMap truth_map(const GroundTruthView& view, int k) {
  IndexMap m = full_map(view.frame.width, view.frame.height, k);
  m.frame_id = view.frame.frame_id;
  for (int c = 0; c < k; ++c)
    for (std::size_t p = 0; p < m.grid.size(); ++p)
      if (view.category_masks[c].at(p)) m.grid[p] = c;
  return m;
}

struct FieldFixture {
  SyntheticScene scene;
  std::vector<FieldView> train;
  std::vector<FieldView> held_out;
};

FieldFixture field_fixture(int categories, int views, int size, int gaussians) {
  SynthConfig cfg;
  cfg.categories = categories;
  cfg.views = views;
  cfg.held_out_views = 2;
  cfg.width = cfg.height = size;
  cfg.gaussians = gaussians;
  cfg.feature_dim = 16;
  FieldFixture fx{generate(cfg), {}, {}};
  for (const GroundTruthView& v : fx.scene.truth.views) {
    FieldView fv{Camera::from_frame(v.frame), truth_map(v, categories), {}};
    (v.held_out ? fx.held_out : fx.train).push_back(std::move(fv));
  }
  return fx;
}

TEST(TrainField, ReachesHeldOutAccuracy) {
  const FieldFixture fx = field_fixture(3, 8, 64, 500);
  FieldTrainConfig cfg;
  cfg.iterations = 2000;
  const SemanticField init = initialize_field(fx.scene.scene, 8, 4, cfg);
  const FieldTrainResult r = train_field(init, fx.train, cfg);
  ASSERT_EQ(r.loss_trace.size(), 2000u);
  std::size_t hit = 0, total = 0;
  for (const FieldView& v : fx.held_out) {
    const SplatOutput out = render(r.field.scene, v.camera);
    const auto idx = argmax_indices(decode(out.feature, out.width, out.height, r.field.decoder));
    for (std::size_t p = 0; p < idx.size(); ++p) hit += idx[p] == v.target.grid[p];
    total += idx.size();
  }
  EXPECT_GE(static_cast<double>(hit) / total, 0.9);
}

TEST(TrainField, DeterministicTrace) {
  const FieldFixture fx = field_fixture(2, 3, 24, 120);
  FieldTrainConfig cfg;
  cfg.iterations = 30;
  const SemanticField init = initialize_field(fx.scene.scene, 8, 3, cfg);
  const auto a = train_field(init, fx.train, cfg);
  const auto b = train_field(init, fx.train, cfg);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.field.decoder.w2, b.field.decoder.w2);
}

TEST(TrainField, FrozenPerfectDecoderStillConverges) {
  const FieldFixture fx = field_fixture(2, 4, 32, 200);
  const int classes = 3, d = 8;
  // identity-like decoder: class k fires on feature axis k
  Decoder dec = Decoder::zeros(d, d, classes);
  for (int k = 0; k < classes; ++k) {
    dec.w1(k, k) = 1.0;
    dec.w2(k, k) = 10.0;
  }
  FieldTrainConfig cfg;
  cfg.iterations = 100;
  cfg.freeze_decoder = true;
  cfg.learning_rate = 0.01;
  SemanticField init = initialize_field(fx.scene.scene, d, classes, cfg);
  init.decoder = dec;
  const auto r = train_field(init, fx.train, cfg);
  EXPECT_EQ(r.field.decoder.w1, dec.w1);
  // one view per iteration: compare the full-view loss before and after
  auto mean_loss = [&](const SemanticField& f) {
    double s = 0.0;
    for (const FieldView& v : fx.train) {
      const SplatOutput out = render(f.scene, v.camera);
      s += ce_loss(decode(out.feature, out.width, out.height, f.decoder), v.target);
    }
    return s / fx.train.size();
  };
  EXPECT_LT(mean_loss(r.field), mean_loss(init));
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 10; ++i) early += r.loss_trace[i], late += r.loss_trace[90 + i];
  EXPECT_LT(late, early);
}

TEST(TrainField, JointModeNeedsImages) {
  const FieldFixture fx = field_fixture(2, 2, 24, 60);
  FieldTrainConfig cfg;
  cfg.iterations = 2;
  cfg.mode = FieldMode::kJoint;
  const SemanticField init = initialize_field(fx.scene.scene, 8, 3, cfg);
  EXPECT_THROW(train_field(init, fx.train, cfg), Error);
  std::vector<FieldView> views = fx.train;
  for (FieldView& v : views) v.rgb.assign(static_cast<std::size_t>(v.camera.width) * v.camera.height * 3, 0.5);
  const auto r = train_field(init, views, cfg);
  EXPECT_EQ(r.loss_trace.size(), 2u);
}

TEST(TrainField, RejectsEmptyViewsAndBadConfig) {
  FieldTrainConfig cfg;
  const SemanticField field{GaussianScene{}, Decoder::zeros(8, 4, 3)};
  EXPECT_THROW(train_field(field, {}, cfg), Error);
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace semsplat
