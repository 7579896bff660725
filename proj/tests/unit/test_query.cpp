#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "semsplat/error.hpp"
#include "semsplat/query.hpp"
#include "test_support.hpp"

namespace semsplat {
namespace {

using test_support::random_unit;
using test_support::random_unit_rows;

QuerySet query_set(std::mt19937_64& gen, int n, int d) {
  QuerySet q;
  for (int i = 0; i < n; ++i) q.phrases.push_back("phrase " + std::to_string(i));
  q.embeddings = random_unit_rows(gen, n, d);
  return q;
}

RelevanceMap constant_map(int w, int h, double v) {
  return {"x", Scale::kWholePart, w, h, std::vector<double>(static_cast<std::size_t>(w) * h, v)};
}

TEST(Relevance, SinglePhraseIsCertain) {
  std::mt19937_64 gen(1);
  const QuerySet q = query_set(gen, 1, 6);
  const RelevanceMap m = relevance_map(random_unit_rows(gen, 12, 6), 4, 3, "phrase 0", q);
  for (double v : m.grid) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Relevance, EqualCosinesSplitEvenly) {
  QuerySet q;
  q.phrases = {"a", "b"};
  q.embeddings.resize(2, 2);
  q.embeddings << 1.0, 0.0, 0.0, 1.0;
  RowMatrix f(1, 2);
  f << 1.0, 1.0;
  const RelevanceMap m = relevance_map(f, 1, 1, "b", q);
  EXPECT_DOUBLE_EQ(m.grid[0], 0.5);
}

TEST(Relevance, MatchesScalarSoftmax) {
  std::mt19937_64 gen(2);
  const QuerySet q = query_set(gen, 5, 8);
  const RowMatrix f = random_unit_rows(gen, 30, 8);
  for (int t = 0; t < 5; ++t) {
    const RelevanceMap m = relevance_map(f, 6, 5, q.phrases[t], q);
    for (int p = 0; p < 30; ++p) {
      double z = 0.0, num = 0.0;
      for (int s = 0; s < 5; ++s) {
        double dot = 0.0;
        for (int k = 0; k < 8; ++k) dot += f(p, k) * q.embeddings(s, k);
        z += std::exp(dot);
        if (s == t) num = std::exp(dot);
      }
      EXPECT_NEAR(m.grid[p], num / z, 1e-9);
    }
  }
}

TEST(Relevance, RowsAreDistributions) {
  std::mt19937_64 gen(3);
  const QuerySet q = query_set(gen, 7, 8);
  RowMatrix f = random_unit_rows(gen, 100, 8);
  f.row(0).setZero();  // a background pixel with no contribution
  const Eigen::MatrixXd p = relevance_scores(f, q);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-6);
    EXPECT_GE(p.row(i).minCoeff(), 0.0);
    EXPECT_LE(p.row(i).maxCoeff(), 1.0);
  }
}

TEST(Relevance, QueryPermutationOnlyPermutesColumns) {
  std::mt19937_64 gen(4);
  const QuerySet q = query_set(gen, 6, 8);
  const RowMatrix f = random_unit_rows(gen, 40, 8);
  std::vector<int> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  QuerySet r;
  r.embeddings.resize(6, 8);
  for (int i = 0; i < 6; ++i) {
    r.phrases.push_back(q.phrases[perm[i]]);
    r.embeddings.row(i) = q.embeddings.row(perm[i]);
  }
  for (const std::string& phrase : q.phrases) {
    const auto a = relevance_map(f, 8, 5, phrase, q).grid;
    const auto b = relevance_map(f, 8, 5, phrase, r).grid;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  }
}

TEST(Relevance, IndexLookupMatchesRefinedFeatures) {
  std::mt19937_64 gen(5);
  const QuerySet q = query_set(gen, 4, 8);
  Codebook cb;
  cb.prototypes = random_unit_rows(gen, 16, 8);
  std::vector<int> idx(35);
  for (int& i : idx) i = static_cast<int>(gen() % 16);
  RowMatrix refined(35, 8);
  for (int p = 0; p < 35; ++p) refined.row(p) = cb.prototypes.row(idx[p]);
  const auto a = relevance_map(refined, 7, 5, "phrase 2", q).grid;
  const auto b = relevance_map_from_indices(idx, 7, 5, cb, "phrase 2", q).grid;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Relevance, Errors) {
  std::mt19937_64 gen(6);
  const RowMatrix f = random_unit_rows(gen, 4, 3);
  try {
    relevance_map(f, 2, 2, "a", QuerySet{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyQuerySet);
  }
  const QuerySet q = query_set(gen, 2, 3);
  EXPECT_THROW(relevance_map(f, 2, 2, "unknown", q), Error);
  EXPECT_THROW(relevance_map(f, 3, 2, "phrase 0", q), Error);
}

TEST(Normalize, RescalesToUnitRange) {
  RelevanceMap m = constant_map(3, 1, 0.0);
  m.grid = {0.2, 0.5, 0.3};
  const RelevanceMap n = normalize_relevance(m);
  EXPECT_DOUBLE_EQ(n.grid[0], 0.0);
  EXPECT_DOUBLE_EQ(n.grid[1], 1.0);
  EXPECT_NEAR(n.grid[2], 1.0 / 3.0, 1e-15);
  for (double v : normalize_relevance(constant_map(2, 2, 0.7)).grid) EXPECT_EQ(v, 0.0);
}

TEST(Segment, ConstantMaps) {
  const std::vector<RelevanceMap> ones{constant_map(5, 4, 1.0)};
  EXPECT_EQ(segment(ones).count(), 20u);
  const std::vector<RelevanceMap> zeros{constant_map(5, 4, 0.0)};
  EXPECT_TRUE(segment(zeros).none());
}

TEST(Segment, MatchesComparisonOracleWithScaleMax) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> ud;
  std::vector<RelevanceMap> maps{constant_map(9, 7, 0.0), constant_map(9, 7, 0.0)};
  for (auto& m : maps)
    for (double& v : m.grid) v = ud(gen);
  const Bitmap s = segment(maps, 0.5);
  for (std::size_t p = 0; p < s.size(); ++p)
    EXPECT_EQ(s.at(p), maps[0].grid[p] > 0.5 || maps[1].grid[p] > 0.5);
  // a value exactly at the threshold is excluded
  const std::vector<RelevanceMap> half{constant_map(2, 2, 0.5)};
  EXPECT_TRUE(segment(half, 0.5).none());
}

TEST(Segment, RaisingThresholdNeverGrowsMask) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> ud;
  std::vector<RelevanceMap> maps{constant_map(16, 16, 0.0)};
  for (double& v : maps[0].grid) v = ud(gen);
  Bitmap prev = segment(maps, 0.0);
  for (double t = 0.05; t <= 1.0; t += 0.05) {
    const Bitmap next = segment(maps, t);
    EXPECT_TRUE(is_subset(next, prev));
    prev = next;
  }
}

TEST(Segment, SizeMismatchThrows) {
  const std::vector<RelevanceMap> maps{constant_map(2, 2, 0.1), constant_map(3, 2, 0.1)};
  EXPECT_THROW(segment(maps), Error);
}

GaussianScene feature_scene(std::mt19937_64& gen, int n, int d) {
  std::normal_distribution<double> nd;
  GaussianScene s;
  s.feature_dim = d;
  for (int i = 0; i < n; ++i) {
    Gaussian g;
    g.position = {nd(gen), nd(gen), 5.0 + nd(gen)};
    g.color = {0.1 * i, 0.2, 0.3};
    g.alpha_logit = nd(gen);
    g.feature = Eigen::VectorXd(d);
    for (int c = 0; c < d; ++c) g.feature[c] = nd(gen);
    s.gaussians.push_back(g);
  }
  return s;
}

TEST(ClassifyGaussians, ZeroDecoderIsUniform) {
  std::mt19937_64 gen(9);
  const GaussianScene s = feature_scene(gen, 10, 8);
  for (const GaussianClass& c : classify_gaussians(s, Decoder::zeros(8, 4, 5))) {
    EXPECT_EQ(c.index, 0);
    EXPECT_NEAR(c.confidence, 0.2, 1e-15);
  }
}

TEST(ClassifyGaussians, BatchMatchesPerGaussianLoop) {
  std::mt19937_64 gen(10);
  const GaussianScene s = feature_scene(gen, 40, 8);
  const Decoder dec = Decoder::random(8, 16, 12, 4);
  const auto batch = classify_gaussians(s, dec);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::vector<double> f(s.gaussians[i].feature.data(), s.gaussians[i].feature.data() + 8);
    const DecodedMap one = decode(f, 1, 1, dec);
    const int idx = argmax_indices(one)[0];
    EXPECT_EQ(batch[i].index, idx);
    // batched and single-column products may sum in different orders
    EXPECT_NEAR(batch[i].confidence, one.probs(idx, 0), 1e-14);
  }
}

TEST(ClassifyGaussians, SingleTargetTrainingIsConfident) {
  // one view whose every pixel is supervised with index 2
  std::mt19937_64 gen(11);
  GaussianScene s = feature_scene(gen, 30, 8);
  for (Gaussian& g : s.gaussians) {
    g.position = {0.5 * g.position.x(), 0.5 * g.position.y(), 5.0};
    g.scale = {0.4, 0.4, 0.4};
    g.alpha_logit = 2.0;
  }
  FieldView view;
  view.camera.width = view.camera.height = 24;
  view.camera.fx = view.camera.fy = 24.0;
  view.camera.cx = view.camera.cy = 12.0;
  view.target.width = view.target.height = 24;
  view.target.grid.assign(24 * 24, 2);
  FieldTrainConfig cfg;
  cfg.iterations = 300;
  cfg.learning_rate = 0.01;
  const SemanticField init = initialize_field(s, 8, 4, cfg);
  const auto r = train_field(init, std::vector<FieldView>{view}, cfg);
  for (const GaussianClass& c : classify_gaussians(r.field.scene, r.field.decoder)) {
    EXPECT_EQ(c.index, 2);
    EXPECT_GT(c.confidence, 0.9);
  }
}

// A decoder that reads the class straight off the first feature axes, a
// codebook whose prototype j equals query embedding j.
struct EditFixture {
  GaussianScene scene;
  Decoder decoder;
  Codebook codebook;
  QuerySet queries;
};

EditFixture edit_fixture(std::mt19937_64& gen) {
  EditFixture fx;
  const int classes = 3, d = 8;
  fx.scene = feature_scene(gen, 24, d);
  for (std::size_t i = 0; i < fx.scene.size(); ++i) {
    fx.scene.gaussians[i].feature.setZero();
    fx.scene.gaussians[i].feature[i % classes] = 1.0;
  }
  fx.decoder = Decoder::zeros(d, classes, classes);
  for (int k = 0; k < classes; ++k) fx.decoder.w1(k, k) = fx.decoder.w2(k, k) = 5.0;
  fx.queries.phrases = {"red cube", "blue ball", "background"};
  fx.queries.embeddings = random_unit_rows(gen, classes, 16);
  fx.codebook.prototypes = fx.queries.embeddings;
  return fx;
}

TEST(SelectAndEdit, ExtractAndDeletePartitionTheScene) {
  std::mt19937_64 gen(12);
  const EditFixture fx = edit_fixture(gen);
  const auto ex = select_and_edit(fx.scene, fx.decoder, fx.codebook, "blue ball", fx.queries, EditOp::kExtract);
  const auto del = select_and_edit(fx.scene, fx.decoder, fx.codebook, "blue ball", fx.queries, EditOp::kDelete);
  ASSERT_FALSE(ex.selection.empty());
  EXPECT_EQ(ex.selection.prototypes, std::vector<int>{1});
  EXPECT_EQ(ex.scene.size() + del.scene.size(), fx.scene.size());
  EXPECT_EQ(ex.selection.indices, del.selection.indices);
  EXPECT_TRUE(std::is_sorted(ex.selection.indices.begin(), ex.selection.indices.end()));
  for (int i : ex.selection.indices) EXPECT_EQ(i % 3, 1);
  EXPECT_EQ(ex.scene.size(), 8u);
  // the two scenes together hold each original Gaussian exactly once
  std::vector<double> seen;
  for (const auto* s : {&ex.scene, &del.scene})
    for (const Gaussian& g : s->gaussians) seen.push_back(g.position.x());
  std::vector<double> all;
  for (const Gaussian& g : fx.scene.gaussians) all.push_back(g.position.x());
  std::sort(seen.begin(), seen.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(seen, all);
}

TEST(SelectAndEdit, RecolorTouchesOnlySelectedColors) {
  std::mt19937_64 gen(13);
  const EditFixture fx = edit_fixture(gen);
  const auto r = select_and_edit(fx.scene, fx.decoder, fx.codebook, "red cube", fx.queries, EditOp::kRecolor);
  ASSERT_EQ(r.scene.size(), fx.scene.size());
  for (std::size_t i = 0; i < fx.scene.size(); ++i) {
    const Gaussian &a = fx.scene.gaussians[i], &b = r.scene.gaussians[i];
    EXPECT_EQ(a.position, b.position);
    EXPECT_EQ(a.rotation, b.rotation);
    EXPECT_EQ(a.scale, b.scale);
    EXPECT_EQ(a.alpha_logit, b.alpha_logit);
    EXPECT_EQ(a.feature, b.feature);
    if (i % 3 == 0)
      EXPECT_EQ(b.color, Eigen::Vector3d(1.0, 0.0, 0.0));
    else
      EXPECT_EQ(b.color, a.color);
  }
}

TEST(SelectAndEdit, NothingAboveThresholdLeavesSceneUntouched) {
  std::mt19937_64 gen(14);
  const EditFixture fx = edit_fixture(gen);
  const auto r = select_and_edit(fx.scene, fx.decoder, fx.codebook, "red cube", fx.queries,
                                 EditOp::kDelete, 1.0);
  EXPECT_TRUE(r.selection.empty());
  EXPECT_EQ(r.scene.size(), fx.scene.size());
  const nlohmann::json j = selection_to_json(r.selection);
  EXPECT_EQ(j["phrase"], "red cube");
  EXPECT_TRUE(j["indices"].empty());
}

}  // namespace
}  // namespace semsplat
