#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "semsplat/adam.hpp"
#include "semsplat/bitmap.hpp"
#include "semsplat/error.hpp"
#include "semsplat/hash.hpp"
#include "semsplat/io.hpp"
#include "semsplat/parallel.hpp"
#include "semsplat/rle.hpp"
#include "semsplat/rng.hpp"
#include "test_support.hpp"

namespace semsplat {
namespace {

using test_support::random_bitmap;
using test_support::TempDir;

TEST(Rle, EmptyRegionIsSingleZeroRun) {
  const RunLengthRegion r = rle_encode(Bitmap(5, 4));
  ASSERT_EQ(r.runs.size(), 1u);
  EXPECT_EQ(r.runs[0], (semsplat::Run{0, 0}));
  EXPECT_EQ(rle_decode(r), Bitmap(5, 4));
}

TEST(Rle, RunsFollowRowMajorOrder) {
  Bitmap b(4, 2);
  b.set(2, 0, true);
  b.set(3, 0, true);
  b.set(0, 1, true);  // continues the run across the row break
  b.set(3, 1, true);
  const RunLengthRegion r = rle_encode(b);
  ASSERT_EQ(r.runs.size(), 2u);
  EXPECT_EQ(r.runs[0], (semsplat::Run{2, 3}));
  EXPECT_EQ(r.runs[1], (semsplat::Run{7, 1}));
}

TEST(Rle, RoundTripOnRandomBitmaps) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 1 + static_cast<int>(gen() % 40), h = 1 + static_cast<int>(gen() % 40);
    const Bitmap b = random_bitmap(gen, w, h, (gen() % 100) / 100.0);
    EXPECT_EQ(rle_decode(rle_encode(b)), b);
  }
}

TEST(Rle, RejectsOverlappingOrOverlongRuns) {
  RunLengthRegion r{4, 4, {{0, 3}, {2, 2}}};
  EXPECT_THROW(rle_decode(r), Error);
  r.runs = {{10, 7}};
  EXPECT_THROW(rle_decode(r), Error);
  r.runs = {{5, 1}, {1, 1}};
  EXPECT_THROW(rle_decode(r), Error);
}

TEST(Bitmap, SetAlgebraMatchesPixelCounts) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Bitmap a = random_bitmap(gen, 17, 9, 0.4), b = random_bitmap(gen, 17, 9, 0.6);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      inter += a.at(i) && b.at(i);
      uni += a.at(i) || b.at(i);
    }
    EXPECT_EQ(intersection_count(a, b), inter);
    EXPECT_EQ(union_count(a, b), uni);
    EXPECT_EQ(bitmap_and(a, b).count(), inter);
    EXPECT_EQ(bitmap_or(a, b).count(), uni);
    EXPECT_EQ(bitmap_and_not(a, b).count(), a.count() - inter);
    EXPECT_TRUE(is_subset(bitmap_and(a, b), a));
  }
}

TEST(Bitmap, ShapeMismatchThrows) {
  EXPECT_THROW(intersection_count(Bitmap(3, 3), Bitmap(3, 4)), Error);
}

TEST(Bitmap, ErosionMatchesDiskOracle) {
  std::mt19937_64 gen(5);
  for (int radius : {1, 2, 3}) {
    const Bitmap b = random_bitmap(gen, 20, 15, 0.85);
    const Bitmap e = erode(b, radius);
    for (int y = 0; y < b.height(); ++y)
      for (int x = 0; x < b.width(); ++x) {
        bool keep = b(x, y);
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy > radius * radius) continue;
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= b.width() || yy >= b.height() || !b(xx, yy)) keep = false;
          }
        EXPECT_EQ(e(x, y), keep) << x << "," << y << " r=" << radius;
      }
    EXPECT_TRUE(is_subset(e, b));
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs |= x != c.normal();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformAndIndexStayInRange) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.index(7), 7u);
  }
}

TEST(Rng, NormalMomentsAreClose) {
  Rng r(9);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, PartialShuffleIsPermutation) {
  Rng r(4);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.partial_shuffle(v, 20);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(Hash, KnownSha256Vectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, FileHashMatchesContentHash) {
  TempDir dir("hash");
  write_text(dir / "a.txt", "abc");
  EXPECT_EQ(sha256_file(dir / "a.txt"), sha256_hex("abc"));
}

TEST(Io, LittleEndianHelpersRoundTrip) {
  std::vector<std::uint8_t> buf;
  put_u32(buf, 0x01020304u);
  put_i32(buf, -5);
  put_f32(buf, 1.5f);
  ASSERT_EQ(buf.size(), 12u);
  EXPECT_EQ(buf[0], 0x04);
  EXPECT_EQ(get_u32(buf, 0), 0x01020304u);
  EXPECT_EQ(get_i32(buf, 4), -5);
  EXPECT_EQ(get_f32(buf, 8), 1.5f);
}

TEST(Io, PngRoundTrip) {
  TempDir dir("png");
  std::mt19937_64 gen(2);
  for (int channels : {1, 3}) {
    Image8 img{7, 5, channels, std::vector<std::uint8_t>(7 * 5 * channels)};
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(gen());
    write_png(dir / "x.png", img);
    const Image8 back = read_png(dir / "x.png");
    EXPECT_EQ(back.width, 7);
    EXPECT_EQ(back.height, 5);
    EXPECT_EQ(back.channels, channels);
    EXPECT_EQ(back.pixels, img.pixels);
  }
}

TEST(Io, MissingFileIsMissingArtifact) {
  try {
    read_bytes("/nonexistent/semsplat/file");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingArtifact);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first step is lr * g / (|g| + eps).
  Adam adam(3, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  std::vector<double> p{1.0, 2.0, 3.0};
  const std::vector<double> g{0.5, -2.0, 0.0};
  adam.step(p, g);
  EXPECT_NEAR(p[0], 1.0 - 0.1, 1e-7);
  EXPECT_NEAR(p[1], 2.0 + 0.1, 1e-7);
  EXPECT_DOUBLE_EQ(p[2], 3.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MatchesScalarRecurrence) {
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  Adam adam(1, cfg);
  std::vector<double> p{0.0};
  double x = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 50; ++t) {
    const double g = std::sin(0.3 * t) + 2.0 * x;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    x -= cfg.learning_rate * (m / (1 - std::pow(cfg.beta1, t))) /
         (std::sqrt(v / (1 - std::pow(cfg.beta2, t))) + cfg.epsilon);
    const std::vector<double> grad{std::sin(0.3 * t) + 2.0 * p[0]};
    adam.step(p, grad);
    EXPECT_DOUBLE_EQ(p[0], x);
  }
}

TEST(Adam, MinimizesQuadratic) {
  Adam adam(2, AdamConfig{0.05, 0.9, 0.999, 1e-8});
  std::vector<double> p{3.0, -2.0};
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> g{2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)};
    adam.step(p, g);
  }
  EXPECT_NEAR(p[0], 1.0, 1e-3);
  EXPECT_NEAR(p[1], -0.5, 1e-3);
}

TEST(Adam, SizeMismatchThrows) {
  Adam adam(2, AdamConfig{});
  std::vector<double> p(3);
  EXPECT_THROW(adam.step(p, p), Error);
}

TEST(Parallel, ResultIndependentOfThreadCount) {
  std::vector<double> one(1000), four(1000);
  set_thread_count(1);
  parallel_for(one.size(), [&](std::size_t i) { one[i] = std::sqrt(static_cast<double>(i)); });
  set_thread_count(4);
  parallel_for(four.size(), [&](std::size_t i) { four[i] = std::sqrt(static_cast<double>(i)); });
  set_thread_count(1);
  EXPECT_EQ(one, four);
}

TEST(Error, CodeNamesAreStable) {
  EXPECT_EQ(to_string(ErrorCode::kStaleState), "StaleState");
  EXPECT_EQ(to_string(ErrorCode::kEmptySelection), "EmptySelection");
  const Error e(ErrorCode::kShapeError, "x");
  EXPECT_EQ(e.code(), ErrorCode::kShapeError);
}

}  // namespace
}  // namespace semsplat
