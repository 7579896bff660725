#include "semsplat/bitmap.hpp"

#include <algorithm>
#include <string>

#include "semsplat/error.hpp"

namespace semsplat {

Bitmap::Bitmap(int width, int height, bool value) : width_(width), height_(height) {
  require(width >= 0 && height >= 0, ErrorCode::kShapeError, "negative bitmap size");
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
               value ? 1 : 0);
}

std::size_t Bitmap::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void check_same_shape(const Bitmap& a, const Bitmap& b) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kShapeError,
         "bitmap shapes differ: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
             " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

std::size_t intersection_count(const Bitmap& a, const Bitmap& b) {
  check_same_shape(a, b);
  std::size_t n = 0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) n += da[i] & db[i];
  return n;
}

std::size_t union_count(const Bitmap& a, const Bitmap& b) {
  check_same_shape(a, b);
  std::size_t n = 0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) n += da[i] | db[i];
  return n;
}

namespace {

template <typename Op>
Bitmap combine(const Bitmap& a, const Bitmap& b, Op op) {
  check_same_shape(a, b);
  Bitmap out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out.set(i, op(a.at(i), b.at(i)));
  return out;
}

}  // namespace

Bitmap bitmap_and(const Bitmap& a, const Bitmap& b) {
  return combine(a, b, [](bool x, bool y) { return x && y; });
}

Bitmap bitmap_or(const Bitmap& a, const Bitmap& b) {
  return combine(a, b, [](bool x, bool y) { return x || y; });
}

Bitmap bitmap_and_not(const Bitmap& a, const Bitmap& b) {
  return combine(a, b, [](bool x, bool y) { return x && !y; });
}

bool is_subset(const Bitmap& inner, const Bitmap& outer) {
  check_same_shape(inner, outer);
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (inner.at(i) && !outer.at(i)) return false;
  }
  return true;
}

Bitmap erode(const Bitmap& b, int radius) {
  if (radius <= 0) return b;
  Bitmap out(b.width(), b.height());
  const int r2 = radius * radius;
  for (int y = 0; y < b.height(); ++y) {
    for (int x = 0; x < b.width(); ++x) {
      if (!b(x, y)) continue;
      bool keep = true;
      for (int dy = -radius; dy <= radius && keep; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dx * dx + dy * dy > r2) continue;
          const int xx = x + dx;
          const int yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= b.width() || yy >= b.height() || !b(xx, yy)) {
            keep = false;
            break;
          }
        }
      }
      out.set(x, y, keep);
    }
  }
  return out;
}

}  // namespace semsplat
