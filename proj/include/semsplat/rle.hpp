#pragma once

#include <cstdint>
#include <vector>

#include "semsplat/bitmap.hpp"

namespace semsplat {

// Runs of set pixels in row-major order. An empty region is stored as the
// single run {0, 0}.
struct Run {
  std::uint32_t start = 0;
  std::uint32_t length = 0;

  friend bool operator==(const Run&, const Run&) = default;
};

struct RunLengthRegion {
  int width = 0;
  int height = 0;
  std::vector<Run> runs;

  friend bool operator==(const RunLengthRegion&, const RunLengthRegion&) = default;
};

RunLengthRegion rle_encode(const Bitmap& bitmap);

// Throws CorruptRegion on runs that overlap, go backwards, or extend past
// width * height.
Bitmap rle_decode(const RunLengthRegion& region);

}  // namespace semsplat
