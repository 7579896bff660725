#include "semsplat/rle.hpp"

#include <string>

#include "semsplat/error.hpp"

namespace semsplat {

RunLengthRegion rle_encode(const Bitmap& bitmap) {
  RunLengthRegion region{bitmap.width(), bitmap.height(), {}};
  const std::size_t n = bitmap.size();
  std::size_t i = 0;
  while (i < n) {
    if (!bitmap.at(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && bitmap.at(j)) ++j;
    region.runs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j - i)});
    i = j;
  }
  if (region.runs.empty()) region.runs.push_back({0, 0});
  return region;
}

Bitmap rle_decode(const RunLengthRegion& region) {
  require(region.width >= 0 && region.height >= 0, ErrorCode::kCorruptRegion,
          "negative region size");
  Bitmap bitmap(region.width, region.height);
  const std::uint64_t total = bitmap.size();
  std::uint64_t cursor = 0;
  for (const Run& run : region.runs) {
    if (run.length == 0) continue;
    const std::uint64_t end = static_cast<std::uint64_t>(run.start) + run.length;
    if (run.start < cursor || end > total) {
      fail(ErrorCode::kCorruptRegion, "run [" + std::to_string(run.start) + ", " +
                                          std::to_string(end) + ") overflows or overlaps a " +
                                          std::to_string(total) + "-pixel grid");
    }
    for (std::uint64_t i = run.start; i < end; ++i) bitmap.set(static_cast<std::size_t>(i), true);
    cursor = end;
  }
  return bitmap;
}

}  // namespace semsplat
