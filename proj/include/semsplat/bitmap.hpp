#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace semsplat {

// Binary H x W pixel grid, row-major, one byte per pixel (0 or 1).
class Bitmap {
 public:
  Bitmap() = default;
  Bitmap(int width, int height, bool value = false);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator()(int x, int y) const { return bits_[index(x, y)] != 0; }
  bool at(std::size_t i) const { return bits_[i] != 0; }
  void set(int x, int y, bool value) { bits_[index(x, y)] = value ? 1 : 0; }
  void set(std::size_t i, bool value) { bits_[i] = value ? 1 : 0; }

  std::span<const std::uint8_t> data() const noexcept { return bits_; }

  std::size_t count() const;
  bool none() const { return count() == 0; }
  bool same_shape(const Bitmap& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Bitmap&, const Bitmap&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Throws ShapeError when shapes differ.
void check_same_shape(const Bitmap& a, const Bitmap& b);

std::size_t intersection_count(const Bitmap& a, const Bitmap& b);
std::size_t union_count(const Bitmap& a, const Bitmap& b);
Bitmap bitmap_and(const Bitmap& a, const Bitmap& b);
Bitmap bitmap_or(const Bitmap& a, const Bitmap& b);
Bitmap bitmap_and_not(const Bitmap& a, const Bitmap& b);
bool is_subset(const Bitmap& inner, const Bitmap& outer);

// Morphological erosion with a disk of the given radius. Pixels outside the
// grid count as background.
Bitmap erode(const Bitmap& b, int radius);

}  // namespace semsplat
