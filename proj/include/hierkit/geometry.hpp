#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hierkit/error.hpp"

namespace hierkit {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Closed polygonal ring; the last vertex implicitly connects to the first.
// Self-intersection is allowed, rasterization uses the even-odd rule.
struct Polygon {
  std::vector<Point> vertices;
};

// Throws ValidationError if the polygon has fewer than 3 vertices or any
// non-finite / negative coordinate.
void validate_polygon(const Polygon& p);

// Row-major binary grid packed into 64-bit words. Bit index is y*width + x.
// Trailing bits of the last word are kept zero so equality and popcount can
// operate on whole words.
class BitMask {
 public:
  BitMask() = default;
  BitMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t pixel_count() const { return static_cast<std::int64_t>(width_) * height_; }

  bool get(int x, int y) const {
    const std::size_t i = bit_index(x, y);
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set(int x, int y, bool value = true) {
    const std::size_t i = bit_index(x, y);
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    if (value) {
      words_[i >> 6] |= bit;
    } else {
      words_[i >> 6] &= ~bit;
    }
  }

  std::int64_t popcount() const;
  bool empty() const { return popcount() == 0; }

  const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& words() { return words_; }

  bool operator==(const BitMask&) const = default;

 private:
  std::size_t bit_index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint64_t> words_;
};

// Soft (real-valued) mask with entries expected in [0,1].
struct SoftMask {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  SoftMask() = default;
  SoftMask(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double sum() const;
};

// Run-length codec for BitMask. Runs alternate starting with a background(0)
// run; only the leading count may be zero. Scan order is row-major.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> counts;
};

// Rasterizes p onto a width x height grid. A pixel (x, y) is set iff its
// center (x+0.5, y+0.5) lies inside the polygon under the even-odd rule;
// geometry outside the grid is clipped.
BitMask rasterize(const Polygon& p, int width, int height);

// |a n b| / |a u b|; 0 when both masks are empty.
double iou(const BitMask& a, const BitMask& b);

// 2*|a n b| / (|a| + |b|); 0 when both masks are empty.
double dice(const BitMask& a, const BitMask& b);
// Soft Dice: 2*sum(a*b) / (sum(a) + sum(b)); entries outside [0,1] are errors.
double dice(const SoftMask& a, const SoftMask& b);
double dice(const SoftMask& a, const BitMask& b);
double dice(const BitMask& a, const SoftMask& b);

std::int64_t intersection_count(const BitMask& a, const BitMask& b);
std::int64_t union_count(const BitMask& a, const BitMask& b);

// Bitwise OR of all masks; an empty list yields an all-zero width x height mask.
BitMask union_masks(const std::vector<BitMask>& masks, int width, int height);

// In-place OR. Dimension mismatch is an error.
void mask_or(BitMask& acc, const BitMask& m);

RleMask rle_encode(const BitMask& m);
BitMask rle_decode(const RleMask& r);

}  // namespace hierkit
