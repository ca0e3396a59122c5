#include "hierkit/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace hierkit {

void validate_polygon(const Polygon& p) {
  if (p.vertices.size() < 3) {
    throw ValidationError("polygon must have at least 3 vertices, got " +
                          std::to_string(p.vertices.size()));
  }
  for (std::size_t i = 0; i < p.vertices.size(); ++i) {
    const Point& v = p.vertices[i];
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
      throw ValidationError("polygon vertex " + std::to_string(i) + " is not finite");
    }
    if (v.x < 0.0 || v.y < 0.0) {
      throw ValidationError("polygon vertex " + std::to_string(i) + " has negative coordinate");
    }
  }
}

BitMask::BitMask(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw ValidationError("mask dimensions must be non-negative");
  }
  const std::size_t bits = static_cast<std::size_t>(width) * height;
  words_.assign((bits + 63) / 64, 0);
}

std::int64_t BitMask::popcount() const {
  std::int64_t n = 0;
  for (std::uint64_t w : words_) n += std::popcount(w);
  return n;
}

double SoftMask::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

BitMask rasterize(const Polygon& p, int width, int height) {
  validate_polygon(p);
  if (width < 1 || height < 1) {
    throw ValidationError("raster grid must be at least 1x1");
  }
  BitMask out(width, height);
  const std::size_t n = p.vertices.size();
  std::vector<double> crossings;
  crossings.reserve(n);
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    crossings.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = p.vertices[i];
      const Point& b = p.vertices[(i + 1) % n];
      if ((a.y > py) != (b.y > py)) {
        crossings.push_back(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    if (crossings.empty()) continue;
    std::sort(crossings.begin(), crossings.end());
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      // Even-odd rule: parity of crossings strictly to the right of the
      // pixel center, identical to a +x ray-casting containment test.
      const auto it = std::upper_bound(crossings.begin(), crossings.end(), px);
      if ((crossings.end() - it) & 1) out.set(x, y);
    }
  }
  return out;
}

namespace {

void require_same_dims(int aw, int ah, int bw, int bh, const char* op) {
  if (aw != bw || ah != bh) {
    throw ValidationError(std::string(op) + ": dimension mismatch (" + std::to_string(aw) + "x" +
                          std::to_string(ah) + " vs " + std::to_string(bw) + "x" +
                          std::to_string(bh) + ")");
  }
}

void check_soft_range(double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError("soft mask entry outside [0,1]: " + std::to_string(v));
  }
}

}  // namespace

std::int64_t intersection_count(const BitMask& a, const BitMask& b) {
  require_same_dims(a.width(), a.height(), b.width(), b.height(), "intersection_count");
  std::int64_t n = 0;
  const auto& wa = a.words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) n += std::popcount(wa[i] & wb[i]);
  return n;
}

std::int64_t union_count(const BitMask& a, const BitMask& b) {
  require_same_dims(a.width(), a.height(), b.width(), b.height(), "union_count");
  std::int64_t n = 0;
  const auto& wa = a.words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) n += std::popcount(wa[i] | wb[i]);
  return n;
}

double iou(const BitMask& a, const BitMask& b) {
  const std::int64_t uni = union_count(a, b);
  if (uni == 0) return 0.0;
  return static_cast<double>(intersection_count(a, b)) / static_cast<double>(uni);
}

double dice(const BitMask& a, const BitMask& b) {
  const std::int64_t inter = intersection_count(a, b);
  const std::int64_t total = a.popcount() + b.popcount();
  if (total == 0) return 0.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double dice(const SoftMask& a, const SoftMask& b) {
  require_same_dims(a.width, a.height, b.width, b.height, "dice");
  double prod = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    check_soft_range(a.values[i]);
    check_soft_range(b.values[i]);
    prod += a.values[i] * b.values[i];
    sa += a.values[i];
    sb += b.values[i];
  }
  if (sa + sb == 0.0) return 0.0;
  return 2.0 * prod / (sa + sb);
}

double dice(const SoftMask& a, const BitMask& b) {
  require_same_dims(a.width, a.height, b.width(), b.height(), "dice");
  double prod = 0.0, sa = 0.0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      const double v = a.at(x, y);
      check_soft_range(v);
      sa += v;
      if (b.get(x, y)) prod += v;
    }
  }
  const double total = sa + static_cast<double>(b.popcount());
  if (total == 0.0) return 0.0;
  return 2.0 * prod / total;
}

double dice(const BitMask& a, const SoftMask& b) { return dice(b, a); }

void mask_or(BitMask& acc, const BitMask& m) {
  require_same_dims(acc.width(), acc.height(), m.width(), m.height(), "mask_or");
  auto& wa = acc.words();
  const auto& wm = m.words();
  for (std::size_t i = 0; i < wa.size(); ++i) wa[i] |= wm[i];
}

BitMask union_masks(const std::vector<BitMask>& masks, int width, int height) {
  BitMask out(width, height);
  for (const BitMask& m : masks) mask_or(out, m);
  return out;
}

RleMask rle_encode(const BitMask& m) {
  RleMask r;
  r.width = m.width();
  r.height = m.height();
  const std::int64_t total = m.pixel_count();
  bool current = false;  // runs start with background
  std::int64_t run = 0;
  for (std::int64_t i = 0; i < total; ++i) {
    const bool bit = m.get(static_cast<int>(i % m.width()), static_cast<int>(i / m.width()));
    if (bit == current) {
      ++run;
    } else {
      r.counts.push_back(run);
      current = bit;
      run = 1;
    }
  }
  if (total > 0) r.counts.push_back(run);
  return r;
}

BitMask rle_decode(const RleMask& r) {
  if (r.width < 0 || r.height < 0) {
    throw ValidationError("rle_decode: negative dimensions");
  }
  const std::int64_t total = static_cast<std::int64_t>(r.width) * r.height;
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < r.counts.size(); ++i) {
    const std::int64_t c = r.counts[i];
    if (c < 0) throw ValidationError("rle_decode: negative run length");
    if (c == 0 && i != 0) throw ValidationError("rle_decode: zero-length run after the first");
    sum += c;
  }
  if (sum != total) {
    throw ValidationError("rle_decode: counts sum to " + std::to_string(sum) + ", expected " +
                          std::to_string(total));
  }
  BitMask out(r.width, r.height);
  std::int64_t pos = 0;
  bool value = false;
  for (std::int64_t c : r.counts) {
    if (value) {
      for (std::int64_t i = pos; i < pos + c; ++i) {
        out.set(static_cast<int>(i % r.width), static_cast<int>(i / r.width));
      }
    }
    pos += c;
    value = !value;
  }
  return out;
}

}  // namespace hierkit
