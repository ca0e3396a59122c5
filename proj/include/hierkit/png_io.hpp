#pragma once

#include <string>
#include <vector>

#include "hierkit/error.hpp"

namespace hierkit {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct ImageRgb8 {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;

  ImageRgb8() = default;
  ImageRgb8(int w, int h)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  unsigned char* at(int x, int y) {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const unsigned char* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

// Reads any 8/16-bit gray/palette/RGB(A) PNG and converts to 8-bit RGB.
ImageRgb8 read_png(const std::string& path);

void write_png(const std::string& path, const ImageRgb8& image);

}  // namespace hierkit
