#pragma once

#include <array>
#include <cstdint>

#include "hierkit/png_io.hpp"
#include "hierkit/predictions.hpp"

namespace hierkit {

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
};

// Deterministic palette lookup: cluster ids hash into a fixed 12-color
// palette, so the same cluster always renders in the same color.
Rgb cluster_color(int cluster_id);

// Alpha-blends every entity mask onto the image, colored by cluster. Masks
// whose resolution differs from the image are scaled nearest-neighbor.
void render_overlay(ImageRgb8& image, const ImagePredictions& preds, double alpha = 0.5);

}  // namespace hierkit
