#include "hierkit/render.hpp"

#include <cmath>

#include "hierkit/decoder.hpp"

namespace hierkit {

namespace {

constexpr std::array<Rgb, 12> kPalette{{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
    {245, 130, 48},  {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
    {210, 245, 60},  {170, 110, 40},  {0, 128, 128},  {250, 190, 212},
}};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

Rgb cluster_color(int cluster_id) {
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(cluster_id));
  return kPalette[h % kPalette.size()];
}

void render_overlay(ImageRgb8& image, const ImagePredictions& preds, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("blend alpha must lie in [0, 1]");
  }
  for (const Entity& e : preds.entities) {
    const Rgb color = cluster_color(e.cluster);
    const BitMask mask = (e.mask.width() == image.width && e.mask.height() == image.height)
                             ? e.mask
                             : upsample_mask(e.mask, image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        if (!mask.get(x, y)) continue;
        unsigned char* px = image.at(x, y);
        const auto blend = [alpha](unsigned char base, unsigned char over) {
          return static_cast<unsigned char>(
              std::lround((1.0 - alpha) * base + alpha * over));
        };
        px[0] = blend(px[0], color.r);
        px[1] = blend(px[1], color.g);
        px[2] = blend(px[2], color.b);
      }
    }
  }
}

}  // namespace hierkit
