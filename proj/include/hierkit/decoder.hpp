#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hierkit/error.hpp"
#include "hierkit/geometry.hpp"
#include "hierkit/matrix.hpp"
#include "hierkit/predictions.hpp"

namespace hierkit {

// Stack of per-query planes, row-major. Value index is (i*height + y)*width + x.
struct Tensor3 {
  int n = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Tensor3() = default;
  Tensor3(int n_, int h, int w)
      : n(n_), height(h), width(w),
        values(static_cast<std::size_t>(n_) * h * w, 0.0) {}

  double& at(int i, int x, int y) {
    return values[(static_cast<std::size_t>(i) * height + y) * width + x];
  }
  double at(int i, int x, int y) const {
    return values[(static_cast<std::size_t>(i) * height + y) * width + x];
  }
};

// Raw model outputs for one image: per-query soft masks, textness scores and
// either a pairwise affinity matrix or layout embeddings with a temperature.
struct DetectionTensors {
  Tensor3 masks;
  std::vector<double> textness;
  Matrix affinity;
  Matrix embeddings;
  double tau = 1.0;
  bool has_affinity = false;
  bool has_embeddings = false;

  int n() const { return masks.n; }
  int width() const { return masks.width; }
  int height() const { return masks.height; }
};

// Checks ranges, per-pixel normalization of the mask stack (sums to 1 within
// 1e-5) and affinity symmetry (within 1e-5). Throws ValidationError.
void validate_tensors(const DetectionTensors& t);

struct DecodeParams {
  double t_m = 0.4;
  double t_c = 0.5;
  double t_a = 0.5;
  std::int64_t min_pixels = 32;
};

void validate_params(const DecodeParams& p);

// Softmax over queries of the inner product between query features f (N x D)
// and pixel features g (D planes). Per-pixel output sums to 1.
Tensor3 mask_head(const Matrix& f, const Tensor3& g);

// sigmoid(h_i . h_j / tau). Rows of h must already be normalized; the output
// is exactly symmetric.
Matrix affinity_head(const Matrix& h, double tau);

// Rows scaled to unit L2 norm; all-zero rows are left untouched.
Matrix normalize_rows(const Matrix& m);

// The affinity matrix to cluster with: the supplied one, or the affinity
// head applied to row-normalized embeddings.
Matrix effective_affinity(const DetectionTensors& t);

// Assigns each pixel to its argmax query when the winning probability
// exceeds t_m (ties go to the lowest index), then removes entities smaller
// than min_pixels or with textness below t_c. Removed entities' pixels are
// dropped, not reassigned. Clusters are left unset (-1).
std::vector<Entity> decode_masks(const DetectionTensors& t, const DecodeParams& p);

// Union-find over surviving entities: i and j are linked when
// max(A[i,j], A[j,i]) > t_a. Each connected component becomes a cluster
// labeled with its minimum entity id.
void cluster_entities(std::vector<Entity>& entities, const Matrix& affinity, double t_a);

std::vector<Entity> decode(const DetectionTensors& t, const DecodeParams& p);

// Nearest-neighbor upsampling.
BitMask upsample_mask(const BitMask& m, int out_width, int out_height);

}  // namespace hierkit
