#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hierkit/decoder.hpp"
#include "hierkit/error.hpp"

namespace hierkit {

// Flat f32 tensor as stored in the binary container: magic "UDT1", a
// little-endian u32 header length, a JSON header naming dtype/shape/order,
// then the payload as little-endian 32-bit floats in row-major order.
struct TensorData {
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

TensorData read_tensor(const std::string& path);
void write_tensor(const std::string& path, const std::vector<std::int64_t>& shape,
                  const std::vector<float>& values);

// One image's tensor files. Paths are relative to the manifest directory.
// Either affinity or embeddings (+ tau) must be present, not both.
struct ManifestEntry {
  std::string image_id;
  std::string masks_path;
  std::string textness_path;
  std::string affinity_path;
  std::string embeddings_path;
  double tau = 1.0;
  int image_width = 0;
  int image_height = 0;
};

struct Manifest {
  std::string base_dir;
  std::vector<ManifestEntry> entries;
};

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);

// Reads and cross-validates the tensor files for one manifest entry.
DetectionTensors load_tensors(const Manifest& manifest, const ManifestEntry& entry);

}  // namespace hierkit
