#include "hierkit/tensor_io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace hierkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'U', 'D', 'T', '1'};

void append_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string header_json(const std::vector<std::int64_t>& shape) {
  std::string h = "{\"dtype\":\"f32\",\"shape\":[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) h += ',';
    h += std::to_string(shape[i]);
  }
  h += "],\"order\":\"row-major\"}";
  return h;
}

}  // namespace

void write_tensor(const std::string& path, const std::vector<std::int64_t>& shape,
                  const std::vector<float>& values) {
  std::size_t expected = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ValidationError("negative tensor dimension in " + path);
    expected *= static_cast<std::size_t>(d);
  }
  if (shape.empty() || expected != values.size()) {
    throw ValidationError("tensor shape does not match value count for " + path);
  }

  std::string bytes;
  const std::string header = header_json(shape);
  bytes.reserve(8 + header.size() + values.size() * 4);
  bytes.append(kMagic, 4);
  append_u32_le(bytes, static_cast<std::uint32_t>(header.size()));
  bytes += header;
  for (float f : values) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    append_u32_le(bytes, u);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open tensor file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing tensor file: " + path);
}

TensorData read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ValidationError("not a tensor container (bad magic): " + path);
  }
  const std::uint32_t header_len = read_u32_le(p + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) {
    throw ValidationError("truncated tensor header: " + path);
  }

  json header;
  try {
    header = json::parse(bytes.substr(8, header_len));
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed tensor header in " + path + ": " + e.what());
  }
  if (!header.is_object() || header.value("dtype", "") != "f32" ||
      header.value("order", "") != "row-major" || !header.contains("shape") ||
      !header["shape"].is_array()) {
    throw ValidationError("unsupported tensor header in " + path);
  }

  TensorData t;
  std::size_t count = 1;
  for (const json& d : header["shape"]) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 0) {
      throw ValidationError("bad tensor shape in " + path);
    }
    t.shape.push_back(d.get<std::int64_t>());
    count *= static_cast<std::size_t>(t.shape.back());
  }
  if (t.shape.empty()) throw ValidationError("bad tensor shape in " + path);

  const std::size_t payload_offset = 8 + header_len;
  if (bytes.size() - payload_offset != count * 4) {
    throw ValidationError("tensor payload size mismatch in " + path);
  }
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t u = read_u32_le(p + payload_offset + i * 4);
    float f;
    std::memcpy(&f, &u, 4);
    t.values[i] = f;
  }
  return t;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed manifest JSON in " + path + ": " + e.what());
  }
  if (!root.is_object() || !root.contains("images") || !root["images"].is_array()) {
    throw ValidationError(path + ": expected a top-level object with an \"images\" array");
  }

  Manifest m;
  m.base_dir = fs::path(path).parent_path().string();
  for (std::size_t i = 0; i < root["images"].size(); ++i) {
    const json& node = root["images"][i];
    const std::string where = path + ": images[" + std::to_string(i) + "]";
    if (!node.is_object()) throw ValidationError(where + ": expected an object");
    ManifestEntry e;
    const auto need_string = [&](const char* key) -> std::string {
      if (!node.contains(key) || !node[key].is_string()) {
        throw ValidationError(where + ": expected a string \"" + key + "\"");
      }
      return node[key].get<std::string>();
    };
    e.image_id = need_string("image_id");
    e.masks_path = need_string("masks");
    e.textness_path = need_string("textness");
    const bool has_affinity = node.contains("affinity");
    const bool has_embeddings = node.contains("embeddings");
    if (has_affinity == has_embeddings) {
      throw ValidationError(where + ": exactly one of \"affinity\" and \"embeddings\" required");
    }
    if (has_affinity) {
      e.affinity_path = need_string("affinity");
    } else {
      e.embeddings_path = need_string("embeddings");
      if (node.contains("tau")) {
        if (!node["tau"].is_number()) throw ValidationError(where + ": \"tau\" must be numeric");
        e.tau = node["tau"].get<double>();
      }
    }
    const auto optional_dim = [&](const char* key) -> int {
      if (!node.contains(key)) return 0;
      if (!node[key].is_number_integer() || node[key].get<std::int64_t>() < 1) {
        throw ValidationError(where + ": \"" + key + "\" must be a positive integer");
      }
      return static_cast<int>(node[key].get<std::int64_t>());
    };
    e.image_width = optional_dim("image_width");
    e.image_height = optional_dim("image_height");
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  Manifest sorted = manifest;
  std::sort(sorted.entries.begin(), sorted.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.image_id < b.image_id; });
  json images = json::array();
  for (const ManifestEntry& e : sorted.entries) {
    json node{{"image_id", e.image_id}, {"masks", e.masks_path}, {"textness", e.textness_path}};
    if (!e.affinity_path.empty()) {
      node["affinity"] = e.affinity_path;
    } else {
      node["embeddings"] = e.embeddings_path;
      node["tau"] = e.tau;
    }
    if (e.image_width > 0) node["image_width"] = e.image_width;
    if (e.image_height > 0) node["image_height"] = e.image_height;
    images.push_back(std::move(node));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  out << json{{"images", images}}.dump() << "\n";
  if (!out) throw IoError("failed writing manifest: " + path);
}

namespace {

std::string resolve(const Manifest& m, const std::string& rel) {
  const fs::path p(rel);
  if (p.is_absolute() || m.base_dir.empty()) return rel;
  return (fs::path(m.base_dir) / p).string();
}

}  // namespace

DetectionTensors load_tensors(const Manifest& manifest, const ManifestEntry& entry) {
  const TensorData masks = read_tensor(resolve(manifest, entry.masks_path));
  if (masks.shape.size() != 3) {
    throw ValidationError(entry.masks_path + ": mask tensor must have shape [N, H, W]");
  }

  DetectionTensors t;
  const int n = static_cast<int>(masks.shape[0]);
  const int h = static_cast<int>(masks.shape[1]);
  const int w = static_cast<int>(masks.shape[2]);
  t.masks = Tensor3(n, h, w);
  std::copy(masks.values.begin(), masks.values.end(), t.masks.values.begin());

  const TensorData textness = read_tensor(resolve(manifest, entry.textness_path));
  if (textness.shape.size() != 1 || textness.shape[0] != n) {
    throw ValidationError(entry.textness_path + ": textness tensor must have shape [" +
                          std::to_string(n) + "]");
  }
  t.textness.assign(textness.values.begin(), textness.values.end());

  if (!entry.affinity_path.empty()) {
    const TensorData affinity = read_tensor(resolve(manifest, entry.affinity_path));
    if (affinity.shape.size() != 2 || affinity.shape[0] != n || affinity.shape[1] != n) {
      throw ValidationError(entry.affinity_path + ": affinity tensor must have shape [" +
                            std::to_string(n) + ", " + std::to_string(n) + "]");
    }
    t.affinity = Matrix(n, n);
    std::copy(affinity.values.begin(), affinity.values.end(), t.affinity.data.begin());
    t.has_affinity = true;
  } else {
    const TensorData emb = read_tensor(resolve(manifest, entry.embeddings_path));
    if (emb.shape.size() != 2 || emb.shape[0] != n) {
      throw ValidationError(entry.embeddings_path + ": embeddings tensor must have shape [" +
                            std::to_string(n) + ", C]");
    }
    t.embeddings = Matrix(n, static_cast<int>(emb.shape[1]));
    std::copy(emb.values.begin(), emb.values.end(), t.embeddings.data.begin());
    t.tau = entry.tau;
    t.has_embeddings = true;
  }
  return t;
}

}  // namespace hierkit
