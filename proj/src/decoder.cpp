#include "hierkit/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hierkit/union_find.hpp"

namespace hierkit {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

void check_unit_range(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0,
            std::string(what) + " entry " + std::to_string(v) + " outside [0, 1]");
  }
}

}  // namespace

void validate_tensors(const DetectionTensors& t) {
  const int n = t.masks.n;
  require(n > 0 && t.masks.width > 0 && t.masks.height > 0, "empty mask tensor");
  require(static_cast<int>(t.textness.size()) == n,
          "textness length " + std::to_string(t.textness.size()) +
              " does not match query count " + std::to_string(n));
  check_unit_range(t.masks.values, "mask");
  check_unit_range(t.textness, "textness");

  for (int y = 0; y < t.masks.height; ++y) {
    for (int x = 0; x < t.masks.width; ++x) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += t.masks.at(i, x, y);
      require(std::abs(sum - 1.0) <= 1e-5,
              "mask probabilities at pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                  ") sum to " + std::to_string(sum) + ", expected 1");
    }
  }

  require(t.has_affinity != t.has_embeddings,
          "exactly one of affinity and embeddings must be supplied");
  if (t.has_affinity) {
    require(t.affinity.rows == n && t.affinity.cols == n,
            "affinity must be " + std::to_string(n) + "x" + std::to_string(n));
    check_unit_range(t.affinity.data, "affinity");
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        require(std::abs(t.affinity.at(i, j) - t.affinity.at(j, i)) <= 1e-5,
                "affinity asymmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  } else {
    require(t.embeddings.rows == n, "embeddings must have one row per query");
    require(t.embeddings.cols > 0, "embeddings need at least one column");
    require(std::isfinite(t.tau) && t.tau > 0.0, "temperature must be positive");
    for (double v : t.embeddings.data) {
      require(std::isfinite(v), "non-finite embedding entry");
    }
  }
}

void validate_params(const DecodeParams& p) {
  const auto check01 = [](double v, const char* name) {
    if (!(std::isfinite(v) && v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string(name) + " must lie in [0, 1]");
    }
  };
  check01(p.t_m, "t_m");
  check01(p.t_c, "t_c");
  check01(p.t_a, "t_a");
  if (p.min_pixels < 0) throw ValidationError("min_pixels must be non-negative");
}

Tensor3 mask_head(const Matrix& f, const Tensor3& g) {
  require(f.cols == g.n, "query feature dimension " + std::to_string(f.cols) +
                             " does not match pixel feature planes " + std::to_string(g.n));
  require(f.rows > 0, "mask head needs at least one query");
  for (double v : f.data) require(std::isfinite(v), "non-finite query feature");
  for (double v : g.values) require(std::isfinite(v), "non-finite pixel feature");

  const int n = f.rows, d = f.cols;
  Tensor3 out(n, g.height, g.width);
  std::vector<double> logits(n);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int k = 0; k < d; ++k) dot += f.at(i, k) * g.at(k, x, y);
        logits[i] = dot;
      }
      const double peak = *std::max_element(logits.begin(), logits.end());
      double denom = 0.0;
      for (int i = 0; i < n; ++i) {
        logits[i] = std::exp(logits[i] - peak);
        denom += logits[i];
      }
      for (int i = 0; i < n; ++i) out.at(i, x, y) = logits[i] / denom;
    }
  }
  return out;
}

Matrix affinity_head(const Matrix& h, double tau) {
  require(std::isfinite(tau) && tau > 0.0, "temperature must be positive");
  require(h.rows > 0 && h.cols > 0, "empty layout features");
  for (double v : h.data) require(std::isfinite(v), "non-finite layout feature");

  const int n = h.rows;
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double dot = 0.0;
      for (int k = 0; k < h.cols; ++k) dot += h.at(i, k) * h.at(j, k);
      const double a = 1.0 / (1.0 + std::exp(-dot / tau));
      out.at(i, j) = a;
      out.at(j, i) = a;
    }
  }
  return out;
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (int i = 0; i < m.rows; ++i) {
    double norm_sq = 0.0;
    for (int k = 0; k < m.cols; ++k) norm_sq += m.at(i, k) * m.at(i, k);
    if (norm_sq > 0.0) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (int k = 0; k < m.cols; ++k) out.at(i, k) *= inv;
    }
  }
  return out;
}

Matrix effective_affinity(const DetectionTensors& t) {
  if (t.has_affinity) return t.affinity;
  return affinity_head(normalize_rows(t.embeddings), t.tau);
}

std::vector<Entity> decode_masks(const DetectionTensors& t, const DecodeParams& p) {
  validate_params(p);
  const int n = t.n(), w = t.width(), h = t.height();

  std::vector<BitMask> masks(n, BitMask(w, h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double best_value = t.masks.at(0, x, y);
      for (int i = 1; i < n; ++i) {
        const double v = t.masks.at(i, x, y);
        if (v > best_value) {
          best_value = v;
          best = i;
        }
      }
      if (best_value > p.t_m) masks[best].set(x, y);
    }
  }

  std::vector<Entity> entities;
  for (int i = 0; i < n; ++i) {
    const std::int64_t area = masks[i].popcount();
    if (area == 0 || area < p.min_pixels || t.textness[i] < p.t_c) continue;
    Entity e;
    e.id = i;
    e.mask = std::move(masks[i]);
    e.score = t.textness[i];
    e.cluster = -1;
    entities.push_back(std::move(e));
  }
  return entities;
}

void cluster_entities(std::vector<Entity>& entities, const Matrix& affinity, double t_a) {
  for (const Entity& e : entities) {
    if (e.id < 0 || e.id >= affinity.rows || affinity.rows != affinity.cols) {
      throw ValidationError("entity id " + std::to_string(e.id) +
                            " outside affinity matrix of size " + std::to_string(affinity.rows));
    }
  }
  const int k = static_cast<int>(entities.size());
  DisjointSet ds(k);
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      const int i = entities[a].id, j = entities[b].id;
      const double link = std::max(affinity.at(i, j), affinity.at(j, i));
      if (link > t_a) ds.merge(a, b);
    }
  }
  std::map<int, int> label;
  for (int a = 0; a < k; ++a) {
    const int root = ds.find(a);
    const auto it = label.find(root);
    if (it == label.end() || entities[a].id < it->second) label[root] = entities[a].id;
  }
  for (int a = 0; a < k; ++a) entities[a].cluster = label[ds.find(a)];
}

std::vector<Entity> decode(const DetectionTensors& t, const DecodeParams& p) {
  validate_tensors(t);
  std::vector<Entity> entities = decode_masks(t, p);
  const Matrix affinity = effective_affinity(t);
  cluster_entities(entities, affinity, p.t_a);
  return entities;
}

BitMask upsample_mask(const BitMask& m, int out_width, int out_height) {
  if (out_width == m.width() && out_height == m.height()) return m;
  if (out_width <= 0 || out_height <= 0) {
    throw ValidationError("upsample target must be positive");
  }
  BitMask out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    const int sy = static_cast<int>(static_cast<std::int64_t>(y) * m.height() / out_height);
    for (int x = 0; x < out_width; ++x) {
      const int sx = static_cast<int>(static_cast<std::int64_t>(x) * m.width() / out_width);
      if (m.get(sx, sy)) out.set(x, y);
    }
  }
  return out;
}

}  // namespace hierkit
