#include "hierkit/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace hierkit {

using nlohmann::json;

const char* level_name(Level level) {
  switch (level) {
    case Level::kWord: return "word";
    case Level::kLine: return "line";
    case Level::kParagraph: return "paragraph";
  }
  return "?";
}

std::optional<Level> parse_level(const std::string& name) {
  if (name == "word") return Level::kWord;
  if (name == "line") return Level::kLine;
  if (name == "paragraph") return Level::kParagraph;
  return std::nullopt;
}

namespace {

class Validator {
 public:
  void error(const std::string& path, const std::string& message) {
    if (errors.size() < kMaxErrors) {
      errors.push_back(path + ": " + message);
    } else if (errors.size() == kMaxErrors) {
      errors.push_back("(further errors suppressed)");
    }
  }

  std::vector<std::string> errors;

 private:
  static constexpr std::size_t kMaxErrors = 200;
};

bool get_bool(const json& node, const char* key, bool fallback, const std::string& path,
              Validator& v) {
  const auto it = node.find(key);
  if (it == node.end()) return fallback;
  if (!it->is_boolean()) {
    v.error(path + "." + key, "expected a boolean");
    return fallback;
  }
  return it->get<bool>();
}

std::string get_string(const json& node, const char* key, const std::string& path, Validator& v,
                       bool required) {
  const auto it = node.find(key);
  if (it == node.end()) {
    if (required) v.error(path, std::string("missing required key \"") + key + "\"");
    return "";
  }
  if (!it->is_string()) {
    v.error(path + "." + key, "expected a string");
    return "";
  }
  return it->get<std::string>();
}

// Parses a vertex list, clamping coordinates into [0, dim] with 1 pixel of
// tolerance. Returns an empty polygon when the node is unusable.
Polygon parse_vertices(const json& node, const std::string& path, int image_w, int image_h,
                       Validator& v) {
  Polygon poly;
  const auto it = node.find("vertices");
  if (it == node.end()) {
    v.error(path, "missing required key \"vertices\"");
    return poly;
  }
  if (!it->is_array()) {
    v.error(path + ".vertices", "expected an array of [x, y] pairs");
    return poly;
  }
  if (it->size() < 3) {
    v.error(path + ".vertices", "polygon needs at least 3 vertices, got " +
                                    std::to_string(it->size()));
    return poly;
  }
  poly.vertices.reserve(it->size());
  for (std::size_t k = 0; k < it->size(); ++k) {
    const json& vertex = (*it)[k];
    const std::string vpath = path + ".vertices[" + std::to_string(k) + "]";
    if (!vertex.is_array() || vertex.size() != 2 || !vertex[0].is_number() ||
        !vertex[1].is_number()) {
      v.error(vpath, "expected a numeric [x, y] pair");
      return Polygon{};
    }
    double x = vertex[0].get<double>();
    double y = vertex[1].get<double>();
    if (x < -1.0 || x > image_w + 1.0 || y < -1.0 || y > image_h + 1.0) {
      v.error(vpath, "coordinate (" + std::to_string(x) + ", " + std::to_string(y) +
                         ") outside image bounds " + std::to_string(image_w) + "x" +
                         std::to_string(image_h) + " beyond 1px tolerance");
      return Polygon{};
    }
    x = std::clamp(x, 0.0, static_cast<double>(image_w));
    y = std::clamp(y, 0.0, static_cast<double>(image_h));
    poly.vertices.push_back(Point{x, y});
  }
  return poly;
}

Word parse_word(const json& node, const std::string& path, int w, int h, Validator& v) {
  Word word;
  if (!node.is_object()) {
    v.error(path, "expected a word object");
    return word;
  }
  word.polygon = parse_vertices(node, path, w, h, v);
  word.text = get_string(node, "text", path, v, /*required=*/false);
  word.legible = get_bool(node, "legible", true, path, v);
  word.vertical = get_bool(node, "vertical", false, path, v);
  if (word.legible && word.text.empty()) {
    v.error(path, "legible word has empty transcription");
  }
  return word;
}

TextLine parse_line(const json& node, const std::string& path, int w, int h, Validator& v) {
  TextLine line;
  if (!node.is_object()) {
    v.error(path, "expected a line object");
    return line;
  }
  line.polygon = parse_vertices(node, path, w, h, v);
  line.text = get_string(node, "text", path, v, /*required=*/false);
  line.legible = get_bool(node, "legible", true, path, v);
  line.vertical = get_bool(node, "vertical", false, path, v);
  line.handwritten = get_bool(node, "handwritten", false, path, v);
  const auto words = node.find("words");
  if (words != node.end()) {
    if (!words->is_array()) {
      v.error(path + ".words", "expected an array");
    } else {
      for (std::size_t k = 0; k < words->size(); ++k) {
        line.words.push_back(
            parse_word((*words)[k], path + ".words[" + std::to_string(k) + "]", w, h, v));
      }
    }
  }
  if (line.words.empty() && line.legible) {
    v.error(path, "legible line has no words");
  }
  return line;
}

Paragraph parse_paragraph(const json& node, const std::string& path, int w, int h, Validator& v) {
  Paragraph para;
  if (!node.is_object()) {
    v.error(path, "expected a paragraph object");
    return para;
  }
  para.polygon = parse_vertices(node, path, w, h, v);
  para.legible = get_bool(node, "legible", true, path, v);
  const auto lines = node.find("lines");
  if (lines != node.end()) {
    if (!lines->is_array()) {
      v.error(path + ".lines", "expected an array");
    } else {
      for (std::size_t k = 0; k < lines->size(); ++k) {
        para.lines.push_back(
            parse_line((*lines)[k], path + ".lines[" + std::to_string(k) + "]", w, h, v));
      }
    }
  }
  if (para.lines.empty() && para.legible) {
    v.error(path, "legible paragraph has no lines");
  }
  return para;
}

HierAnnotation parse_annotation(const json& node, const std::string& path, Validator& v) {
  HierAnnotation a;
  if (!node.is_object()) {
    v.error(path, "expected an annotation object");
    return a;
  }
  a.image_id = get_string(node, "image_id", path, v, /*required=*/true);
  const auto read_dim = [&](const char* key) -> int {
    const auto it = node.find(key);
    if (it == node.end()) {
      v.error(path, std::string("missing required key \"") + key + "\"");
      return 0;
    }
    if (!it->is_number_integer() || it->get<std::int64_t>() < 1) {
      v.error(path + "." + key, "expected a positive integer");
      return 0;
    }
    return static_cast<int>(it->get<std::int64_t>());
  };
  a.image_width = read_dim("image_width");
  a.image_height = read_dim("image_height");
  if (a.image_width <= 0 || a.image_height <= 0) return a;
  const auto paragraphs = node.find("paragraphs");
  if (paragraphs == node.end()) {
    v.error(path, "missing required key \"paragraphs\"");
    return a;
  }
  if (!paragraphs->is_array()) {
    v.error(path + ".paragraphs", "expected an array");
    return a;
  }
  for (std::size_t k = 0; k < paragraphs->size(); ++k) {
    a.paragraphs.push_back(parse_paragraph(
        (*paragraphs)[k], path + ".paragraphs[" + std::to_string(k) + "]", a.image_width,
        a.image_height, v));
  }
  return a;
}

}  // namespace

GroundTruthSet parse_ground_truth(const std::string& json_bytes, ParseDiagnostics* diag) {
  json root;
  try {
    root = json::parse(json_bytes);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }

  Validator v;
  GroundTruthSet set;
  if (!root.is_object() || !root.contains("annotations") || !root["annotations"].is_array()) {
    v.error("$", "expected a top-level object with an \"annotations\" array");
  } else {
    const json& annotations = root["annotations"];
    std::unordered_set<std::string> seen_ids;
    for (std::size_t k = 0; k < annotations.size(); ++k) {
      const std::string path = "$.annotations[" + std::to_string(k) + "]";
      HierAnnotation a = parse_annotation(annotations[k], path, v);
      if (!a.image_id.empty() && !seen_ids.insert(a.image_id).second) {
        v.error(path + ".image_id", "duplicate image_id \"" + a.image_id + "\"");
      }
      set.annotations.push_back(std::move(a));
    }
  }

  if (diag != nullptr) {
    diag->errors.insert(diag->errors.end(), v.errors.begin(), v.errors.end());
    return set;
  }
  if (!v.errors.empty()) {
    std::string joined = "ground truth validation failed:";
    for (const std::string& e : v.errors) joined += "\n  " + e;
    throw ValidationError(joined);
  }
  return set;
}

GroundTruthSet parse_ground_truth_file(const std::string& path, ParseDiagnostics* diag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open ground-truth file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_ground_truth(buffer.str(), diag);
}

namespace {

Polygon scale_polygon(const Polygon& p, double sx, double sy) {
  Polygon out;
  out.vertices.reserve(p.vertices.size());
  for (const Point& v : p.vertices) {
    out.vertices.push_back(Point{v.x * sx, v.y * sy});
  }
  return out;
}

BitMask raster_or_empty(const Polygon& p, double sx, double sy, int w, int h) {
  if (p.vertices.size() < 3) return BitMask(w, h);
  if (sx == 1.0 && sy == 1.0) return rasterize(p, w, h);
  return rasterize(scale_polygon(p, sx, sy), w, h);
}

}  // namespace

EvalMasks derive_eval_masks(const HierAnnotation& a, Level level, bool include_illegible,
                            int out_width, int out_height, std::vector<std::string>* warnings) {
  const double sx = a.image_width > 0 ? static_cast<double>(out_width) / a.image_width : 1.0;
  const double sy = a.image_height > 0 ? static_cast<double>(out_height) / a.image_height : 1.0;

  EvalMasks out;
  const auto warn_dropped = [&](const char* kind) {
    if (warnings != nullptr) {
      warnings->push_back(a.image_id + ": dropped " + kind +
                          " with empty rasterization at level " + level_name(level));
    }
  };
  const auto emit = [&](BitMask mask, bool legible, const Polygon& own_polygon, int cluster,
                        const char* kind) {
    if (legible || include_illegible) {
      if (mask.empty()) {
        warn_dropped(kind);
        return;
      }
      DerivedMask d;
      d.entity_index = static_cast<int>(out.targets.size());
      d.mask = std::move(mask);
      d.cluster_id = cluster;
      out.targets.push_back(std::move(d));
    } else {
      // Don't-care region; fall back to the entity's own polygon when it has
      // no rasterizable words.
      if (mask.empty()) {
        mask = raster_or_empty(own_polygon, sx, sy, out_width, out_height);
      }
      if (!mask.empty()) out.dont_care.push_back(std::move(mask));
    }
  };

  for (std::size_t pi = 0; pi < a.paragraphs.size(); ++pi) {
    const Paragraph& para = a.paragraphs[pi];
    const int cluster = static_cast<int>(pi);
    BitMask para_mask(out_width, out_height);
    for (const TextLine& line : para.lines) {
      BitMask line_mask(out_width, out_height);
      for (const Word& word : line.words) {
        BitMask word_mask = raster_or_empty(word.polygon, sx, sy, out_width, out_height);
        if (level == Level::kWord) {
          emit(std::move(word_mask), word.legible, word.polygon, cluster, "word");
        } else {
          mask_or(line_mask, word_mask);
        }
      }
      if (level == Level::kLine) {
        emit(std::move(line_mask), line.legible, line.polygon, cluster, "line");
      } else if (level == Level::kParagraph) {
        mask_or(para_mask, line_mask);
      }
    }
    if (level == Level::kParagraph) {
      emit(std::move(para_mask), para.legible, para.polygon, cluster, "paragraph");
    }
  }
  return out;
}

std::vector<DerivedMask> derive_masks(const HierAnnotation& a, Level level,
                                      std::vector<std::string>* warnings) {
  return derive_eval_masks(a, level, /*include_illegible=*/false, a.image_width, a.image_height,
                           warnings)
      .targets;
}

namespace {

Histogram make_histogram(const std::vector<std::int64_t>& values, std::int64_t bin_width) {
  Histogram h;
  if (values.empty()) return h;
  const std::int64_t max_value = *std::max_element(values.begin(), values.end());
  const std::int64_t bins = max_value / bin_width + 1;
  h.counts.assign(bins, 0);
  for (std::int64_t i = 0; i <= bins; ++i) h.bin_edges.push_back(i * bin_width);
  for (std::int64_t v : values) ++h.counts[v / bin_width];
  return h;
}

json histogram_to_json(const Histogram& h) {
  return json{{"bin_edges", h.bin_edges}, {"counts", h.counts}};
}

// Centroid of the rasterized word mask, computed on a bounding-box local
// grid to keep large datasets cheap.
std::optional<Point> word_mask_centroid(const Word& word, int image_w, int image_h) {
  if (word.polygon.vertices.size() < 3) return std::nullopt;
  double min_x = word.polygon.vertices[0].x, max_x = min_x;
  double min_y = word.polygon.vertices[0].y, max_y = min_y;
  for (const Point& v : word.polygon.vertices) {
    min_x = std::min(min_x, v.x);
    max_x = std::max(max_x, v.x);
    min_y = std::min(min_y, v.y);
    max_y = std::max(max_y, v.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  const int x1 = std::min(image_w - 1, static_cast<int>(std::ceil(max_x)));
  const int y1 = std::min(image_h - 1, static_cast<int>(std::ceil(max_y)));
  if (x1 < x0 || y1 < y0) return std::nullopt;

  Polygon local;
  local.vertices.reserve(word.polygon.vertices.size());
  for (const Point& v : word.polygon.vertices) {
    local.vertices.push_back(Point{v.x - x0, v.y - y0});
  }
  const BitMask mask = rasterize(local, x1 - x0 + 1, y1 - y0 + 1);
  std::int64_t n = 0;
  double sum_x = 0.0, sum_y = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.get(x, y)) continue;
      ++n;
      sum_x += x0 + x + 0.5;
      sum_y += y0 + y + 0.5;
    }
  }
  if (n == 0) return std::nullopt;
  return Point{sum_x / n, sum_y / n};
}

}  // namespace

StatsReport dataset_stats(const GroundTruthSet& g) {
  StatsReport r;
  r.image_count = static_cast<std::int64_t>(g.annotations.size());
  r.heatmap.assign(static_cast<std::size_t>(r.heatmap_size) * r.heatmap_size, 0.0);

  std::vector<std::int64_t> per_image, per_line, per_paragraph;
  double heat_total = 0.0;
  for (const HierAnnotation& a : g.annotations) {
    std::int64_t image_words = 0;
    for (const Paragraph& para : a.paragraphs) {
      ++r.paragraph_count;
      std::int64_t paragraph_words = 0;
      for (const TextLine& line : para.lines) {
        ++r.line_count;
        per_line.push_back(static_cast<std::int64_t>(line.words.size()));
        paragraph_words += static_cast<std::int64_t>(line.words.size());
        for (const Word& word : line.words) {
          ++r.word_count_total;
          if (word.legible) ++r.word_count_legible;
          if (const auto c = word_mask_centroid(word, a.image_width, a.image_height)) {
            const int cx = std::min(r.heatmap_size - 1,
                                    static_cast<int>(c->x / a.image_width * r.heatmap_size));
            const int cy = std::min(r.heatmap_size - 1,
                                    static_cast<int>(c->y / a.image_height * r.heatmap_size));
            r.heatmap[static_cast<std::size_t>(cy) * r.heatmap_size + cx] += 1.0;
            heat_total += 1.0;
          }
        }
      }
      per_paragraph.push_back(paragraph_words);
      image_words += paragraph_words;
    }
    per_image.push_back(image_words);
  }

  if (r.image_count > 0) {
    r.mean_words_per_image = static_cast<double>(r.word_count_total) / r.image_count;
    r.mean_legible_words_per_image = static_cast<double>(r.word_count_legible) / r.image_count;
  }
  if (heat_total > 0.0) {
    for (double& w : r.heatmap) w /= heat_total;
  }
  r.words_per_image = make_histogram(per_image, 10);
  r.words_per_line = make_histogram(per_line, 1);
  r.words_per_paragraph = make_histogram(per_paragraph, 1);
  return r;
}

std::string stats_to_json(const StatsReport& r) {
  json out{
      {"image_count", r.image_count},
      {"paragraph_count", r.paragraph_count},
      {"line_count", r.line_count},
      {"word_count_total", r.word_count_total},
      {"word_count_legible", r.word_count_legible},
      {"mean_words_per_image", r.mean_words_per_image},
      {"mean_legible_words_per_image", r.mean_legible_words_per_image},
      {"hist_words_per_image", histogram_to_json(r.words_per_image)},
      {"hist_words_per_line", histogram_to_json(r.words_per_line)},
      {"hist_words_per_paragraph", histogram_to_json(r.words_per_paragraph)},
      {"heatmap", json{{"size", r.heatmap_size}, {"weights", r.heatmap}}},
  };
  return out.dump();
}

}  // namespace hierkit
