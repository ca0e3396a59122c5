#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hierkit/geometry.hpp"

namespace hierkit {

struct Word {
  Polygon polygon;
  std::string text;
  bool legible = true;
  bool vertical = false;
};

struct TextLine {
  Polygon polygon;
  std::string text;
  std::vector<Word> words;  // reading order
  bool legible = true;
  bool vertical = false;
  bool handwritten = false;
};

struct Paragraph {
  Polygon polygon;
  std::vector<TextLine> lines;
  bool legible = true;
};

// Per-image annotation tree: paragraphs -> lines -> words. The tree property
// (each word in exactly one line, each line in exactly one paragraph) is
// enforced structurally by ownership.
struct HierAnnotation {
  std::string image_id;
  int image_width = 0;
  int image_height = 0;
  std::vector<Paragraph> paragraphs;
};

struct GroundTruthSet {
  std::vector<HierAnnotation> annotations;
};

enum class Level { kWord, kLine, kParagraph };

const char* level_name(Level level);
std::optional<Level> parse_level(const std::string& name);

// Collected schema/invariant violations, each carrying a JSON path.
struct ParseDiagnostics {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

// Parses and validates the hierarchical ground-truth JSON. With diag == null
// any violation throws a ValidationError listing every offending JSON path;
// with diag supplied, violations are collected and a best-effort set is
// returned. Malformed JSON always throws.
GroundTruthSet parse_ground_truth(const std::string& json_bytes, ParseDiagnostics* diag = nullptr);
GroundTruthSet parse_ground_truth_file(const std::string& path, ParseDiagnostics* diag = nullptr);

// One evaluation target: its mask and the index of the enclosing paragraph.
struct DerivedMask {
  int entity_index = 0;
  BitMask mask;
  int cluster_id = 0;
};

// Evaluation targets for one image at the given level. Word masks are
// rasterized word polygons; line and paragraph masks are unions of the
// underlying word masks. Only legible entities are emitted; entities whose
// mask rasterizes empty are dropped with a warning.
std::vector<DerivedMask> derive_masks(const HierAnnotation& a, Level level,
                                      std::vector<std::string>* warnings = nullptr);

struct EvalMasks {
  std::vector<DerivedMask> targets;
  std::vector<BitMask> dont_care;
};

// Targets plus don't-care regions (illegible entities). With
// include_illegible, illegible entities become regular targets instead.
// out_width/out_height select the raster grid; polygon coordinates are
// scaled from image dimensions when they differ.
EvalMasks derive_eval_masks(const HierAnnotation& a, Level level, bool include_illegible,
                            int out_width, int out_height,
                            std::vector<std::string>* warnings = nullptr);

struct Histogram {
  std::vector<std::int64_t> bin_edges;
  std::vector<std::int64_t> counts;
};

struct StatsReport {
  std::int64_t image_count = 0;
  std::int64_t paragraph_count = 0;
  std::int64_t line_count = 0;
  std::int64_t word_count_total = 0;
  std::int64_t word_count_legible = 0;
  double mean_words_per_image = 0.0;
  double mean_legible_words_per_image = 0.0;
  Histogram words_per_image;      // bin width 10
  Histogram words_per_line;       // bin width 1
  Histogram words_per_paragraph;  // bin width 1
  int heatmap_size = 64;
  std::vector<double> heatmap;  // row-major heatmap_size^2 weights, sums to 1 when nonempty
};

StatsReport dataset_stats(const GroundTruthSet& g);
std::string stats_to_json(const StatsReport& report);

}  // namespace hierkit
