#pragma once

#include <string>
#include <vector>

#include "hierkit/error.hpp"
#include "hierkit/geometry.hpp"

namespace hierkit {

// One decoded text entity: a binary mask, a detection score and the layout
// cluster it belongs to.
struct Entity {
  int id = 0;
  BitMask mask;
  double score = 0.0;
  int cluster = 0;
};

struct ImagePredictions {
  std::string image_id;
  std::vector<Entity> entities;
};

struct PredictionSet {
  std::vector<ImagePredictions> images;
};

// Canonical JSON serialization. Images are sorted by image_id and entities by
// id, so serializing the same logical content always yields identical bytes.
std::string predictions_to_json(const PredictionSet& set);
PredictionSet parse_predictions(const std::string& json_bytes);
PredictionSet parse_predictions_file(const std::string& path);
void write_predictions_file(const std::string& path, const PredictionSet& set);

}  // namespace hierkit
