#include "hierkit/predictions.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace hierkit {

using nlohmann::json;

std::string predictions_to_json(const PredictionSet& set) {
  PredictionSet sorted = set;
  std::sort(sorted.images.begin(), sorted.images.end(),
            [](const ImagePredictions& a, const ImagePredictions& b) {
              return a.image_id < b.image_id;
            });
  json images = json::array();
  for (ImagePredictions& image : sorted.images) {
    std::sort(image.entities.begin(), image.entities.end(),
              [](const Entity& a, const Entity& b) { return a.id < b.id; });
    json entities = json::array();
    for (const Entity& e : image.entities) {
      const RleMask rle = rle_encode(e.mask);
      entities.push_back(json{
          {"id", e.id},
          {"mask", json{{"width", rle.width}, {"height", rle.height}, {"counts", rle.counts}}},
          {"score", e.score},
          {"cluster", e.cluster},
      });
    }
    images.push_back(json{{"image_id", image.image_id}, {"entities", entities}});
  }
  json out{{"predictions", images}};
  return out.dump();
}

PredictionSet parse_predictions(const std::string& json_bytes) {
  json root;
  try {
    root = json::parse(json_bytes);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("predictions") || !root["predictions"].is_array()) {
    throw ValidationError("$: expected a top-level object with a \"predictions\" array");
  }

  PredictionSet set;
  std::unordered_set<std::string> seen_ids;
  const json& images = root["predictions"];
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string path = "$.predictions[" + std::to_string(i) + "]";
    const json& node = images[i];
    if (!node.is_object() || !node.contains("image_id") || !node["image_id"].is_string()) {
      throw ValidationError(path + ": expected an object with a string \"image_id\"");
    }
    ImagePredictions image;
    image.image_id = node["image_id"].get<std::string>();
    if (!seen_ids.insert(image.image_id).second) {
      throw ValidationError(path + ".image_id: duplicate image_id \"" + image.image_id + "\"");
    }
    if (!node.contains("entities") || !node["entities"].is_array()) {
      throw ValidationError(path + ": expected an \"entities\" array");
    }
    std::unordered_set<int> seen_entity_ids;
    const json& entities = node["entities"];
    for (std::size_t k = 0; k < entities.size(); ++k) {
      const std::string epath = path + ".entities[" + std::to_string(k) + "]";
      const json& enode = entities[k];
      if (!enode.is_object()) throw ValidationError(epath + ": expected an entity object");

      Entity e;
      if (!enode.contains("id") || !enode["id"].is_number_integer()) {
        throw ValidationError(epath + ": expected an integer \"id\"");
      }
      e.id = enode["id"].get<int>();
      if (!seen_entity_ids.insert(e.id).second) {
        throw ValidationError(epath + ".id: duplicate entity id " + std::to_string(e.id));
      }
      if (!enode.contains("score") || !enode["score"].is_number()) {
        throw ValidationError(epath + ": expected a numeric \"score\"");
      }
      e.score = enode["score"].get<double>();
      if (!(e.score >= 0.0 && e.score <= 1.0)) {
        throw ValidationError(epath + ".score: " + std::to_string(e.score) +
                              " outside [0, 1]");
      }
      if (!enode.contains("cluster") || !enode["cluster"].is_number_integer()) {
        throw ValidationError(epath + ": expected an integer \"cluster\"");
      }
      e.cluster = enode["cluster"].get<int>();
      if (e.cluster < 0) {
        throw ValidationError(epath + ".cluster: must be non-negative");
      }

      if (!enode.contains("mask") || !enode["mask"].is_object()) {
        throw ValidationError(epath + ": expected a \"mask\" object");
      }
      const json& mnode = enode["mask"];
      RleMask rle;
      const auto read_dim = [&](const char* key) -> int {
        if (!mnode.contains(key) || !mnode[key].is_number_integer() ||
            mnode[key].get<std::int64_t>() < 1) {
          throw ValidationError(epath + ".mask." + key + ": expected a positive integer");
        }
        return static_cast<int>(mnode[key].get<std::int64_t>());
      };
      rle.width = read_dim("width");
      rle.height = read_dim("height");
      if (!mnode.contains("counts") || !mnode["counts"].is_array()) {
        throw ValidationError(epath + ".mask: expected a \"counts\" array");
      }
      for (const json& c : mnode["counts"]) {
        if (!c.is_number_integer()) {
          throw ValidationError(epath + ".mask.counts: expected integers");
        }
        rle.counts.push_back(c.get<std::int64_t>());
      }
      try {
        e.mask = rle_decode(rle);
      } catch (const ValidationError& err) {
        throw ValidationError(epath + ".mask: " + err.what());
      }
      image.entities.push_back(std::move(e));
    }
    set.images.push_back(std::move(image));
  }
  return set;
}

PredictionSet parse_predictions_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_predictions(buffer.str());
}

void write_predictions_file(const std::string& path, const PredictionSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file for writing: " + path);
  out << predictions_to_json(set);
  out.put('\n');
  if (!out) throw IoError("failed writing predictions file: " + path);
}

}  // namespace hierkit
