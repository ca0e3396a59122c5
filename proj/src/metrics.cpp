#include "hierkit/metrics.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "hierkit/matching.hpp"
#include "hierkit/matrix.hpp"
#include "hierkit/parallel.hpp"

namespace hierkit {

ImageTally evaluate_image(const std::vector<BitMask>& pred_masks, const std::vector<GtEntry>& gt) {
  int width = -1, height = -1;
  const auto check_dims = [&](const BitMask& m) {
    if (width < 0) {
      width = m.width();
      height = m.height();
    } else if (m.width() != width || m.height() != height) {
      throw ValidationError("mask dimension mismatch: " + std::to_string(m.width()) + "x" +
                            std::to_string(m.height()) + " vs " + std::to_string(width) + "x" +
                            std::to_string(height));
    }
  };
  for (const BitMask& m : pred_masks) check_dims(m);
  for (const GtEntry& e : gt) check_dims(e.mask);

  std::vector<int> care_indices;
  std::vector<const BitMask*> dont_care;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (gt[j].dont_care) {
      dont_care.push_back(&gt[j].mask);
    } else {
      care_indices.push_back(static_cast<int>(j));
    }
  }

  const int p = static_cast<int>(pred_masks.size());
  const int g = static_cast<int>(care_indices.size());

  ImageTally tally;
  std::vector<bool> pred_matched(p, false);
  std::vector<bool> gt_matched(g, false);

  if (p > 0 && g > 0) {
    const int n = std::max(p, g);
    Matrix iou_matrix(n, n);
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < g; ++j) {
        const double v = iou(pred_masks[i], gt[care_indices[j]].mask);
        if (v > 0.5) iou_matrix.at(i, j) = v;
      }
    }
    const Assignment assignment = solve_max_assignment(iou_matrix);
    for (int i = 0; i < p; ++i) {
      const int j = assignment.sigma[i];
      if (j < g && iou_matrix.at(i, j) > 0.5) {
        pred_matched[i] = true;
        gt_matched[j] = true;
        ++tally.tp;
        tally.iou_sum += iou_matrix.at(i, j);
      }
    }
  }

  for (int i = 0; i < p; ++i) {
    if (pred_matched[i]) continue;
    bool discarded = false;
    for (const BitMask* dc : dont_care) {
      if (iou(pred_masks[i], *dc) > 0.5) {
        discarded = true;
        break;
      }
    }
    if (!discarded) ++tally.fp;
  }
  for (int j = 0; j < g; ++j) {
    if (!gt_matched[j]) ++tally.fn;
  }
  return tally;
}

EvalReport make_report(const ImageTally& tally, Level level) {
  EvalReport r;
  r.level = level;
  r.tp = tally.tp;
  r.fp = tally.fp;
  r.fn = tally.fn;
  r.iou_sum = tally.iou_sum;
  const auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  r.precision = ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fp));
  r.recall = ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fn));
  r.f1 = ratio(2.0 * static_cast<double>(r.tp), static_cast<double>(2 * r.tp + r.fp + r.fn));
  r.tightness = ratio(r.iou_sum, static_cast<double>(r.tp));
  r.pq = ratio(r.iou_sum, static_cast<double>(r.tp) + 0.5 * static_cast<double>(r.fp + r.fn));
  return r;
}

namespace {

std::vector<BitMask> prediction_masks_at_level(const ImagePredictions& image, Level level,
                                               int width, int height) {
  for (const Entity& e : image.entities) {
    if (e.mask.width() != width || e.mask.height() != height) {
      throw ValidationError("image " + image.image_id + ": prediction mask is " +
                            std::to_string(e.mask.width()) + "x" +
                            std::to_string(e.mask.height()) + " but the image is " +
                            std::to_string(width) + "x" + std::to_string(height));
    }
  }
  std::vector<BitMask> masks;
  if (level != Level::kParagraph) {
    masks.reserve(image.entities.size());
    for (const Entity& e : image.entities) masks.push_back(e.mask);
    return masks;
  }
  std::map<int, BitMask> by_cluster;
  for (const Entity& e : image.entities) {
    if (e.cluster < 0) {
      throw ValidationError("image " + image.image_id + ": entity " + std::to_string(e.id) +
                            " has no cluster id, required for paragraph-level evaluation");
    }
    auto [it, inserted] = by_cluster.try_emplace(e.cluster, BitMask(width, height));
    mask_or(it->second, e.mask);
  }
  masks.reserve(by_cluster.size());
  for (auto& [cluster, mask] : by_cluster) masks.push_back(std::move(mask));
  return masks;
}

}  // namespace

EvalReport evaluate_dataset(const PredictionSet& preds, const GroundTruthSet& gts, Level level,
                            bool include_illegible, int threads) {
  std::unordered_map<std::string, const ImagePredictions*> preds_by_id;
  for (const ImagePredictions& image : preds.images) {
    preds_by_id.emplace(image.image_id, &image);
  }
  std::unordered_map<std::string, int> gt_ids;
  for (std::size_t i = 0; i < gts.annotations.size(); ++i) {
    gt_ids.emplace(gts.annotations[i].image_id, static_cast<int>(i));
  }
  for (const ImagePredictions& image : preds.images) {
    if (!gt_ids.count(image.image_id)) {
      throw ValidationError("predictions contain unknown image_id \"" + image.image_id + "\"");
    }
  }

  std::vector<ImageTally> tallies(gts.annotations.size());
  parallel_for(gts.annotations.size(), threads, [&](std::size_t i) {
    const HierAnnotation& a = gts.annotations[i];
    const EvalMasks derived = derive_eval_masks(a, level, include_illegible, a.image_width,
                                                a.image_height, nullptr);
    std::vector<GtEntry> gt;
    gt.reserve(derived.targets.size() + derived.dont_care.size());
    for (const DerivedMask& d : derived.targets) gt.push_back(GtEntry{d.mask, false});
    for (const BitMask& m : derived.dont_care) gt.push_back(GtEntry{m, true});

    std::vector<BitMask> pred_masks;
    const auto it = preds_by_id.find(a.image_id);
    if (it != preds_by_id.end()) {
      pred_masks = prediction_masks_at_level(*it->second, level, a.image_width, a.image_height);
    }
    tallies[i] = evaluate_image(pred_masks, gt);
  });

  ImageTally total;
  for (const ImageTally& t : tallies) total += t;
  return make_report(total, level);
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json out{
      {"level", level_name(r.level)},
      {"tp", r.tp},
      {"fp", r.fp},
      {"fn", r.fn},
      {"iou_sum", r.iou_sum},
      {"precision", r.precision},
      {"recall", r.recall},
      {"f1", r.f1},
      {"tightness", r.tightness},
      {"pq", r.pq},
  };
  return out.dump();
}

}  // namespace hierkit
