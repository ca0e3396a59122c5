#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hierkit/annotation.hpp"
#include "hierkit/geometry.hpp"
#include "hierkit/predictions.hpp"

namespace hierkit {

// Ground-truth entry for one image: a rasterized entity plus its don't-care
// status. Don't-care regions neither reward nor penalize predictions.
struct GtEntry {
  BitMask mask;
  bool dont_care = false;
};

struct ImageTally {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double iou_sum = 0.0;

  ImageTally& operator+=(const ImageTally& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    iou_sum += other.iou_sum;
    return *this;
  }
};

struct EvalReport {
  Level level = Level::kWord;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double iou_sum = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double tightness = 0.0;
  double pq = 0.0;
};

// Matches predictions to ground truths by Hungarian maximization of summed
// IoU over pairs with IoU > 0.5. Unmatched predictions that overlap a
// don't-care region with IoU > 0.5 are discarded; the rest are false
// positives. Unmatched non-don't-care ground truths are false negatives.
ImageTally evaluate_image(const std::vector<BitMask>& pred_masks, const std::vector<GtEntry>& gt);

EvalReport make_report(const ImageTally& tally, Level level);

// Micro aggregation: per-image tallies are pooled, then the quality ratios
// are computed once globally. At paragraph level, predicted entities sharing
// a cluster id are unioned into one candidate mask per cluster.
EvalReport evaluate_dataset(const PredictionSet& preds, const GroundTruthSet& gts, Level level,
                            bool include_illegible = false, int threads = 1);

std::string report_to_json(const EvalReport& report);

}  // namespace hierkit
