#pragma once

#include <vector>

#include "hierkit/geometry.hpp"
#include "hierkit/matrix.hpp"

namespace hierkit {

// One of the N prediction slots: a soft mask and a textness probability.
struct PredictionSlot {
  SoftMask soft_mask;
  double textness = 0.0;
};

// One ground-truth slot. Padding slots have is_text=0 and an empty mask;
// cluster_id is meaningful only when is_text=1.
struct TargetSlot {
  BitMask mask;
  int is_text = 0;
  int cluster_id = -1;
};

struct Assignment {
  std::vector<int> sigma;  // prediction i is paired with target sigma[i]
  double total_similarity = 0.0;
};

// PQ-style similarity: [y^*y + (1-y^)(1-y)] * Dice(m^, m). With the
// empty-mask Dice convention any slot scores 0 against a padding target.
double similarity(const PredictionSlot& pred, const TargetSlot& target);

Matrix similarity_matrix(const std::vector<PredictionSlot>& preds,
                         const std::vector<TargetSlot>& targets);

// Appends padding slots after the real targets until the list has length n.
// Padding masks take the dimensions of the first real target, or the given
// width/height when there are no real targets. More real targets than n is
// an error (raise the query count N).
std::vector<TargetSlot> pad_targets(std::vector<TargetSlot> real_targets, int n, int width = 0,
                                    int height = 0);

// Maximum-total-similarity assignment via the Hungarian algorithm, run as a
// minimization on (1 - sim). Ties are broken toward the lexicographically
// smallest sigma. total_similarity is the row-ordered sum of the selected
// entries.
Assignment solve_max_assignment(const Matrix& sim);

// Exhaustive oracle, same tie-break rule. Requires sim.rows <= 8.
Assignment brute_force_max_assignment(const Matrix& sim);

Assignment match(const std::vector<PredictionSlot>& preds,
                 const std::vector<TargetSlot>& targets);
Assignment brute_force_match(const std::vector<PredictionSlot>& preds,
                             const std::vector<TargetSlot>& targets);

}  // namespace hierkit
