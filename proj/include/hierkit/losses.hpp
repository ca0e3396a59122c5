#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hierkit/error.hpp"
#include "hierkit/geometry.hpp"
#include "hierkit/matching.hpp"
#include "hierkit/matrix.hpp"

namespace hierkit {

enum class BalancingMode { kVanilla, kAlpha, kFocal };

const char* balancing_mode_name(BalancingMode mode);
std::optional<BalancingMode> parse_balancing_mode(const std::string& name);

struct LossConfig {
  double alpha = 0.5;
  double alpha_l = 0.5;
  BalancingMode mode = BalancingMode::kAlpha;
  double focal_gamma = 2.0;
  std::array<double, 4> lambdas{3.0, 1.0, 1.0, 1.0};
  bool include_diagonal = true;
};

void validate_config(const LossConfig& cfg);

struct LossBreakdown {
  double l_det = 0.0;
  double l_lay = 0.0;
  double l_seg = 0.0;
  double l_ins = 0.0;
  double total = 0.0;
};

// Detection loss, mean over slots. Slot i is paired with targets[sigma[i]].
// Positive slots contribute alpha * (-y_dot*Dice - Dice_dot*log y) where the
// dotted factors are stop-gradients: the value is the plain product, but the
// analytic gradient treats them as constants. Negative slots contribute
// (1-alpha) * (-log(1-y)). Probabilities are clamped to [1e-7, 1-1e-7].
double detection_loss(const std::vector<PredictionSlot>& preds,
                      const std::vector<TargetSlot>& targets, const std::vector<int>& sigma,
                      const LossConfig& cfg);

// The stop-gradient factors captured at a base point.
struct DetectionFrozen {
  std::vector<double> textness;
  std::vector<double> dice;
};

DetectionFrozen freeze_detection_factors(const std::vector<PredictionSlot>& preds,
                                         const std::vector<TargetSlot>& targets,
                                         const std::vector<int>& sigma);

// Detection loss with the dotted factors held at the frozen values while the
// live factors follow the current inputs. Finite differences of this
// function are what the analytic gradient must reproduce.
double detection_loss_frozen(const std::vector<PredictionSlot>& preds,
                             const std::vector<TargetSlot>& targets,
                             const std::vector<int>& sigma, const LossConfig& cfg,
                             const DetectionFrozen& frozen);

struct DetectionGrad {
  std::vector<double> d_textness;
  std::vector<SoftMask> d_masks;
};

DetectionGrad detection_loss_grad(const std::vector<PredictionSlot>& preds,
                                  const std::vector<TargetSlot>& targets,
                                  const std::vector<int>& sigma, const LossConfig& cfg);

// A[i,j] = 1 iff targets i and j are both text and share a cluster id.
Matrix gt_affinity(const std::vector<TargetSlot>& targets);

// Layout loss over the pairwise affinity matrix, restricted to pairs of
// text-matched slots (diagonal included unless configured otherwise).
double layout_loss(const Matrix& affinity_pred, const std::vector<TargetSlot>& targets,
                   const std::vector<int>& sigma, const LossConfig& cfg);

Matrix layout_loss_grad(const Matrix& affinity_pred, const std::vector<TargetSlot>& targets,
                        const std::vector<int>& sigma, const LossConfig& cfg);

LossBreakdown total_loss(double l_det, double l_lay, double l_seg, double l_ins,
                         const LossConfig& cfg);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::int64_t evaluations = 0;
};

// Central finite differences (step 1e-5) against the analytic gradients.
// Every perturbed probability must sit at least 1e-3 away from 0 and 1.
// max_mask_samples < 0 checks every mask pixel.
GradCheckReport grad_check_detection(const std::vector<PredictionSlot>& preds,
                                     const std::vector<TargetSlot>& targets,
                                     const std::vector<int>& sigma, const LossConfig& cfg,
                                     int max_mask_samples = -1);

GradCheckReport grad_check_layout(const Matrix& affinity_pred,
                                  const std::vector<TargetSlot>& targets,
                                  const std::vector<int>& sigma, const LossConfig& cfg);

}  // namespace hierkit
