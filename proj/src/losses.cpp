#include "hierkit/losses.hpp"

#include <algorithm>
#include <cmath>

namespace hierkit {

namespace {

constexpr double kEps = 1e-7;
constexpr double kFdStep = 1e-5;
constexpr double kFdMargin = 1e-3;

double clamp_prob(double p) { return std::clamp(p, kEps, 1.0 - kEps); }

void check_sigma(std::size_t n_preds, std::size_t n_targets, const std::vector<int>& sigma) {
  if (n_preds != n_targets || sigma.size() != n_preds) {
    throw ValidationError("slot counts disagree: " + std::to_string(n_preds) + " predictions, " +
                          std::to_string(n_targets) + " targets, sigma of length " +
                          std::to_string(sigma.size()));
  }
  std::vector<bool> used(sigma.size(), false);
  for (int s : sigma) {
    if (s < 0 || static_cast<std::size_t>(s) >= sigma.size() || used[s]) {
      throw ValidationError("sigma is not a permutation");
    }
    used[s] = true;
  }
}

struct PairWeights {
  double w_pos = 0.0;
  double w_neg = 0.0;
};

}  // namespace

const char* balancing_mode_name(BalancingMode mode) {
  switch (mode) {
    case BalancingMode::kVanilla: return "vanilla";
    case BalancingMode::kAlpha: return "alpha";
    case BalancingMode::kFocal: return "focal";
  }
  return "?";
}

std::optional<BalancingMode> parse_balancing_mode(const std::string& name) {
  if (name == "vanilla") return BalancingMode::kVanilla;
  if (name == "alpha") return BalancingMode::kAlpha;
  if (name == "focal") return BalancingMode::kFocal;
  return std::nullopt;
}

void validate_config(const LossConfig& cfg) {
  const auto in01 = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!in01(cfg.alpha)) throw ValidationError("alpha must lie in [0, 1]");
  if (!in01(cfg.alpha_l)) throw ValidationError("alpha_l must lie in [0, 1]");
  if (!(std::isfinite(cfg.focal_gamma) && cfg.focal_gamma >= 0.0)) {
    throw ValidationError("focal_gamma must be non-negative");
  }
  for (double l : cfg.lambdas) {
    if (!(std::isfinite(l) && l >= 0.0)) throw ValidationError("lambdas must be non-negative");
  }
}

double detection_loss(const std::vector<PredictionSlot>& preds,
                      const std::vector<TargetSlot>& targets, const std::vector<int>& sigma,
                      const LossConfig& cfg) {
  validate_config(cfg);
  check_sigma(preds.size(), targets.size(), sigma);
  const std::size_t n = preds.size();
  if (n == 0) return 0.0;

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const TargetSlot& t = targets[sigma[i]];
    const double y_hat = clamp_prob(preds[i].textness);
    if (t.is_text) {
      const double d = dice(preds[i].soft_mask, t.mask);
      sum += cfg.alpha * (-y_hat * d - d * std::log(y_hat));
    } else {
      sum += (1.0 - cfg.alpha) * (-std::log(1.0 - y_hat));
    }
  }
  return sum / static_cast<double>(n);
}

DetectionFrozen freeze_detection_factors(const std::vector<PredictionSlot>& preds,
                                         const std::vector<TargetSlot>& targets,
                                         const std::vector<int>& sigma) {
  check_sigma(preds.size(), targets.size(), sigma);
  DetectionFrozen f;
  f.textness.resize(preds.size(), 0.0);
  f.dice.resize(preds.size(), 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const TargetSlot& t = targets[sigma[i]];
    f.textness[i] = clamp_prob(preds[i].textness);
    f.dice[i] = t.is_text ? dice(preds[i].soft_mask, t.mask) : 0.0;
  }
  return f;
}

double detection_loss_frozen(const std::vector<PredictionSlot>& preds,
                             const std::vector<TargetSlot>& targets,
                             const std::vector<int>& sigma, const LossConfig& cfg,
                             const DetectionFrozen& frozen) {
  validate_config(cfg);
  check_sigma(preds.size(), targets.size(), sigma);
  const std::size_t n = preds.size();
  if (n == 0) return 0.0;
  if (frozen.textness.size() != n || frozen.dice.size() != n) {
    throw ValidationError("frozen factors do not match slot count");
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const TargetSlot& t = targets[sigma[i]];
    const double y_hat = clamp_prob(preds[i].textness);
    if (t.is_text) {
      const double d = dice(preds[i].soft_mask, t.mask);
      sum += cfg.alpha * (-frozen.textness[i] * d - frozen.dice[i] * std::log(y_hat));
    } else {
      sum += (1.0 - cfg.alpha) * (-std::log(1.0 - y_hat));
    }
  }
  return sum / static_cast<double>(n);
}

DetectionGrad detection_loss_grad(const std::vector<PredictionSlot>& preds,
                                  const std::vector<TargetSlot>& targets,
                                  const std::vector<int>& sigma, const LossConfig& cfg) {
  validate_config(cfg);
  check_sigma(preds.size(), targets.size(), sigma);
  const std::size_t n = preds.size();

  DetectionGrad g;
  g.d_textness.resize(n, 0.0);
  g.d_masks.reserve(n);
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const TargetSlot& t = targets[sigma[i]];
    const SoftMask& m_hat = preds[i].soft_mask;
    SoftMask d_mask(m_hat.width, m_hat.height);
    const double y_hat = clamp_prob(preds[i].textness);
    if (t.is_text) {
      const double d = dice(m_hat, t.mask);
      g.d_textness[i] = cfg.alpha * inv_n * (-d / y_hat);
      const double s = m_hat.sum() + static_cast<double>(t.mask.popcount());
      if (s > 0.0) {
        const double scale = cfg.alpha * inv_n * (-y_hat) / s;
        for (int y = 0; y < m_hat.height; ++y) {
          for (int x = 0; x < m_hat.width; ++x) {
            const double m_p = t.mask.get(x, y) ? 1.0 : 0.0;
            d_mask.at(x, y) = scale * (2.0 * m_p - d);
          }
        }
      }
    } else {
      g.d_textness[i] = (1.0 - cfg.alpha) * inv_n / (1.0 - y_hat);
    }
    g.d_masks.push_back(std::move(d_mask));
  }
  return g;
}

Matrix gt_affinity(const std::vector<TargetSlot>& targets) {
  const int n = static_cast<int>(targets.size());
  for (const TargetSlot& t : targets) {
    if (t.is_text && t.cluster_id < 0) {
      throw ValidationError("text target without a cluster id");
    }
  }
  Matrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool same = targets[i].is_text && targets[j].is_text &&
                        targets[i].cluster_id == targets[j].cluster_id;
      a.at(i, j) = same ? 1.0 : 0.0;
    }
  }
  return a;
}

namespace {

struct LayoutPairs {
  std::vector<bool> text;
  std::vector<int> cluster;
  std::int64_t pos_count = 0;
  std::int64_t neg_count = 0;
};

LayoutPairs layout_pairs(const Matrix& affinity_pred, const std::vector<TargetSlot>& targets,
                         const std::vector<int>& sigma, const LossConfig& cfg) {
  check_sigma(sigma.size(), targets.size(), sigma);
  const int n = static_cast<int>(sigma.size());
  if (affinity_pred.rows != n || affinity_pred.cols != n) {
    throw ValidationError("affinity matrix must be " + std::to_string(n) + "x" +
                          std::to_string(n));
  }
  LayoutPairs p;
  p.text.resize(n);
  p.cluster.resize(n);
  for (int i = 0; i < n; ++i) {
    const TargetSlot& t = targets[sigma[i]];
    p.text[i] = t.is_text;
    p.cluster[i] = t.cluster_id;
    if (t.is_text && t.cluster_id < 0) {
      throw ValidationError("text target without a cluster id");
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!p.text[i]) continue;
    for (int j = 0; j < n; ++j) {
      if (!p.text[j] || (!cfg.include_diagonal && i == j)) continue;
      if (p.cluster[i] == p.cluster[j]) {
        ++p.pos_count;
      } else {
        ++p.neg_count;
      }
    }
  }
  return p;
}

PairWeights layout_weights(const LayoutPairs& p, const LossConfig& cfg) {
  PairWeights w;
  switch (cfg.mode) {
    case BalancingMode::kVanilla: {
      const std::int64_t all = p.pos_count + p.neg_count;
      if (all > 0) w.w_pos = w.w_neg = 1.0 / static_cast<double>(all);
      break;
    }
    case BalancingMode::kAlpha:
    case BalancingMode::kFocal: {
      if (p.pos_count > 0) w.w_pos = cfg.alpha_l / static_cast<double>(p.pos_count);
      if (p.neg_count > 0) w.w_neg = (1.0 - cfg.alpha_l) / static_cast<double>(p.neg_count);
      break;
    }
  }
  return w;
}

}  // namespace

double layout_loss(const Matrix& affinity_pred, const std::vector<TargetSlot>& targets,
                   const std::vector<int>& sigma, const LossConfig& cfg) {
  validate_config(cfg);
  const LayoutPairs p = layout_pairs(affinity_pred, targets, sigma, cfg);
  const PairWeights w = layout_weights(p, cfg);
  const int n = static_cast<int>(sigma.size());

  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!p.text[i]) continue;
    for (int j = 0; j < n; ++j) {
      if (!p.text[j] || (!cfg.include_diagonal && i == j)) continue;
      const double a = clamp_prob(affinity_pred.at(i, j));
      if (p.cluster[i] == p.cluster[j]) {
        double term = -std::log(a);
        if (cfg.mode == BalancingMode::kFocal) term *= std::pow(1.0 - a, cfg.focal_gamma);
        loss += w.w_pos * term;
      } else {
        double term = -std::log(1.0 - a);
        if (cfg.mode == BalancingMode::kFocal) term *= std::pow(a, cfg.focal_gamma);
        loss += w.w_neg * term;
      }
    }
  }
  return loss;
}

Matrix layout_loss_grad(const Matrix& affinity_pred, const std::vector<TargetSlot>& targets,
                        const std::vector<int>& sigma, const LossConfig& cfg) {
  validate_config(cfg);
  const LayoutPairs p = layout_pairs(affinity_pred, targets, sigma, cfg);
  const PairWeights w = layout_weights(p, cfg);
  const int n = static_cast<int>(sigma.size());
  const double g = cfg.focal_gamma;

  Matrix grad(n, n);
  for (int i = 0; i < n; ++i) {
    if (!p.text[i]) continue;
    for (int j = 0; j < n; ++j) {
      if (!p.text[j] || (!cfg.include_diagonal && i == j)) continue;
      const double a = clamp_prob(affinity_pred.at(i, j));
      if (p.cluster[i] == p.cluster[j]) {
        if (cfg.mode == BalancingMode::kFocal) {
          grad.at(i, j) =
              w.w_pos * (g * std::pow(1.0 - a, g - 1.0) * std::log(a) - std::pow(1.0 - a, g) / a);
        } else {
          grad.at(i, j) = w.w_pos * (-1.0 / a);
        }
      } else {
        if (cfg.mode == BalancingMode::kFocal) {
          grad.at(i, j) = w.w_neg * (-g * std::pow(a, g - 1.0) * std::log(1.0 - a) +
                                     std::pow(a, g) / (1.0 - a));
        } else {
          grad.at(i, j) = w.w_neg / (1.0 - a);
        }
      }
    }
  }
  return grad;
}

LossBreakdown total_loss(double l_det, double l_lay, double l_seg, double l_ins,
                         const LossConfig& cfg) {
  validate_config(cfg);
  for (double v : {l_det, l_lay, l_seg, l_ins}) {
    if (!std::isfinite(v)) throw ValidationError("non-finite loss component");
  }
  LossBreakdown b;
  b.l_det = l_det;
  b.l_lay = l_lay;
  b.l_seg = l_seg;
  b.l_ins = l_ins;
  b.total = cfg.lambdas[0] * l_det + cfg.lambdas[1] * l_lay + cfg.lambdas[2] * l_seg +
            cfg.lambdas[3] * l_ins;
  return b;
}

namespace {

double rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-4});
}

void check_margin(double v, const char* what) {
  if (!(v >= kFdMargin && v <= 1.0 - kFdMargin)) {
    throw ValidationError(std::string(what) + " value " + std::to_string(v) +
                          " too close to the clamp boundary for finite differences");
  }
}

}  // namespace

GradCheckReport grad_check_detection(const std::vector<PredictionSlot>& preds,
                                     const std::vector<TargetSlot>& targets,
                                     const std::vector<int>& sigma, const LossConfig& cfg,
                                     int max_mask_samples) {
  const DetectionFrozen frozen = freeze_detection_factors(preds, targets, sigma);
  const DetectionGrad analytic = detection_loss_grad(preds, targets, sigma, cfg);

  std::vector<PredictionSlot> work = preds;
  const auto loss_at = [&]() {
    return detection_loss_frozen(work, targets, sigma, cfg, frozen);
  };

  GradCheckReport report;
  const auto record = [&](double a, double fd) {
    report.max_rel_err = std::max(report.max_rel_err, rel_err(a, fd));
    ++report.evaluations;
  };

  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_margin(preds[i].textness, "textness");
    const double base = work[i].textness;
    work[i].textness = base + kFdStep;
    const double up = loss_at();
    work[i].textness = base - kFdStep;
    const double down = loss_at();
    work[i].textness = base;
    record(analytic.d_textness[i], (up - down) / (2.0 * kFdStep));

    const std::size_t pixels = work[i].soft_mask.values.size();
    std::size_t stride = 1;
    if (max_mask_samples > 0 && pixels > static_cast<std::size_t>(max_mask_samples)) {
      stride = pixels / static_cast<std::size_t>(max_mask_samples);
    }
    for (std::size_t p = 0; p < pixels; p += stride) {
      check_margin(preds[i].soft_mask.values[p], "mask");
      double& v = work[i].soft_mask.values[p];
      const double pixel_base = v;
      v = pixel_base + kFdStep;
      const double pu = loss_at();
      v = pixel_base - kFdStep;
      const double pd = loss_at();
      v = pixel_base;
      record(analytic.d_masks[i].values[p], (pu - pd) / (2.0 * kFdStep));
    }
  }
  return report;
}

GradCheckReport grad_check_layout(const Matrix& affinity_pred,
                                  const std::vector<TargetSlot>& targets,
                                  const std::vector<int>& sigma, const LossConfig& cfg) {
  const Matrix analytic = layout_loss_grad(affinity_pred, targets, sigma, cfg);
  const LayoutPairs pairs = layout_pairs(affinity_pred, targets, sigma, cfg);
  const int n = affinity_pred.rows;

  Matrix work = affinity_pred;
  GradCheckReport report;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool active =
          pairs.text[i] && pairs.text[j] && (cfg.include_diagonal || i != j);
      if (active) check_margin(affinity_pred.at(i, j), "affinity");
      const double base = work.at(i, j);
      work.at(i, j) = base + kFdStep;
      const double up = layout_loss(work, targets, sigma, cfg);
      work.at(i, j) = base - kFdStep;
      const double down = layout_loss(work, targets, sigma, cfg);
      work.at(i, j) = base;
      const double fd = (up - down) / (2.0 * kFdStep);
      report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.at(i, j), fd));
      ++report.evaluations;
    }
  }
  return report;
}

}  // namespace hierkit
