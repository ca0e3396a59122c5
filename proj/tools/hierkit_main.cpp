#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hierkit/annotation.hpp"
#include "hierkit/decoder.hpp"
#include "hierkit/error.hpp"
#include "hierkit/losses.hpp"
#include "hierkit/matching.hpp"
#include "hierkit/metrics.hpp"
#include "hierkit/parallel.hpp"
#include "hierkit/png_io.hpp"
#include "hierkit/predictions.hpp"
#include "hierkit/render.hpp"
#include "hierkit/tensor_io.hpp"

namespace {

using namespace hierkit;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("HIERKIT_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file for writing: " + path);
  out << text;
  if (!out) throw IoError("failed writing output file: " + path);
}

struct ValidateArgs {
  std::string gt_path;
};

int cmd_validate(const ValidateArgs& args) {
  ParseDiagnostics diag;
  try {
    parse_ground_truth_file(args.gt_path, &diag);
  } catch (const ValidationError& e) {
    diag.errors.push_back(e.what());
  }
  for (const std::string& e : diag.errors) std::cout << e << "\n";
  for (const std::string& w : diag.warnings) std::cout << "warning: " << w << "\n";
  std::cout << diag.errors.size() << " errors\n";
  return diag.errors.empty() ? kExitOk : kExitDomain;
}

struct StatsArgs {
  std::string gt_path;
  std::string out_path;
};

int cmd_stats(const StatsArgs& args) {
  const GroundTruthSet gts = parse_ground_truth_file(args.gt_path);
  const StatsReport report = dataset_stats(gts);
  write_text(args.out_path, stats_to_json(report) + "\n");
  std::fprintf(stderr,
               "images=%lld paragraphs=%lld lines=%lld words=%lld legible_words=%lld "
               "mean_words_per_image=%.1f mean_legible_words_per_image=%.1f\n",
               static_cast<long long>(report.image_count),
               static_cast<long long>(report.paragraph_count),
               static_cast<long long>(report.line_count),
               static_cast<long long>(report.word_count_total),
               static_cast<long long>(report.word_count_legible), report.mean_words_per_image,
               report.mean_legible_words_per_image);
  return kExitOk;
}

struct DecodeArgs {
  std::string manifest_path;
  std::string out_path;
  DecodeParams params;
  bool full_res = false;
  int threads = 0;
};

int cmd_decode(const DecodeArgs& args) {
  validate_params(args.params);
  const Manifest manifest = read_manifest(args.manifest_path);
  {
    std::vector<std::string> ids;
    for (const ManifestEntry& e : manifest.entries) ids.push_back(e.image_id);
    std::sort(ids.begin(), ids.end());
    const auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) {
      throw ValidationError("manifest lists image_id \"" + *dup + "\" twice");
    }
  }

  PredictionSet set;
  set.images.resize(manifest.entries.size());
  parallel_for(manifest.entries.size(), resolve_threads(args.threads), [&](std::size_t i) {
    const ManifestEntry& entry = manifest.entries[i];
    const DetectionTensors tensors = load_tensors(manifest, entry);
    std::vector<Entity> entities = decode(tensors, args.params);
    if (args.full_res) {
      const int out_w = entry.image_width > 0 ? entry.image_width : tensors.width() * 4;
      const int out_h = entry.image_height > 0 ? entry.image_height : tensors.height() * 4;
      for (Entity& e : entities) e.mask = upsample_mask(e.mask, out_w, out_h);
    }
    set.images[i].image_id = entry.image_id;
    set.images[i].entities = std::move(entities);
  });

  write_text(args.out_path, predictions_to_json(set) + "\n");
  return kExitOk;
}

struct EvaluateArgs {
  std::string gt_path;
  std::string pred_path;
  std::string level = "word";
  bool include_illegible = false;
  int threads = 0;
};

int cmd_evaluate(const EvaluateArgs& args) {
  const auto level = parse_level(args.level);
  if (!level) throw ValidationError("unknown level \"" + args.level + "\"");
  const GroundTruthSet gts = parse_ground_truth_file(args.gt_path);
  const PredictionSet preds = parse_predictions_file(args.pred_path);
  const EvalReport report =
      evaluate_dataset(preds, gts, *level, args.include_illegible, resolve_threads(args.threads));
  std::cout << report_to_json(report) << "\n";
  return kExitOk;
}

struct LossArgs {
  std::string manifest_path;
  std::string gt_path;
  LossConfig cfg;
  std::string balancing = "alpha";
  double l_seg = 0.0;
  double l_ins = 0.0;
  std::string dump_sim_path;
  int threads = 0;
};

struct PreparedImage {
  std::string image_id;
  std::vector<PredictionSlot> preds;
  std::vector<TargetSlot> targets;
  Matrix similarity;
  Assignment assignment;
  Matrix affinity;
};

PreparedImage prepare_image(const Manifest& manifest, const ManifestEntry& entry,
                            const HierAnnotation& annotation) {
  PreparedImage out;
  out.image_id = entry.image_id;

  const DetectionTensors tensors = load_tensors(manifest, entry);
  validate_tensors(tensors);
  const int n = tensors.n(), w = tensors.width(), h = tensors.height();

  out.preds.resize(n);
  for (int i = 0; i < n; ++i) {
    SoftMask m(w, h);
    const std::size_t offset = static_cast<std::size_t>(i) * h * w;
    std::copy(tensors.masks.values.begin() + offset, tensors.masks.values.begin() + offset + m.values.size(),
              m.values.begin());
    out.preds[i].soft_mask = std::move(m);
    out.preds[i].textness = tensors.textness[i];
  }

  const EvalMasks derived =
      derive_eval_masks(annotation, Level::kWord, /*include_illegible=*/false, w, h, nullptr);
  std::vector<TargetSlot> targets;
  targets.reserve(derived.targets.size());
  for (const DerivedMask& d : derived.targets) {
    TargetSlot t;
    t.mask = d.mask;
    t.is_text = 1;
    t.cluster_id = d.cluster_id;
    targets.push_back(std::move(t));
  }
  out.targets = pad_targets(std::move(targets), n, w, h);
  out.similarity = similarity_matrix(out.preds, out.targets);
  out.assignment = solve_max_assignment(out.similarity);
  out.affinity = effective_affinity(tensors);
  return out;
}

const HierAnnotation& annotation_for(const GroundTruthSet& gts, const std::string& image_id) {
  for (const HierAnnotation& a : gts.annotations) {
    if (a.image_id == image_id) return a;
  }
  throw ValidationError("manifest image_id \"" + image_id + "\" not found in the ground truth");
}

json breakdown_json(const std::string& image_id, const LossBreakdown& b) {
  json node{{"l_det", b.l_det},
            {"l_lay", b.l_lay},
            {"l_seg", b.l_seg},
            {"l_ins", b.l_ins},
            {"total", b.total}};
  if (!image_id.empty()) node["image_id"] = image_id;
  return node;
}

int cmd_loss(LossArgs& args) {
  const auto mode = parse_balancing_mode(args.balancing);
  if (!mode) throw ValidationError("unknown balancing mode \"" + args.balancing + "\"");
  args.cfg.mode = *mode;
  validate_config(args.cfg);

  const GroundTruthSet gts = parse_ground_truth_file(args.gt_path);
  Manifest manifest = read_manifest(args.manifest_path);
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.image_id < b.image_id; });

  std::vector<PreparedImage> prepared(manifest.entries.size());
  std::vector<LossBreakdown> breakdowns(manifest.entries.size());
  parallel_for(manifest.entries.size(), resolve_threads(args.threads), [&](std::size_t i) {
    const ManifestEntry& entry = manifest.entries[i];
    prepared[i] = prepare_image(manifest, entry, annotation_for(gts, entry.image_id));
    const PreparedImage& p = prepared[i];
    const double l_det = detection_loss(p.preds, p.targets, p.assignment.sigma, args.cfg);
    const double l_lay = layout_loss(p.affinity, p.targets, p.assignment.sigma, args.cfg);
    breakdowns[i] = total_loss(l_det, l_lay, args.l_seg, args.l_ins, args.cfg);
  });

  json images = json::array();
  LossBreakdown mean;
  for (std::size_t i = 0; i < breakdowns.size(); ++i) {
    images.push_back(breakdown_json(manifest.entries[i].image_id, breakdowns[i]));
    mean.l_det += breakdowns[i].l_det;
    mean.l_lay += breakdowns[i].l_lay;
    mean.l_seg += breakdowns[i].l_seg;
    mean.l_ins += breakdowns[i].l_ins;
    mean.total += breakdowns[i].total;
  }
  if (!breakdowns.empty()) {
    const double inv = 1.0 / static_cast<double>(breakdowns.size());
    mean.l_det *= inv;
    mean.l_lay *= inv;
    mean.l_seg *= inv;
    mean.l_ins *= inv;
    mean.total *= inv;
  }
  json out{{"images", images},
           {"mean", breakdown_json("", mean)},
           {"balancing", balancing_mode_name(args.cfg.mode)}};
  std::cout << out.dump() << "\n";

  if (!args.dump_sim_path.empty()) {
    json sims = json::array();
    for (const PreparedImage& p : prepared) {
      json rows = json::array();
      for (int r = 0; r < p.similarity.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < p.similarity.cols; ++c) row.push_back(p.similarity.at(r, c));
        rows.push_back(std::move(row));
      }
      sims.push_back(json{{"image_id", p.image_id},
                          {"similarity", rows},
                          {"sigma", p.assignment.sigma},
                          {"total_similarity", p.assignment.total_similarity}});
    }
    std::ofstream dump(args.dump_sim_path, std::ios::binary);
    if (!dump) throw IoError("cannot open output file for writing: " + args.dump_sim_path);
    dump << json{{"images", sims}}.dump() << "\n";
  }
  return kExitOk;
}

struct GradCheckArgs {
  LossArgs loss;
  int max_mask_samples = -1;
  double tolerance = 1e-3;
};

int cmd_grad_check(GradCheckArgs& args) {
  const auto mode = parse_balancing_mode(args.loss.balancing);
  if (!mode) throw ValidationError("unknown balancing mode \"" + args.loss.balancing + "\"");
  args.loss.cfg.mode = *mode;
  validate_config(args.loss.cfg);

  const GroundTruthSet gts = parse_ground_truth_file(args.loss.gt_path);
  Manifest manifest = read_manifest(args.loss.manifest_path);
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.image_id < b.image_id; });

  double max_rel_err = 0.0;
  std::int64_t evaluations = 0;
  for (const ManifestEntry& entry : manifest.entries) {
    const PreparedImage p = prepare_image(manifest, entry, annotation_for(gts, entry.image_id));
    const GradCheckReport det = grad_check_detection(p.preds, p.targets, p.assignment.sigma,
                                                     args.loss.cfg, args.max_mask_samples);
    const GradCheckReport lay =
        grad_check_layout(p.affinity, p.targets, p.assignment.sigma, args.loss.cfg);
    std::cout << entry.image_id << ": detection max rel err " << det.max_rel_err << " ("
              << det.evaluations << " checks), layout max rel err " << lay.max_rel_err << " ("
              << lay.evaluations << " checks)\n";
    max_rel_err = std::max({max_rel_err, det.max_rel_err, lay.max_rel_err});
    evaluations += det.evaluations + lay.evaluations;
  }

  const bool pass = max_rel_err < args.tolerance;
  std::cout << (pass ? "PASS" : "FAIL") << " (max rel err " << max_rel_err
            << (pass ? " < " : " >= ") << args.tolerance << ", " << evaluations << " checks)\n";
  return pass ? kExitOk : kExitDomain;
}

struct RenderArgs {
  std::string image_path;
  std::string pred_path;
  std::string out_path;
  std::string image_id;
  double alpha = 0.5;
};

int cmd_render(const RenderArgs& args) {
  ImageRgb8 image = read_png(args.image_path);
  const PredictionSet preds = parse_predictions_file(args.pred_path);

  const ImagePredictions* selected = nullptr;
  if (args.image_id.empty()) {
    if (preds.images.size() != 1) {
      throw ValidationError("predictions contain " + std::to_string(preds.images.size()) +
                            " images; select one with --image-id");
    }
    selected = &preds.images.front();
  } else {
    for (const ImagePredictions& p : preds.images) {
      if (p.image_id == args.image_id) selected = &p;
    }
    if (selected == nullptr) {
      throw ValidationError("image_id \"" + args.image_id + "\" not found in predictions");
    }
  }

  render_overlay(image, *selected, args.alpha);
  write_png(args.out_path, image);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical scene-text toolkit: ground-truth validation, dataset statistics, "
               "tensor decoding, panoptic evaluation, loss oracles and rendering"};
  app.require_subcommand(1);

  ValidateArgs validate_args;
  CLI::App* validate = app.add_subcommand("validate", "Validate a ground-truth JSON file");
  validate->add_option("gt", validate_args.gt_path, "ground-truth JSON")->required();

  StatsArgs stats_args;
  CLI::App* stats = app.add_subcommand("stats", "Dataset statistics from ground truth");
  stats->add_option("gt", stats_args.gt_path, "ground-truth JSON")->required();
  stats->add_option("-o,--out", stats_args.out_path, "output JSON path (default stdout)");

  DecodeArgs decode_args;
  CLI::App* decode = app.add_subcommand("decode", "Decode raw tensors into text entities");
  decode->add_option("manifest", decode_args.manifest_path, "tensor manifest JSON")->required();
  decode->add_option("-o,--out", decode_args.out_path, "output predictions JSON (default stdout)");
  decode->add_option("--tm", decode_args.params.t_m, "pixel confidence threshold")
      ->capture_default_str();
  decode->add_option("--tc", decode_args.params.t_c, "textness threshold")->capture_default_str();
  decode->add_option("--ta", decode_args.params.t_a, "affinity threshold")->capture_default_str();
  decode->add_option("--min-pixels", decode_args.params.min_pixels, "minimum mask area")
      ->capture_default_str();
  decode->add_flag("--full-res", decode_args.full_res,
                   "upsample masks to full image resolution (nearest neighbor)");
  decode->add_option("--threads", decode_args.threads, "worker threads (0 = auto)");

  EvaluateArgs evaluate_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Panoptic-quality evaluation");
  evaluate->add_option("gt", evaluate_args.gt_path, "ground-truth JSON")->required();
  evaluate->add_option("pred", evaluate_args.pred_path, "predictions JSON")->required();
  evaluate->add_option("--level", evaluate_args.level, "word|line|paragraph")
      ->capture_default_str();
  evaluate->add_flag("--include-illegible", evaluate_args.include_illegible,
                     "treat illegible entities as targets instead of don't-care regions");
  evaluate->add_option("--threads", evaluate_args.threads, "worker threads (0 = auto)");

  const auto add_loss_flags = [](CLI::App* cmd, LossArgs& args) {
    cmd->add_option("manifest", args.manifest_path, "tensor manifest JSON")->required();
    cmd->add_option("gt", args.gt_path, "ground-truth JSON")->required();
    cmd->add_option("--alpha", args.cfg.alpha, "detection pos/neg balance")
        ->capture_default_str();
    cmd->add_option("--alpha-l", args.cfg.alpha_l, "layout pos/neg balance")
        ->capture_default_str();
    cmd->add_option("--balancing", args.balancing, "vanilla|alpha|focal")->capture_default_str();
    cmd->add_option("--focal-gamma", args.cfg.focal_gamma, "focal exponent")
        ->capture_default_str();
    cmd->add_option("--lambda-det", args.cfg.lambdas[0], "detection loss weight")
        ->capture_default_str();
    cmd->add_option("--lambda-lay", args.cfg.lambdas[1], "layout loss weight")
        ->capture_default_str();
    cmd->add_option("--lambda-seg", args.cfg.lambdas[2], "segmentation loss weight")
        ->capture_default_str();
    cmd->add_option("--lambda-ins", args.cfg.lambdas[3], "instance loss weight")
        ->capture_default_str();
    cmd->add_flag_function(
        "--exclude-diagonal",
        [&args](std::int64_t) { args.cfg.include_diagonal = false; },
        "exclude self-pairs from the layout loss");
  };

  LossArgs loss_args;
  CLI::App* loss = app.add_subcommand("loss", "Training-loss oracle over a tensor manifest");
  add_loss_flags(loss, loss_args);
  loss->add_option("--l-seg", loss_args.l_seg, "externally supplied segmentation loss");
  loss->add_option("--l-ins", loss_args.l_ins, "externally supplied instance loss");
  loss->add_option("--dump-sim", loss_args.dump_sim_path,
                   "write per-image similarity matrices and assignments to this path");
  loss->add_option("--threads", loss_args.threads, "worker threads (0 = auto)");

  GradCheckArgs grad_args;
  CLI::App* grad = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  add_loss_flags(grad, grad_args.loss);
  grad->add_option("--max-mask-samples", grad_args.max_mask_samples,
                   "mask pixels to sample per slot (-1 = all)");
  grad->add_option("--tolerance", grad_args.tolerance, "max relative error to pass")
      ->capture_default_str();

  RenderArgs render_args;
  CLI::App* render = app.add_subcommand("render", "Overlay predictions on an image");
  render->add_option("image", render_args.image_path, "input PNG")->required();
  render->add_option("pred", render_args.pred_path, "predictions JSON")->required();
  render->add_option("-o,--out", render_args.out_path, "output PNG")->required();
  render->add_option("--image-id", render_args.image_id,
                     "which prediction entry to render (required with multiple images)");
  render->add_option("--alpha", render_args.alpha, "overlay opacity")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitIo;
  }

  try {
    if (*validate) return cmd_validate(validate_args);
    if (*stats) return cmd_stats(stats_args);
    if (*decode) return cmd_decode(decode_args);
    if (*evaluate) return cmd_evaluate(evaluate_args);
    if (*loss) return cmd_loss(loss_args);
    if (*grad) return cmd_grad_check(grad_args);
    if (*render) return cmd_render(render_args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitIo;
}
