#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hierkit/metrics.hpp"
#include "synth.hpp"

using namespace hierkit;
using nlohmann::json;

namespace {

BitMask block(int w, int h, int x0, int y0, int bw, int bh) {
  BitMask m(w, h);
  for (int y = y0; y < y0 + bh; ++y) {
    for (int x = x0; x < x0 + bw; ++x) m.set(x, y);
  }
  return m;
}

ImageTally random_tally(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> count(0, 500);
  std::uniform_real_distribution<double> frac(0.5, 1.0);
  ImageTally t;
  t.tp = count(rng);
  t.fp = count(rng);
  t.fn = count(rng);
  t.iou_sum = t.tp == 0 ? 0.0 : t.tp * frac(rng);
  return t;
}

}  // namespace

TEST_CASE("evaluate_image: exact predictions give a perfect tally") {
  std::vector<GtEntry> gt;
  gt.push_back({block(16, 16, 0, 0, 4, 4), false});
  gt.push_back({block(16, 16, 8, 8, 5, 3), false});
  const std::vector<BitMask> preds{gt[0].mask, gt[1].mask};
  const ImageTally t = evaluate_image(preds, gt);
  CHECK(t.tp == 2);
  CHECK(t.fp == 0);
  CHECK(t.fn == 0);
  CHECK(t.iou_sum == 2.0);
}

TEST_CASE("evaluate_image: one matched pair at IoU 0.8 plus a stray prediction") {
  // Prediction is an 8-pixel subset of a 10-pixel ground truth: IoU = 0.8.
  std::vector<GtEntry> gt;
  gt.push_back({block(32, 8, 0, 0, 10, 1), false});
  std::vector<BitMask> preds;
  preds.push_back(block(32, 8, 0, 0, 8, 1));
  preds.push_back(block(32, 8, 20, 4, 3, 2));  // far away, matches nothing
  const ImageTally t = evaluate_image(preds, gt);
  CHECK(t.tp == 1);
  CHECK(t.fp == 1);
  CHECK(t.fn == 0);
  CHECK(t.iou_sum == doctest::Approx(0.8).epsilon(1e-12));

  const EvalReport r = make_report(t, Level::kWord);
  CHECK(r.pq == doctest::Approx(0.8 / 1.5).epsilon(1e-12));
  CHECK(r.precision == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.recall == 1.0);
}

TEST_CASE("evaluate_image: IoU at or below 0.5 never matches") {
  // 4 of 10 pixels overlap: IoU = 4/16 = 0.25.
  std::vector<GtEntry> gt{{block(32, 4, 0, 0, 10, 1), false}};
  const std::vector<BitMask> preds{block(32, 4, 6, 0, 10, 1)};
  const ImageTally t = evaluate_image(preds, gt);
  CHECK(t.tp == 0);
  CHECK(t.fp == 1);
  CHECK(t.fn == 1);
  CHECK(t.iou_sum == 0.0);

  // Exactly 0.5 is still excluded: 5 of 10 pixels, IoU = 5/15... build a
  // true 0.5: |n| = 5, |u| = 10 -> pred 5 px inside gt 10 px.
  std::vector<GtEntry> gt2{{block(32, 4, 0, 0, 10, 1), false}};
  const std::vector<BitMask> preds2{block(32, 4, 0, 0, 5, 1)};
  REQUIRE(iou(preds2[0], gt2[0].mask) == 0.5);
  const ImageTally t2 = evaluate_image(preds2, gt2);
  CHECK(t2.tp == 0);
  CHECK(t2.fp == 1);
  CHECK(t2.fn == 1);
}

TEST_CASE("evaluate_image: unmatched predictions on don't-care regions are discarded") {
  std::vector<GtEntry> gt;
  gt.push_back({block(32, 8, 0, 0, 10, 2), false});
  gt.push_back({block(32, 8, 16, 0, 10, 2), true});  // don't-care
  std::vector<BitMask> preds;
  preds.push_back(gt[0].mask);                   // true positive
  preds.push_back(block(32, 8, 16, 0, 10, 2));   // exactly the don't-care region
  preds.push_back(block(32, 8, 16, 6, 10, 2));   // elsewhere: a real false positive
  const ImageTally t = evaluate_image(preds, gt);
  CHECK(t.tp == 1);
  CHECK(t.fp == 1);
  CHECK(t.fn == 0);

  // A prediction covering a don't-care region only loosely (IoU <= 0.5)
  // still counts as a false positive.
  std::vector<BitMask> loose{gt[0].mask, block(32, 8, 16, 0, 5, 2)};
  REQUIRE(iou(loose[1], gt[1].mask) == 0.5);
  const ImageTally t2 = evaluate_image(loose, gt);
  CHECK(t2.fp == 1);
}

TEST_CASE("evaluate_image: don't-care regions are never false negatives") {
  std::vector<GtEntry> gt{{block(8, 8, 0, 0, 4, 4), true}};
  const ImageTally t = evaluate_image({}, gt);
  CHECK(t.tp == 0);
  CHECK(t.fp == 0);
  CHECK(t.fn == 0);
}

TEST_CASE("evaluate_image: dimension mismatch is rejected") {
  std::vector<GtEntry> gt{{BitMask(8, 8), false}};
  CHECK_THROWS_AS(evaluate_image({BitMask(4, 4)}, gt), ValidationError);
}

TEST_CASE("evaluate_image: result is invariant to prediction order") {
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<GtEntry> gt;
    std::vector<BitMask> preds;
    for (int k = 0; k < 5; ++k) {
      const int x = 6 * k;
      gt.push_back({block(32, 8, x, 0, 5, 4), u(rng) < 0.2});
      BitMask p = block(32, 8, x, 0, 5, 4);
      if (u(rng) < 0.5) p.set(x, 5);
      preds.push_back(p);
    }
    const ImageTally base = evaluate_image(preds, gt);
    std::shuffle(preds.begin(), preds.end(), rng);
    const ImageTally shuffled = evaluate_image(preds, gt);
    CHECK(base.tp == shuffled.tp);
    CHECK(base.fp == shuffled.fp);
    CHECK(base.fn == shuffled.fn);
    CHECK(base.iou_sum == doctest::Approx(shuffled.iou_sum).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_image: matching maximizes summed IoU, beating the greedy choice") {
  // Overlapping ground truths. Pairwise IoUs:
  //   A-gt0 19/21, A-gt1 17/23, B-gt0 9/10, B-gt1 14/24.
  // Greedy by best pair picks A-gt0 then B-gt1 (sum 1.4881); the optimum is
  // A-gt1 plus B-gt0 (sum 1.6391).
  std::vector<GtEntry> gt;
  gt.push_back({block(64, 1, 0, 0, 20, 1), false});
  gt.push_back({block(64, 1, 4, 0, 20, 1), false});
  std::vector<BitMask> preds;
  preds.push_back(block(64, 1, 1, 0, 20, 1));  // A
  preds.push_back(block(64, 1, 0, 0, 18, 1));  // B
  const ImageTally t = evaluate_image(preds, gt);
  CHECK(t.tp == 2);
  CHECK(t.fp == 0);
  CHECK(t.fn == 0);
  CHECK(t.iou_sum == doctest::Approx(17.0 / 23.0 + 9.0 / 10.0).epsilon(1e-12));
}

TEST_CASE("make_report: ratio conventions and the PQ identity") {
  const EvalReport zero = make_report(ImageTally{}, Level::kLine);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);
  CHECK(zero.tightness == 0.0);
  CHECK(zero.pq == 0.0);

  ImageTally only_fp;
  only_fp.fp = 3;
  const EvalReport fp_report = make_report(only_fp, Level::kLine);
  CHECK(fp_report.precision == 0.0);
  CHECK(fp_report.recall == 0.0);
  CHECK(fp_report.pq == 0.0);

  std::mt19937_64 rng(61);
  for (int t = 0; t < 1000; ++t) {
    const ImageTally tally = random_tally(rng);
    if (tally.tp + tally.fp + tally.fn == 0) continue;
    const EvalReport r = make_report(tally, Level::kWord);
    const double denom = tally.tp + 0.5 * (tally.fp + tally.fn);
    CHECK(std::abs(r.pq - tally.iou_sum / denom) <= 1e-9);
    CHECK(std::abs(r.pq - r.f1 * r.tightness) <= 1e-9);
    if (tally.tp > 0) {
      CHECK(r.tightness == doctest::Approx(tally.iou_sum / tally.tp).epsilon(1e-12));
    }
  }
}

TEST_CASE("make_report: PQ never improves when false positives are added") {
  std::mt19937_64 rng(67);
  for (int t = 0; t < 200; ++t) {
    ImageTally tally = random_tally(rng);
    const double before = make_report(tally, Level::kWord).pq;
    tally.fp += 1;
    const double after = make_report(tally, Level::kWord).pq;
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("evaluate_dataset: ground truth as predictions is a perfect score") {
  std::mt19937_64 rng(71);
  const GroundTruthSet gt = synth::make_ground_truth(rng, 5);
  for (Level level : {Level::kWord, Level::kLine, Level::kParagraph}) {
    PredictionSet preds;
    for (const auto& a : gt.annotations) {
      preds.images.push_back(synth::gt_as_predictions(a, level));
    }
    const EvalReport r = evaluate_dataset(preds, gt, level);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(r.tightness == 1.0);
    CHECK(r.pq == 1.0);
  }
}

TEST_CASE("evaluate_dataset: micro pooling across two images") {
  std::mt19937_64 rng(73);
  synth::SynthOptions opt;
  opt.max_paragraphs = 1;
  opt.max_lines = 1;
  opt.max_words = 1;
  const GroundTruthSet gt = synth::make_ground_truth(rng, 2, opt);

  PredictionSet preds;
  preds.images.push_back(synth::gt_as_predictions(gt.annotations[0], Level::kWord));
  ImagePredictions empty;
  empty.image_id = gt.annotations[1].image_id;
  preds.images.push_back(empty);

  const EvalReport r = evaluate_dataset(preds, gt, Level::kWord);
  CHECK(r.tp == 1);
  CHECK(r.fp == 0);
  CHECK(r.fn == 1);
  CHECK(r.pq == doctest::Approx(1.0 / 1.5).epsilon(1e-12));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.tightness == 1.0);
}

TEST_CASE("evaluate_dataset: paragraph level unions predictions by cluster id") {
  std::mt19937_64 rng(79);
  const GroundTruthSet gt = synth::make_ground_truth(rng, 4);
  PredictionSet preds;
  for (const auto& a : gt.annotations) {
    // Word-level entities tagged with their paragraph's cluster id.
    preds.images.push_back(synth::gt_as_predictions(a, Level::kWord));
  }
  const EvalReport r = evaluate_dataset(preds, gt, Level::kParagraph);
  CHECK(r.pq == 1.0);
  CHECK(r.f1 == 1.0);
}

TEST_CASE("evaluate_dataset: missing predictions count as false negatives") {
  std::mt19937_64 rng(83);
  const GroundTruthSet gt = synth::make_ground_truth(rng, 2);
  const EvalReport r = evaluate_dataset(PredictionSet{}, gt, Level::kWord);
  CHECK(r.tp == 0);
  CHECK(r.fp == 0);
  CHECK(r.fn > 0);
  CHECK(r.pq == 0.0);
}

TEST_CASE("evaluate_dataset: unknown prediction image id is rejected") {
  std::mt19937_64 rng(89);
  const GroundTruthSet gt = synth::make_ground_truth(rng, 1);
  PredictionSet preds;
  ImagePredictions stray;
  stray.image_id = "no-such-image";
  preds.images.push_back(stray);
  CHECK_THROWS_AS(evaluate_dataset(preds, gt, Level::kWord), ValidationError);
}

TEST_CASE("evaluate_dataset: include_illegible turns don't-care into targets") {
  std::mt19937_64 rng(97);
  synth::SynthOptions opt;
  opt.illegible_fraction = 1.0;
  const GroundTruthSet gt = synth::make_ground_truth(rng, 2, opt);

  // No predictions: illegible-only ground truth scores zero FN by default.
  const EvalReport lenient = evaluate_dataset(PredictionSet{}, gt, Level::kWord, false);
  CHECK(lenient.fn == 0);
  const EvalReport strict = evaluate_dataset(PredictionSet{}, gt, Level::kWord, true);
  CHECK(strict.fn > 0);
}

TEST_CASE("evaluate_dataset: thread count does not change the result") {
  std::mt19937_64 rng(101);
  const GroundTruthSet gt = synth::make_ground_truth(rng, 6);
  PredictionSet preds;
  for (const auto& a : gt.annotations) {
    auto img = synth::gt_as_predictions(a, Level::kWord);
    if (!img.entities.empty()) img.entities.pop_back();
    preds.images.push_back(img);
  }
  const EvalReport a = evaluate_dataset(preds, gt, Level::kWord, false, 1);
  const EvalReport b = evaluate_dataset(preds, gt, Level::kWord, false, 4);
  CHECK(a.tp == b.tp);
  CHECK(a.fp == b.fp);
  CHECK(a.fn == b.fn);
  CHECK(a.iou_sum == b.iou_sum);
  CHECK(a.pq == b.pq);
}

TEST_CASE("report_to_json carries every field") {
  ImageTally t;
  t.tp = 3;
  t.fp = 1;
  t.fn = 2;
  t.iou_sum = 2.4;
  const EvalReport r = make_report(t, Level::kParagraph);
  const json parsed = json::parse(report_to_json(r));
  CHECK(parsed.at("level") == "paragraph");
  CHECK(parsed.at("tp") == 3);
  CHECK(parsed.at("fp") == 1);
  CHECK(parsed.at("fn") == 2);
  CHECK(parsed.at("iou_sum").get<double>() == doctest::Approx(2.4).epsilon(1e-12));
  CHECK(parsed.at("precision").get<double>() == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(parsed.at("recall").get<double>() == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(parsed.at("pq").get<double>() ==
        doctest::Approx(2.4 / (3 + 0.5 * 3)).epsilon(1e-12));
}
