// End-to-end checks of the hierkit binary against the committed fixtures.
// argv[1] = path to the hierkit executable, argv[2] = tests/data directory.
#include <sys/wait.h>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "hierkit/annotation.hpp"
#include "hierkit/png_io.hpp"
#include "hierkit/predictions.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_failures = 0;
std::string g_cli;
fs::path g_data;
fs::path g_tmp;

#define CHECK_TRUE(cond)                                                  \
  do {                                                                    \
    if (!(cond)) {                                                        \
      std::printf("FAILED %s:%d: %s\n", __FILE__, __LINE__, #cond);       \
      ++g_failures;                                                       \
    }                                                                     \
  } while (0)

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string shquote(const fs::path& p) { return "\"" + p.string() + "\""; }

RunResult run(const std::string& args) {
  const fs::path out_file = g_tmp / "stdout.tmp";
  const fs::path err_file = g_tmp / "stderr.tmp";
  const std::string cmd =
      shquote(g_cli) + " " + args + " > " + shquote(out_file) + " 2> " + shquote(err_file);
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

void test_validate() {
  const RunResult ok = run("validate " + shquote(g_data / "gt_valid.json"));
  CHECK_TRUE(ok.exit_code == 0);
  CHECK_TRUE(contains(ok.out, "0 errors"));

  const RunResult bad = run("validate " + shquote(g_data / "gt_invalid.json"));
  CHECK_TRUE(bad.exit_code == 1);
  CHECK_TRUE(contains(bad.out, "words[0].vertices"));
  CHECK_TRUE(contains(bad.out, "1 errors"));

  const RunResult missing = run("validate " + shquote(g_data / "no_such_file.json"));
  CHECK_TRUE(missing.exit_code == 2);
}

void test_stats() {
  const fs::path out_path = g_tmp / "stats.json";
  const RunResult r =
      run("stats " + shquote(g_data / "gt_valid.json") + " -o " + shquote(out_path));
  CHECK_TRUE(r.exit_code == 0);
  CHECK_TRUE(contains(r.err, "images=3"));

  const auto gt = hierkit::parse_ground_truth_file((g_data / "gt_valid.json").string());
  const hierkit::StatsReport expected = hierkit::dataset_stats(gt);
  const json doc = json::parse(slurp(out_path));
  CHECK_TRUE(doc.at("image_count").get<std::int64_t>() == expected.image_count);
  CHECK_TRUE(doc.at("line_count").get<std::int64_t>() == expected.line_count);
  CHECK_TRUE(doc.at("word_count_total").get<std::int64_t>() == expected.word_count_total);
  CHECK_TRUE(doc.at("mean_words_per_image").get<double>() == expected.mean_words_per_image);

  const RunResult to_stdout = run("stats " + shquote(g_data / "gt_valid.json"));
  CHECK_TRUE(to_stdout.exit_code == 0);
  CHECK_TRUE(to_stdout.out == slurp(out_path));
}

void test_decode_golden() {
  const fs::path manifest = g_data / "golden" / "manifest.json";
  const fs::path golden_pred = g_data / "golden" / "pred.json";
  const std::string golden_bytes = slurp(golden_pred);
  CHECK_TRUE(!golden_bytes.empty());

  const fs::path out1 = g_tmp / "dec1.json";
  CHECK_TRUE(run("decode " + shquote(manifest) + " -o " + shquote(out1) + " --threads 1")
                 .exit_code == 0);
  CHECK_TRUE(slurp(out1) == golden_bytes);

  const fs::path out4 = g_tmp / "dec4.json";
  CHECK_TRUE(run("decode " + shquote(manifest) + " -o " + shquote(out4) + " --threads 4")
                 .exit_code == 0);
  CHECK_TRUE(slurp(out4) == golden_bytes);

  const fs::path out_again = g_tmp / "dec_again.json";
  CHECK_TRUE(run("decode " + shquote(manifest) + " -o " + shquote(out_again) + " --threads 4")
                 .exit_code == 0);
  CHECK_TRUE(slurp(out_again) == golden_bytes);

  setenv("HIERKIT_THREADS", "2", 1);
  const fs::path out_env = g_tmp / "dec_env.json";
  CHECK_TRUE(run("decode " + shquote(manifest) + " -o " + shquote(out_env)).exit_code == 0);
  unsetenv("HIERKIT_THREADS");
  CHECK_TRUE(slurp(out_env) == golden_bytes);

  const RunResult strict = run("decode " + shquote(manifest) + " --tc 1.0");
  CHECK_TRUE(strict.exit_code == 0);
  const json doc = json::parse(strict.out);
  for (const auto& img : doc.at("predictions")) {
    CHECK_TRUE(img.at("entities").empty());
  }
}

void test_decode_corrupt_tensor() {
  const fs::path dir = g_tmp / "corrupt";
  fs::create_directories(dir);
  const fs::path src = g_data / "golden";
  const json manifest = json::parse(slurp(src / "manifest.json"));
  const json first = manifest.at("images").at(0);
  for (const char* key : {"masks", "textness", "affinity"}) {
    const std::string name = first.at(key).get<std::string>();
    fs::copy_file(src / name, dir / name, fs::copy_options::overwrite_existing);
  }
  std::string masks_bytes = slurp(dir / first.at("masks").get<std::string>());
  masks_bytes[0] = 'X';
  spit(dir / first.at("masks").get<std::string>(), masks_bytes);
  json corrupt{{"images", json::array({first})}};
  spit(dir / "manifest.json", corrupt.dump());

  const RunResult r = run("decode " + shquote(dir / "manifest.json"));
  CHECK_TRUE(r.exit_code == 1);
  CHECK_TRUE(contains(r.err, first.at("masks").get<std::string>()));
  CHECK_TRUE(contains(r.err, "magic"));
}

void test_evaluate() {
  const fs::path gt = g_data / "gt_valid.json";
  const fs::path pred = g_data / "golden" / "pred.json";

  for (const std::string level : {"word", "paragraph"}) {
    const RunResult r = run("evaluate " + shquote(gt) + " " + shquote(pred) +
                            " --level " + level);
    CHECK_TRUE(r.exit_code == 0);
    const json doc = json::parse(r.out);
    CHECK_TRUE(doc.at("level") == level);
    CHECK_TRUE(doc.at("pq").get<double>() == 1.0);
    CHECK_TRUE(doc.at("f1").get<double>() == 1.0);
    CHECK_TRUE(doc.at("tightness").get<double>() == 1.0);
    CHECK_TRUE(doc.at("fp").get<std::int64_t>() == 0);
    CHECK_TRUE(doc.at("fn").get<std::int64_t>() == 0);
  }

  const RunResult line = run("evaluate " + shquote(gt) + " " + shquote(pred) + " --level line");
  CHECK_TRUE(line.exit_code == 0);
  const json line_doc = json::parse(line.out);
  CHECK_TRUE(line_doc.at("pq").get<double>() >= 0.0);
  CHECK_TRUE(line_doc.at("pq").get<double>() <= 1.0);

  const fs::path stray = g_tmp / "stray_pred.json";
  spit(stray, "{\"predictions\":[{\"image_id\":\"nope\",\"entities\":[]}]}\n");
  const RunResult unknown = run("evaluate " + shquote(gt) + " " + shquote(stray));
  CHECK_TRUE(unknown.exit_code == 1);
  CHECK_TRUE(contains(unknown.err, "nope"));

  const RunResult bad_level =
      run("evaluate " + shquote(gt) + " " + shquote(pred) + " --level glyph");
  CHECK_TRUE(bad_level.exit_code == 1 || bad_level.exit_code == 2);
}

void test_loss() {
  const fs::path manifest = g_data / "golden" / "manifest.json";
  const fs::path gt = g_data / "gt_valid.json";
  const fs::path sim_path = g_tmp / "sim.json";

  const RunResult r = run("loss " + shquote(manifest) + " " + shquote(gt) +
                          " --dump-sim " + shquote(sim_path));
  CHECK_TRUE(r.exit_code == 0);
  const json doc = json::parse(r.out);
  CHECK_TRUE(doc.at("balancing") == "alpha");
  CHECK_TRUE(doc.at("images").size() == 3);

  // One-hot tensors built from the ground truth: each matched word slot
  // contributes about -alpha, the background slot about 0, layout terms
  // vanish, so per image l_det ~ -0.5 * E / (E + 1).
  const auto parsed = hierkit::parse_ground_truth_file(gt.string());
  double expected_mean_total = 0.0;
  for (const auto& img : doc.at("images")) {
    const std::string id = img.at("image_id").get<std::string>();
    const hierkit::HierAnnotation* a = nullptr;
    for (const auto& cand : parsed.annotations) {
      if (cand.image_id == id) a = &cand;
    }
    CHECK_TRUE(a != nullptr);
    const int e = static_cast<int>(hierkit::derive_masks(*a, hierkit::Level::kWord).size());
    const double expected_det = -0.5 * e / (e + 1.0);
    CHECK_TRUE(std::abs(img.at("l_det").get<double>() - expected_det) < 1e-5);
    CHECK_TRUE(std::abs(img.at("l_lay").get<double>()) < 1e-5);
    const double expected_total = 3.0 * img.at("l_det").get<double>() +
                                  1.0 * img.at("l_lay").get<double>();
    CHECK_TRUE(std::abs(img.at("total").get<double>() - expected_total) < 1e-12);
    expected_mean_total += expected_total;
  }
  expected_mean_total /= 3.0;
  CHECK_TRUE(std::abs(doc.at("mean").at("total").get<double>() - expected_mean_total) < 1e-9);

  const json sim = json::parse(slurp(sim_path));
  CHECK_TRUE(sim.at("images").size() == 3);
  for (const auto& img : sim.at("images")) {
    const auto sigma = img.at("sigma").get<std::vector<int>>();
    std::vector<int> seen(sigma.size(), 0);
    for (int v : sigma) {
      CHECK_TRUE(v >= 0 && v < static_cast<int>(sigma.size()));
      seen[v] += 1;
    }
    for (int c : seen) CHECK_TRUE(c == 1);
    CHECK_TRUE(img.at("total_similarity").get<double>() >= 0.0);
  }

  const RunResult vanilla = run("loss " + shquote(manifest) + " " + shquote(gt) +
                                " --balancing vanilla --lambda-lay 5");
  CHECK_TRUE(vanilla.exit_code == 0);
  const json vdoc = json::parse(vanilla.out);
  CHECK_TRUE(vdoc.at("balancing") == "vanilla");

  const RunResult with_seg = run("loss " + shquote(manifest) + " " + shquote(gt) +
                                 " --l-seg 0.25 --l-ins 0.5");
  CHECK_TRUE(with_seg.exit_code == 0);
  const json sdoc = json::parse(with_seg.out);
  const double t0 = sdoc.at("images").at(0).at("total").get<double>();
  const double d0 = sdoc.at("images").at(0).at("l_det").get<double>();
  const double l0 = sdoc.at("images").at(0).at("l_lay").get<double>();
  CHECK_TRUE(std::abs(t0 - (3.0 * d0 + l0 + 0.25 + 0.5)) < 1e-12);
}

void test_grad_check() {
  const fs::path manifest = g_data / "grad" / "manifest.json";
  const fs::path gt = g_data / "grad" / "gt.json";
  const RunResult r = run("grad-check " + shquote(manifest) + " " + shquote(gt));
  CHECK_TRUE(r.exit_code == 0);
  CHECK_TRUE(contains(r.out, "PASS"));
  CHECK_TRUE(contains(r.out, "detection max rel err"));

  const RunResult strict = run("grad-check " + shquote(manifest) + " " + shquote(gt) +
                               " --tolerance 1e-15");
  CHECK_TRUE(strict.exit_code == 1);
  CHECK_TRUE(contains(strict.out, "FAIL"));
}

void test_render() {
  const fs::path base = g_data / "render" / "base.png";
  const fs::path pred = g_data / "golden" / "pred.json";
  const fs::path out = g_tmp / "overlay.png";

  // Multi-image prediction file without --image-id is ambiguous.
  const RunResult ambiguous =
      run("render " + shquote(base) + " " + shquote(pred) + " -o " + shquote(out));
  CHECK_TRUE(ambiguous.exit_code == 1);

  const RunResult r = run("render " + shquote(base) + " " + shquote(pred) + " -o " +
                          shquote(out) + " --image-id img0000");
  CHECK_TRUE(r.exit_code == 0);
  const hierkit::ImageRgb8 rendered = hierkit::read_png(out.string());
  CHECK_TRUE(rendered.width == 96);
  CHECK_TRUE(rendered.height == 64);
  CHECK_TRUE(slurp(out) != slurp(base));

  const RunResult wrong_id = run("render " + shquote(base) + " " + shquote(pred) + " -o " +
                                 shquote(out) + " --image-id missing");
  CHECK_TRUE(wrong_id.exit_code == 1);
}

void test_usage_errors() {
  CHECK_TRUE(run("frobnicate").exit_code == 2);
  CHECK_TRUE(run("decode").exit_code == 2);
  CHECK_TRUE(run("decode --no-such-flag x.json").exit_code == 2);
  CHECK_TRUE(run("--help").exit_code == 0);
  CHECK_TRUE(run("decode --help").exit_code == 0);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s <hierkit-binary> <data-dir>\n", argv[0]);
    return 2;
  }
  g_cli = argv[1];
  g_data = argv[2];
  g_tmp = fs::temp_directory_path() /
          ("hierkit_cli_" + std::to_string(std::random_device{}()));
  fs::create_directories(g_tmp);

  test_validate();
  test_stats();
  test_decode_golden();
  test_decode_corrupt_tensor();
  test_evaluate();
  test_loss();
  test_grad_check();
  test_render();
  test_usage_errors();

  fs::remove_all(g_tmp);
  if (g_failures != 0) {
    std::printf("%d check(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all cli checks passed\n");
  return 0;
}
