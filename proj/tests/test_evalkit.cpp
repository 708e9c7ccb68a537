#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "nutnet/error.hpp"
#include "nutnet/evalkit.hpp"
#include "nutnet/image_io.hpp"
#include "oracles.hpp"

using namespace nutnet;
using namespace nutnet::eval;
namespace fs = std::filesystem;

namespace {

using oracle::box;
using oracle::brute_force_ap;
using oracle::random_box;

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("nutnet_test_eval_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Iou, Basics) {
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 1, 1), box(0, 0, 1, 1)), 1.0);
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 1, 1), box(2, 2, 3, 3)), 0.0);
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 1, 1), box(0.5, 0, 1.5, 1)), 1.0 / 3.0);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_box(40), b = random_box(40);
    EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
    EXPECT_GE(iou(a, b), 0.0);
    EXPECT_LT(iou(a, b), 1.0);
  }
}

TEST(Ap, TrivialCases) {
  const BoxSet gt{{"a", {box(0, 0, 10, 10), box(20, 20, 40, 40)}}};
  EXPECT_DOUBLE_EQ(ap_at_50(gt, gt, 0), 1.0);
  EXPECT_DOUBLE_EQ(ap_at_50({}, gt, 0), 0.0);
  EXPECT_THROW(ap_at_50(gt, gt, 3), MetricError);
  EXPECT_THROW(mean_ap(gt, {}), MetricError);
}

TEST(Ap, ThreeImageHandCase) {
  // Four ground-truth boxes. Ranked detections:
  //   0.9 a TP   P 1/1  R 1/4
  //   0.8 b TP   P 2/2  R 2/4
  //   0.7 b FP   P 2/3  R 2/4
  //   0.6 c TP   P 3/4  R 3/4
  // The second box in b is never found. Area under the envelope:
  //   1/4 * 1 + 1/4 * 1 + 1/4 * 3/4 = 0.6875
  const BoxSet gt{{"a", {box(0, 0, 10, 10)}}, {"b", {box(0, 0, 10, 10), box(50, 50, 60, 60)}}, {"c", {box(5, 5, 15, 15)}}};
  const BoxSet det{{"a", {box(0, 0, 10, 9, 0.9)}},
                   {"b", {box(1, 0, 10, 10, 0.8), box(100, 100, 120, 120, 0.7)}},
                   {"c", {box(5, 5, 15, 14, 0.6)}}};
  EXPECT_DOUBLE_EQ(ap_at_50(det, gt, 0), 0.6875);
}

TEST(Ap, DuplicateDetectionsCountOnce) {
  const BoxSet gt{{"a", {box(0, 0, 10, 10)}}};
  const BoxSet det{{"a", {box(0, 0, 10, 10, 0.9), box(0, 0, 10, 10, 0.8)}}};
  // TP then FP: precision 1 at recall 1.
  EXPECT_DOUBLE_EQ(ap_at_50(det, gt, 0), 1.0);
}

TEST(Ap, MatchesBruteForceOracle) {
  for (int trial = 0; trial < 300; ++trial) {
    BoxSet gt, det;
    oracle::random_ap_case(det, gt);
    for (int cls : {0, 1}) {
      bool has = false;
      for (const auto& [n, v] : gt)
        for (const auto& b : v) has |= b.class_id == cls;
      if (!has) continue;
      ASSERT_NEAR(ap_at_50(det, gt, cls), brute_force_ap(det, gt, cls), 1e-12) << "trial " << trial;
    }
  }
}

TEST(Ap, MeanOverClasses) {
  const BoxSet gt{{"a", {box(0, 0, 10, 10, 1, 0), box(20, 20, 30, 30, 1, 2)}}};
  const BoxSet det{{"a", {box(0, 0, 10, 10, 0.9, 0)}}};
  const auto m = mean_ap(det, gt);
  EXPECT_EQ(m.per_class.size(), 2u);
  EXPECT_DOUBLE_EQ(m.map, 0.5);
}

TEST(Boxes, ParseNamesAndIds) {
  ClassTable t;
  const auto b = parse_boxes(R"({"x.png": [{"class": "person", "x1": 1, "y1": 2, "x2": 3, "y2": 4},
                                            {"class": "car", "x1": 1, "y1": 2, "x2": 3, "y2": 4, "conf": 0.5},
                                            {"class": 7, "x1": 0, "y1": 0, "x2": 1, "y2": 1}]})",
                             t);
  const auto& v = b.at("x.png");
  EXPECT_EQ(v[0].class_id, t.ids.at("person"));
  EXPECT_EQ(v[1].class_id, t.ids.at("car"));
  EXPECT_NE(v[0].class_id, v[1].class_id);
  EXPECT_EQ(v[2].class_id, 7);
  EXPECT_DOUBLE_EQ(v[0].confidence, 1.0);
  EXPECT_DOUBLE_EQ(v[1].confidence, 0.5);
  EXPECT_THROW(parse_boxes(R"({"x.png": [{"class": 0, "x1": 3, "y1": 0, "x2": 1, "y2": 1}]})", t), InputError);
  EXPECT_THROW(parse_boxes(R"({"x.png": [{"class": 0, "x1": 0, "y1": 0, "x2": 1, "y2": 1, "conf": 2}]})", t), InputError);
  EXPECT_THROW(parse_boxes("[1]", t), InputError);
  EXPECT_THROW(parse_boxes(R"({"x.png": [{"x1": 0}]})", t), InputError);
}

TEST(DatasetTest, LoadsAndValidatesAnnotations) {
  const auto d = scratch("dataset");
  io::write_image(Image(20, 30, 0.5f), (d / "b.png").string());
  io::write_image(Image(20, 30, 0.5f), (d / "a.ppm").string());
  write(d / "ok.json", R"({"a.ppm": [{"class": 0, "x1": 0, "y1": 0, "x2": 30, "y2": 20}]})");
  write(d / "missing.json", R"({"c.png": []})");
  write(d / "outside.json", R"({"b.png": [{"class": 0, "x1": 0, "y1": 0, "x2": 31, "y2": 20}]})");
  const auto ds = Dataset::load(d.string(), (d / "ok.json").string());
  EXPECT_EQ(ds.images, (std::vector<std::string>{"a.ppm", "b.png"}));
  ASSERT_TRUE(ds.annotations.has_value());
  EXPECT_THROW(Dataset::load(d.string(), (d / "missing.json").string()), InputError);
  EXPECT_THROW(Dataset::load(d.string(), (d / "outside.json").string()), InputError);
  EXPECT_THROW(Dataset::load(scratch("empty").string()), InputError);
}

TEST(Crops, DeterministicAndSized) {
  const Image photo = oracle::random_image(100, 140);
  Rng a(3), b(3);
  const Image ca = random_crop(photo, 64, a), cb = random_crop(photo, 64, b);
  EXPECT_EQ(ca, cb);
  EXPECT_EQ(ca.height, 64);
  EXPECT_EQ(ca.width, 64);
  for (float v : ca.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Bench, SmallFrameReportsPositiveFps) {
  const auto p = model::init_params(1);
  pipeline::DefenseConfig cfg;
  const auto r = bench_fps(cfg, p, {oracle::random_image(13, 13)}, 5);
  EXPECT_GE(r.warmup, 10);
  EXPECT_EQ(r.defense.frames, 5);
  EXPECT_GT(r.defense.fps, 0.0);
  EXPECT_LE(r.defense.median_ms, r.defense.p95_ms);
  EXPECT_FALSE(r.end_to_end.has_value());
  EXPECT_THROW(bench_fps(cfg, p, {}, 5), InputError);
}

TEST(Bench, LatencySummary) {
  const auto s = summarize_latencies({4, 1, 3, 2, 10});
  EXPECT_EQ(s.frames, 5);
  EXPECT_DOUBLE_EQ(s.mean_ms, 4.0);
  EXPECT_DOUBLE_EQ(s.median_ms, 3.0);
  EXPECT_DOUBLE_EQ(s.fps, 250.0);
}

TEST(Experiment, BenchOnlyReportHasOnlyBenchSection) {
  const auto r = run_experiment(
      R"({"name": "b", "stages": [{"type": "bench", "synthetic": {"size": 52, "count": 2}, "repetitions": 2}]})");
  ASSERT_TRUE(r.ok());
  const auto j = nlohmann::json::parse(r.json);
  EXPECT_EQ(j["schema"], kReportSchema);
  EXPECT_EQ(j["tool_version"], kToolVersion);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["sections"].size(), 1u);
  EXPECT_TRUE(j["sections"].contains("bench"));
  EXPECT_EQ(j["sections"]["bench"]["runs"][0]["block_size"], 13);
}

TEST(Experiment, IdenticalConfigsGiveIdenticalReports) {
  const auto d = scratch("determinism");
  model::save_checkpoint({model::init_params(5), 5, "{}"}, (d / "init.ckpt").string());
  const std::string images = std::string(NUTNET_TEST_DATA) + "/photos/heldout";
  const std::string cfg = R"({"name": "det", "seed": 4, "stages": [
      {"type": "separation", "checkpoint": "init.ckpt", "max_clean_tiles": 50, "noise_tiles": 50,
       "images": ")" + images + R"(", "crops": {"per_photo": 1, "size": 52, "seed": 1}},
      {"type": "attack", "checkpoint": "init.ckpt", "alphas": [0, 1], "seeds": [1, 2], "steps": 3,
       "patch": {"pixels": "noise:16"},
       "images": ")" + images + R"(", "crops": {"per_photo": 1, "size": 104, "seed": 1}},
      {"type": "bench", "synthetic": {"size": 26, "count": 1}, "repetitions": 1}]})";
  ExperimentOptions opt;
  opt.base_dir = d.string();
  const auto a = run_experiment(cfg, opt), b = run_experiment(cfg, opt);
  ASSERT_TRUE(a.ok()) << a.failures[0].stage << ": " << a.failures[0].error;
  EXPECT_EQ(strip_volatile(a.json), strip_volatile(b.json));
  EXPECT_NE(strip_volatile(a.json).find("separation"), std::string::npos);
  // Re-serializing a stripped report is idempotent.
  const auto s = strip_volatile(a.json);
  EXPECT_EQ(strip_volatile(s), s);
  EXPECT_EQ(nlohmann::ordered_json::parse(s).dump(2), s);
}

TEST(Experiment, FailingStageYieldsPartialReport) {
  const auto d = scratch("partial");
  const auto report = (d / "r.json").string();
  ExperimentOptions opt;
  opt.report_path = report;
  const auto r = run_experiment(R"({"stages": [{"type": "defend", "checkpoint": "/nonexistent.ckpt", "images": "/nonexistent"},
                                              {"type": "bench", "synthetic": {"size": 26, "count": 1}, "repetitions": 1},
                                              {"type": "frobnicate"}]})",
                                opt);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.failures.size(), 2u);
  const auto j = nlohmann::json::parse(std::ifstream(report));
  EXPECT_EQ(j["status"], "partial");
  EXPECT_EQ(j["failures"].size(), 2u);
  EXPECT_TRUE(j["sections"].contains("bench"));
  EXPECT_FALSE(fs::exists(report + ".tmp"));
  EXPECT_THROW(run_experiment("{"), ConfigError);
  EXPECT_THROW(run_experiment(R"({"name": "x"})"), ConfigError);
}

TEST(Experiment, EvalStageFromFiles) {
  const auto d = scratch("evalstage");
  write(d / "gt.json", R"({"a.png": [{"class": "person", "x1": 0, "y1": 0, "x2": 10, "y2": 10}]})");
  write(d / "det.json", R"({"a.png": [{"class": "person", "x1": 0, "y1": 0, "x2": 10, "y2": 10, "conf": 0.9}]})");
  ExperimentOptions opt;
  opt.base_dir = d.string();
  const auto r = run_experiment(R"({"stages": [{"type": "eval", "annotations": "gt.json", "detections": "det.json"}]})", opt);
  ASSERT_TRUE(r.ok()) << r.failures[0].error;
  const auto j = nlohmann::json::parse(r.json);
  EXPECT_DOUBLE_EQ(j["sections"]["eval"]["map50"].get<double>(), 1.0);
}
