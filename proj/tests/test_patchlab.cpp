#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "json.hpp"
#include "nutnet/error.hpp"
#include "nutnet/patchlab.hpp"
#include "oracles.hpp"

using namespace nutnet;
using namespace nutnet::patchlab;

namespace {

double dot(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
  return s;
}

PatchTransform centred(double cy, double cx, double deg = 0, double scale = 1, double sigma = 0) {
  return {cy, cx, deg * std::numbers::pi / 180.0, scale, sigma};
}

Mask upsample2(const Mask& m) {
  Mask out(m.height * 2, m.width * 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(y, x) = m.at(y / 2, x / 2);
  return out;
}

}  // namespace

TEST(PatchPlan, IdentityCopiesPatchVerbatim) {
  const Image base = oracle::random_image(50, 60);
  const Image patch = oracle::random_image(10, 14);
  const PatchPlan plan(50, 60, 10, 14, centred(20 + 5, 30 + 7));
  const Image out = plan.render(base, patch);
  EXPECT_EQ(plan.mask().count(), 140u);
  for (int y = 0; y < 50; ++y)
    for (int x = 0; x < 60; ++x) {
      const bool in = y >= 20 && y < 30 && x >= 30 && x < 44;
      ASSERT_EQ(plan.mask().at(y, x), in ? 1 : 0);
      for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(y, x, c), in ? patch.at(y - 20, x - 30, c) : base.at(y, x, c));
    }
}

TEST(PatchPlan, RotationAndScalePreserveArea) {
  const int ph = 30, pw = 20;
  for (double deg : {0.0, 17.0, 45.0, 90.0, 133.0}) {
    for (double s : {0.8, 1.0, 1.25, 2.0}) {
      const PatchPlan plan(200, 200, ph, pw, centred(100.3, 99.7, deg, s));
      const double expect = ph * pw * s * s;
      EXPECT_NEAR(plan.mask().count() / expect, 1.0, 0.02) << deg << " deg, scale " << s;
    }
  }
  // A quarter turn maps a 30x20 patch onto a 20x30 footprint.
  const PatchPlan q(100, 100, 30, 20, centred(50, 50, 90));
  int rows = 0, cols = 0;
  for (int y = 0; y < 100; ++y) rows += q.mask().at(y, 50);
  for (int x = 0; x < 100; ++x) cols += q.mask().at(50, x);
  EXPECT_EQ(rows, 20);
  EXPECT_EQ(cols, 30);
}

TEST(PatchPlan, PullbackIsAdjointOfRender) {
  for (double sigma : {0.0, 0.7, 1.5}) {
    const PatchPlan plan(64, 64, 12, 9, centred(30.2, 33.9, 31, 1.4, sigma));
    const Image patch = oracle::random_image(12, 9, -1, 1);
    Image g = oracle::random_image(64, 64, -1, 1);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (!plan.mask().at(y, x))
          for (int c = 0; c < 3; ++c) g.at(y, x, c) = 0;
    const Image rendered = plan.render(Image(64, 64), patch);
    EXPECT_NEAR(dot(rendered, g), dot(patch, plan.pullback(g)), 1e-4);
  }
}

TEST(PatchPlan, BlurKeepsConstantsAndSmooths) {
  const PatchPlan plan(40, 40, 10, 10, centred(20, 20, 0, 1, 1.0));
  const Image flat(10, 10, 0.3f);
  const Image out = plan.render(Image(40, 40), flat);
  for (int y = 15; y < 25; ++y)
    for (int x = 15; x < 25; ++x) EXPECT_NEAR(out.at(y, x, 1), 0.3f, 1e-6);
  Image spike(10, 10);
  spike.at(5, 5, 0) = 1;
  const Image s = plan.render(Image(40, 40), spike);
  EXPECT_LT(s.at(20, 20, 0), 0.5f);
  EXPECT_GT(s.at(20, 21, 0), 0.0f);
}

TEST(PatchPlan, OutOfBoundsIsRejected) {
  EXPECT_THROW(PatchPlan(50, 50, 10, 10, centred(4, 25)), PlacementError);
  EXPECT_THROW(PatchPlan(50, 50, 10, 10, centred(25, 25, 45, 3.6)), PlacementError);
  EXPECT_NO_THROW(PatchPlan(50, 50, 10, 10, centred(5, 5)));
  EXPECT_THROW(PatchPlan(50, 50, 0, 10, centred(25, 25)), PlacementError);
}

TEST(ApplyPatch, AbsoluteAndBoxPlacement) {
  PatchSpec spec;
  spec.pixels = oracle::random_image(8, 8);
  spec.placement.y = 4;
  spec.placement.x = 6;
  Rng rng(1);
  const auto a = apply_patch(Image(30, 30), spec, rng);
  EXPECT_EQ(a.mask.count(), 64u);
  EXPECT_EQ(a.image.at(4, 6, 0), spec.pixels.at(0, 0, 0));

  spec.placement.mode = PlacementMode::kRelativeToBox;
  spec.placement.box = {0, 1, 10, 10, 50, 40};  // 40 x 30 box, diagonal 50
  spec.placement.diagonal_fraction = 0.4;       // side 20
  const auto b = apply_patch(Image(60, 60), spec, rng);
  EXPECT_NEAR(b.transform.scale, 2.5, 1e-12);
  EXPECT_NEAR(b.transform.center_x, 30, 1e-12);
  EXPECT_NEAR(b.transform.center_y, 25, 1e-12);
  EXPECT_NEAR(static_cast<double>(b.mask.count()), 400.0, 8.0);
}

TEST(ApplyPatch, SpecValidation) {
  PatchSpec spec;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.pixels = Image(4, 4, 1.5f);
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.pixels = Image(4, 4, 0.5f);
  spec.transform.min_scale = 2;
  spec.transform.max_scale = 1;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(NoisePatch, CoverageAndGroundTruth) {
  const Image clean = oracle::random_image(416, 416);
  Rng rng(8);
  for (int i = 0; i < 30; ++i) {
    const auto c = synthesize_noise_patch(clean, {}, rng);
    EXPECT_GE(c.coverage, 0.02 * 0.97);
    EXPECT_LE(c.coverage, 0.08 * 1.03);
    EXPECT_DOUBLE_EQ(c.coverage, c.ground_truth.fraction());
    // Outside the ground truth the frame is untouched.
    for (std::size_t p = 0; p < c.ground_truth.data.size(); ++p) {
      if (c.ground_truth.data[p]) continue;
      for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(c.image.data[p * 3 + ch], clean.data[p * 3 + ch]);
    }
  }
}

TEST(Overlap, Definition) {
  Mask gt(10, 10), d(10, 10);
  for (int x = 0; x < 10; ++x) gt.at(2, x) = 1;
  for (int x = 5; x < 10; ++x) d.at(2, x) = d.at(3, x) = 1;
  EXPECT_DOUBLE_EQ(overlap_ratio(d, gt), 0.5);
  EXPECT_DOUBLE_EQ(overlap_ratio(gt, gt), 1.0);
  EXPECT_DOUBLE_EQ(overlap_ratio(Mask(10, 10), gt), 0.0);
  EXPECT_THROW(overlap_ratio(d, Mask(10, 10)), MetricError);
  EXPECT_THROW(overlap_ratio(Mask(9, 10), gt), DimensionError);
}

TEST(Overlap, InvariantUnderNearestNeighbourUpsampling) {
  for (int trial = 0; trial < 20; ++trial) {
    Mask gt(17, 23), d(17, 23);
    for (auto& v : gt.data) v = oracle::uniform(0, 1) < 0.3;
    for (auto& v : d.data) v = oracle::uniform(0, 1) < 0.5;
    gt.data[0] = 1;
    EXPECT_NEAR(overlap_ratio(upsample2(d), upsample2(gt)), overlap_ratio(d, gt), 1e-12);
  }
}

TEST(MockOracle, GradientMatchesFiniteDifferences) {
  const auto oracle_ptr = mock_detector_oracle(3);
  Image img = oracle::random_image(24, 24);
  const std::vector<DetectionBox> gt{{0, 1, 4, 4, 20, 18}};
  const auto out = oracle_ptr->evaluate(img, gt);
  EXPECT_GT(out.loss, 0.0);
  EXPECT_LT(out.loss, 1.0);
  // Directional derivatives along random directions, in float images.
  for (int trial = 0; trial < 5; ++trial) {
    Image v = oracle::random_image(24, 24, -1, 1);
    const double eps = 1e-3;
    Image up = img, down = img;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      up.data[i] += static_cast<float>(eps * v.data[i]);
      down.data[i] -= static_cast<float>(eps * v.data[i]);
    }
    const double fd = (oracle_ptr->evaluate(up, gt).loss - oracle_ptr->evaluate(down, gt).loss) / (2 * eps);
    EXPECT_NEAR(dot(out.gradient, v), fd, 1e-3 * std::abs(fd) + 1e-6);
  }
  EXPECT_EQ(make_oracle("mock", 3)->id(), oracle_ptr->id());
  EXPECT_THROW(make_oracle("yolo", 0), ConfigError);
}

TEST(MockOracle, TextureLowersLoss) {
  const auto o = mock_detector_oracle(0);
  const Image flat(32, 32, 0.5f);
  const Image noisy = oracle::random_image(32, 32);
  EXPECT_NEAR(o->evaluate(flat, {}).loss, 1.0, 1e-9);
  EXPECT_LT(o->evaluate(noisy, {}).loss, 0.5);
}

TEST(FootprintDistance, GradientMatchesDirectionalDifference) {
  const auto params = model::init_params(2);
  const Image img = oracle::random_image(39, 39);
  Mask m(39, 39);
  for (int y = 10; y < 20; ++y)
    for (int x = 12; x < 25; ++x) m.at(y, x) = 1;
  Image g;
  const double d = footprint_distance(params, img, m, &g);
  EXPECT_GT(d, 0.0);
  EXPECT_EQ(footprint_distance(params, img, m), d);
  Image v = oracle::random_image(39, 39, -1, 1);
  const double eps = 1e-3;
  Image up = img, down = img;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    up.data[i] += static_cast<float>(eps * v.data[i]);
    down.data[i] -= static_cast<float>(eps * v.data[i]);
  }
  const double fd = (footprint_distance(params, up, m) - footprint_distance(params, down, m)) / (2 * eps);
  EXPECT_NEAR(dot(g, v), fd, 0.02 * std::abs(fd) + 1e-4);
  // Pixels in tiles that do not touch the mask carry no gradient.
  for (int c = 0; c < 3; ++c) EXPECT_EQ(g.at(38, 38, c), 0.0f);
}

namespace {

PatchSpec centre_noise_patch(int side) {
  PatchSpec spec;
  spec.pixels = Image(side, side);
  Rng r(4);
  for (float& v : spec.pixels.data) v = static_cast<float>(std::clamp(0.5 + r.normal() / 6, 0.0, 1.0));
  spec.placement.y = 26 - side / 2.0;
  spec.placement.x = 26 - side / 2.0;
  return spec;
}

}  // namespace

TEST(Attack, ZeroStepsKeepsInitialPatch) {
  const auto params = model::init_params(1);
  const auto o = mock_detector_oracle(0);
  AdaptiveAttackConfig cfg;
  cfg.steps = 0;
  const auto spec = centre_noise_patch(16);
  const auto t = adaptive_attack(Image(52, 52, 0.4f), spec, {}, cfg, params, *o);
  EXPECT_EQ(t.final_patch, spec.pixels);
  ASSERT_EQ(t.steps.size(), 1u);
  EXPECT_NEAR(t.steps[0].total, t.steps[0].attack_loss, 1e-12);
}

TEST(Attack, DescendsAndStaysInRange) {
  const auto params = model::init_params(1);
  const auto o = mock_detector_oracle(0);
  AdaptiveAttackConfig cfg;
  cfg.steps = 20;
  cfg.alpha = 0.5;
  cfg.record_every = 5;
  const auto spec = centre_noise_patch(16);
  const Image frame = oracle::random_image(52, 52);
  const auto t = adaptive_attack(frame, spec, {}, cfg, params, *o);
  ASSERT_EQ(t.steps.size(), 21u);
  EXPECT_LT(t.steps.back().total, t.steps.front().total);
  for (float v : t.final_patch.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  for (const auto& s : t.steps) {
    EXPECT_GE(s.inner_product, -1.0 - 1e-9);
    EXPECT_LE(s.inner_product, 1.0 + 1e-9);
    EXPECT_NEAR(s.total, s.attack_loss + 0.5 * s.distance, 1e-9);
  }
  EXPECT_EQ(t.trajectory.size(), 5u);
  const auto again = adaptive_attack(frame, spec, {}, cfg, params, *o);
  EXPECT_EQ(again.final_patch, t.final_patch);
  const auto j = nlohmann::json::parse(t.to_json());
  EXPECT_EQ(j["schema"], "nutnet.attack-trace/1");
  EXPECT_EQ(t.to_csv().substr(0, 4), "step");
}

TEST(Attack, ConfigValidation) {
  AdaptiveAttackConfig cfg;
  cfg.alpha = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.step_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PatchJson, ParsesNoiseAndPlacement) {
  const auto s = patch_spec_from_json(
      R"({"pixels": "noise:12", "placement": {"mode": "box", "box": [10, 10, 50, 40], "diagonal_fraction": 0.3},
          "rotation_deg": [0, 30], "scale": [0.9, 1.1], "blur_sigma": [0, 0.5], "jitter": 2, "seed": 5})");
  EXPECT_EQ(s.pixels.height, 12);
  EXPECT_EQ(s.placement.mode, PlacementMode::kRelativeToBox);
  EXPECT_DOUBLE_EQ(s.placement.box.x2, 50);
  EXPECT_DOUBLE_EQ(s.transform.max_rotation_deg, 30);
  EXPECT_DOUBLE_EQ(s.transform.jitter, 2);
  EXPECT_THROW(patch_spec_from_json(R"({"pixels": "noise:0"})"), ConfigError);
  EXPECT_THROW(patch_spec_from_json(R"({"pixels": "missing.png"})"), Error);
}
