#include "nutnet/patchlab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "nutnet/error.hpp"
#include "nutnet/image_io.hpp"
#include "nutnet/splitter.hpp"
#include "nutnet/training.hpp"

namespace nutnet::patchlab {

void DetectionBox::validate() const {
  if (!(x1 < x2) || !(y1 < y2)) {
    std::ostringstream os;
    os << "degenerate box (" << x1 << ", " << y1 << ", " << x2 << ", " << y2 << ")";
    throw InputError(os.str());
  }
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw InputError("box confidence must lie in [0, 1]");
}

void PatchSpec::validate() const {
  if (pixels.empty()) throw ConfigError("patch has no pixels");
  for (float v : pixels.data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("patch pixels must lie in [0, 1]");
  }
  const auto& t = transform;
  if (t.max_rotation_deg < t.min_rotation_deg) throw ConfigError("rotation range is inverted");
  if (!(t.min_scale > 0) || t.max_scale < t.min_scale) throw ConfigError("scale range must be positive and ordered");
  if (!(t.jitter >= 0)) throw ConfigError("jitter must be >= 0");
  if (!(t.min_blur_sigma >= 0) || t.max_blur_sigma < t.min_blur_sigma) throw ConfigError("blur range is invalid");
  if (placement.mode == PlacementMode::kRelativeToBox) {
    placement.box.validate();
    if (!(placement.diagonal_fraction > 0)) throw ConfigError("diagonal_fraction must be positive");
  }
}

PatchTransform sample_transform(const PatchSpec& spec, Rng& rng) {
  spec.validate();
  const auto& t = spec.transform;
  PatchTransform out;
  double base = 1.0;
  if (spec.placement.mode == PlacementMode::kAbsolute) {
    out.center_y = spec.placement.y + spec.pixels.height / 2.0;
    out.center_x = spec.placement.x + spec.pixels.width / 2.0;
  } else {
    const auto& b = spec.placement.box;
    out.center_y = (b.y1 + b.y2) / 2.0;
    out.center_x = (b.x1 + b.x2) / 2.0;
    const double side = spec.placement.diagonal_fraction * std::hypot(b.width(), b.height());
    base = side / std::max(spec.pixels.height, spec.pixels.width);
  }
  out.rotation_rad = rng.uniform(t.min_rotation_deg, t.max_rotation_deg) * std::numbers::pi / 180.0;
  out.scale = base * rng.uniform(t.min_scale, t.max_scale);
  out.center_y += rng.uniform(-t.jitter, t.jitter);
  out.center_x += rng.uniform(-t.jitter, t.jitter);
  out.blur_sigma = rng.uniform(t.min_blur_sigma, t.max_blur_sigma);
  return out;
}

namespace {

// Clamped-edge Gaussian blur as an n x n matrix.
std::vector<double> blur_matrix(int n, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> g(2 * radius + 1);
  double sum = 0;
  for (int d = -radius; d <= radius; ++d) sum += g[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
  std::vector<double> k(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int d = -radius; d <= radius; ++d) k[static_cast<std::size_t>(i) * n + std::clamp(i + d, 0, n - 1)] += g[d + radius] / sum;
  return k;
}

// out[i][j] = sum_a sum_b ky[i][a] kx[j][b] in[a][b], per channel; with
// `transpose` the matrices are applied transposed.
Image separable(const Image& in, const std::vector<double>& ky, const std::vector<double>& kx, bool transpose) {
  const int h = in.height;
  const int w = in.width;
  auto kyv = [&](int i, int a) { return transpose ? ky[static_cast<std::size_t>(a) * h + i] : ky[static_cast<std::size_t>(i) * h + a]; };
  auto kxv = [&](int j, int b) { return transpose ? kx[static_cast<std::size_t>(b) * w + j] : kx[static_cast<std::size_t>(j) * w + b]; };
  std::vector<double> tmp(in.data.size(), 0.0);
  for (int a = 0; a < h; ++a)
    for (int j = 0; j < w; ++j)
      for (int b = 0; b < w; ++b) {
        const double k = kxv(j, b);
        if (k == 0.0) continue;
        for (int c = 0; c < 3; ++c) tmp[in.index(a, j, c)] += k * in.at(a, b, c);
      }
  Image out(h, w);
  for (int i = 0; i < h; ++i)
    for (int a = 0; a < h; ++a) {
      const double k = kyv(i, a);
      if (k == 0.0) continue;
      for (int j = 0; j < w; ++j)
        for (int c = 0; c < 3; ++c) out.at(i, j, c) += static_cast<float>(k * tmp[in.index(a, j, c)]);
    }
  return out;
}

}  // namespace

PatchPlan::PatchPlan(int image_height, int image_width, int patch_height, int patch_width,
                     const PatchTransform& transform)
    : height_(image_height), width_(image_width), ph_(patch_height), pw_(patch_width), transform_(transform),
      mask_(image_height, image_width) {
  if (ph_ < 1 || pw_ < 1) throw PlacementError("patch has no pixels");
  if (!(transform.scale > 0) || !std::isfinite(transform.scale)) throw PlacementError("patch scale must be positive");
  const double cs = std::cos(transform.rotation_rad);
  const double sn = std::sin(transform.rotation_rad);
  const double s = transform.scale;

  double min_y = 1e300, max_y = -1e300, min_x = 1e300, max_x = -1e300;
  for (int cy : {-1, 1}) {
    for (int cx : {-1, 1}) {
      const double vx = cx * pw_ / 2.0 * s;
      const double vy = cy * ph_ / 2.0 * s;
      const double x = transform.center_x + cs * vx - sn * vy;
      const double y = transform.center_y + sn * vx + cs * vy;
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
    }
  }
  constexpr double kSlack = 1e-9;
  if (min_y < -kSlack || min_x < -kSlack || max_y > height_ + kSlack || max_x > width_ + kSlack) {
    std::ostringstream os;
    os << "transformed patch spans y [" << min_y << ", " << max_y << "], x [" << min_x << ", " << max_x
       << "] outside the " << height_ << "x" << width_ << " image";
    throw PlacementError(os.str());
  }

  const int y_lo = std::max(0, static_cast<int>(std::floor(min_y)));
  const int y_hi = std::min(height_ - 1, static_cast<int>(std::ceil(max_y)));
  const int x_lo = std::max(0, static_cast<int>(std::floor(min_x)));
  const int x_hi = std::min(width_ - 1, static_cast<int>(std::ceil(max_x)));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double dy = y + 0.5 - transform.center_y;
      const double dx = x + 0.5 - transform.center_x;
      const double uy = (-sn * dx + cs * dy) / s + ph_ / 2.0;
      const double ux = (cs * dx + sn * dy) / s + pw_ / 2.0;
      if (!(uy >= 0 && uy < ph_ && ux >= 0 && ux < pw_)) continue;
      const double fy = uy - 0.5;
      const double fx = ux - 0.5;
      const int iy = static_cast<int>(std::floor(fy));
      const int ix = static_cast<int>(std::floor(fx));
      const double ty = fy - iy;
      const double tx = fx - ix;
      const int y0 = std::clamp(iy, 0, ph_ - 1);
      const int y1 = std::clamp(iy + 1, 0, ph_ - 1);
      const int x0 = std::clamp(ix, 0, pw_ - 1);
      const int x1 = std::clamp(ix + 1, 0, pw_ - 1);
      Tap tap;
      tap.pixel = static_cast<std::uint32_t>(y * width_ + x);
      tap.src[0] = static_cast<std::uint32_t>(y0 * pw_ + x0);
      tap.src[1] = static_cast<std::uint32_t>(y0 * pw_ + x1);
      tap.src[2] = static_cast<std::uint32_t>(y1 * pw_ + x0);
      tap.src[3] = static_cast<std::uint32_t>(y1 * pw_ + x1);
      tap.w[0] = static_cast<float>((1 - ty) * (1 - tx));
      tap.w[1] = static_cast<float>((1 - ty) * tx);
      tap.w[2] = static_cast<float>(ty * (1 - tx));
      tap.w[3] = static_cast<float>(ty * tx);
      taps_.push_back(tap);
      mask_.at(y, x) = 1;
    }
  }
  if (taps_.empty()) throw PlacementError("transformed patch covers no pixel centre");
  if (transform.blur_sigma > 0) {
    blur_y_ = blur_matrix(ph_, transform.blur_sigma);
    blur_x_ = blur_matrix(pw_, transform.blur_sigma);
  }
}

Image PatchPlan::blur(const Image& patch) const {
  return blur_y_.empty() ? patch : separable(patch, blur_y_, blur_x_, false);
}

Image PatchPlan::blur_adjoint(const Image& grad) const {
  return blur_y_.empty() ? grad : separable(grad, blur_y_, blur_x_, true);
}

Image PatchPlan::render(const Image& image, const Image& patch) const {
  if (image.height != height_ || image.width != width_) {
    throw DimensionError("render: plan is for " + std::to_string(height_) + "x" + std::to_string(width_) +
                         ", image is " + std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  if (patch.height != ph_ || patch.width != pw_) throw DimensionError("render: patch size differs from plan");
  const Image src = blur(patch);
  Image out = image;
  for (const Tap& t : taps_) {
    for (int c = 0; c < 3; ++c) {
      float v = 0.0f;
      for (int k = 0; k < 4; ++k) v += t.w[k] * src.data[t.src[k] * 3 + c];
      out.data[t.pixel * 3 + c] = v;
    }
  }
  return out;
}

Image PatchPlan::pullback(const Image& image_grad) const {
  if (image_grad.height != height_ || image_grad.width != width_) throw DimensionError("pullback: gradient size differs from plan");
  Image g(ph_, pw_);
  for (const Tap& t : taps_) {
    for (int c = 0; c < 3; ++c) {
      const float v = image_grad.data[t.pixel * 3 + c];
      for (int k = 0; k < 4; ++k) g.data[t.src[k] * 3 + c] += t.w[k] * v;
    }
  }
  return blur_adjoint(g);
}

AppliedPatch apply_patch(const Image& image, const PatchSpec& spec, Rng& rng) {
  const PatchTransform tr = sample_transform(spec, rng);
  const PatchPlan plan(image.height, image.width, spec.pixels.height, spec.pixels.width, tr);
  return {plan.render(image, spec.pixels), plan.mask(), tr};
}

NoisePatchCase synthesize_noise_patch(const Image& clean, const NoisePatchOptions& opts, Rng& rng) {
  if (!(opts.min_coverage > 0) || opts.max_coverage < opts.min_coverage || opts.max_coverage >= 1) {
    throw ConfigError("coverage range must satisfy 0 < min <= max < 1");
  }
  const double coverage = rng.uniform(opts.min_coverage, opts.max_coverage);
  PatchTransform tr;
  tr.rotation_rad = rng.uniform(opts.min_rotation_deg, opts.max_rotation_deg) * std::numbers::pi / 180.0;
  tr.scale = rng.uniform(opts.min_scale, opts.max_scale);
  tr.blur_sigma = rng.uniform(opts.min_blur_sigma, opts.max_blur_sigma);
  const double side = std::sqrt(coverage * clean.height * clean.width);
  const int p = std::max(1, static_cast<int>(std::lround(side / tr.scale)));
  // Half extent of the rotated square's bounding box.
  const double half = 0.5 * p * tr.scale * (std::abs(std::cos(tr.rotation_rad)) + std::abs(std::sin(tr.rotation_rad)));
  if (2 * half > clean.height || 2 * half > clean.width) {
    throw PlacementError("a " + std::to_string(p) + " pixel patch does not fit the frame");
  }
  tr.center_y = rng.uniform(half, clean.height - half);
  tr.center_x = rng.uniform(half, clean.width - half);

  train::NoiseOverlaySpec noise;
  noise.pixel_scale = opts.pixel_scale;
  const Image pixels = train::noise_tile(p, noise, rng);
  const PatchPlan plan(clean.height, clean.width, p, p, tr);
  NoisePatchCase out{plan.render(clean, pixels), plan.mask(), tr, 0.0};
  out.coverage = out.ground_truth.fraction();
  return out;
}

double overlap_ratio(const Mask& m_d, const Mask& m_gt) {
  if (m_d.height != m_gt.height || m_d.width != m_gt.width) {
    throw DimensionError("overlap_ratio: masks are " + std::to_string(m_d.height) + "x" + std::to_string(m_d.width) +
                         " and " + std::to_string(m_gt.height) + "x" + std::to_string(m_gt.width));
  }
  std::size_t both = 0;
  std::size_t gt = 0;
  for (std::size_t i = 0; i < m_gt.data.size(); ++i) {
    gt += m_gt.data[i];
    both += m_gt.data[i] & m_d.data[i];
  }
  if (gt == 0) throw MetricError("overlap_ratio is undefined for an empty ground-truth mask");
  return static_cast<double>(both) / static_cast<double>(gt);
}

// --- Mock oracle -------------------------------------------------------------

namespace {

class MockOracle final : public DetectorGradientOracle {
 public:
  static constexpr int kFilters = 8;
  static constexpr double kEnergyScale = 0.02;

  explicit MockOracle(std::uint64_t seed) {
    Rng rng(seed ^ 0x6d6f636bull);
    for (auto& f : filters_) {
      double mean = 0;
      for (double& v : f) mean += v = rng.normal();
      mean /= 27.0;
      double norm = 0;
      for (double& v : f) {
        v -= mean;
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (double& v : f) v /= norm;
    }
  }

  std::string id() const override { return "mock"; }

  OracleOutput evaluate(const Image& image, const std::vector<DetectionBox>& gt) const override {
    const int h = image.height;
    const int w = image.width;
    if (h < 3 || w < 3) throw DimensionError("mock oracle needs at least a 3x3 image");
    // Interior positions whose centre lies in some box (or all of them).
    std::vector<std::uint8_t> region(static_cast<std::size_t>(h) * w, gt.empty() ? 1 : 0);
    for (const auto& b : gt) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (y + 0.5 >= b.y1 && y + 0.5 < b.y2 && x + 0.5 >= b.x1 && x + 0.5 < b.x2) region[y * w + x] = 1;
    }
    std::vector<std::array<double, kFilters>> resp;
    std::vector<int> pos;
    for (int y = 1; y + 1 < h; ++y) {
      for (int x = 1; x + 1 < w; ++x) {
        if (!region[y * w + x]) continue;
        std::array<double, kFilters> r{};
        for (int f = 0; f < kFilters; ++f) {
          double acc = 0;
          int k = 0;
          for (int c = 0; c < 3; ++c)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) acc += filters_[f][k++] * image.at(y + dy, x + dx, c);
          r[f] = acc;
        }
        resp.push_back(r);
        pos.push_back(y * w + x);
      }
    }
    OracleOutput out;
    out.gradient = Image(h, w);
    if (resp.empty()) {
      out.loss = 1.0;
      return out;
    }
    const double n = static_cast<double>(resp.size()) * kFilters;
    double energy = 0;
    for (const auto& r : resp)
      for (double v : r) energy += v * v;
    energy /= n;
    out.loss = std::exp(-energy / kEnergyScale);
    const double scale = -out.loss / kEnergyScale * 2.0 / n;
    std::vector<double> g(image.data.size(), 0.0);
    for (std::size_t i = 0; i < resp.size(); ++i) {
      const int y = pos[i] / w;
      const int x = pos[i] % w;
      for (int f = 0; f < kFilters; ++f) {
        const double up = scale * resp[i][f];
        int k = 0;
        for (int c = 0; c < 3; ++c)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) g[image.index(y + dy, x + dx, c)] += up * filters_[f][k++];
      }
    }
    for (std::size_t i = 0; i < g.size(); ++i) out.gradient.data[i] = static_cast<float>(g[i]);
    return out;
  }

 private:
  std::array<std::array<double, 27>, kFilters> filters_{};
};

}  // namespace

std::unique_ptr<DetectorGradientOracle> mock_detector_oracle(std::uint64_t seed) {
  return std::make_unique<MockOracle>(seed);
}

std::unique_ptr<DetectorGradientOracle> make_oracle(const std::string& id, std::uint64_t seed) {
  if (id == "mock") return mock_detector_oracle(seed);
  throw ConfigError("unknown detector-gradient oracle '" + id + "' (only 'mock' is bundled)");
}

// --- Adaptive attack ---------------------------------------------------------

void AdaptiveAttackConfig::validate() const {
  if (!(alpha >= 0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and >= 0");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(step_size > 0)) throw ConfigError("step_size must be positive");
  if (record_every < 1) throw ConfigError("record_every must be >= 1");
}

double footprint_distance(const model::AEParams& params, const Image& image, const Mask& mask, Image* gradient) {
  if (mask.height != image.height || mask.width != image.width) throw DimensionError("footprint_distance: mask size differs from image");
  const int B = params.block_size;
  const split::BlockGrid grid = split::split(image, B);
  std::vector<int> touched;
  for (int t = 0; t < grid.tile_count(); ++t) {
    const auto& o = grid.origins[t];
    bool hit = false;
    for (int y = 0; y < o.valid_height && !hit; ++y)
      for (int x = 0; x < o.valid_width && !hit; ++x) hit = mask.at(o.y + y, o.x + x) != 0;
    if (hit) touched.push_back(t);
  }
  if (gradient) *gradient = Image(image.height, image.width);
  if (touched.empty()) return 0.0;

  const auto tiles = grid.tiles.gather(touched);
  model::ForwardCache<float> cache;
  const auto recon = model::forward(params, tiles, gradient ? &cache : nullptr);
  const int n = tiles.batch;
  std::size_t count = 0;
  for (int t : touched) count += static_cast<std::size_t>(grid.origins[t].valid_height) * grid.origins[t].valid_width * 3;
  double dist = 0;
  kernel::FeatureMap<float> up(3, B, B, n);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < B; ++y)
      for (int x = 0; x < B; ++x)
        for (int b = 0; b < n; ++b) {
          const auto& o = grid.origins[touched[b]];
          if (y >= o.valid_height || x >= o.valid_width) continue;
          const double r = static_cast<double>(recon.at(c, y, x, b)) - tiles.at(c, y, x, b);
          dist += std::abs(r);
          up.at(c, y, x, b) = static_cast<float>((r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) / static_cast<double>(count));
        }
  dist /= static_cast<double>(count);
  if (gradient) {
    const auto g = model::backward(params, cache, up, true);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < B; ++y)
        for (int x = 0; x < B; ++x)
          for (int b = 0; b < n; ++b) {
            const auto& o = grid.origins[touched[b]];
            const int iy = std::min(o.y + y, image.height - 1);
            const int ix = std::min(o.x + x, image.width - 1);
            gradient->at(iy, ix, c) += g.input.at(c, y, x, b) - up.at(c, y, x, b);
          }
  }
  return dist;
}

namespace {

double dot(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
  return s;
}

}  // namespace

AttackTrace adaptive_attack(const Image& image, const PatchSpec& init, const std::vector<DetectionBox>& ground_truth,
                            const AdaptiveAttackConfig& cfg, const model::AEParams& params,
                            const DetectorGradientOracle& oracle) {
  cfg.validate();
  Rng rng(cfg.seed);
  const PatchPlan plan(image.height, image.width, init.pixels.height, init.pixels.width, sample_transform(init, rng));
  AttackTrace trace;
  trace.alpha = cfg.alpha;
  trace.footprint = plan.mask();
  Image patch = init.pixels;
  trace.trajectory.emplace_back(0, patch);

  for (int k = 0;; ++k) {
    const Image patched = plan.render(image, patch);
    const OracleOutput o = oracle.evaluate(patched, ground_truth);
    Image dist_grad;
    const double dist = footprint_distance(params, patched, plan.mask(), &dist_grad);
    const Image gl = plan.pullback(o.gradient);
    const Image gd = plan.pullback(dist_grad);
    AttackStep st;
    st.step = k;
    st.attack_loss = o.loss;
    st.distance = dist;
    st.total = o.loss + cfg.alpha * dist;
    const double nl = std::sqrt(dot(gl, gl));
    const double nd = std::sqrt(dot(gd, gd));
    st.inner_product = (nl > 0 && nd > 0) ? dot(gl, gd) / (nl * nd) : 0.0;
    if (!std::isfinite(st.total)) throw InternalError("adaptive attack: non-finite loss at step " + std::to_string(k));
    trace.steps.push_back(st);
    if (k == cfg.steps) break;

    for (std::size_t i = 0; i < patch.data.size(); ++i) {
      const double g = static_cast<double>(gl.data[i]) + cfg.alpha * gd.data[i];
      const double step = g > 0 ? cfg.step_size : (g < 0 ? -cfg.step_size : 0.0);
      patch.data[i] = std::clamp(static_cast<float>(patch.data[i] - step), 0.0f, 1.0f);
    }
    if ((k + 1) % cfg.record_every == 0 && k + 1 != cfg.steps) trace.trajectory.emplace_back(k + 1, patch);
  }
  if (cfg.steps > 0) trace.trajectory.emplace_back(cfg.steps, patch);
  trace.final_patch = patch;
  return trace;
}

std::string AttackTrace::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = "nutnet.attack-trace/1";
  j["alpha"] = alpha;
  j["footprint_pixels"] = footprint.count();
  auto& s = j["steps"] = nlohmann::json::array();
  for (const auto& st : steps) {
    s.push_back({{"step", st.step},
                 {"attack_loss", st.attack_loss},
                 {"distance", st.distance},
                 {"total", st.total},
                 {"inner_product", st.inner_product}});
  }
  auto& t = j["trajectory_steps"] = nlohmann::json::array();
  for (const auto& [step, p] : trajectory) t.push_back(step);
  return j.dump(2);
}

std::string AttackTrace::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "step,attack_loss,distance,total,inner_product\n";
  for (const auto& st : steps) {
    os << st.step << ',' << st.attack_loss << ',' << st.distance << ',' << st.total << ',' << st.inner_product << '\n';
  }
  return os.str();
}

PatchSpec patch_spec_from_json(const std::string& text, const std::string& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("patch spec is not valid JSON: ") + e.what());
  }
  PatchSpec spec;
  try {
    spec.seed = j.value("seed", std::uint64_t{0});
    const std::string px = j.at("pixels").get<std::string>();
    if (px.rfind("noise:", 0) == 0) {
      const int side = std::stoi(px.substr(6));
      if (side < 1) throw ConfigError("noise patch side must be >= 1");
      Rng rng(spec.seed);
      train::NoiseOverlaySpec noise;
      spec.pixels = train::noise_tile(side, noise, rng);
    } else {
      const auto path = std::filesystem::path(px).is_absolute() ? std::filesystem::path(px)
                                                                : std::filesystem::path(base_dir) / px;
      spec.pixels = io::read_image(path.string());
    }
    if (j.contains("placement")) {
      const auto& p = j.at("placement");
      const std::string mode = p.value("mode", "absolute");
      if (mode == "absolute") {
        spec.placement.mode = PlacementMode::kAbsolute;
        spec.placement.y = p.value("y", 0.0);
        spec.placement.x = p.value("x", 0.0);
      } else if (mode == "box") {
        spec.placement.mode = PlacementMode::kRelativeToBox;
        const auto b = p.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw ConfigError("placement box must be [x1, y1, x2, y2]");
        spec.placement.box = {0, 1.0, b[0], b[1], b[2], b[3]};
        spec.placement.diagonal_fraction = p.value("diagonal_fraction", 0.2);
      } else {
        throw ConfigError("placement mode must be 'absolute' or 'box', got '" + mode + "'");
      }
    }
    auto range = [&](const char* key, double& lo, double& hi) {
      if (!j.contains(key)) return;
      const auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError(std::string(key) + " must be [min, max]");
      lo = v[0];
      hi = v[1];
    };
    range("rotation_deg", spec.transform.min_rotation_deg, spec.transform.max_rotation_deg);
    range("scale", spec.transform.min_scale, spec.transform.max_scale);
    range("blur_sigma", spec.transform.min_blur_sigma, spec.transform.max_blur_sigma);
    spec.transform.jitter = j.value("jitter", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("patch spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace nutnet::patchlab
