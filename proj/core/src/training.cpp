#include "nutnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "nutnet/error.hpp"
#include "nutnet/splitter.hpp"
#include "nutnet/stats.hpp"

namespace nutnet::train {

using kernel::FeatureMap;

const char* distribution_name(NoiseDistribution d) {
  return d == NoiseDistribution::kUniform ? "uniform" : "normal";
}

NoiseDistribution parse_distribution(const std::string& name) {
  if (name == "normal" || name == "gaussian" || name == "standard-normal") return NoiseDistribution::kStandardNormal;
  if (name == "uniform") return NoiseDistribution::kUniform;
  throw ConfigError("unknown noise distribution '" + name + "' (expected normal or uniform)");
}

void NoiseOverlaySpec::validate() const {
  if (min_overlays < 1 || max_overlays < min_overlays) {
    throw ConfigError("overlay count range must satisfy 1 <= min <= max, got [" + std::to_string(min_overlays) +
                      ", " + std::to_string(max_overlays) + "]");
  }
  if (!(min_size_fraction > 0.0) || !(max_size_fraction <= 1.0) || max_size_fraction < min_size_fraction) {
    throw ConfigError("overlay size fractions must lie in (0, 1] with min <= max");
  }
  if (!(min_stretch >= 1.0) || max_stretch < min_stretch) {
    throw ConfigError("stretch range must satisfy 1 <= min <= max");
  }
  if (!(pixel_scale > 0.0)) throw ConfigError("pixel_scale must be positive");
}

float noise_to_pixel(double t, const NoiseOverlaySpec& spec) {
  if (spec.distribution == NoiseDistribution::kUniform) return static_cast<float>(std::clamp(t, 0.0, 1.0));
  return static_cast<float>(std::clamp(0.5 + spec.pixel_scale * t, 0.0, 1.0));
}

double pixel_to_noise(float v, const NoiseOverlaySpec& spec) {
  if (spec.distribution == NoiseDistribution::kUniform) return v;
  return (static_cast<double>(v) - 0.5) / spec.pixel_scale;
}

namespace {

double draw_noise(const NoiseOverlaySpec& spec, Rng& rng) {
  return spec.distribution == NoiseDistribution::kUniform ? rng.uniform() : rng.normal();
}

// One noise rectangle of h x w pixels whose samples are spaced sy, sx pixels
// apart and bilinearly interpolated in between.
void paste_noise(Image& img, Mask& mask, int y0, int x0, int h, int w, double sy, double sx,
                 const NoiseOverlaySpec& spec, Rng& rng) {
  const int gh = static_cast<int>(std::ceil((h - 1) / sy)) + 2;
  const int gw = static_cast<int>(std::ceil((w - 1) / sx)) + 2;
  std::vector<double> grid(static_cast<std::size_t>(gh) * gw * Image::kChannels);
  for (double& v : grid) v = draw_noise(spec, rng);
  auto g = [&](int r, int c, int ch) { return grid[(static_cast<std::size_t>(r) * gw + c) * Image::kChannels + ch]; };
  for (int y = 0; y < h; ++y) {
    const double fy = y / sy;
    const int r = static_cast<int>(fy);
    const double ty = fy - r;
    for (int x = 0; x < w; ++x) {
      const double fx = x / sx;
      const int c = static_cast<int>(fx);
      const double tx = fx - c;
      for (int ch = 0; ch < Image::kChannels; ++ch) {
        double t = g(r, c, ch);
        if (ty > 0.0 || tx > 0.0) {
          t = (1 - ty) * ((1 - tx) * g(r, c, ch) + tx * g(r, c + 1, ch)) +
              ty * ((1 - tx) * g(r + 1, c, ch) + tx * g(r + 1, c + 1, ch));
        }
        img.at(y0 + y, x0 + x, ch) = noise_to_pixel(t, spec);
      }
      mask.at(y0 + y, x0 + x) = 1;
    }
  }
}

}  // namespace

Overlay synthesize_overlay(const Image& image, const NoiseOverlaySpec& spec, Rng& rng) {
  spec.validate();
  if (image.empty()) throw InputError("synthesize_overlay: empty image");
  Overlay out{image, Mask(image.height, image.width)};
  const int count = rng.uniform_int(spec.min_overlays, spec.max_overlays);
  for (int k = 0; k < count; ++k) {
    const double fh = rng.uniform(spec.min_size_fraction, spec.max_size_fraction);
    const double fw = rng.uniform(spec.min_size_fraction, spec.max_size_fraction);
    const int h = std::clamp(static_cast<int>(std::lround(fh * image.height)), 1, image.height);
    const int w = std::clamp(static_cast<int>(std::lround(fw * image.width)), 1, image.width);
    const int y0 = rng.uniform_int(0, image.height - h);
    const int x0 = rng.uniform_int(0, image.width - w);
    const double sy = rng.uniform(spec.min_stretch, spec.max_stretch);
    const double sx = rng.uniform(spec.min_stretch, spec.max_stretch);
    paste_noise(out.composite, out.mask, y0, x0, h, w, sy, sx, spec, rng);
  }
  return out;
}

Image noise_tile(int block_size, const NoiseOverlaySpec& spec, Rng& rng) {
  Image tile(block_size, block_size);
  for (float& v : tile.data) v = noise_to_pixel(draw_noise(spec, rng), spec);
  return tile;
}

template <typename T>
LossResult<T> destructive_loss(const model::AutoencoderParams<T>& params, const FeatureMap<T>& clean,
                               const FeatureMap<T>& noise, const LossWeights& weights) {
  if (clean.batch < 1 || clean.data.empty()) throw TrainingError("destructive_loss: empty clean batch");
  if (noise.batch < 1 || noise.data.empty()) throw TrainingError("destructive_loss: empty noise batch");
  LossResult<T> result;

  // Clean term: mean absolute reconstruction error.
  model::ForwardCache<T> clean_cache;
  const FeatureMap<T> y = model::forward(params, clean, &clean_cache);
  FeatureMap<T> gy(y.channels, y.height, y.width, y.batch);
  {
    const double scale = 1.0 / static_cast<double>(y.data.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      const double d = static_cast<double>(y.data[i]) - static_cast<double>(clean.data[i]);
      acc += std::abs(d);
      gy.data[i] = static_cast<T>(weights.clean * scale * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)));
    }
    result.terms.clean = acc * scale;
  }

  // Noise terms: per-block |mean| and |variance - 1|.
  model::ForwardCache<T> noise_cache;
  const FeatureMap<T> z = model::forward(params, noise, &noise_cache);
  FeatureMap<T> gz(z.channels, z.height, z.width, z.batch);
  {
    const int n = z.batch;
    const std::size_t plane = z.sample_size();
    std::vector<double> mu(n, 0.0);
    std::vector<double> var(n, 0.0);
    for (std::size_t e = 0; e < plane; ++e)
      for (int b = 0; b < n; ++b) mu[b] += static_cast<double>(z.data[e * n + b]);
    for (int b = 0; b < n; ++b) mu[b] /= static_cast<double>(plane);
    for (std::size_t e = 0; e < plane; ++e) {
      for (int b = 0; b < n; ++b) {
        const double d = static_cast<double>(z.data[e * n + b]) - mu[b];
        var[b] += d * d;
      }
    }
    for (int b = 0; b < n; ++b) var[b] /= static_cast<double>(plane);

    std::vector<double> g_mean(n);
    std::vector<double> g_var(n);
    double mean_acc = 0.0;
    double var_acc = 0.0;
    const double per_block = 1.0 / (static_cast<double>(n) * static_cast<double>(plane));
    for (int b = 0; b < n; ++b) {
      mean_acc += std::abs(mu[b]);
      var_acc += std::abs(var[b] - 1.0);
      const double sm = mu[b] > 0 ? 1.0 : (mu[b] < 0 ? -1.0 : 0.0);
      const double sv = var[b] > 1.0 ? 1.0 : (var[b] < 1.0 ? -1.0 : 0.0);
      g_mean[b] = weights.mean * sm * per_block;
      g_var[b] = weights.variance * sv * 2.0 * per_block;
    }
    for (std::size_t e = 0; e < plane; ++e) {
      for (int b = 0; b < n; ++b) {
        const double d = static_cast<double>(z.data[e * n + b]) - mu[b];
        gz.data[e * n + b] = static_cast<T>(g_mean[b] + g_var[b] * d);
      }
    }
    result.terms.mean = mean_acc / n;
    result.terms.variance = var_acc / n;
  }
  result.terms.total = weights.clean * result.terms.clean + weights.mean * result.terms.mean +
                       weights.variance * result.terms.variance;

  auto gc = model::backward(params, clean_cache, gy);
  const auto gn = model::backward(params, noise_cache, gz);
  for (int i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < gc.weights[i].size(); ++j) gc.weights[i][j] += gn.weights[i][j];
    for (std::size_t j = 0; j < gc.bias[i].size(); ++j) gc.bias[i][j] += gn.bias[i][j];
  }
  result.grads = std::move(gc);
  return result;
}

template LossResult<float> destructive_loss(const model::AutoencoderParams<float>&, const FeatureMap<float>&,
                                            const FeatureMap<float>&, const LossWeights&);
template LossResult<double> destructive_loss(const model::AutoencoderParams<double>&, const FeatureMap<double>&,
                                             const FeatureMap<double>&, const LossWeights&);

void TrainConfig::validate() const {
  model::design_architecture(block_size);
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(noise_fraction > 0.0 && noise_fraction < 1.0)) throw ConfigError("noise_fraction must lie in (0, 1)");
  if (!(noise_block_threshold > 0.0 && noise_block_threshold <= 1.0)) {
    throw ConfigError("noise_block_threshold must lie in (0, 1]");
  }
  if (overlay_rounds < 1) throw ConfigError("overlay_rounds must be >= 1");
  if (clean_blocks_per_image < 0) throw ConfigError("clean_blocks_per_image must be >= 0");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) throw ConfigError("final_lr_fraction must lie in (0, 1]");
  if (weights.clean < 0 || weights.mean < 0 || weights.variance < 0) throw ConfigError("loss weights must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

namespace {

// Tiles stored sample-major, each as 3 x B x B in channel-major order.
struct TilePool {
  int block_size = 0;
  std::vector<float> values;

  std::size_t tile_values() const { return static_cast<std::size_t>(Image::kChannels) * block_size * block_size; }
  std::size_t size() const { return block_size ? values.size() / tile_values() : 0; }

  void add(const FeatureMap<float>& tiles, int t) {
    for (std::size_t e = 0; e < tiles.sample_size(); ++e) values.push_back(tiles.data[e * tiles.batch + t]);
  }

  FeatureMap<float> batch(const std::vector<std::size_t>& order, std::size_t start, int count) const {
    FeatureMap<float> out(Image::kChannels, block_size, block_size, count);
    const std::size_t tv = tile_values();
    for (int b = 0; b < count; ++b) {
      const float* src = &values[order[(start + b) % order.size()] * tv];
      for (std::size_t e = 0; e < tv; ++e) out.data[e * count + b] = src[e];
    }
    return out;
  }
};

Image crop(const Image& img, int oy, int ox) {
  Image out(img.height - oy, img.width - ox);
  for (int y = 0; y < out.height; ++y) {
    std::copy_n(&img.data[img.index(y + oy, ox, 0)], static_cast<std::size_t>(out.width) * Image::kChannels,
                &out.data[out.index(y, 0, 0)]);
  }
  return out;
}

void build_pools(const std::vector<Image>& corpus, const NoiseOverlaySpec& spec, const TrainConfig& cfg, int epoch,
                 TilePool& clean, TilePool& noise) {
  const int B = cfg.block_size;
  clean = TilePool{B, {}};
  noise = TilePool{B, {}};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng(stats::mix_seed(cfg.seed ^ stats::mix_seed(spec.seed, 7), (static_cast<std::uint64_t>(epoch) << 32) + i));
    // Shift the tiling grid each epoch so tiles do not always align the same way.
    const int oy = std::min(rng.uniform_int(0, B - 1), corpus[i].height - B);
    const int ox = std::min(rng.uniform_int(0, B - 1), corpus[i].width - B);
    const Image img = crop(corpus[i], oy, ox);

    const split::BlockGrid grid = split::split(img, B);
    std::vector<int> full;
    for (int t = 0; t < grid.tile_count(); ++t) {
      if (grid.origins[t].valid_height == B && grid.origins[t].valid_width == B) full.push_back(t);
    }
    std::vector<int> picked = full;
    if (cfg.clean_blocks_per_image > 0 && static_cast<int>(picked.size()) > cfg.clean_blocks_per_image) {
      rng.shuffle(picked);
      picked.resize(cfg.clean_blocks_per_image);
      std::sort(picked.begin(), picked.end());
    }
    for (int t : picked) clean.add(grid.tiles, t);

    for (int round = 0; round < cfg.overlay_rounds; ++round) {
      const Overlay ov = synthesize_overlay(img, spec, rng);
      const split::BlockGrid noisy = split::split(ov.composite, B);
      for (int t : full) {
        const auto& o = noisy.origins[t];
        int covered = 0;
        for (int y = 0; y < B; ++y)
          for (int x = 0; x < B; ++x) covered += ov.mask.at(o.y + y, o.x + x);
        if (covered >= cfg.noise_block_threshold * B * B) noise.add(noisy.tiles, t);
      }
    }
  }
}

std::vector<kernel::ParamSlot<float>> slots_for(model::AEParams& params, const model::ModelGradients<float>& g) {
  static const char* kNames[6] = {"encoder.0", "encoder.1", "encoder.2", "decoder.0", "decoder.1", "decoder.2"};
  std::vector<kernel::ParamSlot<float>> slots;
  for (int i = 0; i < 6; ++i) {
    auto& l = params.layer(i);
    slots.push_back({std::string(kNames[i]) + ".weight", l.weights, g.weights[i]});
    slots.push_back({std::string(kNames[i]) + ".bias", l.bias, g.bias[i]});
  }
  return slots;
}

double separation_check(const model::AEParams& params, const std::vector<Image>& corpus,
                        const NoiseOverlaySpec& spec, std::uint64_t seed) {
  const int B = params.block_size;
  TilePool clean{B, {}};
  for (const Image& img : corpus) {
    const auto grid = split::split(img, B);
    for (int t = 0; t < grid.tile_count() && clean.size() < 500; t += 7) {
      if (grid.origins[t].valid_height == B && grid.origins[t].valid_width == B) clean.add(grid.tiles, t);
    }
  }
  if (clean.size() == 0) return 0.0;
  std::vector<std::size_t> order(clean.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto clean_batch = clean.batch(order, 0, static_cast<int>(order.size()));

  NoiseOverlaySpec pure = spec;
  Rng rng(stats::mix_seed(seed, 0xA0C));
  FeatureMap<float> noise_batch(Image::kChannels, B, B, 500);
  for (int b = 0; b < noise_batch.batch; ++b) {
    const Image tile = noise_tile(B, pure, rng);
    for (int y = 0; y < B; ++y)
      for (int x = 0; x < B; ++x)
        for (int c = 0; c < Image::kChannels; ++c) noise_batch.at(c, y, x, b) = tile.at(y, x, c);
  }
  auto mae = [&](const FeatureMap<float>& in) {
    const auto out = model::reconstruct_blocks(params, in);
    std::vector<double> err(in.batch, 0.0);
    for (std::size_t e = 0; e < in.sample_size(); ++e)
      for (int b = 0; b < in.batch; ++b) {
        err[b] += std::abs(static_cast<double>(out.data[e * in.batch + b]) - in.data[e * in.batch + b]);
      }
    for (double& v : err) v /= static_cast<double>(in.sample_size());
    return err;
  };
  const auto ec = mae(clean_batch);
  const auto en = mae(noise_batch);
  return stats::auroc(ec, en);
}

}  // namespace

TrainResult train(const std::vector<Image>& corpus, const NoiseOverlaySpec& spec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  spec.validate();
  if (corpus.empty()) throw InputError("training corpus is empty");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].height < cfg.block_size || corpus[i].width < cfg.block_size) {
      throw InputError("corpus image " + std::to_string(i) + " is smaller than the block size");
    }
  }

  TrainResult result;
  result.params = model::init_params(cfg.seed, cfg.block_size);
  kernel::AdamState<float> adam;

  const int n_noise = std::clamp(static_cast<int>(std::lround(cfg.batch_size * cfg.noise_fraction)), 1,
                                 cfg.batch_size - 1);
  const int n_clean = cfg.batch_size - n_noise;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    TilePool clean;
    TilePool noise;
    build_pools(corpus, spec, cfg, epoch, clean, noise);
    if (clean.size() == 0) throw TrainingError("epoch " + std::to_string(epoch) + ": no clean blocks");
    if (noise.size() == 0) {
      throw TrainingError("epoch " + std::to_string(epoch) + ": overlays produced no noise blocks");
    }

    Rng rng(stats::mix_seed(cfg.seed, 0x5EED0000ull + epoch));
    std::vector<std::size_t> clean_order(clean.size());
    std::vector<std::size_t> noise_order(noise.size());
    for (std::size_t i = 0; i < clean_order.size(); ++i) clean_order[i] = i;
    for (std::size_t i = 0; i < noise_order.size(); ++i) noise_order[i] = i;
    rng.shuffle(clean_order);
    rng.shuffle(noise_order);

    kernel::AdamConfig step_cfg = cfg.adam;
    if (cfg.epochs > 1) {
      const double progress = static_cast<double>(epoch) / (cfg.epochs - 1);
      const double f = cfg.final_lr_fraction;
      step_cfg.learning_rate *= f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }

    const std::size_t batches = std::max<std::size_t>(1, clean.size() / n_clean);
    EpochStats stats{epoch, {}, 0};
    for (std::size_t b = 0; b < batches; ++b) {
      const auto cb = clean.batch(clean_order, b * n_clean, n_clean);
      const auto nb = noise.batch(noise_order, b * n_noise, n_noise);
      const auto loss = destructive_loss(result.params, cb, nb, cfg.weights);
      if (!std::isfinite(loss.terms.total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      auto slots = slots_for(result.params, loss.grads);
      try {
        kernel::adam_step<float>(slots, adam, step_cfg);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b));
      }
      stats.loss.clean += loss.terms.clean;
      stats.loss.mean += loss.terms.mean;
      stats.loss.variance += loss.terms.variance;
      stats.loss.total += loss.terms.total;
      ++stats.batches;
    }
    const double inv = 1.0 / stats.batches;
    stats.loss.clean *= inv;
    stats.loss.mean *= inv;
    stats.loss.variance *= inv;
    stats.loss.total *= inv;
    result.history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && (epoch + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      std::ostringstream name;
      name << cfg.checkpoint_dir << "/epoch_" << (epoch + 1) << ".ckpt";
      model::save_checkpoint({result.params, cfg.seed, to_json(cfg, spec)}, name.str());
    }
  }

  result.history.separation_auroc = separation_check(result.params, corpus, spec, cfg.seed);
  result.history.converged = result.history.separation_auroc >= kConvergenceAuroc;
  return result;
}

// --- JSON -------------------------------------------------------------------

std::string to_json(const TrainConfig& cfg, const NoiseOverlaySpec& spec) {
  nlohmann::ordered_json j;
  j["block_size"] = cfg.block_size;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["noise_fraction"] = cfg.noise_fraction;
  j["noise_block_threshold"] = cfg.noise_block_threshold;
  j["overlay_rounds"] = cfg.overlay_rounds;
  j["clean_blocks_per_image"] = cfg.clean_blocks_per_image;
  j["learning_rate"] = cfg.adam.learning_rate;
  j["beta1"] = cfg.adam.beta1;
  j["beta2"] = cfg.adam.beta2;
  j["epsilon"] = cfg.adam.epsilon;
  j["final_lr_fraction"] = cfg.final_lr_fraction;
  j["loss_weights"] = {{"clean", cfg.weights.clean}, {"mean", cfg.weights.mean}, {"variance", cfg.weights.variance}};
  j["seed"] = cfg.seed;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["checkpoint_dir"] = cfg.checkpoint_dir;
  j["noise"] = {{"distribution", distribution_name(spec.distribution)},
                {"min_overlays", spec.min_overlays},
                {"max_overlays", spec.max_overlays},
                {"min_size_fraction", spec.min_size_fraction},
                {"max_size_fraction", spec.max_size_fraction},
                {"min_stretch", spec.min_stretch},
                {"max_stretch", spec.max_stretch},
                {"pixel_scale", spec.pixel_scale},
                {"seed", spec.seed}};
  return j.dump();
}

namespace {

template <typename V>
void take(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

void from_json(const std::string& text, TrainConfig& cfg, NoiseOverlaySpec& spec) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    reject_unknown(j,
                   {"block_size", "epochs", "batch_size", "noise_fraction", "noise_block_threshold", "overlay_rounds",
                    "clean_blocks_per_image", "learning_rate", "beta1", "beta2", "epsilon", "final_lr_fraction", "loss_weights", "seed",
                    "checkpoint_every", "checkpoint_dir", "noise"},
                   "training config");
    take(j, "block_size", cfg.block_size);
    take(j, "epochs", cfg.epochs);
    take(j, "batch_size", cfg.batch_size);
    take(j, "noise_fraction", cfg.noise_fraction);
    take(j, "noise_block_threshold", cfg.noise_block_threshold);
    take(j, "overlay_rounds", cfg.overlay_rounds);
    take(j, "clean_blocks_per_image", cfg.clean_blocks_per_image);
    take(j, "learning_rate", cfg.adam.learning_rate);
    take(j, "beta1", cfg.adam.beta1);
    take(j, "beta2", cfg.adam.beta2);
    take(j, "epsilon", cfg.adam.epsilon);
    take(j, "final_lr_fraction", cfg.final_lr_fraction);
    take(j, "seed", cfg.seed);
    take(j, "checkpoint_every", cfg.checkpoint_every);
    take(j, "checkpoint_dir", cfg.checkpoint_dir);
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      reject_unknown(w, {"clean", "mean", "variance"}, "loss_weights");
      take(w, "clean", cfg.weights.clean);
      take(w, "mean", cfg.weights.mean);
      take(w, "variance", cfg.weights.variance);
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      reject_unknown(n,
                     {"distribution", "min_overlays", "max_overlays", "min_size_fraction", "max_size_fraction",
                      "min_stretch", "max_stretch", "pixel_scale", "seed"},
                     "noise");
      if (n.contains("distribution")) spec.distribution = parse_distribution(n.at("distribution").get<std::string>());
      take(n, "min_overlays", spec.min_overlays);
      take(n, "max_overlays", spec.max_overlays);
      take(n, "min_size_fraction", spec.min_size_fraction);
      take(n, "max_size_fraction", spec.max_size_fraction);
      take(n, "min_stretch", spec.min_stretch);
      take(n, "max_stretch", spec.max_stretch);
      take(n, "pixel_scale", spec.pixel_scale);
      take(n, "seed", spec.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config has a mistyped value: ") + e.what());
  }
  cfg.validate();
  spec.validate();
}

std::string history_json(const TrainHistory& history) {
  nlohmann::ordered_json j;
  j["schema"] = "nutnet.train-history/1";
  auto& epochs = j["epochs"] = nlohmann::json::array();
  for (const auto& e : history.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"batches", e.batches},
                      {"clean", e.loss.clean},
                      {"mean", e.loss.mean},
                      {"variance", e.loss.variance},
                      {"total", e.loss.total}});
  }
  j["separation_auroc"] = history.separation_auroc;
  j["converged"] = history.converged;
  return j.dump(2);
}

}  // namespace nutnet::train
