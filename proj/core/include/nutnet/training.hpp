#pragma once

// Destructive training. Clean blocks are trained to reconstruct themselves;
// blocks covered by synthetic noise overlays are trained to come out as
// zero-mean, unit-variance noise, so anything off the clean distribution
// reconstructs badly.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nutnet/adam.hpp"
#include "nutnet/image.hpp"
#include "nutnet/model.hpp"
#include "nutnet/rng.hpp"

namespace nutnet::train {

enum class NoiseDistribution { kStandardNormal, kUniform };

const char* distribution_name(NoiseDistribution d);
NoiseDistribution parse_distribution(const std::string& name);

struct NoiseOverlaySpec {
  NoiseDistribution distribution = NoiseDistribution::kStandardNormal;
  int min_overlays = 1;
  int max_overlays = 4;
  /// Overlay height/width as a fraction of the image side, drawn per axis.
  double min_size_fraction = 1.0 / 30.0;
  double max_size_fraction = 0.25;
  /// Pixels per noise sample along each axis, drawn per axis (bilinear
  /// upsampling). 1 gives i.i.d. per-pixel noise.
  double min_stretch = 1.0;
  double max_stretch = 2.0;
  /// Standard-normal samples t are composited as clamp(0.5 + pixel_scale * t).
  double pixel_scale = 0.25;
  std::uint64_t seed = 0;

  /// Throws ConfigError: counts >= 1, fractions in (0, 1], stretch >= 1.
  void validate() const;
};

/// Maps a raw noise sample to a compositing pixel value and back.
float noise_to_pixel(double t, const NoiseOverlaySpec& spec);
double pixel_to_noise(float v, const NoiseOverlaySpec& spec);

struct Overlay {
  Image composite;
  Mask mask;  // exactly the overlaid pixels
};

/// H(x, t): pastes between min_overlays and max_overlays noise rectangles at
/// uniform positions. Throws ConfigError for an invalid spec.
Overlay synthesize_overlay(const Image& image, const NoiseOverlaySpec& spec, Rng& rng);

/// A B x B block of pure, unstretched compositing noise.
Image noise_tile(int block_size, const NoiseOverlaySpec& spec, Rng& rng);

struct LossWeights {
  double clean = 1.0;
  double mean = 1.0;
  double variance = 1.0;
};

struct LossTerms {
  double clean = 0.0;     // mean |x - E(x)| over clean blocks
  double mean = 0.0;      // mean over noise blocks of |mu(E(x'))|
  double variance = 0.0;  // mean over noise blocks of |var(E(x')) - 1|
  double total = 0.0;     // weighted sum
};

template <typename T>
struct LossResult {
  LossTerms terms;
  model::ModelGradients<T> grads;  // d total / d params
};

/// The destructive objective on one batch and its exact parameter gradient.
/// Per-block mean and variance are taken over all B*B*3 output values of that
/// block. Throws TrainingError if either batch is empty.
template <typename T>
LossResult<T> destructive_loss(const model::AutoencoderParams<T>& params, const kernel::FeatureMap<T>& clean,
                               const kernel::FeatureMap<T>& noise, const LossWeights& weights = {});

struct TrainConfig {
  int block_size = model::kDefaultBlockSize;
  int epochs = 120;
  int batch_size = 256;  // blocks per step, clean + noise
  double noise_fraction = 0.5;  // share of noise blocks in each batch, (0, 1)
  /// A block counts as noise when at least this share of its pixels is
  /// overlaid; blocks with some overlay but less are dropped.
  double noise_block_threshold = 0.5;
  int overlay_rounds = 2;  // composites synthesized per image per epoch
  int clean_blocks_per_image = 300;  // 0 = every full tile
  kernel::AdamConfig adam{.learning_rate = 3e-3};
  /// The learning rate follows a cosine from adam.learning_rate down to this
  /// fraction of it over the run, stepped per epoch. 1 keeps it constant.
  double final_lr_fraction = 1.0;
  LossWeights weights;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // epochs; 0 disables
  std::string checkpoint_dir;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  LossTerms loss;  // batch-averaged
  int batches = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  /// Clean training tiles vs fresh noise tiles, scored by reconstruction MAE.
  double separation_auroc = 0.0;
  bool converged = false;
};

struct TrainResult {
  model::AEParams params;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Throws InputError for an empty corpus or undersized images and
/// TrainingError (naming epoch and batch) when the loss turns non-finite.
TrainResult train(const std::vector<Image>& corpus, const NoiseOverlaySpec& spec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// AUROC the post-training separation check must reach for `converged`.
inline constexpr double kConvergenceAuroc = 0.99;

// JSON (de)serialization of the configuration; unknown keys are rejected.
std::string to_json(const TrainConfig& cfg, const NoiseOverlaySpec& spec);
void from_json(const std::string& text, TrainConfig& cfg, NoiseOverlaySpec& spec);
std::string history_json(const TrainHistory& history);

}  // namespace nutnet::train
