#pragma once

// Synthetic patch tooling: compositing transformed patches with exact
// footprints, the overlap-ratio metric, a differentiable stand-in detector
// and the adaptive attack that trades detector loss against reconstruction
// distance.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nutnet/image.hpp"
#include "nutnet/model.hpp"
#include "nutnet/rng.hpp"

namespace nutnet::patchlab {

struct DetectionBox {
  int class_id = 0;
  double confidence = 1.0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  /// Throws InputError unless x1 < x2, y1 < y2 and confidence lies in [0, 1].
  void validate() const;

  friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

enum class PlacementMode { kAbsolute, kRelativeToBox };

struct Placement {
  PlacementMode mode = PlacementMode::kAbsolute;
  /// kAbsolute: top-left corner of the untransformed patch, in pixels.
  double y = 0, x = 0;
  /// kRelativeToBox: the patch is resized so its side is this fraction of the
  /// box diagonal, and centered on the box.
  DetectionBox box;
  double diagonal_fraction = 0.2;
};

/// Ranges are sampled uniformly per application. Blur is a Gaussian on the
/// patch alone, sigma in patch pixels.
struct TransformRange {
  double min_rotation_deg = 0, max_rotation_deg = 0;
  double min_scale = 1, max_scale = 1;
  double jitter = 0;  // max translation per axis, pixels
  double min_blur_sigma = 0, max_blur_sigma = 0;
};

struct PatchSpec {
  Image pixels;  // values in [0, 1]
  Placement placement;
  TransformRange transform;
  std::uint64_t seed = 0;

  /// Throws ConfigError for empty or out-of-range pixels and bad ranges.
  void validate() const;
};

/// The concrete transform drawn for one application.
struct PatchTransform {
  double center_y = 0, center_x = 0;  // image coordinates of the patch centre
  double rotation_rad = 0;
  double scale = 1;  // output pixels per patch pixel
  double blur_sigma = 0;
};

PatchTransform sample_transform(const PatchSpec& spec, Rng& rng);

/// The composite as an explicit linear map from patch pixels to the covered
/// image pixels, so attacks can pull image gradients back onto the patch.
/// A pixel belongs to the footprint when its centre maps inside the patch
/// rectangle; covered pixels are bilinear samples of the blurred patch.
class PatchPlan {
 public:
  /// Throws PlacementError when any corner of the transformed patch falls
  /// outside the image or nothing is covered.
  PatchPlan(int image_height, int image_width, int patch_height, int patch_width, const PatchTransform& transform);

  const Mask& mask() const { return mask_; }
  const PatchTransform& transform() const { return transform_; }
  int patch_height() const { return ph_; }
  int patch_width() const { return pw_; }

  /// Copies `image` and overwrites the footprint from `patch`.
  Image render(const Image& image, const Image& patch) const;
  /// Adjoint of render with respect to the patch: image-space gradient in,
  /// patch-space gradient out. Pixels outside the footprint are ignored.
  Image pullback(const Image& image_grad) const;

 private:
  struct Tap {
    std::uint32_t pixel;    // y * width + x
    std::uint32_t src[4];   // patch pixel indices
    float w[4];
  };

  Image blur(const Image& patch) const;
  Image blur_adjoint(const Image& grad) const;

  int height_, width_, ph_, pw_;
  PatchTransform transform_;
  Mask mask_;
  std::vector<Tap> taps_;
  std::vector<double> blur_y_, blur_x_;  // row-major ph x ph and pw x pw; empty when sigma = 0
};

struct AppliedPatch {
  Image image;
  Mask mask;  // ground truth: exactly the pixels the patch replaced
  PatchTransform transform;
};

AppliedPatch apply_patch(const Image& image, const PatchSpec& spec, Rng& rng);

/// One standard-normal noise patch with random rotation, scale and blur,
/// sized so its footprint covers a uniform share of the frame.
struct NoisePatchOptions {
  double min_coverage = 0.02, max_coverage = 0.08;
  double min_rotation_deg = 0, max_rotation_deg = 90;
  double min_scale = 0.8, max_scale = 1.25;
  double min_blur_sigma = 0, max_blur_sigma = 0.6;
  double pixel_scale = 0.25;  // noise composited as clamp(0.5 + pixel_scale * t)
};

struct NoisePatchCase {
  Image image;
  Mask ground_truth;
  PatchTransform transform;
  double coverage = 0;  // achieved footprint share
};

/// Throws PlacementError when the frame is too small for the drawn size.
NoisePatchCase synthesize_noise_patch(const Image& clean, const NoisePatchOptions& opts, Rng& rng);

/// |m_d & m_gt| / |m_gt|. Throws DimensionError on size mismatch and
/// MetricError when m_gt is empty.
double overlap_ratio(const Mask& m_d, const Mask& m_gt);

/// Attack loss and its image gradient for a patched frame.
struct OracleOutput {
  double loss = 0;
  Image gradient;  // same shape as the image
};

class DetectorGradientOracle {
 public:
  virtual ~DetectorGradientOracle() = default;
  virtual std::string id() const = 0;
  /// Loss the attacker minimizes; ground truth holds the targeted objects.
  virtual OracleOutput evaluate(const Image& image, const std::vector<DetectionBox>& ground_truth) const = 0;
};

/// A fixed random-weight convolutional confidence score. Eight zero-mean 3x3
/// filters respond to local texture; the loss is the target's confidence
/// exp(-e / e0) where e is the mean squared filter response inside the
/// ground-truth boxes (the whole frame when there are none). Lowering it
/// therefore calls for strong high-frequency texture.
std::unique_ptr<DetectorGradientOracle> mock_detector_oracle(std::uint64_t seed = 0);

/// Looks up an oracle by id; only "mock" is bundled. Throws ConfigError.
std::unique_ptr<DetectorGradientOracle> make_oracle(const std::string& id, std::uint64_t seed);

struct AdaptiveAttackConfig {
  double alpha = 0;  // weight on the reconstruction distance, >= 0
  int steps = 100;
  double step_size = 2.0 / 255.0;  // signed-gradient step, pixel units
  std::string oracle_id = "mock";
  std::uint64_t seed = 0;
  int record_every = 10;  // patch snapshots; the final patch is always kept

  void validate() const;
};

struct AttackStep {
  int step = 0;
  double attack_loss = 0;  // L
  double distance = 0;     // Dist over blocks touching the footprint
  double total = 0;        // L + alpha * Dist
  /// cos(grad L, grad Dist) with respect to the patch; 0 when either is zero.
  double inner_product = 0;
};

struct AttackTrace {
  double alpha = 0;
  std::vector<AttackStep> steps;  // entry k is measured before update k; last entry after the final update
  std::vector<std::pair<int, Image>> trajectory;
  Image final_patch;
  Mask footprint;

  std::string to_json() const;  // without patch pixels
  std::string to_csv() const;
};

/// Reconstruction distance of `image` restricted to blocks touching `mask`,
/// and optionally its image gradient.
double footprint_distance(const model::AEParams& params, const Image& image, const Mask& mask,
                          Image* gradient = nullptr);

/// Projected signed-gradient descent on L + alpha * Dist over the patch
/// pixels, with the transform drawn once from spec and cfg.seed. Throws
/// InternalError naming the step when a loss turns non-finite.
AttackTrace adaptive_attack(const Image& image, const PatchSpec& init, const std::vector<DetectionBox>& ground_truth,
                            const AdaptiveAttackConfig& cfg, const model::AEParams& params,
                            const DetectorGradientOracle& oracle);

/// PatchSpec from JSON. "pixels" is an image path (resolved against
/// base_dir) or "noise:<side>" for a square standard-normal patch.
PatchSpec patch_spec_from_json(const std::string& text, const std::string& base_dir = ".");

}  // namespace nutnet::patchlab
