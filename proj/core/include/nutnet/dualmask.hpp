#pragma once

// Two-level patch mask. m1 flags whole tiles whose reconstruction error is
// above kappa1; m2 flags single pixels whose largest per-channel
// reconstruction difference is above kappa2; the applied mask is m1 * m2.
// Both comparisons are strict, so raising either threshold can only clear
// mask pixels.

#include <string>

#include "nutnet/image.hpp"
#include "nutnet/splitter.hpp"

namespace nutnet::dualmask {

inline constexpr double kDefaultKappa1 = 0.12;
inline constexpr double kDefaultKappa2 = 0.2;
inline constexpr float kDefaultFill = 0.5f;

struct Thresholds {
  double kappa1 = kDefaultKappa1;
  double kappa2 = kDefaultKappa2;

  /// Throws ConfigError unless both are positive and finite.
  void validate() const;
};

/// How pixel differences across the three channels are reduced for m2.
enum class ChannelAggregate { kMax, kMean };

/// Which mask drives the fill. kDual is the defense; the others exist for
/// ablation runs.
enum class MaskMode { kDual, kCoarseOnly, kFineOnly };

const char* mask_mode_name(MaskMode mode);
MaskMode parse_mask_mode(const std::string& name);

struct MaskPair {
  Mask m1;
  Mask m2;
  Mask m;
};

Mask coarse_mask(const split::BlockErrorGrid& errors, double kappa1, int height, int width);

Mask fine_mask(const Image& original, const Image& reconstructed, double kappa2,
               ChannelAggregate aggregate = ChannelAggregate::kMax);

struct MaskedImage {
  Image image;
  Mask mask;
};

/// m = m1 * m2; every channel of a pixel with m = 1 becomes `fill`, all other
/// pixels are copied unchanged.
MaskedImage combine_and_apply(const Image& image, const Mask& m1, const Mask& m2, float fill = kDefaultFill);

/// Replaces pixels under `mask` with `fill`.
Image apply_mask(const Image& image, const Mask& mask, float fill = kDefaultFill);

/// Builds all three masks from the error grid and reconstruction.
MaskPair build_masks(const Image& original, const Image& reconstructed, const split::BlockErrorGrid& errors,
                     const Thresholds& thresholds, ChannelAggregate aggregate = ChannelAggregate::kMax);

/// The mask actually used for filling under an ablation mode.
const Mask& select_mask(const MaskPair& masks, MaskMode mode);

}  // namespace nutnet::dualmask
