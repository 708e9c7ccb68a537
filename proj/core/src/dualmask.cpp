#include "nutnet/dualmask.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nutnet/error.hpp"

namespace nutnet::dualmask {

namespace {

std::string dims(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

}  // namespace

void Thresholds::validate() const {
  if (!(kappa1 > 0.0) || !(kappa2 > 0.0) || !std::isfinite(kappa1) || !std::isfinite(kappa2)) {
    throw ConfigError("thresholds must be positive and finite (kappa1=" + std::to_string(kappa1) +
                      ", kappa2=" + std::to_string(kappa2) + ")");
  }
}

const char* mask_mode_name(MaskMode mode) {
  switch (mode) {
    case MaskMode::kDual:
      return "dual";
    case MaskMode::kCoarseOnly:
      return "m1";
    case MaskMode::kFineOnly:
      return "m2";
  }
  return "dual";
}

MaskMode parse_mask_mode(const std::string& name) {
  if (name == "dual" || name == "m") return MaskMode::kDual;
  if (name == "m1" || name == "coarse") return MaskMode::kCoarseOnly;
  if (name == "m2" || name == "fine") return MaskMode::kFineOnly;
  throw ConfigError("unknown mask mode '" + name + "' (expected dual, m1 or m2)");
}

Mask coarse_mask(const split::BlockErrorGrid& errors, double kappa1, int height, int width) {
  const int B = errors.block_size;
  const int expect_rows = B > 0 ? (height + B - 1) / B : -1;
  const int expect_cols = B > 0 ? (width + B - 1) / B : -1;
  if (errors.rows != expect_rows || errors.cols != expect_cols ||
      errors.errors.size() != static_cast<std::size_t>(errors.rows) * errors.cols) {
    throw DimensionError("error grid " + dims(errors.rows, errors.cols) + " with block " + std::to_string(B) +
                         " does not tile a " + dims(height, width) + " image");
  }
  Mask m(height, width);
  for (int r = 0; r < errors.rows; ++r) {
    for (int c = 0; c < errors.cols; ++c) {
      if (!(errors.at(r, c) > kappa1)) continue;
      const int y1 = std::min(height, (r + 1) * B);
      const int x1 = std::min(width, (c + 1) * B);
      for (int y = r * B; y < y1; ++y) std::fill(&m.data[y * width + c * B], &m.data[y * width + x1], 1);
    }
  }
  return m;
}

Mask fine_mask(const Image& original, const Image& reconstructed, double kappa2, ChannelAggregate aggregate) {
  if (original.height != reconstructed.height || original.width != reconstructed.width ||
      original.data.size() != reconstructed.data.size()) {
    throw DimensionError("fine_mask: original " + dims(original.height, original.width) + " vs reconstruction " +
                         dims(reconstructed.height, reconstructed.width));
  }
  Mask m(original.height, original.width);
  const std::size_t n = original.pixel_count();
  const float* a = original.data.data();
  const float* b = reconstructed.data.data();
  auto diff = [&](std::size_t i) { return std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])); };
  if (aggregate == ChannelAggregate::kMax) {
    for (std::size_t i = 0; i < n; ++i) {
      const double agg = std::max(std::max(std::max(0.0, diff(i * 3)), diff(i * 3 + 1)), diff(i * 3 + 2));
      m.data[i] = agg > kappa2 ? 1 : 0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double agg = ((0.0 + diff(i * 3) / 3) + diff(i * 3 + 1) / 3) + diff(i * 3 + 2) / 3;
      m.data[i] = agg > kappa2 ? 1 : 0;
    }
  }
  return m;
}

Image apply_mask(const Image& image, const Mask& mask, float fill) {
  if (image.height != mask.height || image.width != mask.width) {
    throw DimensionError("mask " + dims(mask.height, mask.width) + " vs image " + dims(image.height, image.width));
  }
  Image out = image;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (!mask.data[i]) continue;
    for (int c = 0; c < Image::kChannels; ++c) out.data[i * 3 + c] = fill;
  }
  return out;
}

MaskedImage combine_and_apply(const Image& image, const Mask& m1, const Mask& m2, float fill) {
  if (m1.height != m2.height || m1.width != m2.width || m1.height != image.height || m1.width != image.width) {
    throw DimensionError("combine_and_apply: image " + dims(image.height, image.width) + ", m1 " +
                         dims(m1.height, m1.width) + ", m2 " + dims(m2.height, m2.width));
  }
  if (!(fill >= 0.0f && fill <= 1.0f)) throw ConfigError("fill value must lie in [0, 1]");
  MaskedImage out;
  out.mask = Mask(m1.height, m1.width);
  for (std::size_t i = 0; i < m1.data.size(); ++i) out.mask.data[i] = (m1.data[i] && m2.data[i]) ? 1 : 0;
  out.image = apply_mask(image, out.mask, fill);
  return out;
}

MaskPair build_masks(const Image& original, const Image& reconstructed, const split::BlockErrorGrid& errors,
                     const Thresholds& thresholds, ChannelAggregate aggregate) {
  thresholds.validate();
  MaskPair p;
  p.m1 = coarse_mask(errors, thresholds.kappa1, original.height, original.width);
  p.m2 = fine_mask(original, reconstructed, thresholds.kappa2, aggregate);
  p.m = Mask(original.height, original.width);
  for (std::size_t i = 0; i < p.m.data.size(); ++i) p.m.data[i] = (p.m1.data[i] && p.m2.data[i]) ? 1 : 0;
  return p;
}

const Mask& select_mask(const MaskPair& masks, MaskMode mode) {
  switch (mode) {
    case MaskMode::kCoarseOnly:
      return masks.m1;
    case MaskMode::kFineOnly:
      return masks.m2;
    case MaskMode::kDual:
      break;
  }
  return masks.m;
}

}  // namespace nutnet::dualmask
