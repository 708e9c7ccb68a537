#pragma once

// End-to-end defense of one frame: split, reconstruct, score blocks, build
// the dual mask and fill the masked pixels. The defense always runs; there is
// no attempt to decide up front whether a frame is attacked.

#include <optional>
#include <string>
#include <vector>

#include "nutnet/dualmask.hpp"
#include "nutnet/error.hpp"
#include "nutnet/image.hpp"
#include "nutnet/model.hpp"
#include "nutnet/splitter.hpp"

namespace nutnet::pipeline {

struct DefenseConfig {
  int block_size = model::kDefaultBlockSize;
  dualmask::Thresholds thresholds;
  float fill = dualmask::kDefaultFill;
  dualmask::MaskMode mode = dualmask::MaskMode::kDual;
  dualmask::ChannelAggregate aggregate = dualmask::ChannelAggregate::kMax;
  std::string checkpoint_path;  // informational; defend() takes loaded params
  /// Tiles are independent lanes, so results never depend on `threads`; the
  /// flag additionally pins static work partitioning.
  bool deterministic = true;
  int threads = 1;  // worker threads inside one defend() call

  /// Throws ConfigError for bad thresholds, fill, thread count or block size.
  void validate() const;
  /// Throws ConfigError when params were trained for a different block size.
  void check_params(const model::AEParams& params) const;
};

struct StageTimings {
  double split_us = 0;
  double reconstruct_us = 0;
  double error_us = 0;
  double mask_us = 0;
  double total_us = 0;
};

struct DefenseResult {
  Image masked;
  dualmask::MaskPair masks;
  split::BlockErrorGrid errors;
  double masked_fraction = 0;  // mean of the applied mask
  StageTimings timings;
};

/// Throws InputError when the image is smaller than one block.
DefenseResult defend(const Image& image, const model::AEParams& params, const DefenseConfig& cfg);

struct BatchItem {
  std::optional<DefenseResult> result;
  std::string error;  // set when result is empty
  Error::Category category = Error::Category::kData;
};

/// Runs defend() per image over cfg.threads workers, one image per worker at
/// a time. A failing image records its error and the rest continue; output
/// order matches input order.
std::vector<BatchItem> defend_batch(const std::vector<Image>& images, const model::AEParams& params,
                                    const DefenseConfig& cfg);

}  // namespace nutnet::pipeline
