#include "nutnet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace nutnet::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double micros(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::micro>(b - a).count();
}

// Reconstructs tiles split across `threads` workers in fixed contiguous
// ranges. Each tile is an independent lane, so the result is the same as a
// single-threaded pass.
kernel::FeatureMap<float> reconstruct_parallel(const model::AEParams& params, const kernel::FeatureMap<float>& tiles,
                                               int threads) {
  const int n = tiles.batch;
  threads = std::clamp(threads, 1, std::max(1, n / 64));
  if (threads == 1) return model::reconstruct_blocks(params, tiles);

  kernel::FeatureMap<float> out(tiles.channels, tiles.height, tiles.width, n);
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> failures(threads);
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        const int lo = static_cast<int>(static_cast<long long>(n) * t / threads);
        const int hi = static_cast<int>(static_cast<long long>(n) * (t + 1) / threads);
        std::vector<int> ids(hi - lo);
        for (int i = lo; i < hi; ++i) ids[i - lo] = i;
        const auto part = model::reconstruct_blocks(params, tiles.gather(ids));
        const std::size_t plane = part.sample_size();
        for (std::size_t e = 0; e < plane; ++e)
          for (int i = lo; i < hi; ++i) out.data[e * n + i] = part.data[e * part.batch + (i - lo)];
      } catch (...) {
        failures[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
  return out;
}

}  // namespace

void DefenseConfig::validate() const {
  thresholds.validate();
  if (std::find(model::kSupportedBlockSizes.begin(), model::kSupportedBlockSizes.end(), block_size) ==
      model::kSupportedBlockSizes.end()) {
    throw ConfigError("block size " + std::to_string(block_size) + " is not one of 13, 26, 52");
  }
  if (!(fill >= 0.0f && fill <= 1.0f)) throw ConfigError("fill value must lie in [0, 1]");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

void DefenseConfig::check_params(const model::AEParams& params) const {
  if (params.block_size != block_size) {
    throw ConfigError("checkpoint was trained for block size " + std::to_string(params.block_size) +
                      " but the defense is configured for " + std::to_string(block_size));
  }
}

DefenseResult defend(const Image& image, const model::AEParams& params, const DefenseConfig& cfg) {
  cfg.validate();
  cfg.check_params(params);
  const auto t0 = Clock::now();
  const split::BlockGrid grid = split::split(image, cfg.block_size);
  const auto t1 = Clock::now();
  const split::BlockGrid recon_grid = split::with_tiles(grid, reconstruct_parallel(params, grid.tiles, cfg.threads));
  const Image recon = split::reassemble(recon_grid, image.height, image.width);
  const auto t2 = Clock::now();
  DefenseResult r;
  r.errors = split::block_errors(grid, recon_grid, split::ErrorMetric::kMeanAbsolute);
  const auto t3 = Clock::now();
  r.masks = dualmask::build_masks(image, recon, r.errors, cfg.thresholds, cfg.aggregate);
  const Mask& applied = dualmask::select_mask(r.masks, cfg.mode);
  r.masked = dualmask::apply_mask(image, applied, cfg.fill);
  r.masked_fraction = applied.fraction();
  const auto t4 = Clock::now();
  r.timings = {micros(t0, t1), micros(t1, t2), micros(t2, t3), micros(t3, t4), micros(t0, t4)};
  return r;
}

std::vector<BatchItem> defend_batch(const std::vector<Image>& images, const model::AEParams& params,
                                    const DefenseConfig& cfg) {
  cfg.validate();
  std::vector<BatchItem> out(images.size());
  DefenseConfig per_image = cfg;
  per_image.threads = 1;
  auto run_one = [&](std::size_t i) {
    try {
      out[i].result = defend(images[i], params, per_image);
    } catch (const Error& e) {
      out[i].error = e.what();
      out[i].category = e.category();
    } catch (const std::exception& e) {
      out[i].error = e.what();
      out[i].category = Error::Category::kInternal;
    }
  };
  const int threads = std::clamp<int>(cfg.threads, 1, std::max<std::size_t>(1, images.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < images.size(); ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < images.size(); i = next++) run_one(i);
    });
  }
  for (auto& w : workers) w.join();
  return out;
}

}  // namespace nutnet::pipeline
