#include "nutnet/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "nutnet/error.hpp"
#include "nutnet/model.hpp"

namespace nutnet::split {

const char* metric_name(ErrorMetric m) {
  switch (m) {
    case ErrorMetric::kMeanAbsolute:
      return "mae";
    case ErrorMetric::kMeanSquared:
      return "mse";
  }
  return "unknown";
}

BlockGrid split(const Image& image, int block_size) {
  if (block_size < 1) throw InputError("block size must be positive");
  if (image.height < block_size || image.width < block_size) {
    throw InputError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is smaller than one " + std::to_string(block_size) + "x" + std::to_string(block_size) +
                     " block");
  }
  BlockGrid g;
  g.block_size = block_size;
  g.rows = image.height / block_size;
  g.cols = image.width / block_size;
  g.image_height = image.height;
  g.image_width = image.width;
  g.border = (g.residual_height() > 0 || g.residual_width() > 0) ? BorderPolicy::kEdgeReplicate
                                                                  : BorderPolicy::kExact;
  const int B = block_size;
  const int tr = g.tile_rows();
  const int tc = g.tile_cols();
  const int n = tr * tc;
  g.tiles = kernel::FeatureMap<float>(Image::kChannels, B, B, n);
  g.origins.reserve(n);
  for (int r = 0; r < tr; ++r) {
    for (int c = 0; c < tc; ++c) {
      TileOrigin o;
      o.y = r * B;
      o.x = c * B;
      o.valid_height = std::min(B, image.height - o.y);
      o.valid_width = std::min(B, image.width - o.x);
      g.origins.push_back(o);
    }
  }
  // One strip of tile rows at a time so the source rows stay in cache, with
  // the tile index innermost so the writes run along the batch dimension.
  std::vector<int> col_x(static_cast<std::size_t>(B) * tc);
  for (int x = 0; x < B; ++x)
    for (int c = 0; c < tc; ++c) col_x[x * tc + c] = (c * B + std::min(x, image.width - c * B - 1)) * Image::kChannels;
  for (int r = 0; r < tr; ++r) {
    for (int ch = 0; ch < Image::kChannels; ++ch) {
      for (int y = 0; y < B; ++y) {
        const int sy = r * B + std::min(y, image.height - r * B - 1);
        const float* row = &image.data[static_cast<std::size_t>(sy) * image.width * Image::kChannels + ch];
        for (int x = 0; x < B; ++x) {
          float* dst = &g.tiles.data[g.tiles.index(ch, y, x, r * tc)];
          const int* cx = &col_x[x * tc];
          for (int c = 0; c < tc; ++c) dst[c] = row[cx[c]];
        }
      }
    }
  }
  return g;
}

BlockGrid with_tiles(const BlockGrid& grid, kernel::FeatureMap<float> tiles) {
  if (tiles.channels != Image::kChannels || tiles.height != grid.block_size || tiles.width != grid.block_size ||
      tiles.batch != grid.tile_count()) {
    throw DimensionError("tiles " + tiles.shape_string() + " do not fit grid with " +
                         std::to_string(grid.tile_count()) + " tiles of size " + std::to_string(grid.block_size));
  }
  BlockGrid out = grid;
  out.tiles = std::move(tiles);
  return out;
}

Image reassemble(const BlockGrid& grid, int height, int width) {
  if (height != grid.image_height || width != grid.image_width) {
    throw InternalError("reassemble: target " + std::to_string(height) + "x" + std::to_string(width) +
                        " differs from grid source " + std::to_string(grid.image_height) + "x" +
                        std::to_string(grid.image_width));
  }
  const int n = grid.tile_count();
  const int B = grid.block_size;
  if (static_cast<int>(grid.origins.size()) != n || grid.tiles.batch != n || grid.tiles.height != B ||
      grid.tiles.width != B || grid.tiles.channels != Image::kChannels) {
    throw InternalError("reassemble: inconsistent grid storage");
  }
  Image out(height, width);
  const int tr = grid.tile_rows();
  const int tc = grid.tile_cols();
  for (int r = 0; r < tr; ++r) {
    for (int ch = 0; ch < Image::kChannels; ++ch) {
      for (int y = 0; y < B; ++y) {
        const int oy = r * B + y;
        if (oy >= height) break;
        float* row = &out.data[static_cast<std::size_t>(oy) * width * Image::kChannels + ch];
        for (int x = 0; x < B; ++x) {
          const float* src = &grid.tiles.data[grid.tiles.index(ch, y, x, r * tc)];
          for (int c = 0; c < tc; ++c) {
            const int ox = c * B + x;
            if (ox < width) row[static_cast<std::size_t>(ox) * Image::kChannels] = src[c];
          }
        }
      }
    }
  }
  return out;
}

BlockErrorGrid block_errors(const BlockGrid& original, const BlockGrid& reconstructed, ErrorMetric metric) {
  if (!original.same_geometry(reconstructed) || original.tiles.batch != reconstructed.tiles.batch ||
      original.tiles.batch != original.tile_count()) {
    throw DimensionError("block_errors: grids differ in geometry (" + std::to_string(original.tile_count()) +
                         " vs " + std::to_string(reconstructed.tile_count()) + " tiles)");
  }
  BlockErrorGrid e;
  e.rows = original.tile_rows();
  e.cols = original.tile_cols();
  e.block_size = original.block_size;
  e.metric = metric;
  e.errors.assign(static_cast<std::size_t>(e.rows) * e.cols, 0.0);

  const int n = original.tile_count();
  const int B = original.block_size;
  const auto& a = original.tiles;
  const auto& b = reconstructed.tiles;
  // Accumulate lane-wise over tiles: every tile sums its own values in the
  // same (channel, y, x) order.
  std::vector<double> acc(n, 0.0);
  const int tr = original.tile_rows();
  const int tc = original.tile_cols();
  const bool absolute = metric == ErrorMetric::kMeanAbsolute;
  for (int ch = 0; ch < Image::kChannels; ++ch) {
    for (int y = 0; y < B; ++y) {
      for (int x = 0; x < B; ++x) {
        const float* pa = &a.data[a.index(ch, y, x)];
        const float* pb = &b.data[b.index(ch, y, x)];
        // Only the last tile row and column can be partial.
        const int rows = y < original.origins.back().valid_height ? tr : tr - 1;
        const int cols = x < original.origins.back().valid_width ? tc : tc - 1;
        for (int r = 0; r < rows; ++r) {
          double* ar = &acc[r * tc];
          const float* ra = pa + r * tc;
          const float* rb = pb + r * tc;
          if (absolute) {
            for (int c = 0; c < cols; ++c) ar[c] += std::abs(static_cast<double>(ra[c]) - static_cast<double>(rb[c]));
          } else {
            for (int c = 0; c < cols; ++c) {
              const double d = static_cast<double>(ra[c]) - static_cast<double>(rb[c]);
              ar[c] += d * d;
            }
          }
        }
      }
    }
  }
  for (int t = 0; t < n; ++t) {
    const TileOrigin& o = original.origins[t];
    e.errors[t] = acc[t] / (static_cast<double>(o.valid_height) * o.valid_width * Image::kChannels);
  }
  return e;
}

int default_block_size(int image_height) {
  const double target = image_height / 32.0;
  int best = model::kSupportedBlockSizes[0];
  for (int b : model::kSupportedBlockSizes) {
    if (std::abs(b - target) < std::abs(best - target)) best = b;
  }
  return best;
}

}  // namespace nutnet::split
