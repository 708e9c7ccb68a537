#pragma once

// Non-overlapping B x B tiling of an image.
//
// The covered region holds rows x cols full tiles (rows = H / B, cols = W / B).
// When B does not divide a dimension, one extra row and/or column of partial
// tiles follows; their missing pixels are filled by replicating the last valid
// row/column, and reassembly crops them away again. Tiles are stored in
// row-major tile order as one batched feature map, ready for the model.

#include <vector>

#include "nutnet/image.hpp"
#include "nutnet/tensor.hpp"

namespace nutnet::split {

enum class BorderPolicy { kExact, kEdgeReplicate };

struct TileOrigin {
  int y = 0;
  int x = 0;
  int valid_height = 0;
  int valid_width = 0;

  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

struct BlockGrid {
  int block_size = 0;
  int rows = 0;  // full tiles only
  int cols = 0;
  int image_height = 0;
  int image_width = 0;
  BorderPolicy border = BorderPolicy::kExact;
  kernel::FeatureMap<float> tiles;  // 3 x B x B x tile_count()
  std::vector<TileOrigin> origins;  // one per tile, row-major

  int residual_height() const { return image_height - rows * block_size; }
  int residual_width() const { return image_width - cols * block_size; }
  int tile_rows() const { return rows + (residual_height() > 0 ? 1 : 0); }
  int tile_cols() const { return cols + (residual_width() > 0 ? 1 : 0); }
  int tile_count() const { return tile_rows() * tile_cols(); }

  bool same_geometry(const BlockGrid& o) const {
    return block_size == o.block_size && image_height == o.image_height && image_width == o.image_width;
  }
};

enum class ErrorMetric { kMeanAbsolute, kMeanSquared };

const char* metric_name(ErrorMetric m);

/// Per-tile reconstruction error over the tile's valid pixels.
struct BlockErrorGrid {
  int rows = 0;  // tile rows, including a partial border row
  int cols = 0;
  int block_size = 0;
  ErrorMetric metric = ErrorMetric::kMeanAbsolute;
  std::vector<double> errors;

  double at(int r, int c) const { return errors[static_cast<std::size_t>(r) * cols + c]; }
  double& at(int r, int c) { return errors[static_cast<std::size_t>(r) * cols + c]; }
};

/// Throws InputError when the image is smaller than one block.
BlockGrid split(const Image& image, int block_size);

/// The geometry of `grid` with different tile contents (e.g. reconstructions).
BlockGrid with_tiles(const BlockGrid& grid, kernel::FeatureMap<float> tiles);

/// Writes every tile's valid region back into an image of the grid's source
/// size. Throws InternalError when the target dims or tile storage disagree
/// with the grid.
Image reassemble(const BlockGrid& grid, int height, int width);

BlockErrorGrid block_errors(const BlockGrid& original, const BlockGrid& reconstructed,
                            ErrorMetric metric = ErrorMetric::kMeanAbsolute);

/// Supported block size nearest to height / 32 (416 -> 13).
int default_block_size(int image_height);

}  // namespace nutnet::split
