#pragma once

// The reconstruction autoencoder: three strided convolutions down to a small
// bottleneck, three transposed convolutions back up to a B x B x 3 block.
// Leaky ReLU follows every layer except the last, which is linear so the
// decoder can emit values outside [0, 1].

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nutnet/image.hpp"
#include "nutnet/tensor.hpp"

namespace nutnet::model {

inline constexpr int kDefaultBlockSize = 13;
inline constexpr std::array<int, 3> kSupportedBlockSizes = {13, 26, 52};
inline constexpr const char* kArchId = "nutnet-ae/3x3-6-12-16";

/// Geometry of one layer, without weights.
struct LayerGeometry {
  kernel::LayerKind kind = kernel::LayerKind::kConv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 3;
  int stride = 1;
  int padding = 0;

  friend bool operator==(const LayerGeometry&, const LayerGeometry&) = default;
};

struct Architecture {
  int block_size = kDefaultBlockSize;
  std::array<LayerGeometry, 6> layers;  // encoder[0..2], decoder[3..5]
  std::array<int, 7> extents{};         // spatial size entering each layer, then output

  std::size_t parameter_count() const;
};

/// Layer arithmetic for a block size. Channel widths are fixed at
/// 3 -> 6 -> 12 -> 16 and back. Encoder layers are 3x3, padding 1, stride 2,
/// with trailing strides dropped to 1 whenever the bottleneck would shrink
/// below 2x2. Each decoder layer inverts the spatial map of its encoder
/// counterpart exactly, searching kernel 3..5, stride (encoder stride down to
/// 1) and padding 1..0 in that order. Throws ConfigError when B < 8 or no
/// decoder geometry reproduces B.
Architecture design_architecture(int block_size);

template <typename T>
struct AutoencoderParams {
  int block_size = kDefaultBlockSize;
  T slope = T(0.1);
  std::string arch_id = kArchId;
  std::array<kernel::ConvLayerParams<T>, 3> encoder;
  std::array<kernel::ConvLayerParams<T>, 3> decoder;

  const kernel::ConvLayerParams<T>& layer(int i) const { return i < 3 ? encoder[i] : decoder[i - 3]; }
  kernel::ConvLayerParams<T>& layer(int i) { return i < 3 ? encoder[i] : decoder[i - 3]; }
  std::size_t parameter_count() const;

  template <typename U>
  AutoencoderParams<U> cast() const {
    AutoencoderParams<U> out;
    out.block_size = block_size;
    out.slope = static_cast<U>(slope);
    out.arch_id = arch_id;
    for (int i = 0; i < 3; ++i) {
      out.encoder[i] = encoder[i].template cast<U>();
      out.decoder[i] = decoder[i].template cast<U>();
    }
    return out;
  }

  friend bool operator==(const AutoencoderParams&, const AutoencoderParams&) = default;
};

using AEParams = AutoencoderParams<float>;

/// Deterministic fan-in scaled uniform weights, zero biases.
AEParams init_params(std::uint64_t seed, int block_size = kDefaultBlockSize);

/// Layer inputs recorded by a training forward pass; activations[i] is the
/// input to layer i, activations[6] the network output.
template <typename T>
struct ForwardCache {
  std::array<kernel::FeatureMap<T>, 7> activations;
};

template <typename T>
struct ModelGradients {
  std::array<std::vector<T>, 6> weights;
  std::array<std::vector<T>, 6> bias;
  kernel::FeatureMap<T> input;  // empty unless requested
};

/// Runs a batch of 3 x B x B blocks through the network. With `cache` the
/// per-layer inputs are kept for backward().
template <typename T>
kernel::FeatureMap<T> forward(const AutoencoderParams<T>& params, const kernel::FeatureMap<T>& blocks,
                              ForwardCache<T>* cache = nullptr);

template <typename T>
ModelGradients<T> backward(const AutoencoderParams<T>& params, const ForwardCache<T>& cache,
                           const kernel::FeatureMap<T>& upstream, bool want_input_grad = false);

/// Inference over any number of blocks, `chunk` blocks at a time.
kernel::FeatureMap<float> reconstruct_blocks(const AEParams& params, const kernel::FeatureMap<float>& blocks,
                                             int chunk = 1024);

/// One B x B x 3 block in, its reconstruction out.
Image reconstruct_block(const AEParams& params, const Image& block);

/// split -> reconstruct every tile -> reassemble, at the model's block size.
Image reconstruct_image(const AEParams& params, const Image& image);

// --- Checkpoints -----------------------------------------------------------
//
// Little-endian byte layout, version 1:
//   "NUTNETAE"                       8 bytes
//   u32 format version               (1)
//   u32 block size
//   f32 activation slope
//   u32 n, arch id                   n bytes
//   u32 layer count                  (6)
//   per layer:
//     u32 kind (0 conv, 1 transposed), in, out, kernel, stride, padding
//     f32 weights[in * out * k * k], f32 bias[out]
//   u64 seed
//   u32 n, training config echo      n bytes of JSON
//   u32 CRC-32 of every preceding byte

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  AEParams params;
  std::uint64_t seed = 0;
  std::string config_json = "{}";

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws VersionError on a newer format, IntegrityError on anything malformed.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nutnet::model
