#include "nutnet/model.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "nutnet/error.hpp"
#include "nutnet/splitter.hpp"

namespace nutnet::model {

using kernel::ConvLayerParams;
using kernel::FeatureMap;
using kernel::LayerKind;

namespace {

constexpr std::array<int, 4> kWidths = {3, 6, 12, 16};

int conv_extent(int in, int k, int s, int p) {
  const int span = in + 2 * p - k;
  return span < 0 ? 0 : span / s + 1;
}

}  // namespace

std::size_t Architecture::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.in_channels) * l.out_channels * l.kernel_size * l.kernel_size + l.out_channels;
  }
  return n;
}

Architecture design_architecture(int block_size) {
  if (block_size < 8) {
    throw ConfigError("block size " + std::to_string(block_size) + " is below the minimum of 8");
  }
  Architecture arch;
  arch.block_size = block_size;

  std::array<int, 3> strides = {2, 2, 2};
  auto encode = [&] {
    arch.extents[0] = block_size;
    for (int i = 0; i < 3; ++i) arch.extents[i + 1] = conv_extent(arch.extents[i], 3, strides[i], 1);
  };
  encode();
  for (int i = 2; i >= 0 && arch.extents[3] < 2; --i) {
    strides[i] = 1;
    encode();
  }
  for (int i = 0; i < 3; ++i) {
    arch.layers[i] = {LayerKind::kConv, kWidths[i], kWidths[i + 1], 3, strides[i], 1};
  }

  // Decoder layer j undoes encoder layer 2 - j: extents[e + 1] -> extents[e].
  for (int j = 0; j < 3; ++j) {
    const int e = 2 - j;
    const int from = arch.extents[e + 1];
    const int to = arch.extents[e];
    bool found = false;
    for (int k = 3; k <= 5 && !found; ++k) {
      for (int s = strides[e]; s >= 1 && !found; --s) {
        for (int p = 1; p >= 0 && !found; --p) {
          if ((from - 1) * s - 2 * p + k == to) {
            arch.layers[3 + j] = {LayerKind::kTransposed, kWidths[e + 1], kWidths[e], k, s, p};
            found = true;
          }
        }
      }
    }
    if (!found) {
      throw ConfigError("no transposed layer maps " + std::to_string(from) + " back to " + std::to_string(to) +
                        " for block size " + std::to_string(block_size));
    }
  }
  arch.extents[4] = arch.extents[2];
  arch.extents[5] = arch.extents[1];
  arch.extents[6] = arch.extents[0];
  return arch;
}

template <typename T>
std::size_t AutoencoderParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (int i = 0; i < 6; ++i) n += layer(i).parameter_count();
  return n;
}

AEParams init_params(std::uint64_t seed, int block_size) {
  const Architecture arch = design_architecture(block_size);
  AEParams p;
  p.block_size = block_size;
  p.slope = 0.1f;
  p.arch_id = kArchId;

  std::mt19937_64 rng(seed);
  // 53-bit mantissa from the raw engine output; std::uniform_real_distribution
  // is not specified bit-for-bit across standard libraries.
  auto uniform = [&rng](double bound) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return (2.0 * u - 1.0) * bound;
  };
  const double gain = std::sqrt(2.0 / (1.0 + 0.1 * 0.1));
  for (int i = 0; i < 6; ++i) {
    const LayerGeometry& g = arch.layers[i];
    auto layer = ConvLayerParams<float>::make(g.kind, g.in_channels, g.out_channels, g.kernel_size, g.stride,
                                              g.padding);
    // Transposed layers see roughly (k / s)^2 taps per output.
    const int taps = g.kind == LayerKind::kConv ? g.kernel_size : (g.kernel_size + g.stride - 1) / g.stride;
    const double fan_in = static_cast<double>(g.in_channels) * taps * taps;
    const double bound = gain * std::sqrt(3.0 / fan_in);
    for (float& w : layer.weights) w = static_cast<float>(uniform(bound));
    p.layer(i) = std::move(layer);
  }
  return p;
}

template <typename T>
FeatureMap<T> forward(const AutoencoderParams<T>& params, const FeatureMap<T>& blocks, ForwardCache<T>* cache) {
  const int B = params.block_size;
  if (blocks.channels != Image::kChannels || blocks.height != B || blocks.width != B) {
    throw DimensionError("autoencoder expects 3x" + std::to_string(B) + "x" + std::to_string(B) + " blocks, got " +
                         blocks.shape_string());
  }
  FeatureMap<T> x;
  for (int i = 0; i < 6; ++i) {
    const FeatureMap<T>& in = i == 0 ? blocks : x;
    FeatureMap<T> z = i < 5 ? kernel::layer_forward_leaky(in, params.layer(i), params.slope)
                            : kernel::layer_forward(in, params.layer(i));
    if (cache) {
      if (i == 0) cache->activations[0] = blocks;
      else cache->activations[i] = std::move(x);
    }
    x = std::move(z);
  }
  if (cache) cache->activations[6] = x;
  return x;
}

template <typename T>
ModelGradients<T> backward(const AutoencoderParams<T>& params, const ForwardCache<T>& cache,
                           const FeatureMap<T>& upstream, bool want_input_grad) {
  ModelGradients<T> grads;
  FeatureMap<T> g = upstream;
  for (int i = 5; i >= 0; --i) {
    if (i < 5) {
      // Leaky ReLU keeps the sign, so the layer's own output tells which
      // branch was taken.
      g = kernel::leaky_relu_backward(cache.activations[i + 1], g, params.slope);
    }
    const bool need_input = i > 0 || want_input_grad;
    auto bundle = kernel::layer_backward(cache.activations[i], params.layer(i), g, need_input);
    grads.weights[i] = std::move(bundle.weights);
    grads.bias[i] = std::move(bundle.bias);
    if (need_input) g = std::move(bundle.input);
  }
  if (want_input_grad) grads.input = std::move(g);
  return grads;
}

FeatureMap<float> reconstruct_blocks(const AEParams& params, const FeatureMap<float>& blocks, int chunk) {
  if (chunk < 1) chunk = 1;
  const int n = blocks.batch;
  if (n <= chunk) return forward(params, blocks);
  FeatureMap<float> out(blocks.channels, blocks.height, blocks.width, n);
  const std::size_t plane = blocks.sample_size();
  std::vector<int> idx;
  for (int start = 0; start < n; start += chunk) {
    const int m = std::min(chunk, n - start);
    idx.resize(m);
    for (int i = 0; i < m; ++i) idx[i] = start + i;
    const FeatureMap<float> part = forward(params, blocks.gather(idx));
    for (std::size_t e = 0; e < plane; ++e) {
      std::copy_n(&part.data[e * m], m, &out.data[e * n + start]);
    }
  }
  return out;
}

Image reconstruct_block(const AEParams& params, const Image& block) {
  const int B = params.block_size;
  if (block.height != B || block.width != B) {
    throw DimensionError("reconstruct_block expects " + std::to_string(B) + "x" + std::to_string(B) +
                         "x3, got " + std::to_string(block.height) + "x" + std::to_string(block.width) + "x3");
  }
  FeatureMap<float> in(Image::kChannels, B, B, 1);
  for (int y = 0; y < B; ++y)
    for (int x = 0; x < B; ++x)
      for (int c = 0; c < Image::kChannels; ++c) in.at(c, y, x) = block.at(y, x, c);
  const FeatureMap<float> out = forward(params, in);
  Image result(B, B);
  for (int y = 0; y < B; ++y)
    for (int x = 0; x < B; ++x)
      for (int c = 0; c < Image::kChannels; ++c) result.at(y, x, c) = out.at(c, y, x);
  return result;
}

Image reconstruct_image(const AEParams& params, const Image& image) {
  const split::BlockGrid grid = split::split(image, params.block_size);
  const split::BlockGrid recon = split::with_tiles(grid, reconstruct_blocks(params, grid.tiles));
  return split::reassemble(recon, image.height, image.width);
}

// --- Checkpoint codec -------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'N', 'U', 'T', 'N', 'E', 'T', 'A', 'E'};

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t limit) {
    const std::uint32_t n = u32();
    if (n > limit) throw IntegrityError("checkpoint: string field of " + std::to_string(n) + " bytes");
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw IntegrityError("checkpoint: truncated payload");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const AEParams& p = ckpt.params;
  ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(p.block_size));
  w.f32(p.slope);
  w.str(p.arch_id);
  w.u32(6);
  for (int i = 0; i < 6; ++i) {
    const auto& l = p.layer(i);
    l.validate();
    w.u32(l.kind == LayerKind::kConv ? 0u : 1u);
    w.u32(static_cast<std::uint32_t>(l.in_channels));
    w.u32(static_cast<std::uint32_t>(l.out_channels));
    w.u32(static_cast<std::uint32_t>(l.kernel_size));
    w.u32(static_cast<std::uint32_t>(l.stride));
    w.u32(static_cast<std::uint32_t>(l.padding));
    for (float v : l.weights) w.f32(v);
    for (float v : l.bias) w.f32(v);
  }
  w.u64(ckpt.seed);
  w.str(ckpt.config_json);
  const std::uint32_t crc = crc_of(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IntegrityError("checkpoint: bad magic bytes");
  }
  ByteReader header(bytes.data() + sizeof kMagic, bytes.size() - sizeof kMagic);
  const std::uint32_t version = header.u32();
  if (version > kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " is newer than supported version " +
                       std::to_string(kCheckpointVersion));
  }
  if (version == 0) throw VersionError("checkpoint format version 0 is not valid");

  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = ByteReader(bytes.data() + body, 4).u32();
  if (crc_of(bytes.data(), body) != stored) throw IntegrityError("checkpoint: checksum mismatch");

  ByteReader r(bytes.data() + sizeof kMagic + 4, body - sizeof kMagic - 4);
  Checkpoint ckpt;
  AEParams& p = ckpt.params;
  p.block_size = static_cast<int>(r.u32());
  p.slope = r.f32();
  p.arch_id = r.str(256);
  if (r.u32() != 6) throw IntegrityError("checkpoint: expected 6 layers");
  for (int i = 0; i < 6; ++i) {
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw IntegrityError("checkpoint: unknown layer kind " + std::to_string(kind));
    const int in = static_cast<int>(r.u32());
    const int out = static_cast<int>(r.u32());
    const int k = static_cast<int>(r.u32());
    const int s = static_cast<int>(r.u32());
    const int pad = static_cast<int>(r.u32());
    if (in < 1 || out < 1 || k < 1 || s < 1 || pad < 0 || in > 4096 || out > 4096 || k > 64) {
      throw IntegrityError("checkpoint: implausible layer geometry");
    }
    auto l = ConvLayerParams<float>::make(kind == 0 ? LayerKind::kConv : LayerKind::kTransposed, in, out, k, s, pad);
    if (r.remaining() < 4 * (l.weights.size() + l.bias.size())) throw IntegrityError("checkpoint: truncated payload");
    for (float& v : l.weights) v = r.f32();
    for (float& v : l.bias) v = r.f32();
    p.layer(i) = std::move(l);
  }
  ckpt.seed = r.u64();
  ckpt.config_json = r.str(1u << 24);
  if (r.remaining() != 0) throw IntegrityError("checkpoint: trailing bytes");

  const Architecture arch = design_architecture(p.block_size);
  for (int i = 0; i < 6; ++i) {
    const auto& l = p.layer(i);
    const LayerGeometry g{l.kind, l.in_channels, l.out_channels, l.kernel_size, l.stride, l.padding};
    if (!(g == arch.layers[i])) {
      throw IntegrityError("checkpoint: layer " + std::to_string(i) + " does not match the architecture for block size " +
                           std::to_string(p.block_size));
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write checkpoint '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InputError("failed writing checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw InputError("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template struct AutoencoderParams<float>;
template struct AutoencoderParams<double>;
template FeatureMap<float> forward(const AutoencoderParams<float>&, const FeatureMap<float>&, ForwardCache<float>*);
template FeatureMap<double> forward(const AutoencoderParams<double>&, const FeatureMap<double>&, ForwardCache<double>*);
template ModelGradients<float> backward(const AutoencoderParams<float>&, const ForwardCache<float>&,
                                        const FeatureMap<float>&, bool);
template ModelGradients<double> backward(const AutoencoderParams<double>&, const ForwardCache<double>&,
                                         const FeatureMap<double>&, bool);

}  // namespace nutnet::model
