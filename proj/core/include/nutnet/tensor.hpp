#pragma once

// Dense kernels for the autoencoder: direct convolution, transposed
// convolution, leaky ReLU, each with an explicit backward pass.
//
// Feature maps are channel-major with the batch index innermost:
//   data[((c * height + y) * width + x) * batch + n]
// so a batch of one is a plain C x H x W array, and every kernel loop over the
// batch is a contiguous, independent lane. A sample's result never depends on
// which other samples share its batch.

#include <cstddef>
#include <string>
#include <vector>

namespace nutnet::kernel {

template <typename T>
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  int batch = 1;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, int n = 1, T fill = T(0))
      : channels(c), height(h), width(w), batch(n),
        data(static_cast<std::size_t>(c) * h * w * n, fill) {}

  std::size_t index(int c, int y, int x, int n = 0) const {
    return ((static_cast<std::size_t>(c) * height + y) * width + x) * batch + n;
  }
  T& at(int c, int y, int x, int n = 0) { return data[index(c, y, x, n)]; }
  T at(int c, int y, int x, int n = 0) const { return data[index(c, y, x, n)]; }

  /// Values of one sample, per sample.
  std::size_t sample_size() const { return static_cast<std::size_t>(channels) * height * width; }
  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width && batch == o.batch;
  }
  std::string shape_string() const;

  /// Copies sample n out as a batch-of-one map.
  FeatureMap sample(int n) const;
  /// Only the listed samples, in the given order.
  FeatureMap gather(const std::vector<int>& samples) const;

  template <typename U>
  FeatureMap<U> cast() const {
    FeatureMap<U> out(channels, height, width, batch);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

enum class LayerKind { kConv, kTransposed };

/// Square-kernel convolution layer. Weight layout follows the usual
/// convention for each kind:
///   kConv        weights[out][in][ky][kx]
///   kTransposed  weights[in][out][ky][kx]
/// so a transposed layer built from a conv layer's weight array (with in/out
/// swapped) is that conv's adjoint.
template <typename T>
struct ConvLayerParams {
  LayerKind kind = LayerKind::kConv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 1;
  int stride = 1;
  int padding = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  static ConvLayerParams make(LayerKind kind, int in, int out, int k, int s, int p);

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_size * kernel_size;
  }
  std::size_t parameter_count() const { return weight_count() + bias.size(); }

  /// Output spatial size for an input extent along one axis; <= 0 when the
  /// layer cannot be applied.
  int output_extent(int input_extent) const;

  /// Throws ConfigError when hyper-parameters or array sizes disagree.
  void validate() const;

  std::size_t weight_index(int out, int in, int ky, int kx) const {
    return kind == LayerKind::kConv
               ? ((static_cast<std::size_t>(out) * in_channels + in) * kernel_size + ky) * kernel_size + kx
               : ((static_cast<std::size_t>(in) * out_channels + out) * kernel_size + ky) * kernel_size + kx;
  }

  template <typename U>
  ConvLayerParams<U> cast() const {
    ConvLayerParams<U> out;
    out.kind = kind;
    out.in_channels = in_channels;
    out.out_channels = out_channels;
    out.kernel_size = kernel_size;
    out.stride = stride;
    out.padding = padding;
    out.weights.assign(weights.begin(), weights.end());
    out.bias.assign(bias.begin(), bias.end());
    return out;
  }

  friend bool operator==(const ConvLayerParams&, const ConvLayerParams&) = default;
};

template <typename T>
struct GradientBundle {
  std::vector<T> weights;
  std::vector<T> bias;
  FeatureMap<T> input;  // empty when the caller opted out
};

/// Instruction set used by the single-precision forward kernels. All levels
/// give bit-identical results; only speed differs.
enum class SimdLevel { kPortable, kSse, kAvx2 };

/// Highest level the CPU supports, unless capped by set_simd_level.
SimdLevel simd_level();
/// Caps the level for the whole process. Levels the CPU lacks fall back to
/// the best one available.
void set_simd_level(SimdLevel cap);
const char* simd_level_name(SimdLevel level);

// Each forward checks input.channels against the layer and throws
// DimensionError naming both shapes on mismatch. Backward passes also check
// the upstream gradient against the forward output shape.

template <typename T>
FeatureMap<T> conv_forward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer);

template <typename T>
GradientBundle<T> conv_backward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer,
                                const FeatureMap<T>& upstream, bool want_input_grad = true);

template <typename T>
FeatureMap<T> tconv_forward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer);

template <typename T>
GradientBundle<T> tconv_backward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer,
                                 const FeatureMap<T>& upstream, bool want_input_grad = true);

/// Dispatches on layer.kind.
template <typename T>
FeatureMap<T> layer_forward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer);

/// layer_forward followed by leaky_relu, applied before the output is stored.
template <typename T>
FeatureMap<T> layer_forward_leaky(const FeatureMap<T>& input, const ConvLayerParams<T>& layer, T slope);

template <typename T>
GradientBundle<T> layer_backward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer,
                                 const FeatureMap<T>& upstream, bool want_input_grad = true);

/// y = x for x >= 0, slope * x otherwise. slope must lie in (0, 1).
template <typename T>
FeatureMap<T> leaky_relu(const FeatureMap<T>& input, T slope);

template <typename T>
void leaky_relu_inplace(FeatureMap<T>& map, T slope);

/// Gradient through leaky_relu given the forward *input*.
template <typename T>
FeatureMap<T> leaky_relu_backward(const FeatureMap<T>& input, const FeatureMap<T>& upstream, T slope);

}  // namespace nutnet::kernel
