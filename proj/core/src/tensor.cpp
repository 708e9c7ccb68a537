#include "nutnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <type_traits>
#include <sstream>
#include <vector>

#include "nutnet/error.hpp"

#if defined(__x86_64__) && defined(__GNUC__)
#define NUTNET_X86_KERNELS 1
#include <immintrin.h>
#else
#define NUTNET_X86_KERNELS 0
#endif

namespace nutnet::kernel {

namespace {

SimdLevel detect_simd() {
#if NUTNET_X86_KERNELS
  if (__builtin_cpu_supports("avx2")) return SimdLevel::kAvx2;
  return SimdLevel::kSse;
#else
  return SimdLevel::kPortable;
#endif
}

std::atomic<int> g_simd_cap{static_cast<int>(SimdLevel::kAvx2)};

}  // namespace

SimdLevel simd_level() {
  static const SimdLevel best = detect_simd();
  return static_cast<SimdLevel>(std::min(static_cast<int>(best), g_simd_cap.load(std::memory_order_relaxed)));
}

void set_simd_level(SimdLevel cap) { g_simd_cap.store(static_cast<int>(cap), std::memory_order_relaxed); }

const char* simd_level_name(SimdLevel level) {
  switch (level) {
    case SimdLevel::kAvx2:
      return "avx2";
    case SimdLevel::kSse:
      return "sse";
    case SimdLevel::kPortable:
      break;
  }
  return "portable";
}

namespace {

// out[n] += w * in[n]
template <typename T>
inline void axpy(T* __restrict out, const T* __restrict in, T w, int n) {
  for (int i = 0; i < n; ++i) out[i] += w * in[i];
}

// Fixed eight-lane partial sums: the summation order depends only on n, so
// results are reproducible while still vectorizing.
template <typename T>
inline T dot(const T* __restrict a, const T* __restrict b, int n) {
  T acc[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (int l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
inline T sum(const T* __restrict a, int n) {
  T acc[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l];
  }
  for (int l = 0; i < n; ++i, ++l) acc[l] += a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
inline T leaky(T v, T slope) {
  return v >= T(0) ? v : slope * v;
}

template <typename T>
void check_slope(T slope) {
  if (!(slope > T(0) && slope < T(1))) throw ConfigError("leaky_relu: slope must lie in (0, 1)");
}

// Input element offset of one kernel tap within channel 0, and its ky*K+kx.
struct Tap {
  std::size_t offset;
  int k;
};

// acc = bias, then += w * x over input channels and taps in that order, for OB
// output channels at once so each input vector is loaded once. Every lane
// sees the same sequence of roundings as a scalar loop would, so all kernel
// variants below agree bit for bit.
template <typename T, int OB, int LANES>
inline void accumulate_block(const T* __restrict in, std::size_t in_plane, const Tap* taps, int ntaps,
                             const T* __restrict w, std::size_t w_stride, int IC, int KK, const T* bias,
                             T* __restrict out, std::size_t out_plane, const T* slope) {
  T acc[OB][LANES];
  for (int o = 0; o < OB; ++o)
    for (int l = 0; l < LANES; ++l) acc[o][l] = bias[o];
  for (int ic = 0; ic < IC; ++ic) {
    const T* ip = in + ic * in_plane;
    const T* wr = w + static_cast<std::size_t>(ic) * KK;
    for (int t = 0; t < ntaps; ++t) {
      const T* x = ip + taps[t].offset;
      for (int o = 0; o < OB; ++o) {
        const T wv = wr[o * w_stride + taps[t].k];
        for (int l = 0; l < LANES; ++l) acc[o][l] += wv * x[l];
      }
    }
  }
  if (slope) {
    for (int o = 0; o < OB; ++o)
      for (int l = 0; l < LANES; ++l) acc[o][l] = leaky(acc[o][l], *slope);
  }
  for (int o = 0; o < OB; ++o)
    for (int l = 0; l < LANES; ++l) out[o * out_plane + l] = acc[o][l];
}

template <typename T>
struct PortableKernel {
  static constexpr int kLanes = 8;
  template <int OB>
  static void run(const T* in, std::size_t in_plane, const Tap* taps, int ntaps, const T* w, std::size_t w_stride,
                  int IC, int KK, const T* bias, T* out, std::size_t out_plane, const T* slope) {
    accumulate_block<T, OB, kLanes>(in, in_plane, taps, ntaps, w, w_stride, IC, KK, bias, out, out_plane, slope);
  }
};

#if NUTNET_X86_KERNELS
struct SseKernel {
  static constexpr int kLanes = 8;
  template <int OB>
  static void run(const float* in, std::size_t in_plane, const Tap* taps, int ntaps, const float* w,
                  std::size_t w_stride, int IC, int KK, const float* bias, float* out, std::size_t out_plane,
                  const float* slope) {
    __m128 lo[OB], hi[OB];
    for (int o = 0; o < OB; ++o) lo[o] = hi[o] = _mm_set1_ps(bias[o]);
    for (int ic = 0; ic < IC; ++ic) {
      const float* ip = in + ic * in_plane;
      const float* wr = w + static_cast<std::size_t>(ic) * KK;
      for (int t = 0; t < ntaps; ++t) {
        const float* x = ip + taps[t].offset;
        const __m128 x0 = _mm_loadu_ps(x), x1 = _mm_loadu_ps(x + 4);
        for (int o = 0; o < OB; ++o) {
          const __m128 wv = _mm_set1_ps(wr[o * w_stride + taps[t].k]);
          lo[o] = _mm_add_ps(lo[o], _mm_mul_ps(wv, x0));
          hi[o] = _mm_add_ps(hi[o], _mm_mul_ps(wv, x1));
        }
      }
    }
    if (slope) {
      // v >= 0 ? v : slope * v, selected with masks.
      const __m128 s = _mm_set1_ps(*slope), zero = _mm_setzero_ps();
      for (int o = 0; o < OB; ++o) {
        const __m128 kl = _mm_cmpge_ps(lo[o], zero), kh = _mm_cmpge_ps(hi[o], zero);
        lo[o] = _mm_or_ps(_mm_and_ps(kl, lo[o]), _mm_andnot_ps(kl, _mm_mul_ps(s, lo[o])));
        hi[o] = _mm_or_ps(_mm_and_ps(kh, hi[o]), _mm_andnot_ps(kh, _mm_mul_ps(s, hi[o])));
      }
    }
    for (int o = 0; o < OB; ++o) {
      _mm_storeu_ps(out + o * out_plane, lo[o]);
      _mm_storeu_ps(out + o * out_plane + 4, hi[o]);
    }
  }
};

struct AvxKernel {
  static constexpr int kLanes = 16;
  template <int OB>
  __attribute__((target("avx2"))) static void run(const float* in, std::size_t in_plane, const Tap* taps,
                                                  int ntaps, const float* w, std::size_t w_stride, int IC, int KK,
                                                  const float* bias, float* out, std::size_t out_plane,
                                                  const float* slope) {
    __m256 lo[OB], hi[OB];
    for (int o = 0; o < OB; ++o) lo[o] = hi[o] = _mm256_set1_ps(bias[o]);
    for (int ic = 0; ic < IC; ++ic) {
      const float* ip = in + ic * in_plane;
      const float* wr = w + static_cast<std::size_t>(ic) * KK;
      for (int t = 0; t < ntaps; ++t) {
        const float* x = ip + taps[t].offset;
        const __m256 x0 = _mm256_loadu_ps(x), x1 = _mm256_loadu_ps(x + 8);
        for (int o = 0; o < OB; ++o) {
          const __m256 wv = _mm256_set1_ps(wr[o * w_stride + taps[t].k]);
          lo[o] = _mm256_add_ps(lo[o], _mm256_mul_ps(wv, x0));
          hi[o] = _mm256_add_ps(hi[o], _mm256_mul_ps(wv, x1));
        }
      }
    }
    if (slope) {
      const __m256 s = _mm256_set1_ps(*slope), zero = _mm256_setzero_ps();
      for (int o = 0; o < OB; ++o) {
        lo[o] = _mm256_blendv_ps(_mm256_mul_ps(s, lo[o]), lo[o], _mm256_cmp_ps(lo[o], zero, _CMP_GE_OQ));
        hi[o] = _mm256_blendv_ps(_mm256_mul_ps(s, hi[o]), hi[o], _mm256_cmp_ps(hi[o], zero, _CMP_GE_OQ));
      }
    }
    for (int o = 0; o < OB; ++o) {
      _mm256_storeu_ps(out + o * out_plane, lo[o]);
      _mm256_storeu_ps(out + o * out_plane + 8, hi[o]);
    }
  }
};
#endif

// Same arithmetic for a partial lane block.
template <typename T>
void accumulate_tail(const T* in, std::size_t in_plane, const Tap* taps, int ntaps, const T* w, std::size_t w_stride,
                     int IC, int KK, const T* bias, T* out, std::size_t out_plane, int OB, int lanes,
                     const T* slope) {
  for (int o = 0; o < OB; ++o) {
    for (int l = 0; l < lanes; ++l) {
      T acc = bias[o];
      for (int ic = 0; ic < IC; ++ic) {
        const T* ip = in + ic * in_plane;
        const T* wr = w + o * w_stride + static_cast<std::size_t>(ic) * KK;
        for (int t = 0; t < ntaps; ++t) acc += wr[taps[t].k] * ip[taps[t].offset + l];
      }
      out[o * out_plane + l] = slope ? leaky(acc, *slope) : acc;
    }
  }
}

// One output location, all channels and lanes. `w` is [out][in][K*K].
template <typename Kernel, typename T>
void location_with(const FeatureMap<T>& input, const T* w, const T* bias, int OC, int KK, const std::vector<Tap>& taps,
                   FeatureMap<T>& out, std::size_t out_offset, const T* slope) {
  constexpr int L = Kernel::kLanes;
  const int N = input.batch, IC = input.channels;
  const std::size_t in_plane = static_cast<std::size_t>(input.height) * input.width * N;
  const std::size_t out_plane = static_cast<std::size_t>(out.height) * out.width * N;
  const std::size_t w_stride = static_cast<std::size_t>(IC) * KK;
  const Tap* tp = taps.data();
  const int nt = static_cast<int>(taps.size());
  for (int n0 = 0; n0 < N; n0 += L) {
    const int lanes = std::min(L, N - n0);
    const T* in = input.data.data() + n0;
    T* o = &out.data[out_offset + n0];
    if (lanes < L) {
      accumulate_tail(in, in_plane, tp, nt, w, w_stride, IC, KK, bias, o, out_plane, OC, lanes, slope);
      continue;
    }
    int oc = 0;
    for (; oc + 4 <= OC; oc += 4) {
      Kernel::template run<4>(in, in_plane, tp, nt, w + oc * w_stride, w_stride, IC, KK, bias + oc,
                              o + oc * out_plane, out_plane, slope);
    }
    for (; oc + 2 <= OC; oc += 2) {
      Kernel::template run<2>(in, in_plane, tp, nt, w + oc * w_stride, w_stride, IC, KK, bias + oc,
                              o + oc * out_plane, out_plane, slope);
    }
    for (; oc < OC; ++oc) {
      Kernel::template run<1>(in, in_plane, tp, nt, w + oc * w_stride, w_stride, IC, KK, bias + oc,
                              o + oc * out_plane, out_plane, slope);
    }
  }
}

template <typename T>
void accumulate_location(const FeatureMap<T>& input, const T* w, const T* bias, int OC, int KK,
                         const std::vector<Tap>& taps, FeatureMap<T>& out, std::size_t out_offset, const T* slope) {
#if NUTNET_X86_KERNELS
  if constexpr (std::is_same_v<T, float>) {
    switch (simd_level()) {
      case SimdLevel::kAvx2:
        return location_with<AvxKernel>(input, w, bias, OC, KK, taps, out, out_offset, slope);
      case SimdLevel::kSse:
        return location_with<SseKernel>(input, w, bias, OC, KK, taps, out, out_offset, slope);
      case SimdLevel::kPortable:
        break;
    }
  }
#endif
  location_with<PortableKernel<T>>(input, w, bias, OC, KK, taps, out, out_offset, slope);
}

template <typename T>
std::string layer_string(const ConvLayerParams<T>& l) {
  std::ostringstream os;
  os << (l.kind == LayerKind::kConv ? "conv" : "tconv") << "(" << l.in_channels << "->" << l.out_channels
     << ", k" << l.kernel_size << ", s" << l.stride << ", p" << l.padding << ")";
  return os.str();
}

template <typename T>
void check_input(const FeatureMap<T>& input, const ConvLayerParams<T>& layer) {
  if (input.channels != layer.in_channels) {
    throw DimensionError("input " + input.shape_string() + " does not match layer " + layer_string(layer));
  }
  if (input.data.size() != input.sample_size() * static_cast<std::size_t>(input.batch)) {
    throw DimensionError("feature map " + input.shape_string() + " has inconsistent storage");
  }
  const int oh = layer.output_extent(input.height);
  const int ow = layer.output_extent(input.width);
  if (oh < 1 || ow < 1) {
    throw DimensionError("input " + input.shape_string() + " too small for layer " + layer_string(layer));
  }
}

template <typename T>
void check_upstream(const FeatureMap<T>& input, const ConvLayerParams<T>& layer, const FeatureMap<T>& up) {
  check_input(input, layer);
  const int oh = layer.output_extent(input.height);
  const int ow = layer.output_extent(input.width);
  if (up.channels != layer.out_channels || up.height != oh || up.width != ow || up.batch != input.batch) {
    FeatureMap<T> expected;
    expected.channels = layer.out_channels;
    expected.height = oh;
    expected.width = ow;
    expected.batch = input.batch;
    throw DimensionError("upstream gradient " + up.shape_string() + " does not match forward output " +
                         expected.shape_string());
  }
}

}  // namespace

template <typename T>
std::string FeatureMap<T>::shape_string() const {
  std::ostringstream os;
  os << channels << "x" << height << "x" << width;
  if (batch != 1) os << " (batch " << batch << ")";
  return os.str();
}

template <typename T>
FeatureMap<T> FeatureMap<T>::sample(int n) const {
  return gather({n});
}

template <typename T>
FeatureMap<T> FeatureMap<T>::gather(const std::vector<int>& samples) const {
  const int m = static_cast<int>(samples.size());
  FeatureMap out(channels, height, width, m);
  const std::size_t plane = sample_size();
  for (std::size_t e = 0; e < plane; ++e) {
    const T* src = &data[e * batch];
    T* dst = &out.data[e * m];
    for (int i = 0; i < m; ++i) dst[i] = src[samples[i]];
  }
  return out;
}

template <typename T>
ConvLayerParams<T> ConvLayerParams<T>::make(LayerKind kind, int in, int out, int k, int s, int p) {
  ConvLayerParams l;
  l.kind = kind;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel_size = k;
  l.stride = s;
  l.padding = p;
  l.weights.assign(l.weight_count(), T(0));
  l.bias.assign(static_cast<std::size_t>(out), T(0));
  return l;
}

template <typename T>
int ConvLayerParams<T>::output_extent(int input_extent) const {
  if (kind == LayerKind::kConv) {
    const int span = input_extent + 2 * padding - kernel_size;
    if (span < 0) return 0;
    return span / stride + 1;
  }
  return (input_extent - 1) * stride - 2 * padding + kernel_size;
}

template <typename T>
void ConvLayerParams<T>::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("layer " + layer_string(*this) + ": channel count < 1");
  if (kernel_size < 1) throw ConfigError("layer " + layer_string(*this) + ": kernel_size < 1");
  if (stride < 1) throw ConfigError("layer " + layer_string(*this) + ": stride < 1");
  if (padding < 0) throw ConfigError("layer " + layer_string(*this) + ": padding < 0");
  if (weights.size() != weight_count() || bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ConfigError("layer " + layer_string(*this) + ": parameter arrays do not match declared shape");
  }
}

template <typename T>
static FeatureMap<T> conv_forward_fused(const FeatureMap<T>& input, const ConvLayerParams<T>& layer, const T* slope) {
  if (layer.kind != LayerKind::kConv) throw DimensionError("conv_forward given a transposed layer");
  check_input(input, layer);
  const int H = input.height, W = input.width;
  const int K = layer.kernel_size, S = layer.stride, P = layer.padding;
  const int OH = layer.output_extent(H), OW = layer.output_extent(W);
  FeatureMap<T> out(layer.out_channels, OH, OW, input.batch);
  std::vector<Tap> taps;
  for (int oy = 0; oy < OH; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      taps.clear();
      for (int ky = 0; ky < K; ++ky) {
        const int iy = oy * S - P + ky;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < K; ++kx) {
          const int ix = ox * S - P + kx;
          if (ix < 0 || ix >= W) continue;
          taps.push_back({input.index(0, iy, ix), ky * K + kx});
        }
      }
      accumulate_location(input, layer.weights.data(), layer.bias.data(), layer.out_channels, K * K, taps,
                          out, out.index(0, oy, ox), slope);
    }
  }
  return out;
}

template <typename T>
GradientBundle<T> conv_backward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer,
                                const FeatureMap<T>& upstream, bool want_input_grad) {
  if (layer.kind != LayerKind::kConv) throw DimensionError("conv_backward given a transposed layer");
  check_upstream(input, layer, upstream);
  const int N = input.batch, H = input.height, W = input.width;
  const int K = layer.kernel_size, S = layer.stride, P = layer.padding;
  const int IC = layer.in_channels, OC = layer.out_channels;
  const int OH = upstream.height, OW = upstream.width;

  GradientBundle<T> g;
  g.weights.assign(layer.weight_count(), T(0));
  g.bias.assign(OC, T(0));
  if (want_input_grad) g.input = FeatureMap<T>(IC, H, W, N);

  for (int oc = 0; oc < OC; ++oc) {
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        const T* up = &upstream.data[upstream.index(oc, oy, ox)];
        g.bias[oc] += sum(up, N);
        for (int ic = 0; ic < IC; ++ic) {
          for (int ky = 0; ky < K; ++ky) {
            const int iy = oy * S - P + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < K; ++kx) {
              const int ix = ox * S - P + kx;
              if (ix < 0 || ix >= W) continue;
              const std::size_t wi = layer.weight_index(oc, ic, ky, kx);
              const std::size_t ii = input.index(ic, iy, ix);
              g.weights[wi] += dot(up, &input.data[ii], N);
              if (want_input_grad) axpy(&g.input.data[ii], up, layer.weights[wi], N);
            }
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
static FeatureMap<T> tconv_forward_fused(const FeatureMap<T>& input, const ConvLayerParams<T>& layer,
                                         const T* slope) {
  if (layer.kind != LayerKind::kTransposed) throw DimensionError("tconv_forward given a conv layer");
  check_input(input, layer);
  const int H = input.height, W = input.width;
  const int K = layer.kernel_size, S = layer.stride, P = layer.padding;
  const int IC = layer.in_channels, OC = layer.out_channels;
  const int OH = layer.output_extent(H), OW = layer.output_extent(W);
  FeatureMap<T> out(OC, OH, OW, input.batch);
  // Repacked to [out][in][ky][kx] so both layer kinds share one kernel.
  std::vector<T> packed(layer.weights.size());
  for (int oc = 0; oc < OC; ++oc)
    for (int ic = 0; ic < IC; ++ic)
      for (int k = 0; k < K * K; ++k)
        packed[(static_cast<std::size_t>(oc) * IC + ic) * K * K + k] = layer.weights[layer.weight_index(oc, ic, k / K, k % K)];
  // Gather form: each output location pulls from the inputs that scatter onto
  // it, giving a fixed accumulation order per output element.
  std::vector<Tap> taps;
  for (int oy = 0; oy < OH; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      taps.clear();
      for (int ky = 0; ky < K; ++ky) {
        const int ty = oy + P - ky;
        if (ty < 0 || ty % S != 0) continue;
        const int iy = ty / S;
        if (iy >= H) continue;
        for (int kx = 0; kx < K; ++kx) {
          const int tx = ox + P - kx;
          if (tx < 0 || tx % S != 0) continue;
          const int ix = tx / S;
          if (ix >= W) continue;
          taps.push_back({input.index(0, iy, ix), ky * K + kx});
        }
      }
      accumulate_location(input, packed.data(), layer.bias.data(), OC, K * K, taps, out, out.index(0, oy, ox), slope);
    }
  }
  return out;
}

template <typename T>
GradientBundle<T> tconv_backward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer,
                                 const FeatureMap<T>& upstream, bool want_input_grad) {
  if (layer.kind != LayerKind::kTransposed) throw DimensionError("tconv_backward given a conv layer");
  check_upstream(input, layer, upstream);
  const int N = input.batch, H = input.height, W = input.width;
  const int K = layer.kernel_size, S = layer.stride, P = layer.padding;
  const int IC = layer.in_channels, OC = layer.out_channels;
  const int OH = upstream.height, OW = upstream.width;

  GradientBundle<T> g;
  g.weights.assign(layer.weight_count(), T(0));
  g.bias.assign(OC, T(0));
  if (want_input_grad) g.input = FeatureMap<T>(IC, H, W, N);

  for (int oc = 0; oc < OC; ++oc) {
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        const T* up = &upstream.data[upstream.index(oc, oy, ox)];
        g.bias[oc] += sum(up, N);
        for (int ic = 0; ic < IC; ++ic) {
          for (int ky = 0; ky < K; ++ky) {
            const int ty = oy + P - ky;
            if (ty < 0 || ty % S != 0) continue;
            const int iy = ty / S;
            if (iy >= H) continue;
            for (int kx = 0; kx < K; ++kx) {
              const int tx = ox + P - kx;
              if (tx < 0 || tx % S != 0) continue;
              const int ix = tx / S;
              if (ix >= W) continue;
              const std::size_t wi = layer.weight_index(oc, ic, ky, kx);
              const std::size_t ii = input.index(ic, iy, ix);
              g.weights[wi] += dot(up, &input.data[ii], N);
              if (want_input_grad) axpy(&g.input.data[ii], up, layer.weights[wi], N);
            }
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
FeatureMap<T> conv_forward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer) {
  return conv_forward_fused<T>(input, layer, nullptr);
}

template <typename T>
FeatureMap<T> tconv_forward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer) {
  return tconv_forward_fused<T>(input, layer, nullptr);
}

template <typename T>
FeatureMap<T> layer_forward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer) {
  return layer.kind == LayerKind::kConv ? conv_forward(input, layer) : tconv_forward(input, layer);
}

template <typename T>
FeatureMap<T> layer_forward_leaky(const FeatureMap<T>& input, const ConvLayerParams<T>& layer, T slope) {
  check_slope(slope);
  return layer.kind == LayerKind::kConv ? conv_forward_fused(input, layer, &slope)
                                        : tconv_forward_fused(input, layer, &slope);
}

template <typename T>
GradientBundle<T> layer_backward(const FeatureMap<T>& input, const ConvLayerParams<T>& layer,
                                 const FeatureMap<T>& upstream, bool want_input_grad) {
  return layer.kind == LayerKind::kConv ? conv_backward(input, layer, upstream, want_input_grad)
                                        : tconv_backward(input, layer, upstream, want_input_grad);
}

template <typename T>
void leaky_relu_inplace(FeatureMap<T>& map, T slope) {
  check_slope(slope);
  for (T& v : map.data) v = leaky(v, slope);
}

template <typename T>
FeatureMap<T> leaky_relu(const FeatureMap<T>& input, T slope) {
  FeatureMap<T> out = input;
  leaky_relu_inplace(out, slope);
  return out;
}

template <typename T>
FeatureMap<T> leaky_relu_backward(const FeatureMap<T>& input, const FeatureMap<T>& upstream, T slope) {
  if (!input.same_shape(upstream)) {
    throw DimensionError("leaky_relu_backward: upstream " + upstream.shape_string() + " vs input " +
                         input.shape_string());
  }
  FeatureMap<T> out = upstream;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (input.data[i] < T(0)) out.data[i] *= slope;
  }
  return out;
}

#define NUTNET_INSTANTIATE(T)                                                                                 \
  template struct FeatureMap<T>;                                                                              \
  template struct ConvLayerParams<T>;                                                                         \
  template FeatureMap<T> conv_forward(const FeatureMap<T>&, const ConvLayerParams<T>&);                      \
  template GradientBundle<T> conv_backward(const FeatureMap<T>&, const ConvLayerParams<T>&,                  \
                                           const FeatureMap<T>&, bool);                                      \
  template FeatureMap<T> tconv_forward(const FeatureMap<T>&, const ConvLayerParams<T>&);                     \
  template GradientBundle<T> tconv_backward(const FeatureMap<T>&, const ConvLayerParams<T>&,                 \
                                            const FeatureMap<T>&, bool);                                     \
  template FeatureMap<T> layer_forward(const FeatureMap<T>&, const ConvLayerParams<T>&);                     \
  template FeatureMap<T> layer_forward_leaky(const FeatureMap<T>&, const ConvLayerParams<T>&, T);            \
  template GradientBundle<T> layer_backward(const FeatureMap<T>&, const ConvLayerParams<T>&,                 \
                                            const FeatureMap<T>&, bool);                                     \
  template FeatureMap<T> leaky_relu(const FeatureMap<T>&, T);                                                \
  template void leaky_relu_inplace(FeatureMap<T>&, T);                                                       \
  template FeatureMap<T> leaky_relu_backward(const FeatureMap<T>&, const FeatureMap<T>&, T);

NUTNET_INSTANTIATE(float)
NUTNET_INSTANTIATE(double)

#undef NUTNET_INSTANTIATE

}  // namespace nutnet::kernel
