#include <gtest/gtest.h>

#include <cstring>

#include "nutnet/error.hpp"
#include "nutnet/tensor.hpp"
#include "oracles.hpp"

using namespace nutnet;
using namespace nutnet::kernel;

namespace {

struct Geometry {
  LayerKind kind;
  int in, out, k, s, p, h, w, n;
};

ConvLayerParams<double> random_layer(const Geometry& g) {
  auto l = ConvLayerParams<double>::make(g.kind, g.in, g.out, g.k, g.s, g.p);
  oracle::fill(l.weights);
  oracle::fill(l.bias);
  return l;
}

FeatureMap<double> random_map(int c, int h, int w, int n) {
  FeatureMap<double> m(c, h, w, n);
  oracle::fill(m.data);
  return m;
}

std::vector<Geometry> geometries() {
  std::vector<Geometry> out;
  for (LayerKind kind : {LayerKind::kConv, LayerKind::kTransposed})
    for (int k : {1, 2, 3, 4})
      for (int s : {1, 2, 3})
        for (int p = 0; p < k; ++p) {
          const int h = 3 + (k + s + p) % 5, w = 4 + (k * s + p) % 4;
          Geometry g{kind, 1 + (k + p) % 3, 1 + (s + k) % 4, k, s, p, h, w, 1 + (p + s) % 3};
          auto l = ConvLayerParams<double>::make(g.kind, g.in, g.out, g.k, g.s, g.p);
          if (l.output_extent(h) <= 0 || l.output_extent(w) <= 0) continue;
          out.push_back(g);
        }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Tensor, ForwardMatchesNaiveDefinition) {
  for (const Geometry& g : geometries()) {
    SCOPED_TRACE(testing::Message() << "k" << g.k << " s" << g.s << " p" << g.p << " kind " << int(g.kind));
    const auto l = random_layer(g);
    const auto x = random_map(g.in, g.h, g.w, g.n);
    const auto y = layer_forward(x, l);
    const auto ref = g.kind == LayerKind::kConv ? oracle::conv(x, l) : oracle::tconv(x, l);
    ASSERT_TRUE(y.same_shape(ref)) << y.shape_string() << " vs " << ref.shape_string();
    for (std::size_t i = 0; i < y.data.size(); ++i) ASSERT_NEAR(y.data[i], ref.data[i], 1e-12);
  }
}

TEST(Tensor, OutputExtentFormulas) {
  auto c = ConvLayerParams<float>::make(LayerKind::kConv, 3, 6, 3, 2, 1);
  EXPECT_EQ(c.output_extent(13), 7);
  EXPECT_EQ(c.output_extent(7), 4);
  EXPECT_EQ(c.output_extent(4), 2);
  auto t = ConvLayerParams<float>::make(LayerKind::kTransposed, 16, 12, 3, 1, 0);
  EXPECT_EQ(t.output_extent(2), 4);
  auto t2 = ConvLayerParams<float>::make(LayerKind::kTransposed, 12, 6, 3, 2, 1);
  EXPECT_EQ(t2.output_extent(4), 7);
  EXPECT_EQ(t2.output_extent(7), 13);
}

// Probes L = <r, layer(x)> so every backward component is checked against a
// central difference.
TEST(Tensor, BackwardMatchesFiniteDifferences) {
  const double eps = 1e-3;
  int checked = 0;
  for (const Geometry& g : geometries()) {
    auto l = random_layer(g);
    auto x = random_map(g.in, g.h, g.w, g.n);
    const auto y0 = layer_forward(x, l);
    auto r = random_map(y0.channels, y0.height, y0.width, y0.batch);
    auto loss = [&] { return dot(layer_forward(x, l).data, r.data); };
    const auto grads = layer_backward(x, l, r);
    for (std::size_t i = 0; i < l.weights.size(); i += 1 + l.weights.size() / 7)
      EXPECT_LE(oracle::relative_error(grads.weights[i], oracle::central_difference(loss, l.weights[i], eps)), 1e-6);
    for (std::size_t i = 0; i < l.bias.size(); ++i)
      EXPECT_LE(oracle::relative_error(grads.bias[i], oracle::central_difference(loss, l.bias[i], eps)), 1e-6);
    for (std::size_t i = 0; i < x.data.size(); i += 1 + x.data.size() / 11)
      EXPECT_LE(oracle::relative_error(grads.input.data[i], oracle::central_difference(loss, x.data[i], eps)), 1e-6);
    ++checked;
  }
  EXPECT_GE(checked, 40);
}

TEST(Tensor, TransposedIsAdjointOfConv) {
  int checked = 0;
  for (const Geometry& g : geometries()) {
    if (g.kind != LayerKind::kConv) continue;
    auto c = random_layer(g);
    std::fill(c.bias.begin(), c.bias.end(), 0.0);
    auto t = ConvLayerParams<double>::make(LayerKind::kTransposed, g.out, g.in, g.k, g.s, g.p);
    t.weights = c.weights;
    // Without a stride remainder the shapes line up and the adjoint is exact;
    // otherwise the transposed layer would need output padding.
    if ((g.h + 2 * g.p - g.k) % g.s != 0 || (g.w + 2 * g.p - g.k) % g.s != 0) continue;
    const auto x = random_map(g.in, g.h, g.w, 1);
    const auto cx = conv_forward(x, c);
    const auto y = random_map(g.out, cx.height, cx.width, 1);
    const auto ty = tconv_forward(y, t);
    ASSERT_TRUE(ty.same_shape(x));
    EXPECT_NEAR(dot(cx.data, y.data), dot(x.data, ty.data), 1e-9);
    ++checked;
  }
  EXPECT_GE(checked, 8);
}

TEST(Tensor, BatchLanesAreIndependent) {
  Geometry g{LayerKind::kConv, 3, 5, 3, 2, 1, 9, 9, 6};
  const auto l = random_layer(g);
  const auto x = random_map(3, 9, 9, 6);
  const auto y = conv_forward(x, l);
  for (int n = 0; n < 6; ++n) EXPECT_EQ(conv_forward(x.sample(n), l), y.sample(n));
  const auto picked = x.gather({4, 1});
  const auto yp = conv_forward(picked, l);
  EXPECT_EQ(yp.sample(0), y.sample(4));
  EXPECT_EQ(yp.sample(1), y.sample(1));
}

TEST(Tensor, LeakyReluAndBackward) {
  FeatureMap<double> x(1, 1, 4, 1);
  x.data = {-2.0, -0.0, 0.5, 3.0};
  const auto y = leaky_relu(x, 0.1);
  EXPECT_DOUBLE_EQ(y.data[0], -0.2);
  EXPECT_DOUBLE_EQ(y.data[2], 0.5);
  FeatureMap<double> up(1, 1, 4, 1, 1.0);
  const auto g = leaky_relu_backward(x, up, 0.1);
  EXPECT_DOUBLE_EQ(g.data[0], 0.1);
  EXPECT_DOUBLE_EQ(g.data[3], 1.0);
  EXPECT_THROW(leaky_relu(x, 1.5), ConfigError);
}

TEST(Tensor, ShapeMismatchThrows) {
  auto l = ConvLayerParams<float>::make(LayerKind::kConv, 3, 6, 3, 2, 1);
  FeatureMap<float> x(4, 13, 13);
  EXPECT_THROW(conv_forward(x, l), DimensionError);
  FeatureMap<float> ok(3, 13, 13);
  FeatureMap<float> bad_up(6, 5, 5);
  EXPECT_THROW(conv_backward(ok, l, bad_up), DimensionError);
}

TEST(Tensor, ValidateRejectsBadSizes) {
  auto l = ConvLayerParams<float>::make(LayerKind::kConv, 3, 6, 3, 2, 1);
  l.weights.pop_back();
  EXPECT_THROW(l.validate(), ConfigError);
}

namespace {

// Single-precision forward in the documented accumulation order: bias first,
// then input channel, ky, kx. Transposed layers gather the inputs that
// scatter onto each output.
FeatureMap<float> ordered_forward(const FeatureMap<float>& x, const ConvLayerParams<float>& l, const float* slope) {
  const int K = l.kernel_size, S = l.stride, P = l.padding;
  const int OH = l.output_extent(x.height), OW = l.output_extent(x.width);
  FeatureMap<float> y(l.out_channels, OH, OW, x.batch);
  for (int n = 0; n < x.batch; ++n)
    for (int o = 0; o < l.out_channels; ++o)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          float acc = l.bias[o];
          for (int i = 0; i < l.in_channels; ++i)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                int iy, ix;
                if (l.kind == LayerKind::kConv) {
                  iy = oy * S - P + ky;
                  ix = ox * S - P + kx;
                } else {
                  const int ty = oy + P - ky, tx = ox + P - kx;
                  if (ty < 0 || tx < 0 || ty % S || tx % S) continue;
                  iy = ty / S;
                  ix = tx / S;
                }
                if (iy < 0 || ix < 0 || iy >= x.height || ix >= x.width) continue;
                const float prod = l.weights[l.weight_index(o, i, ky, kx)] * x.at(i, iy, ix, n);
                acc = acc + prod;
              }
          if (slope && !(acc >= 0.0f)) acc = *slope * acc;
          y.at(o, oy, ox, n) = acc;
        }
  return y;
}

bool bitwise_equal(const FeatureMap<float>& a, const FeatureMap<float>& b) {
  return a.same_shape(b) && std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

}  // namespace

TEST(Tensor, SimdLevelsAreBitIdentical) {
  const SimdLevel native = simd_level();
  const float slope = 0.1f;
  int checked = 0;
  for (int n : {1, 5, 8, 16, 23, 40}) {
    for (const Geometry& g0 : geometries()) {
      Geometry g = g0;
      g.in = 2 + g0.in;
      g.out = 1 + (g0.out + n) % 7;  // exercises 4-, 2- and 1-channel groups
      const auto l = random_layer(g).cast<float>();
      const auto x = random_map(g.in, g.h, g.w, n).cast<float>();
      const auto plain = ordered_forward(x, l, nullptr);
      const auto activated = ordered_forward(x, l, &slope);
      for (SimdLevel level : {SimdLevel::kPortable, SimdLevel::kSse, SimdLevel::kAvx2}) {
        set_simd_level(level);
        SCOPED_TRACE(testing::Message() << simd_level_name(simd_level()) << " n" << n << " k" << g.k << " s" << g.s);
        ASSERT_TRUE(bitwise_equal(layer_forward(x, l), plain));
        ASSERT_TRUE(bitwise_equal(layer_forward_leaky(x, l, slope), activated));
      }
      ++checked;
    }
  }
  set_simd_level(SimdLevel::kAvx2);
  EXPECT_EQ(simd_level(), native);
  EXPECT_GT(checked, 100);
}
