#include <gtest/gtest.h>

#include <cmath>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/nn/adam.hpp"
#include "concept_canvas/nn/layers.hpp"
#include "concept_canvas/nn/sequential.hpp"
#include "concept_canvas/nn/weights_io.hpp"
#include "fixtures.hpp"

using namespace canvas;
using namespace canvas::nn;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (auto& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks input and parameter gradients of L = <layer(x), r> by central differences.
void check_layer(Layer& layer, Shape in_shape, std::uint64_t seed, double tol = 1e-6) {
  Rng rng(seed);
  Tensor x = random_tensor(in_shape, rng);
  for (auto& v : x.values()) {
    if (std::abs(v) < 0.05) v += 0.1;  // keep away from kinks
  }
  const Tensor out = layer.forward(x);
  const Tensor r = random_tensor(out.shape(), rng);
  Gradients grads;
  for (const auto& p : layer.params()) grads.emplace_back(p.value.size(), 0.0);
  const Tensor gx = layer.backward(x, out, r, grads, 1.0);
  ASSERT_EQ(gx.shape(), x.shape());
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 40)) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (dot(layer.forward(xp), r) - dot(layer.forward(xm), r)) / (2 * h);
    EXPECT_NEAR(gx[i], fd, tol * std::max(1.0, std::abs(fd))) << layer.kind() << " input " << i;
  }
  for (std::size_t p = 0; p < layer.params().size(); ++p) {
    auto& values = layer.params()[p].value;
    for (std::size_t i = 0; i < values.size(); i += std::max<std::size_t>(1, values.size() / 30)) {
      const double keep = values[i];
      values[i] = keep + h;
      const double fp = dot(layer.forward(x), r);
      values[i] = keep - h;
      const double fm = dot(layer.forward(x), r);
      values[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      EXPECT_NEAR(grads[p][i], fd, tol * std::max(1.0, std::abs(fd))) << layer.kind() << " param " << p << "/" << i;
    }
  }
}

}  // namespace

TEST(Conv3x3, MatchesDirectConvolution) {
  Rng rng(1);
  Conv3x3 conv(3, 4);
  conv.init_he(rng);
  for (auto& b : conv.params()[1].value) b = rng.uniform(-1, 1);
  const Tensor x = random_tensor({3, 5, 7}, rng);
  const Tensor y = conv.forward(x);
  ASSERT_EQ(y.shape(), (Shape{4, 5, 7}));
  const auto& w = conv.params()[0].value;  // [k][out][in]
  const auto& b = conv.params()[1].value;
  for (int o = 0; o < 4; ++o) {
    for (int yy = 0; yy < 5; ++yy) {
      for (int xx = 0; xx < 7; ++xx) {
        double s = b[o];
        for (int i = 0; i < 3; ++i) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = yy + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sy >= 5 || sx < 0 || sx >= 7) continue;
              s += w[((ky * 3 + kx) * 4 + o) * 3 + i] * x.at(i, sy, sx);
            }
          }
        }
        EXPECT_NEAR(y.at(o, yy, xx), s, 1e-12);
      }
    }
  }
}

TEST(LayerGradients, Conv3x3) {
  Rng rng(2);
  Conv3x3 conv(2, 3);
  conv.init_he(rng);
  check_layer(conv, {2, 4, 6}, 3);
}

TEST(LayerGradients, Linear) {
  Rng rng(2);
  Linear lin(12, 5);
  lin.init_he(rng);
  check_layer(lin, {3, 2, 2}, 4);
}

TEST(LayerGradients, Activations) {
  Relu relu;
  Elu elu;
  Sigmoid sig;
  check_layer(relu, {2, 3, 3}, 5);
  check_layer(elu, {2, 3, 3}, 6);
  check_layer(sig, {2, 3, 3}, 7);
}

TEST(LayerGradients, PoolingAndResampling) {
  Pool2 max_pool(PoolMode::kMax);
  Pool2 avg_pool(PoolMode::kAverage);
  Upsample2 up;
  GlobalAvgPool gap;
  Reshape reshape({2, 3, 2});
  check_layer(max_pool, {2, 4, 6}, 8);
  check_layer(avg_pool, {2, 4, 6}, 9);
  check_layer(up, {2, 3, 2}, 10);
  check_layer(gap, {3, 4, 4}, 11);
  check_layer(reshape, {12, 1, 1}, 12);
}

TEST(Layers, PoolingValues) {
  Tensor x({1, 2, 2}, std::vector<double>{1, 5, -2, 4});
  EXPECT_EQ(Pool2(PoolMode::kMax).forward(x)[0], 5.0);
  EXPECT_EQ(Pool2(PoolMode::kAverage).forward(x)[0], 2.0);
  EXPECT_THROW(Pool2(PoolMode::kMax).forward(Tensor({1, 3, 2})), Error);
}

TEST(Layers, SigmoidIsBoundedForExtremeInputs) {
  Tensor x({1, 1, 4}, std::vector<double>{-1e4, -40, 40, 1e4});
  const auto y = Sigmoid().forward(x);
  for (double v : y.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Sequential, BackwardMatchesFiniteDifferencesWithInjection) {
  Rng rng(13);
  Sequential net;
  net.emplace<Conv3x3>("c1", 2, 3).init_he(rng);
  net.emplace<Elu>("e1");
  net.emplace<Pool2>("p1", PoolMode::kAverage);
  net.emplace<Conv3x3>("c2", 3, 2).init_he(rng);
  net.emplace<Relu>("r2");
  const Tensor x = random_tensor({2, 4, 4}, rng);
  const auto trace = net.forward_trace(x);
  const Tensor r1 = random_tensor(trace[2].shape(), rng);
  const Tensor r2 = random_tensor(trace[5].shape(), rng);
  auto loss = [&](const Tensor& in) {
    const auto t = net.forward_trace(in);
    return dot(t[2], r1) + dot(t[5], r2);
  };
  auto grads = net.zero_gradients();
  const Tensor gx = net.backward(trace, std::map<std::size_t, Tensor>{{1, r1}, {4, r2}}, &grads);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    EXPECT_NEAR(gx[i], (loss(xp) - loss(xm)) / (2 * h), 1e-6);
  }
  auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& v = params[p]->value;
    for (std::size_t i = 0; i < v.size(); i += 7) {
      const double keep = v[i];
      v[i] = keep + h;
      const double fp = loss(x);
      v[i] = keep - h;
      const double fm = loss(x);
      v[i] = keep;
      EXPECT_NEAR(grads[p][i], (fp - fm) / (2 * h), 1e-6);
    }
  }
}

TEST(Sequential, ScaleAppliesToParameterGradientsOnly) {
  Rng rng(14);
  Sequential net;
  net.emplace<Linear>("l", 4, 2).init_he(rng);
  const Tensor x = random_tensor({4, 1, 1}, rng);
  const auto trace = net.forward_trace(x);
  const Tensor g = random_tensor({2, 1, 1}, rng);
  auto g1 = net.zero_gradients();
  auto g2 = net.zero_gradients();
  const Tensor a = net.backward(trace, g, &g1, 1.0);
  const Tensor b = net.backward(trace, g, &g2, -0.5);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < g1[0].size(); ++i) EXPECT_DOUBLE_EQ(g2[0][i], -0.5 * g1[0][i]);
}

TEST(Sequential, CopyIsDeep) {
  Sequential a;
  a.emplace<Linear>("l", 2, 1);
  Sequential b = a;
  b.parameters()[0]->value[0] = 42.0;
  EXPECT_NE(a.parameters()[0]->value[0], 42.0);
  EXPECT_EQ(b.find("l"), 0u);
  EXPECT_EQ(b.find("missing"), Sequential::npos);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam({0.1, 0.9, 0.999, 1e-8}, {2});
  std::vector<double> v = {1.0, -1.0};
  const std::vector<double> g = {3.0, -0.001};
  adam.step(v, g);
  EXPECT_NEAR(v[0], 0.9, 1e-6);
  EXPECT_NEAR(v[1], -0.9, 1e-4);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MinimizesQuadratic) {
  Adam adam({0.05, 0.9, 0.999, 1e-8}, {1});
  std::vector<double> x = {5.0};
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> g = {2 * (x[0] - 1.5)};
    adam.step(x, g);
  }
  EXPECT_NEAR(x[0], 1.5, 1e-3);
}

TEST(WeightsIo, RoundTripAndMismatch) {
  fixtures::TempDir dir;
  Rng rng(15);
  Sequential net;
  net.emplace<Conv3x3>("c", 3, 2).init_he(rng);
  net.emplace<Linear>("l", 8, 1).init_he(rng);
  save_arrays(dir / "w.bin", export_params(net, "m."));
  const auto arrays = load_arrays(dir / "w.bin");
  ASSERT_EQ(arrays.size(), 4u);
  EXPECT_EQ(arrays[0].name, "m.c.weight");
  Sequential other;
  other.emplace<Conv3x3>("c", 3, 2);
  other.emplace<Linear>("l", 8, 1);
  import_params(other, arrays, "m.");
  for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(other.parameters()[p]->value, net.parameters()[p]->value);

  Sequential wrong;
  wrong.emplace<Conv3x3>("c", 3, 4);
  wrong.emplace<Linear>("l", 8, 1);
  EXPECT_THROW(import_params(wrong, arrays, "m."), Error);
  EXPECT_THROW(load_arrays(dir / "missing.bin"), Error);
}
