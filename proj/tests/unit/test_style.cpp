#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/dam/vgg.hpp"
#include "concept_canvas/style/style.hpp"
#include "fixtures.hpp"

using namespace canvas;
using namespace canvas::style;

namespace {

nn::Tensor random_map(int c, int h, int w, Rng& rng) {
  nn::Tensor t({c, h, w});
  for (auto& v : t.values()) v = rng.uniform(-2, 2);
  return t;
}

GramMatrix brute_gram(const nn::Tensor& f) {
  GramMatrix g;
  g.channels = f.channels();
  const int n = f.height() * f.width();
  g.values.assign(static_cast<std::size_t>(g.channels) * g.channels, 0.0);
  for (int i = 0; i < g.channels; ++i) {
    for (int j = 0; j < g.channels; ++j) {
      double s = 0;
      for (int p = 0; p < n; ++p) s += f.values()[i * n + p] * f.values()[j * n + p];
      g.values[i * g.channels + j] = s / (static_cast<double>(g.channels) * n);
    }
  }
  return g;
}

std::vector<image::ImageRecord> exemplars(std::size_t n, int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<image::ImageRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(fixtures::make_record(fixtures::pattern_tile(side, rng), image::ClassLabel::kUnlabeled,
                                        image::Provenance::kArticle));
  }
  return out;
}

StyleConfig small_config(int side) {
  StyleConfig c;
  c.output_side = side;
  c.steps = 5;
  return c;
}

}  // namespace

TEST(Gram, MatchesDoubleLoopAndIsSymmetricPsd) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + static_cast<int>(rng.below(6));
    const auto f = random_map(c, 1 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(5)), rng);
    const auto g = gram(f);
    const auto expected = brute_gram(f);
    Eigen::MatrixXd m(c, c);
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) {
        EXPECT_NEAR(g.at(i, j), expected.at(i, j), 1e-12);
        EXPECT_EQ(g.at(i, j), g.at(j, i));
        m(i, j) = g.at(i, j);
      }
    }
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(Gram, ClosedFormCases) {
  const auto zero = gram(nn::Tensor({3, 2, 5}));
  for (double v : zero.values) EXPECT_EQ(v, 0.0);
  const auto constant = gram(nn::Tensor({1, 2, 5}, 1.5));
  ASSERT_EQ(constant.values.size(), 1u);
  EXPECT_DOUBLE_EQ(constant.values[0], 2.25);
}

TEST(Mosaic, LayoutRules) {
  const std::vector<std::array<int, 3>> table = {{1, 1, 1}, {4, 2, 2}, {5, 2, 3}, {9, 3, 3}, {10, 3, 4}};
  for (const auto& [n, rows, cols] : table) {
    const auto l = mosaic_layout(static_cast<std::size_t>(n), 64);
    EXPECT_EQ(l.rows, rows) << n;
    EXPECT_EQ(l.cols, cols) << n;
  }
  EXPECT_THROW(mosaic_layout(0, 64), Error);
}

TEST(Mosaic, CyclicFillAndIdentity) {
  const auto ex = exemplars(5, 80, 2);
  const auto ref = build_style_reference(ex, 32);
  EXPECT_EQ(ref.mosaic.width, 96);
  EXPECT_EQ(ref.mosaic.height, 64);
  const auto first = image::normalize_square(ex[0].pixels, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      for (int c = 0; c < 3; ++c) EXPECT_EQ(ref.mosaic.at(64 + x, 32 + y, c), first.at(x, y, c));
    }
  }
  const auto single = build_style_reference(exemplars(1, 80, 3), 48);
  EXPECT_EQ(single.mosaic, image::normalize_square(exemplars(1, 80, 3)[0].pixels, 48));
  EXPECT_EQ(build_style_reference(exemplars(4, 64, 4), 64).mosaic.width, 128);
}

TEST(Config, PaperLayerAssignment) {
  const StyleConfig c;
  EXPECT_EQ(c.style_layers, (std::vector<std::string>{"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"}));
  EXPECT_EQ(c.content_layer, "conv4_2");
  EXPECT_EQ(c.output_side, 1024);
  EXPECT_DOUBLE_EQ(c.content_weight / c.style_weight, 1e-3);
  EXPECT_NO_THROW(c.validate());
  StyleConfig bad = c;
  bad.output_side = 1056;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.output_side = 100;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.style_layers = {"conv9_9", "conv1_1", "conv2_1", "conv3_1", "conv4_1"};
  EXPECT_THROW(bad.validate(), Error);
}

class StyleLosses : public ::testing::Test {
 protected:
  dam::VggBackbone backbone_{8, 17};
  void SetUp() override { backbone_.set_pool_mode(nn::PoolMode::kAverage); }
};

TEST_F(StyleLosses, ZeroAtIdentity) {
  Rng rng(5);
  const auto img = fixtures::pattern_tile(32, rng);
  const auto t = pixels_to_tensor(img);
  const auto cfg = small_config(32);
  const auto c = content_loss(t, t, cfg, backbone_);
  EXPECT_EQ(c.loss, 0.0);
  for (double v : c.grad.values()) EXPECT_EQ(v, 0.0);
  StyleReference ref;
  ref.mosaic = img;
  const auto s = style_loss(t, ref, cfg, backbone_);
  EXPECT_NEAR(s.loss, 0.0, 1e-20);
  for (double v : s.grad.values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST_F(StyleLosses, ContentLossSymmetricAndSizeChecked) {
  Rng rng(6);
  const auto a = pixels_to_tensor(fixtures::pattern_tile(32, rng));
  const auto b = pixels_to_tensor(fixtures::white_noise(32, 32, rng));
  const auto cfg = small_config(32);
  EXPECT_DOUBLE_EQ(content_loss(a, b, cfg, backbone_).loss, content_loss(b, a, cfg, backbone_).loss);
  EXPECT_GT(content_loss(a, b, cfg, backbone_).loss, 0.0);
  const auto c = pixels_to_tensor(fixtures::white_noise(64, 64, rng));
  EXPECT_THROW(content_loss(a, c, cfg, backbone_), Error);
}

TEST_F(StyleLosses, CombinedGradientMatchesFiniteDifferences) {
  Rng rng(7);
  const auto mosaic = build_style_reference(exemplars(4, 48, 8), 32).mosaic;
  const auto cfg = small_config(32);
  const auto targets = style_targets(backbone_, mosaic, 32, cfg);
  const auto content = content_features(pixels_to_tensor(fixtures::pattern_tile(32, rng)), cfg, backbone_);
  nn::Tensor x = pixels_to_tensor(fixtures::white_noise(32, 32, rng));
  const auto analytic = combined_loss(x, content, targets, cfg, backbone_);
  EXPECT_GT(analytic.style, 0.0);
  const double h = 1e-5;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); i += 97) {
    nn::Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (combined_loss(xp, content, targets, cfg, backbone_).total -
                       combined_loss(xm, content, targets, cfg, backbone_).total) /
                      (2 * h);
    num += (fd - analytic.grad[i]) * (fd - analytic.grad[i]);
    den += fd * fd;
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST_F(StyleLosses, BetaZeroKeepsContent) {
  Rng rng(9);
  const auto content = fixtures::make_record(fixtures::pattern_tile(32, rng), image::ClassLabel::kUnlabeled,
                                             image::Provenance::kGenerated);
  auto cfg = small_config(32);
  cfg.style_weight = 0.0;
  const auto r = stylize(content, build_style_reference(exemplars(2, 48, 10), 32), cfg, backbone_);
  EXPECT_EQ(r.output.pixels, content.pixels);
  for (const auto& l : r.losses) EXPECT_EQ(l.total, 0.0);
}

TEST_F(StyleLosses, AlphaZeroReducesStyleLoss) {
  Rng rng(11);
  const auto content = fixtures::make_record(fixtures::disc_scene(64, rng), image::ClassLabel::kUnlabeled,
                                             image::Provenance::kGenerated);
  auto cfg = small_config(64);
  cfg.content_weight = 0.0;
  cfg.steps = 10;
  const auto r = stylize(content, build_style_reference(exemplars(4, 64, 12), 32), cfg, backbone_);
  ASSERT_EQ(r.losses.size(), 11u);
  EXPECT_LT(r.losses[r.best_step].style, r.losses[0].style);
  EXPECT_EQ(r.output.provenance, image::Provenance::kStyled);
  EXPECT_EQ(r.output.pixels.width, 64);
  EXPECT_FALSE(r.aborted);
}

TEST_F(StyleLosses, ScaleConsistency) {
  Rng rng(13);
  const auto content = fixtures::make_record(fixtures::disc_scene(80, rng), image::ClassLabel::kUnlabeled,
                                             image::Provenance::kGenerated);
  const auto ref = build_style_reference(exemplars(3, 64, 14), 32);
  for (int side : {64, 128}) {
    auto cfg = small_config(side);
    cfg.steps = 2;
    const auto r = stylize(content, ref, cfg, backbone_);
    EXPECT_EQ(r.output.pixels.width, side);
    for (const auto& l : r.losses) EXPECT_TRUE(std::isfinite(l.total));
    EXPECT_LE(r.losses[r.best_step].total, r.losses[0].total);
  }
}
