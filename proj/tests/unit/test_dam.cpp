#include <gtest/gtest.h>

#include <set>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/dam/dam.hpp"
#include "concept_canvas/dam/vgg.hpp"
#include "concept_canvas/nn/weights_io.hpp"
#include "fixtures.hpp"

using namespace canvas;
using namespace canvas::dam;

namespace {

const std::map<std::string, int> kChannels = {{"conv1_1", 64},  {"conv1_2", 64},  {"conv2_1", 128}, {"conv2_2", 128},
                                              {"conv3_1", 256}, {"conv3_2", 256}, {"conv3_3", 256}, {"conv4_1", 512},
                                              {"conv4_2", 512}, {"conv4_3", 512}, {"conv5_1", 512}, {"conv5_2", 512},
                                              {"conv5_3", 512}};

std::vector<std::string> all_names() { return {kConvLayers.begin(), kConvLayers.end()}; }

image::ImageRecord with_score_id(const std::string& id) {
  image::ImageRecord r;
  r.id = id;
  return r;
}

}  // namespace

TEST(Vgg, TopologyTableFullWidth) {
  const VggBackbone vgg(1, 0);
  for (int side : {128, 224, 96}) {
    for (const auto& name : all_names()) {
      const int block = block_of(name);
      const auto shape = vgg.net().output_shape({3, side, side}, vgg.activation_layer(name) + 1);
      EXPECT_EQ(shape, (nn::Shape{kChannels.at(name), side >> (block - 1), side >> (block - 1)})) << name;
      EXPECT_EQ(full_width_channels(name), kChannels.at(name));
    }
  }
}

TEST(Vgg, ReducedWidthExtractShapes) {
  const VggBackbone vgg(8, 1);
  Rng rng(1);
  const auto img = fixtures::white_noise(64, 64, rng);
  const auto names = all_names();
  const auto maps = extract_features(vgg, img, names);
  ASSERT_EQ(maps.size(), 13u);
  for (const auto& name : names) {
    const int s = 64 >> (block_of(name) - 1);
    EXPECT_EQ(maps.at(name).shape(), (nn::Shape{kChannels.at(name) / 8, s, s})) << name;
    for (double v : maps.at(name).values()) EXPECT_GE(v, 0.0);
  }
}

TEST(Vgg, RejectsUnknownLayerAndBadSide) {
  const VggBackbone vgg(8, 1);
  Rng rng(2);
  const std::vector<std::string> bad = {"conv6_1"};
  EXPECT_THROW(extract_features(vgg, fixtures::white_noise(64, 64, rng), bad), Error);
  const std::vector<std::string> ok = {"conv1_1"};
  EXPECT_THROW(extract_features(vgg, fixtures::white_noise(48, 48, rng), ok), Error);
}

TEST(Vgg, ZeroInputZeroBiasGivesZeroActivations) {
  VggBackbone vgg(8, 3);
  for (auto* p : vgg.net().parameters()) {
    if (p->name == "bias") std::fill(p->value.begin(), p->value.end(), 0.0);
  }
  const nn::Tensor zero({3, 32, 32});
  const auto names = all_names();
  for (const auto& [name, t] : vgg.extract(zero, names)) {
    for (double v : t.values()) EXPECT_EQ(v, 0.0) << name;
  }
}

TEST(Vgg, WeightFileRoundTripAndShapeMismatch) {
  fixtures::TempDir dir;
  const VggBackbone a(8, 4);
  a.save_weights(dir / "vgg.bin");
  VggBackbone b(8, 99);
  b.load_weights(dir / "vgg.bin");
  EXPECT_EQ(b.net().parameters()[0]->value, a.net().parameters()[0]->value);
  VggBackbone c(4, 0);
  EXPECT_THROW(c.load_weights(dir / "vgg.bin"), Error);
}

TEST(RankByScore, SortSemanticsClampAndTieBreak) {
  std::vector<image::ImageRecord> imgs = {with_score_id("a"), with_score_id("b"), with_score_id("c")};
  auto r = rank_by_score(imgs, {0.9, 0.2, 0.7}, 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].record.id, "a");
  EXPECT_EQ(r[1].record.id, "c");
  EXPECT_EQ(r[1].rank, 2u);
  EXPECT_EQ(rank_by_score(imgs, {0.9, 0.2, 0.7}, 10).size(), 3u);
  auto ties = rank_by_score({with_score_id("f"), with_score_id("d"), with_score_id("e")}, {0.5, 0.5, 0.5}, 3);
  EXPECT_EQ(ties[0].record.id, "d");
  EXPECT_EQ(ties[2].record.id, "f");
  EXPECT_THROW(rank_by_score({}, {}, 3), Error);
}

class DamTraining : public ::testing::Test {
 protected:
  static DamConfig small_config() {
    DamConfig c;
    c.image_side = 32;
    c.epochs = 1;
    c.batch_size = 4;
    c.learning_rate = 1e-3;
    c.seed = 5;
    return c;
  }
};

TEST_F(DamTraining, RejectsSingleClass) {
  auto data = fixtures::planted_images(4, 32, 1);
  data.resize(4);
  EXPECT_THROW(train_dam(data, small_config(), VggBackbone(8, 0)), Error);
}

TEST_F(DamTraining, DeterministicForSeed) {
  const auto data = fixtures::planted_images(4, 32, 2);
  const auto a = train_dam(data, small_config(), VggBackbone(8, 0));
  const auto b = train_dam(data, small_config(), VggBackbone(8, 0));
  EXPECT_EQ(a.head().parameters()[0]->value, b.head().parameters()[0]->value);
  EXPECT_EQ(a.report().epoch_losses, b.report().epoch_losses);
}

TEST_F(DamTraining, FrozenBackboneOnlyHeadChanges) {
  const auto data = fixtures::planted_images(4, 32, 3);
  auto cfg = small_config();
  cfg.frozen_blocks = 5;
  const VggBackbone initial(8, 0);
  const DamModel untrained(initial, cfg);
  const auto trained = train_dam(data, cfg, initial);
  const auto before = initial.net().parameters();
  const auto after = trained.backbone().net().parameters();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i]->value, after[i]->value);
  EXPECT_NE(untrained.head().parameters()[0]->value, trained.head().parameters()[0]->value);
}

TEST_F(DamTraining, PartialFreezeKeepsEarlyBlocks) {
  const auto data = fixtures::planted_images(4, 32, 4);
  auto cfg = small_config();
  cfg.frozen_blocks = 3;
  const VggBackbone initial(8, 0);
  const auto trained = train_dam(data, cfg, initial);
  const std::size_t boundary = initial.net().first_param_index(initial.block_end(3));
  const auto before = initial.net().parameters();
  const auto after = trained.backbone().net().parameters();
  for (std::size_t i = 0; i < boundary; ++i) EXPECT_EQ(before[i]->value, after[i]->value);
  bool changed = false;
  for (std::size_t i = boundary; i < before.size(); ++i) changed |= before[i]->value != after[i]->value;
  EXPECT_TRUE(changed);
}

TEST_F(DamTraining, ScoresAreProbabilitiesAndPure) {
  const auto data = fixtures::planted_images(4, 32, 6);
  const auto model = train_dam(data, small_config(), VggBackbone(8, 0));
  for (const auto& r : data) {
    const double s = score_image(model, r.pixels);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_EQ(s, score_image(model, r.pixels));
  }
  Rng rng(1);
  EXPECT_THROW(score_image(model, fixtures::white_noise(64, 64, rng)), Error);
  const auto ranked = rank_images(model, data, 100);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    ids.insert(ranked[i].record.id);
    if (i > 0) {
      EXPECT_GE(ranked[i - 1].score, ranked[i].score);
    }
  }
  EXPECT_EQ(ids.size(), data.size());
}

TEST_F(DamTraining, SaveLoadPreservesScores) {
  fixtures::TempDir dir;
  const auto data = fixtures::planted_images(4, 32, 7);
  const auto model = train_dam(data, small_config(), VggBackbone(8, 0));
  model.save(dir / "model");
  const auto loaded = DamModel::load(dir / "model");
  EXPECT_EQ(score_image(loaded, data[0].pixels), score_image(model, data[0].pixels));
  EXPECT_EQ(loaded.backbone().width_divisor(), 8);
}
