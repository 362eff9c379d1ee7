#include <gtest/gtest.h>

#include <cmath>

#include "concept_canvas/began/began.hpp"
#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"
#include "fixtures.hpp"

using namespace canvas;
using namespace canvas::began;

namespace {

BeganConfig toy_config() {
  BeganConfig c;
  c.iterations = 6;
  c.batch_size = 4;
  c.image_side = 32;
  c.filters = 4;
  c.embedding_dim = 8;
  c.checkpoint_interval = 2;
  c.seed = 3;
  return c;
}

std::vector<image::ImageRecord> toy_dataset(std::size_t n, int side) {
  Rng rng(9);
  std::vector<image::ImageRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(fixtures::make_record(fixtures::disc_scene(side, rng), image::ClassLabel::kUnlabeled,
                                        image::Provenance::kHarvested));
  }
  return out;
}

}  // namespace

TEST(ControlLaw, HandCase) { EXPECT_NEAR(update_k(0.5, 1e-3, 0.5, 0.2, 0.05), 0.50005, 1e-15); }

TEST(ControlLaw, ClampsAtBounds) {
  EXPECT_EQ(update_k(0.0, 1e-3, 0.5, 0.1, 0.2), 0.0);
  EXPECT_EQ(update_k(1.0, 1.0, 1.0, 5.0, 0.0), 1.0);
}

TEST(ControlLaw, EquilibriumFixedPoint) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double k = rng.uniform(), lr = rng.uniform(0, 2), gamma = rng.uniform(0.01, 1);
    const double real = rng.uniform(0, 3);
    EXPECT_EQ(update_k(k, 1e-3, gamma, real, gamma * real), k);
    const double kn = update_k(k, 1e-3, gamma, lr, rng.uniform(0, 3));
    EXPECT_GE(kn, 0.0);
    EXPECT_LE(kn, 1.0);
  }
}

TEST(ControlLaw, ConvergenceMeasure) {
  EXPECT_DOUBLE_EQ(convergence_measure(0.5, 0.2, 0.05), 0.25);
  EXPECT_DOUBLE_EQ(convergence_measure(0.5, 0.2, 0.1), 0.2);
}

TEST(ReconstructionLoss, NonNegativeAndZeroIffExact) {
  nn::Tensor a({1, 1, 3}, std::vector<double>{0.1, 0.5, 0.9});
  nn::Tensor b({1, 1, 3}, std::vector<double>{0.2, 0.5, 0.6});
  EXPECT_EQ(reconstruction_loss(a, a), 0.0);
  EXPECT_NEAR(reconstruction_loss(a, b), 0.4 / 3, 1e-15);
}

TEST(Latent, SampleIsDeterministicAndBounded) {
  const auto z = LatentVector::sample(5, 2);
  ASSERT_EQ(z.values.size(), 100u);
  for (double v : z.values) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(z.values, LatentVector::sample(5, 2).values);
  EXPECT_NE(z.values, LatentVector::sample(5, 3).values);
  LatentVector bad = z;
  bad.values.pop_back();
  EXPECT_THROW(bad.validate(), Error);
  const auto back = nlohmann::json(z).get<LatentVector>();
  EXPECT_EQ(back.values, z.values);
}

TEST(Config, PaperDefaultsAndValidation) {
  const BeganConfig c;
  EXPECT_EQ(c.iterations, 17000);
  EXPECT_EQ(c.batch_size, 16);
  EXPECT_EQ(c.image_side, 128);
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.gamma, 0.5);
  EXPECT_EQ(c.lambda_k, 1e-3);
  EXPECT_EQ(c.k_initial, 0.0);
  EXPECT_NO_THROW(c.validate());
  BeganConfig bad = c;
  bad.image_side = 96;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.gamma = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Architecture, OutputShapesAndRange) {
  for (int side : {32, 64, 128}) {
    BeganConfig c = toy_config();
    c.image_side = side;
    const BeganModel m(c);
    EXPECT_EQ(m.generator().output_shape({kLatentDim, 1, 1}), (nn::Shape{3, side, side}));
    EXPECT_EQ(m.discriminator().output_shape({3, side, side}), (nn::Shape{3, side, side}));
  }
  BeganModel m(toy_config());
  for (auto* p : m.generator().parameters()) {
    for (auto& v : p->value) v *= 50.0;
  }
  const auto out = m.generate_tensor(LatentVector::sample(1, 0));
  for (double v : out.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Training, RejectsSmallOrMisSizedDatasets) {
  EXPECT_THROW(train_began(toy_dataset(3, 32), toy_config()), Error);
  EXPECT_THROW(train_began(toy_dataset(8, 64), toy_config()), Error);
}

TEST(Training, FiniteLossesClampedKAndHistory) {
  const auto result = train_began(toy_dataset(8, 32), toy_config());
  ASSERT_EQ(result.history.size(), 6u);
  for (const auto& s : result.history) {
    EXPECT_TRUE(std::isfinite(s.loss_real));
    EXPECT_TRUE(std::isfinite(s.loss_fake));
    EXPECT_GE(s.k, 0.0);
    EXPECT_LE(s.k, 1.0);
  }
  const auto csv = history_csv(result.history);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,L_real,L_fake,k_t,m_global");
  EXPECT_TRUE(result.completed);
}

TEST(Training, ResumeFromCheckpointIsBitIdentical) {
  fixtures::TempDir dir;
  const auto data = toy_dataset(8, 32);
  const auto reference = train_began(data, toy_config());

  TrainOptions stop_early;
  stop_early.checkpoint_dir = dir / "ckpt";
  stop_early.should_stop = [](int it) { return it >= 4; };
  const auto partial = train_began(data, toy_config(), stop_early);
  EXPECT_FALSE(partial.completed);
  EXPECT_EQ(latest_checkpoint(dir / "ckpt"), 4);

  TrainOptions resume;
  resume.checkpoint_dir = dir / "ckpt";
  const auto resumed = train_began(data, toy_config(), resume);
  EXPECT_EQ(resumed.resumed_from, 4);
  ASSERT_EQ(resumed.history.size(), reference.history.size());
  EXPECT_EQ(history_csv(resumed.history), history_csv(reference.history));
  const auto z = LatentVector::sample(11, 0);
  EXPECT_EQ(resumed.model.generate(z), reference.model.generate(z));
  int kept = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "ckpt")) kept += e.is_directory();
  EXPECT_EQ(kept, 2);
}

TEST(Training, CheckpointWithDifferentArchitectureIsRejected) {
  fixtures::TempDir dir;
  const auto data = toy_dataset(8, 32);
  TrainOptions opts;
  opts.checkpoint_dir = dir.path();
  auto cfg = toy_config();
  cfg.iterations = 2;
  train_began(data, cfg, opts);
  cfg.filters = 8;
  EXPECT_THROW(train_began(data, cfg, opts), Error);
}

TEST(Generation, SaveLoadBitIdenticalAndCandidates) {
  fixtures::TempDir dir;
  auto cfg = toy_config();
  cfg.iterations = 3;
  const auto trained = train_began(toy_dataset(8, 32), cfg);
  const auto z = LatentVector::sample(2, 7);
  const auto before = trained.model.generate(z);
  EXPECT_EQ(before, trained.model.generate(z));
  trained.model.save(dir / "m");
  const auto loaded = BeganModel::load(dir / "m");
  EXPECT_EQ(loaded.generate(z), before);
  EXPECT_NE(trained.model.generate(LatentVector::sample(2, 8)), before);

  const auto cands = sample_candidates(loaded, 4, 21);
  ASSERT_EQ(cands.size(), 4u);
  const auto again = sample_candidates(loaded, 4, 21);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(cands[i].record.id, again[i].record.id);
    EXPECT_EQ(cands[i].record.provenance, image::Provenance::kGenerated);
    EXPECT_EQ(loaded.generate(cands[i].z), cands[i].record.pixels);
  }
  EXPECT_EQ(sample_candidates(loaded, 1, 21).size(), 1u);
  EXPECT_THROW(sample_candidates(loaded, 0, 21), Error);
}
