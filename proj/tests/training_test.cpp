#include "czsl/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "test_util.hpp"

namespace czsl {
namespace {

namespace fs = std::filesystem;
using testutil::expect_grads_match_fd;

struct SmallBench {
  RunConfig cfg;
  std::shared_ptr<const CompositionSpace> space;
  std::shared_ptr<const ImageFeatureTable> features;
};

SmallBench small_bench(std::uint64_t seed, const std::string& mode = "promptcompvl") {
  SynthConfig scfg;
  scfg.num_attrs = 4;
  scfg.num_objs = 4;
  scfg.d_img = 12;
  scfg.noise_sigma = 0.02;
  scfg.images_per_pair = 6;
  scfg.unseen_fraction = 0.25;
  scfg.seed = seed;
  SynthOutput gen = synth_generate(scfg);
  SmallBench b;
  b.cfg.seed = seed;
  b.cfg.dim = 16;
  b.cfg.blocks = 1;
  b.cfg.heads = 2;
  b.cfg.epochs = 3;
  b.cfg.batch_size = 16;
  b.cfg.lr = 3.0;
  b.cfg.mode = mode;
  b.space = std::make_shared<CompositionSpace>(std::move(gen.space));
  b.features = std::make_shared<ImageFeatureTable>(std::move(gen.features));
  return b;
}

TEST(Trainer, ClipHardModeRefusesToTrain) {
  SmallBench b = small_bench(1, "clip_hard");
  try {
    Trainer trainer(b.cfg, b.space, b.features);
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("zero trainable"), std::string::npos);
  }
}

TEST(Trainer, FrozenBlocksStayBitIdenticalPerMode) {
  for (const std::string mode : {"coop_soft_prompt", "csp_soft_embedding"}) {
    SmallBench b = small_bench(2, mode);
    Trainer trainer(b.cfg, b.space, b.features);
    const std::vector<double> theta0 =
        trainer.prompt().soft_prompt.tensor.values();
    const std::vector<double> phi0 =
        trainer.prompt().soft_embedding.tensor.values();
    std::vector<std::vector<double>> enc0;
    for (const auto& [name, t] : trainer.live_snapshot().text.named_tensors())
      enc0.push_back(t->values());

    std::vector<idx_t> batch{0, 1, 2, 3};
    for (int step = 0; step < 10; ++step) trainer.train_step(batch);

    if (mode == "csp_soft_embedding") {
      EXPECT_EQ(trainer.prompt().soft_prompt.tensor.values(), theta0);
      EXPECT_NE(trainer.prompt().soft_embedding.tensor.values(), phi0);
    } else {
      EXPECT_EQ(trainer.prompt().soft_embedding.tensor.values(), phi0);
      EXPECT_NE(trainer.prompt().soft_prompt.tensor.values(), theta0);
    }
    std::size_t i = 0;
    for (const auto& [name, t] : trainer.live_snapshot().text.named_tensors())
      EXPECT_EQ(t->values(), enc0[i++]) << name;
  }
}

TEST(Trainer, LossDecreasesOnAlignedToyProblem) {
  SmallBench b = small_bench(3);
  Trainer trainer(b.cfg, b.space, b.features);
  std::vector<idx_t> all;
  for (idx_t i = 0; i < static_cast<idx_t>(b.space->train_samples.size()); ++i)
    all.push_back(i);
  const double first = trainer.train_step(all);
  double last = first;
  for (int step = 0; step < 5; ++step) last = trainer.train_step(all);
  EXPECT_LT(last, first);
  EXPECT_LT(first, std::log(static_cast<double>(b.space->train_pairs.size())) + 0.5);
}

TEST(Trainer, EndToEndGradientMatchesFiniteDifferences) {
  // 2 attributes x 2 objects, d = 16, k = 2: the full pipeline loss.
  SynthConfig scfg;
  scfg.num_attrs = 2;
  scfg.num_objs = 2;
  scfg.d_img = 8;
  scfg.noise_sigma = 0.01;
  scfg.images_per_pair = 3;
  scfg.unseen_fraction = 0.26;  // rounds to one held-out pair
  scfg.seed = 17;
  SynthOutput gen = synth_generate(scfg);
  RunConfig cfg;
  cfg.seed = 17;
  cfg.dim = 16;
  cfg.blocks = 2;
  cfg.heads = 4;
  cfg.prompt_len = 2;
  cfg.tau = 0.07;
  auto space = std::make_shared<CompositionSpace>(std::move(gen.space));
  auto features = std::make_shared<ImageFeatureTable>(std::move(gen.features));
  ModelSnapshot snap = init_snapshot(cfg, space, features);

  const std::vector<Pair>& seen = space->train_pairs;
  std::map<Pair, idx_t> pair_index;
  for (std::size_t i = 0; i < seen.size(); ++i)
    pair_index[seen[i]] = static_cast<idx_t>(i);
  std::vector<double> img_values;
  std::vector<idx_t> targets;
  for (const Sample& s : space->train_samples) {
    const Tensor v = encode_image(*features, snap.image_projection, s.image_id);
    img_values.insert(img_values.end(), v.values().begin(), v.values().end());
    targets.push_back(pair_index.at(s.pair));
  }
  const Tensor images = Tensor::from(
      {static_cast<idx_t>(targets.size()), cfg.dim}, img_values);

  auto loss_value = [&](Tape* tape) {
    Tensor texts = text_matrix(tape, snap, seen);
    Tensor logits =
        scale(tape, matmul(tape, images, transpose(tape, texts)), 1.0 / snap.tau);
    return cross_entropy(tape, logits, targets);
  };
  Tape tape;
  Tensor loss = loss_value(&tape);
  tape.backward(loss);
  auto forward = [&] { return loss_value(nullptr).item(); };
  expect_grads_match_fd(
      forward, {snap.prompt.soft_prompt.tensor, snap.prompt.soft_embedding.tensor});
}

TEST(Train, DeterministicAcrossRuns) {
  SmallBench b = small_bench(5);
  const TrainResult a = train(b.cfg, b.space, b.features);
  const TrainResult c = train(b.cfg, b.space, b.features);
  EXPECT_EQ(a.final_snapshot.prompt.soft_prompt.tensor.values(),
            c.final_snapshot.prompt.soft_prompt.tensor.values());
  EXPECT_EQ(a.final_snapshot.prompt.soft_embedding.tensor.values(),
            c.final_snapshot.prompt.soft_embedding.tensor.values());
  ASSERT_EQ(a.stats.epochs.size(), c.stats.epochs.size());
  for (std::size_t e = 0; e < a.stats.epochs.size(); ++e) {
    EXPECT_EQ(a.stats.epochs[e].mean_loss, c.stats.epochs[e].mean_loss);
    EXPECT_EQ(a.stats.epochs[e].val_report.AUC, c.stats.epochs[e].val_report.AUC);
  }
}

TEST(Train, ChecksCheckpointPathBeforeTraining) {
  SmallBench b = small_bench(6);
  EXPECT_THROW(train(b.cfg, b.space, b.features, "/proc/definitely/not/writable"),
               Error);
}

TEST(Train, ResumeReproducesUninterruptedRunBitExactly) {
  const std::string dir_full =
      (fs::temp_directory_path() / "czsl_train_full").string();
  const std::string dir_split =
      (fs::temp_directory_path() / "czsl_train_split").string();
  fs::remove_all(dir_full);
  fs::remove_all(dir_split);

  SmallBench b = small_bench(7);
  b.cfg.epochs = 4;
  const TrainResult full = train(b.cfg, b.space, b.features, dir_full);

  RunConfig half = b.cfg;
  half.epochs = 2;
  train(half, b.space, b.features, dir_split);
  const TrainResult resumed =
      train(b.cfg, b.space, b.features, dir_split,
            (fs::path(dir_split) / "last.ckpt").string());

  EXPECT_EQ(full.final_snapshot.prompt.soft_prompt.tensor.values(),
            resumed.final_snapshot.prompt.soft_prompt.tensor.values());
  EXPECT_EQ(full.final_snapshot.prompt.soft_embedding.tensor.values(),
            resumed.final_snapshot.prompt.soft_embedding.tensor.values());

  // The final checkpoints agree byte for byte (same config echo, same state).
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  EXPECT_EQ(slurp((fs::path(dir_full) / "last.ckpt").string()),
            slurp((fs::path(dir_split) / "last.ckpt").string()));
  fs::remove_all(dir_full);
  fs::remove_all(dir_split);
}

TEST(Train, ResumeRefusesMismatchedConfig) {
  const std::string dir = (fs::temp_directory_path() / "czsl_train_mismatch").string();
  fs::remove_all(dir);
  SmallBench b = small_bench(8);
  b.cfg.epochs = 1;
  train(b.cfg, b.space, b.features, dir);
  RunConfig other = b.cfg;
  other.epochs = 3;
  other.lr = b.cfg.lr * 2;
  EXPECT_THROW(train(other, b.space, b.features, dir,
                     (fs::path(dir) / "last.ckpt").string()),
               Error);
  fs::remove_all(dir);
}

TEST(Train, LogRecordsOnePerEpoch) {
  SmallBench b = small_bench(9);
  std::vector<idx_t> seen_epochs;
  train(b.cfg, b.space, b.features, "", "",
        [&](const EpochStats& es) { seen_epochs.push_back(es.epoch); });
  EXPECT_EQ(seen_epochs, (std::vector<idx_t>{1, 2, 3}));
}

}  // namespace
}  // namespace czsl
