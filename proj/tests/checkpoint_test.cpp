#include "czsl/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "czsl/training.hpp"
#include "test_util.hpp"

namespace czsl {
namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

struct Built {
  RunConfig cfg;
  std::shared_ptr<const CompositionSpace> space;
  std::shared_ptr<const ImageFeatureTable> features;
  ModelSnapshot snap;
};

Built build_snapshot(std::uint64_t seed) {
  SynthConfig scfg;
  scfg.num_attrs = 3;
  scfg.num_objs = 3;
  scfg.d_img = 8;
  scfg.images_per_pair = 3;
  scfg.unseen_fraction = 0.23;
  scfg.seed = seed;
  SynthOutput gen = synth_generate(scfg);
  Built b;
  b.cfg.seed = seed;
  b.cfg.dim = 16;
  b.cfg.blocks = 2;
  b.cfg.heads = 2;
  b.cfg.data_dir = "some/data";
  b.cfg.features = "some/features.bin";
  b.space = std::make_shared<CompositionSpace>(std::move(gen.space));
  b.features = std::make_shared<ImageFeatureTable>(std::move(gen.features));
  b.snap = init_snapshot(b.cfg, b.space, b.features);
  return b;
}

TEST(Checkpoint, SaveLoadSaveIsByteStable) {
  Built b = build_snapshot(3);
  Optimizer opt(OptimizerConfig{OptimizerKind::adam, 0.1});
  // Give the optimizer some state.
  auto params = trainable_params(b.snap.prompt);
  for (Parameter* p : params)
    p->tensor.node()->grad.assign(p->tensor.values().size(), 0.25);
  opt.step(params);

  const Checkpoint ckpt = make_checkpoint(b.cfg, b.snap, &opt, 5, 0.75, 4);
  const std::string p1 = (fs::temp_directory_path() / "czsl_ck1.ckpt").string();
  const std::string p2 = (fs::temp_directory_path() / "czsl_ck2.ckpt").string();
  save_checkpoint(ckpt, p1);
  const Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  EXPECT_EQ(slurp(p1), slurp(p2));
  EXPECT_EQ(loaded.epoch, 5u);
  EXPECT_EQ(loaded.best_epoch, 4u);
  EXPECT_DOUBLE_EQ(loaded.best_val_auc, 0.75);
  EXPECT_EQ(loaded.mode, "promptcompvl");
  fs::remove(p1);
  fs::remove(p2);
}

TEST(Checkpoint, RestoreRebuildsIdenticalModel) {
  Built b = build_snapshot(4);
  Optimizer opt(OptimizerConfig{OptimizerKind::adam, 0.1});
  auto params = trainable_params(b.snap.prompt);
  for (Parameter* p : params)
    p->tensor.node()->grad.assign(p->tensor.values().size(), -0.5);
  opt.step(params);

  const Checkpoint ckpt = make_checkpoint(b.cfg, b.snap, &opt, 2, 0.5, 2);
  const RestoredModel restored = restore_model(ckpt, b.space, b.features);

  EXPECT_EQ(restored.snapshot.prompt.soft_prompt.tensor.values(),
            b.snap.prompt.soft_prompt.tensor.values());
  EXPECT_EQ(restored.snapshot.prompt.soft_embedding.tensor.values(),
            b.snap.prompt.soft_embedding.tensor.values());
  auto before = b.snap.text.named_tensors();
  auto after = restored.snapshot.text.named_tensors();
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i)
    EXPECT_EQ(before[i].second->values(), after[i].second->values())
        << before[i].first;
  EXPECT_EQ(restored.snapshot.image_projection.values(),
            b.snap.image_projection.values());
  EXPECT_EQ(restored.opt_state.step_count, 1);
  EXPECT_EQ(restored.opt_state.first_moment.size(), 2u);
  EXPECT_EQ(restored.cfg.data_dir, "some/data");

  // The restored frozen flags still follow the mode.
  EXPECT_FALSE(restored.snapshot.prompt.soft_prompt.frozen);
  EXPECT_FALSE(restored.snapshot.prompt.soft_embedding.frozen);
}

TEST(Checkpoint, VersionMismatchRejectedWithMessage) {
  Built b = build_snapshot(5);
  const Checkpoint ckpt = make_checkpoint(b.cfg, b.snap, nullptr, 0, -1.0, 0);
  const std::string path = (fs::temp_directory_path() / "czsl_ckv.ckpt").string();
  save_checkpoint(ckpt, path);
  // Patch the version field (bytes 8..11).
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t bad = 99;
    f.write(reinterpret_cast<const char*>(&bad), 4);
  }
  try {
    load_checkpoint(path);
    FAIL() << "expected integrity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::integrity);
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Checkpoint, TruncationNamesTheFailingRecord) {
  Built b = build_snapshot(6);
  const Checkpoint ckpt = make_checkpoint(b.cfg, b.snap, nullptr, 0, -1.0, 0);
  const std::string path = (fs::temp_directory_path() / "czsl_ckt.ckpt").string();
  save_checkpoint(ckpt, path);
  fs::resize_file(path, fs::file_size(path) / 2);
  try {
    load_checkpoint(path);
    FAIL() << "expected integrity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::integrity);
    EXPECT_NE(std::string(e.what()).find("tensor"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Checkpoint, WrongSpaceShapeRejected) {
  Built b = build_snapshot(7);
  const Checkpoint ckpt = make_checkpoint(b.cfg, b.snap, nullptr, 0, -1.0, 0);
  SynthConfig other;
  other.num_attrs = 5;
  other.num_objs = 5;
  other.images_per_pair = 1;
  other.unseen_fraction = 0.2;
  other.seed = 7;
  SynthOutput gen = synth_generate(other);
  auto wrong_space = std::make_shared<CompositionSpace>(std::move(gen.space));
  EXPECT_THROW(restore_model(ckpt, wrong_space, b.features), Error);
}

}  // namespace
}  // namespace czsl
