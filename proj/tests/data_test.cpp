#include "czsl/data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"

namespace czsl {
namespace {

namespace fs = std::filesystem;
using testutil::mit_states_counts;
using testutil::ut_zappos_counts;
using testutil::write_split_fixture;

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_((fs::temp_directory_path() / name).string()) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const std::string& str() const { return path_; }

 private:
  std::string path_;
};

TEST(LoadSplits, MitStatesShapedMetadataMatchesPublishedCounts) {
  TempDir dir("czsl_mit_fixture");
  write_split_fixture(dir.str(), mit_states_counts());
  const CompositionSpace space = load_splits(dir.str());
  EXPECT_EQ(space.num_attrs(), 115);
  EXPECT_EQ(space.num_objs(), 245);
  EXPECT_EQ(space.num_attrs() * space.num_objs(), 28175);
  EXPECT_EQ(space.train_pairs.size(), 1262u);
  EXPECT_EQ(space.val_seen_pairs.size(), 300u);
  EXPECT_EQ(space.val_unseen_pairs.size(), 300u);
  EXPECT_EQ(space.test_seen_pairs.size(), 400u);
  EXPECT_EQ(space.test_unseen_pairs.size(), 400u);
  EXPECT_EQ(target_set(space, CzslSetting::generalized, Phase::test).size(), 800u);
  EXPECT_EQ(target_set(space, CzslSetting::open_world, Phase::test).size(), 28175u);
}

TEST(LoadSplits, UtZapposShapedMetadata) {
  TempDir dir("czsl_zap_fixture");
  write_split_fixture(dir.str(), ut_zappos_counts());
  const CompositionSpace space = load_splits(dir.str());
  EXPECT_EQ(space.num_attrs(), 16);
  EXPECT_EQ(space.num_objs(), 12);
  EXPECT_EQ(space.num_attrs() * space.num_objs(), 192);
  EXPECT_EQ(space.train_pairs.size(), 83u);
  EXPECT_EQ(target_set(space, CzslSetting::standard, Phase::test).size(), 18u);
}

TEST(LoadSplits, SeenUnseenOverlapRejected) {
  TempDir dir("czsl_overlap_fixture");
  write_split_fixture(dir.str(), ut_zappos_counts());
  // Append a training pair to the val unseen list.
  std::string first_train;
  {
    std::ifstream is(dir.str() + "/train_pairs.txt");
    std::getline(is, first_train);
  }
  {
    std::ofstream os(dir.str() + "/val_unseen_pairs.txt", std::ios::app);
    os << first_train << "\n";
  }
  try {
    load_splits(dir.str());
    FAIL() << "expected validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("disjoint"), std::string::npos);
  }
}

TEST(LoadSplits, MalformedLineNamesFileAndLine) {
  TempDir dir("czsl_malformed_fixture");
  write_split_fixture(dir.str(), ut_zappos_counts());
  {
    std::ofstream os(dir.str() + "/train_pairs.txt", std::ios::app);
    os << "onlyoneword\n";
  }
  try {
    load_splits(dir.str());
    FAIL() << "expected validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("train_pairs.txt:84"), std::string::npos);
  }
}

TEST(LoadSplits, UnknownConceptInManifestRejected) {
  TempDir dir("czsl_unknown_fixture");
  write_split_fixture(dir.str(), ut_zappos_counts());
  {
    std::ofstream os(dir.str() + "/samples.txt", std::ios::app);
    os << "imgX nosuchattr fixobj000 train\n";
  }
  EXPECT_THROW(load_splits(dir.str()), Error);
}

TEST(LoadSplits, SampleOutsideSplitPairSetRejected) {
  TempDir dir("czsl_outside_fixture");
  write_split_fixture(dir.str(), ut_zappos_counts());
  {
    // Label a val sample with a test-only unseen pair.
    std::ifstream is(dir.str() + "/test_unseen_pairs.txt");
    std::string pair_line;
    std::getline(is, pair_line);
    std::ofstream os(dir.str() + "/samples.txt", std::ios::app);
    os << "imgY " << pair_line << " val\n";
  }
  EXPECT_THROW(load_splits(dir.str()), Error);
}

TEST(TargetSet, ObeysSettingDefinitions) {
  SynthConfig cfg;
  cfg.num_attrs = 4;
  cfg.num_objs = 5;
  cfg.images_per_pair = 4;
  cfg.unseen_fraction = 0.2;
  cfg.seed = 3;
  const SynthOutput out = synth_generate(cfg);
  const CompositionSpace& sp = out.space;

  const auto open = target_set(sp, CzslSetting::open_world, Phase::test);
  EXPECT_EQ(open.size(), 20u);
  const auto standard = target_set(sp, CzslSetting::standard, Phase::test);
  EXPECT_EQ(standard.size(), sp.test_unseen_pairs.size());
  const auto gen = target_set(sp, CzslSetting::generalized, Phase::val);
  EXPECT_EQ(gen.size(), sp.val_seen_pairs.size() + sp.val_unseen_pairs.size());
  // Attr-major ordering and containment of every sample label.
  for (std::size_t i = 1; i < gen.size(); ++i) EXPECT_LT(gen[i - 1], gen[i]);
  std::set<Pair> gen_set(gen.begin(), gen.end());
  for (const Sample& s : sp.val_samples) EXPECT_TRUE(gen_set.count(s.pair));
}

TEST(SynthGenerate, NoiselessFeaturesAreIdenticalPerPair) {
  SynthConfig cfg;
  cfg.num_attrs = 3;
  cfg.num_objs = 3;
  cfg.noise_sigma = 0.0;
  cfg.images_per_pair = 3;
  cfg.unseen_fraction = 0.2;
  const SynthOutput out = synth_generate(cfg);
  // Images of one pair share a feature vector when sigma = 0.
  for (const Pair& p : out.space.train_pairs) {
    std::vector<const std::vector<double>*> feats;
    for (const std::string& id : out.features.ids)
      if (id.find("img_" + out.space.attributes[p.attr] + "_" +
                   out.space.objects[p.obj] + "_") == 0)
        feats.push_back(&out.features.feature(id));
    ASSERT_GE(feats.size(), 2u);
    for (std::size_t i = 1; i < feats.size(); ++i)
      EXPECT_EQ(*feats[i], *feats[0]);
  }
}

TEST(SynthGenerate, EveryPrimitiveKeepsASeenPair) {
  SynthConfig cfg;
  cfg.num_attrs = 8;
  cfg.num_objs = 8;
  cfg.unseen_fraction = 0.25;
  cfg.images_per_pair = 2;
  cfg.seed = 7;
  const SynthOutput out = synth_generate(cfg);
  std::set<idx_t> attrs, objs;
  for (const Pair& p : out.space.train_pairs) {
    attrs.insert(p.attr);
    objs.insert(p.obj);
  }
  EXPECT_EQ(attrs.size(), 8u);
  EXPECT_EQ(objs.size(), 8u);
  EXPECT_EQ(out.space.train_pairs.size(), 48u);
  EXPECT_EQ(out.space.val_unseen_pairs.size() +
                out.space.test_unseen_pairs.size(),
            16u);
}

TEST(SynthGenerate, RoundTripsThroughSplitFiles) {
  SynthConfig cfg;
  cfg.num_attrs = 5;
  cfg.num_objs = 7;
  cfg.unseen_fraction = 0.25;
  cfg.images_per_pair = 5;
  cfg.seed = 11;
  const SynthOutput out = synth_generate(cfg);
  // 35 pairs at 25% -> 9 held out.
  EXPECT_EQ(out.space.val_unseen_pairs.size() +
                out.space.test_unseen_pairs.size(),
            9u);

  TempDir dir("czsl_roundtrip");
  save_splits(out.space, dir.str());
  const CompositionSpace loaded = load_splits(dir.str());
  EXPECT_EQ(loaded.attributes, out.space.attributes);
  EXPECT_EQ(loaded.objects, out.space.objects);
  EXPECT_EQ(loaded.train_pairs, out.space.train_pairs);
  EXPECT_EQ(loaded.val_seen_pairs, out.space.val_seen_pairs);
  EXPECT_EQ(loaded.val_unseen_pairs, out.space.val_unseen_pairs);
  EXPECT_EQ(loaded.test_seen_pairs, out.space.test_seen_pairs);
  EXPECT_EQ(loaded.test_unseen_pairs, out.space.test_unseen_pairs);
  auto same_samples = [](const std::vector<Sample>& a,
                         const std::vector<Sample>& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].image_id, b[i].image_id);
      EXPECT_EQ(a[i].pair, b[i].pair);
    }
  };
  same_samples(loaded.train_samples, out.space.train_samples);
  same_samples(loaded.val_samples, out.space.val_samples);
  same_samples(loaded.test_samples, out.space.test_samples);
}

TEST(SynthGenerate, DegenerateConfigsRejected) {
  SynthConfig cfg;
  cfg.unseen_fraction = 1.0;
  EXPECT_THROW(synth_generate(cfg), Error);
  cfg.unseen_fraction = 0.0;
  EXPECT_THROW(synth_generate(cfg), Error);
  cfg.unseen_fraction = 0.9;  // cannot keep every primitive seen
  cfg.num_attrs = 4;
  cfg.num_objs = 4;
  EXPECT_THROW(synth_generate(cfg), Error);
}

TEST(SynthGenerate, SeedDeterminism) {
  SynthConfig cfg;
  cfg.num_attrs = 4;
  cfg.num_objs = 4;
  cfg.unseen_fraction = 0.25;
  cfg.images_per_pair = 3;
  cfg.seed = 21;
  const SynthOutput a = synth_generate(cfg);
  const SynthOutput b = synth_generate(cfg);
  EXPECT_EQ(a.features.ids, b.features.ids);
  for (std::size_t i = 0; i < a.features.ids.size(); ++i)
    EXPECT_EQ(a.features.features[i], b.features.features[i]);
  EXPECT_EQ(a.space.train_pairs, b.space.train_pairs);
}

}  // namespace
}  // namespace czsl
