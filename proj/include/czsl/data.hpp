#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "czsl/encoders.hpp"
#include "czsl/tensor.hpp"

namespace czsl {

struct Pair {
  idx_t attr = 0;
  idx_t obj = 0;
  friend bool operator==(const Pair&, const Pair&) = default;
  friend auto operator<=>(const Pair&, const Pair&) = default;
};

struct Sample {
  std::string image_id;
  Pair pair;
};

enum class Phase { val, test };
enum class CzslSetting { standard, generalized, open_world };

CzslSetting parse_setting(const std::string& s);
std::string to_string(CzslSetting s);
std::string to_string(Phase p);

// Attribute/object vocabularies, the five pair splits, and per-split sample
// lists. Immutable after load; seen-ness of a pair always means membership in
// train_pairs.
struct CompositionSpace {
  std::vector<std::string> attributes;  // sorted, unique
  std::vector<std::string> objects;     // sorted, unique

  std::vector<Pair> train_pairs;
  std::vector<Pair> val_seen_pairs;
  std::vector<Pair> val_unseen_pairs;
  std::vector<Pair> test_seen_pairs;
  std::vector<Pair> test_unseen_pairs;

  std::vector<Sample> train_samples;
  std::vector<Sample> val_samples;
  std::vector<Sample> test_samples;

  idx_t num_attrs() const { return static_cast<idx_t>(attributes.size()); }
  idx_t num_objs() const { return static_cast<idx_t>(objects.size()); }
  idx_t num_primitives() const { return num_attrs() + num_objs(); }

  std::optional<idx_t> attr_index(const std::string& name) const;
  std::optional<idx_t> obj_index(const std::string& name) const;
  std::string pair_name(const Pair& p) const;

  bool is_seen(const Pair& p) const;  // in train_pairs
  const std::vector<Sample>& samples(Phase phase) const {
    return phase == Phase::val ? val_samples : test_samples;
  }
};

// Loads the split directory:
//   train_pairs.txt, val_seen_pairs.txt, val_unseen_pairs.txt,
//   test_seen_pairs.txt, test_unseen_pairs.txt  -- one "attribute object"
//   per line; samples.txt -- one "image_id attribute object split" per line.
// Validates: seen pairs of each phase appear in train_pairs, unseen pairs do
// not (Y_seen and Y_unseen stay disjoint), every sample's pair belongs to its
// split's declared pair set, no duplicates, no unknown names.
CompositionSpace load_splits(const std::string& dir);

void save_splits(const CompositionSpace& space, const std::string& dir);

// Ordered evaluation target set for a setting and phase. Attr-major order.
//   standard    -> the phase's unseen pairs
//   generalized -> the phase's seen + unseen pairs
//   open_world  -> the full attribute x object grid
std::vector<Pair> target_set(const CompositionSpace& space, CzslSetting setting,
                             Phase phase);

struct SynthConfig {
  idx_t num_attrs = 8;
  idx_t num_objs = 8;
  idx_t d_img = 32;
  double noise_sigma = 0.05;
  idx_t images_per_pair = 20;
  double unseen_fraction = 0.25;
  std::uint64_t seed = 7;
};

struct SynthOutput {
  CompositionSpace space;
  ImageFeatureTable features;
};

// Desk-scale generator: per-primitive prototypes in R^{d_img}; an image of
// pair (a,o) is p_a + q_o + N(0, sigma^2) noise. A fraction of pairs is held
// out of training entirely (split between val and test) while every primitive
// keeps at least one seen pair.
SynthOutput synth_generate(const SynthConfig& cfg);

}  // namespace czsl
