#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "czsl/config.hpp"
#include "czsl/model.hpp"
#include "czsl/optim.hpp"

namespace czsl {

// On-disk model state. Binary layout (little-endian):
//   magic "CZSLCKPT", u32 version, prompt-mode string, u64 seed, u32 epoch,
//   f64 best_val_auc, u32 best_epoch, config-echo string,
//   u32 tensor count, records of (name, u32 rank, u64 dims, f64 values),
//   i64 optimizer step count, u32 optimizer tensor count, same record form.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string mode;
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;  // last completed epoch
  double best_val_auc = -1.0;
  std::uint32_t best_epoch = 0;
  std::string config_echo;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::int64_t opt_step_count = 0;
  std::vector<std::pair<std::string, Tensor>> opt_tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot -> checkpoint. Stores the prompt blocks, every frozen encoder
// tensor and the image projection, plus optimizer moments when present.
Checkpoint make_checkpoint(const RunConfig& cfg, const ModelSnapshot& snap,
                           const Optimizer* opt, std::uint32_t epoch,
                           double best_val_auc, std::uint32_t best_epoch);

struct RestoredModel {
  ModelSnapshot snapshot;
  RunConfig cfg;  // parsed back from the stored echo
  Optimizer::State opt_state;
  std::uint32_t epoch = 0;
  double best_val_auc = -1.0;
  std::uint32_t best_epoch = 0;
};

// Rebuilds a usable snapshot from a checkpoint plus the (separately stored)
// split directory and feature table.
RestoredModel restore_model(const Checkpoint& ckpt,
                            std::shared_ptr<const CompositionSpace> space,
                            std::shared_ptr<const ImageFeatureTable> features);

}  // namespace czsl
