#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "czsl/checkpoint.hpp"
#include "czsl/config.hpp"
#include "czsl/evaluation.hpp"
#include "czsl/model.hpp"
#include "czsl/optim.hpp"

namespace czsl {

struct EpochStats {
  idx_t epoch = 0;
  double mean_loss = 0.0;
  double train_acc = 0.0;  // argmax over the seen pair set on train samples
  double wall_sec = 0.0;   // not logged or checkpointed; outputs stay seed-pure
  EvalReport val_report;   // generalized CZSL on the val split
};

struct TrainStats {
  std::vector<EpochStats> epochs;
  idx_t best_epoch = 0;
  double best_val_auc = -1.0;
};

struct TrainResult {
  ModelSnapshot final_snapshot;
  ModelSnapshot best_snapshot;  // highest validation AUC
  TrainStats stats;
};

// Single-writer training state: the live snapshot, the seen-pair list used as
// the softmax denominator every step, per-sample label indices, cached image
// vectors, and the optimizer.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::shared_ptr<const CompositionSpace> space,
          std::shared_ptr<const ImageFeatureTable> features);

  // Restores prompt blocks, optimizer state and the epoch counter.
  void resume_from(const std::string& checkpoint_path);

  // One optimization step over the given train-sample indices: text matrix
  // over all seen pairs, batch logits, cross-entropy, backward, update.
  double train_step(const std::vector<idx_t>& sample_indices);

  ModelSnapshot snapshot_copy() const;
  const ModelSnapshot& live_snapshot() const { return snap_; }
  PromptState& prompt() { return snap_.prompt; }
  const PromptState& best_prompt() const { return best_prompt_; }
  Optimizer& optimizer() { return opt_; }
  idx_t completed_epochs() const { return completed_epochs_; }

  // Runs the remaining epochs, logging one record per epoch and writing
  // last/best checkpoints under out_dir (when non-empty).
  TrainStats run(const std::string& out_dir,
                 const std::function<void(const EpochStats&)>& log = nullptr);

 private:
  double epoch_lr(idx_t epoch) const;
  void write_checkpoint(const std::string& path, idx_t epoch) const;
  double train_accuracy() const;

  RunConfig cfg_;
  ModelSnapshot snap_;
  Optimizer opt_;
  std::vector<Pair> seen_pairs_;
  std::vector<idx_t> sample_targets_;  // train sample -> seen pair index
  std::vector<std::vector<double>> image_cache_;  // train sample -> unit d-vec
  idx_t completed_epochs_ = 0;
  double best_val_auc_ = -1.0;
  idx_t best_epoch_ = 0;
  PromptState best_prompt_;
};

// Full pipeline: build (or resume) a trainer, run it, return the final and
// best-validation-AUC snapshots.
TrainResult train(const RunConfig& cfg,
                  std::shared_ptr<const CompositionSpace> space,
                  std::shared_ptr<const ImageFeatureTable> features,
                  const std::string& out_dir = "",
                  const std::string& resume_path = "",
                  const std::function<void(const EpochStats&)>& log = nullptr);

// Untrained snapshot for a mode: the zero-shot baseline and the train() start
// state share this construction.
ModelSnapshot init_snapshot(const RunConfig& cfg,
                            std::shared_ptr<const CompositionSpace> space,
                            std::shared_ptr<const ImageFeatureTable> features);

}  // namespace czsl
