#include "czsl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>

#include "czsl/rng.hpp"

namespace czsl {

namespace fs = std::filesystem;

ModelSnapshot init_snapshot(const RunConfig& cfg,
                            std::shared_ptr<const CompositionSpace> space,
                            std::shared_ptr<const ImageFeatureTable> features) {
  check(space != nullptr, ErrorKind::contract, "init_snapshot: no space");
  EncoderDims dims;
  dims.d = cfg.dim;
  dims.blocks = cfg.blocks;
  dims.heads = cfg.heads;
  dims.context_len = cfg.context_len;

  ModelSnapshot snap;
  snap.text = init_frozen_text(cfg.seed, dims);
  const Tensor vocab =
      frozen_concept_vocab(cfg.seed, space->num_primitives(), cfg.dim);
  snap.prompt = init_prompt_state(*space, parse_prompt_mode(cfg.mode), cfg.seed,
                                  cfg.prompt_len, cfg.dim, &vocab);
  if (features != nullptr)
    snap.image_projection =
        init_frozen_image_projection(cfg.seed, features->d_img, cfg.dim);
  snap.features = std::move(features);
  snap.space = std::move(space);
  snap.tau = cfg.tau;
  snap.validate();
  return snap;
}

Trainer::Trainer(const RunConfig& cfg,
                 std::shared_ptr<const CompositionSpace> space,
                 std::shared_ptr<const ImageFeatureTable> features)
    : cfg_(cfg),
      snap_(init_snapshot(cfg, space, features)),
      opt_(OptimizerConfig{parse_optimizer_kind(cfg.optimizer), cfg.lr}) {
  cfg_.validate_train();
  check(snap_.features != nullptr, ErrorKind::contract,
        "training requires a feature table");
  check(trainable_scalar_count(snap_.prompt) > 0, ErrorKind::config,
        "mode ", cfg.mode,
        " has zero trainable parameters; nothing to train (pick "
        "coop_soft_prompt, csp_soft_embedding or promptcompvl)");

  const CompositionSpace& sp = *snap_.space;
  check(!sp.train_pairs.empty() && !sp.train_samples.empty(), ErrorKind::data,
        "training needs a non-empty train split");
  seen_pairs_ = sp.train_pairs;
  std::map<Pair, idx_t> pair_index;
  for (std::size_t i = 0; i < seen_pairs_.size(); ++i)
    pair_index.emplace(seen_pairs_[i], static_cast<idx_t>(i));

  sample_targets_.reserve(sp.train_samples.size());
  image_cache_.reserve(sp.train_samples.size());
  for (const Sample& s : sp.train_samples) {
    auto it = pair_index.find(s.pair);
    check(it != pair_index.end(), ErrorKind::data, "train sample '", s.image_id,
          "' labeled with a pair outside the seen pair set");
    sample_targets_.push_back(it->second);
    // Image vectors are frozen; cache them once.
    const Tensor v =
        encode_image(*snap_.features, snap_.image_projection, s.image_id);
    image_cache_.push_back(v.values());
  }
  best_prompt_ = snap_.prompt.detached_copy();
}

void Trainer::resume_from(const std::string& checkpoint_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RestoredModel restored = restore_model(ckpt, snap_.space, snap_.features);
  // The run being resumed must agree on everything that shapes the
  // optimization; total epochs and checkpoint cadence may change.
  const RunConfig& old = restored.cfg;
  auto same = [&](bool ok, const char* what) {
    check(ok, ErrorKind::config, "resume: checkpoint was trained with a different ",
          what, "; refusing to mix runs");
  };
  same(old.seed == cfg_.seed, "seed");
  same(old.mode == cfg_.mode, "mode");
  same(old.dim == cfg_.dim && old.blocks == cfg_.blocks &&
           old.heads == cfg_.heads && old.context_len == cfg_.context_len &&
           old.prompt_len == cfg_.prompt_len,
       "architecture");
  same(old.lr == cfg_.lr && old.optimizer == cfg_.optimizer &&
           old.schedule == cfg_.schedule && old.batch_size == cfg_.batch_size &&
           old.tau == cfg_.tau,
       "optimization config");
  snap_.prompt = std::move(restored.snapshot.prompt);
  opt_.import_state(restored.opt_state);
  completed_epochs_ = static_cast<idx_t>(restored.epoch);
  best_val_auc_ = restored.best_val_auc;
  best_epoch_ = static_cast<idx_t>(restored.best_epoch);
  best_prompt_ = snap_.prompt.detached_copy();
}

ModelSnapshot Trainer::snapshot_copy() const {
  ModelSnapshot copy = snap_;
  copy.prompt = snap_.prompt.detached_copy();
  return copy;
}

double Trainer::train_step(const std::vector<idx_t>& sample_indices) {
  check(!sample_indices.empty(), ErrorKind::contract, "empty training batch");
  const idx_t d = cfg_.dim;
  const idx_t B = static_cast<idx_t>(sample_indices.size());

  Tape tape;
  // Text vectors for every seen training pair: the softmax in Eq-style
  // training normalizes over the whole seen pair set, not the batch.
  const Tensor texts = text_matrix(&tape, snap_, seen_pairs_);

  std::vector<double> img_values;
  img_values.reserve(static_cast<std::size_t>(B * d));
  std::vector<idx_t> targets;
  targets.reserve(sample_indices.size());
  for (idx_t si : sample_indices) {
    check(si >= 0 && si < static_cast<idx_t>(image_cache_.size()),
          ErrorKind::index, "train sample index ", si, " out of range");
    const auto& vec = image_cache_[static_cast<std::size_t>(si)];
    img_values.insert(img_values.end(), vec.begin(), vec.end());
    targets.push_back(sample_targets_[static_cast<std::size_t>(si)]);
  }
  const Tensor images = Tensor::from({B, d}, std::move(img_values));
  const Tensor logits = scale(
      &tape, matmul(&tape, images, transpose(&tape, texts)), 1.0 / snap_.tau);
  const Tensor loss = cross_entropy(&tape, logits, targets);
  tape.backward(loss);

  const double lr = epoch_lr(completed_epochs_ + 1);
  auto params = trainable_params(snap_.prompt);
  opt_.step(params, lr);
  for (Parameter* p : params) p->tensor.clear_grad();
  tape.reset();
  return loss.item();
}

double Trainer::epoch_lr(idx_t epoch) const {
  if (cfg_.schedule == "cosine") {
    const double t = static_cast<double>(epoch - 1) /
                     static_cast<double>(std::max<idx_t>(1, cfg_.epochs));
    return cfg_.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
  }
  return cfg_.lr;
}

double Trainer::train_accuracy() const {
  const Tensor texts = text_matrix(nullptr, snap_, seen_pairs_);
  const idx_t P = texts.rows(), d = texts.cols();
  idx_t correct = 0;
  for (std::size_t s = 0; s < image_cache_.size(); ++s) {
    const auto& img = image_cache_[s];
    idx_t best = 0;
    double best_score = kNegInf;
    for (idx_t j = 0; j < P; ++j) {
      double dot = 0.0;
      for (idx_t c = 0; c < d; ++c)
        dot += img[static_cast<std::size_t>(c)] * texts.at(j, c);
      if (dot > best_score) {
        best_score = dot;
        best = j;
      }
    }
    if (best == sample_targets_[s]) ++correct;
  }
  return static_cast<double>(correct) /
         static_cast<double>(image_cache_.size());
}

void Trainer::write_checkpoint(const std::string& path, idx_t epoch) const {
  const Checkpoint ckpt =
      make_checkpoint(cfg_, snap_, &opt_, static_cast<std::uint32_t>(epoch),
                      best_val_auc_, static_cast<std::uint32_t>(best_epoch_));
  save_checkpoint(ckpt, path);
}

TrainStats Trainer::run(const std::string& out_dir,
                        const std::function<void(const EpochStats&)>& log) {
  const bool ckpts = !out_dir.empty();
  std::string last_path, best_path;
  if (ckpts) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    last_path = (fs::path(out_dir) / "last.ckpt").string();
    best_path = (fs::path(out_dir) / "best.ckpt").string();
    // Fail on an unwritable destination before spending any training time.
    write_checkpoint(last_path, completed_epochs_);
  }

  TrainStats stats;
  const idx_t n_samples = static_cast<idx_t>(image_cache_.size());
  for (idx_t epoch = completed_epochs_ + 1; epoch <= cfg_.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    std::vector<idx_t> order(static_cast<std::size_t>(n_samples));
    for (idx_t i = 0; i < n_samples; ++i)
      order[static_cast<std::size_t>(i)] = i;
    // Epoch-keyed substream: resuming at epoch e replays the same shuffles an
    // uninterrupted run would have used.
    Rng epoch_rng = Rng(cfg_.seed).split(0x9000 + static_cast<std::uint64_t>(epoch));
    shuffle(order, epoch_rng);

    double loss_sum = 0.0;
    idx_t steps = 0;
    for (idx_t begin = 0; begin < n_samples; begin += cfg_.batch_size) {
      const idx_t end = std::min<idx_t>(begin + cfg_.batch_size, n_samples);
      std::vector<idx_t> batch(order.begin() + begin, order.begin() + end);
      loss_sum += train_step(batch);
      ++steps;
    }
    completed_epochs_ = epoch;

    EpochStats es;
    es.epoch = epoch;
    es.mean_loss = loss_sum / static_cast<double>(steps);
    check(std::isfinite(es.mean_loss), ErrorKind::state,
          "non-finite training loss at epoch ", epoch);
    es.train_acc = train_accuracy();
    es.val_report = evaluate(snapshot_copy(), CzslSetting::generalized, Phase::val);
    es.wall_sec = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - epoch_start)
                      .count();

    if (es.val_report.AUC > best_val_auc_) {
      best_val_auc_ = es.val_report.AUC;
      best_epoch_ = epoch;
      best_prompt_ = snap_.prompt.detached_copy();
      if (ckpts) write_checkpoint(best_path, epoch);
    }
    if (ckpts && (epoch % cfg_.checkpoint_every == 0 || epoch == cfg_.epochs))
      write_checkpoint(last_path, epoch);

    if (log) log(es);
    stats.epochs.push_back(std::move(es));
  }
  stats.best_epoch = best_epoch_;
  stats.best_val_auc = best_val_auc_;
  return stats;
}

TrainResult train(const RunConfig& cfg,
                  std::shared_ptr<const CompositionSpace> space,
                  std::shared_ptr<const ImageFeatureTable> features,
                  const std::string& out_dir, const std::string& resume_path,
                  const std::function<void(const EpochStats&)>& log) {
  Trainer trainer(cfg, std::move(space), std::move(features));
  if (!resume_path.empty()) trainer.resume_from(resume_path);
  TrainResult result;
  result.stats = trainer.run(out_dir, log);
  result.final_snapshot = trainer.snapshot_copy();
  result.best_snapshot = trainer.snapshot_copy();
  result.best_snapshot.prompt = trainer.best_prompt().detached_copy();
  return result;
}

}  // namespace czsl
