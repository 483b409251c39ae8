// Command-line front end: synth | train | eval | predict | inspect.
// Exit codes: 0 success, 1 usage/config, 2 data validation, 3 I/O.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "czsl/checkpoint.hpp"
#include "czsl/config.hpp"
#include "czsl/data.hpp"
#include "czsl/evaluation.hpp"
#include "czsl/model.hpp"
#include "czsl/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace czsl;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::contract:
    case ErrorKind::shape:
    case ErrorKind::state:
      return 1;
    case ErrorKind::data:
    case ErrorKind::lookup:
    case ErrorKind::index:
    case ErrorKind::degenerate:
      return 2;
    case ErrorKind::io:
    case ErrorKind::integrity:
      return 3;
  }
  return 1;
}

std::string fmt_g(double v, const char* spec = "%.10g") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// Every RunConfig key is exposed as a string-valued flag so the same parsing
// and error reporting applies to config files and flag overrides alike.
// Precedence: flag > config file > built-in default.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    auto opt = [&](const std::string& key, const std::string& flag,
                   const std::string& help) {
      options[key] = cmd->add_option(flag, values[key], help);
    };
    opt("seed", "--seed", "RNG seed");
    opt("epochs", "--epochs", "training epochs");
    opt("batch_size", "--batch-size", "samples per step");
    opt("lr", "--lr", "learning rate");
    opt("optimizer", "--optimizer", "sgd|adam");
    opt("schedule", "--schedule", "constant|cosine");
    opt("mode", "--mode",
        "clip_hard|coop_soft_prompt|csp_soft_embedding|promptcompvl");
    opt("tau", "--tau", "softmax temperature");
    opt("prompt_len", "--prompt-len", "soft prompt length k");
    opt("context_len", "--context-length", "text context length");
    opt("dim", "--dim", "embedding width");
    opt("blocks", "--blocks", "transformer blocks");
    opt("heads", "--heads", "attention heads");
    opt("checkpoint_every", "--checkpoint-every", "epochs between checkpoints");
    opt("data_dir", "--data-dir", "split directory");
    opt("features", "--features", "feature-table file");
  }

  bool given(const std::string& key) const {
    auto it = options.find(key);
    return it != options.end() && it->second->count() > 0;
  }

  RunConfig merge() const {
    RunConfig cfg;
    if (!config_path.empty())
      apply_config_entries(parse_config_file(config_path), cfg);
    std::map<std::string, std::string> flag_entries;
    for (const auto& [key, option] : options)
      if (option->count() > 0) flag_entries[key] = values.at(key);
    apply_config_entries(flag_entries, cfg);  // flags win
    return cfg;
  }
};

std::shared_ptr<const CompositionSpace> load_space_or_fail(const RunConfig& cfg) {
  check(!cfg.data_dir.empty(), ErrorKind::config,
        "--data-dir is required (or data_dir in the config file)");
  return std::make_shared<const CompositionSpace>(load_splits(cfg.data_dir));
}

std::shared_ptr<const ImageFeatureTable> load_features_or_fail(const RunConfig& cfg) {
  check(!cfg.features.empty(), ErrorKind::config,
        "--features is required (or features in the config file)");
  return std::make_shared<const ImageFeatureTable>(
      load_feature_table(cfg.features));
}

// ---------------------------------------------------------------- synth ----

struct SynthFlags {
  std::string out;
  std::uint64_t seed = 7;
  idx_t attrs = 8, objs = 8, dimg = 32, images = 20;
  double sigma = 0.05, unseen_frac = 0.25;
};

int cmd_synth(const SynthFlags& f) {
  SynthConfig cfg;
  cfg.num_attrs = f.attrs;
  cfg.num_objs = f.objs;
  cfg.d_img = f.dimg;
  cfg.noise_sigma = f.sigma;
  cfg.images_per_pair = f.images;
  cfg.unseen_fraction = f.unseen_frac;
  cfg.seed = f.seed;
  const SynthOutput out = synth_generate(cfg);
  fs::create_directories(f.out);
  save_splits(out.space, f.out);
  save_feature_table(out.features, (fs::path(f.out) / "features.bin").string());

  const CompositionSpace& s = out.space;
  auto row = [](const char* label, std::size_t v) {
    std::printf("# %-18s %zu\n", label, v);
  };
  row("Attr.", s.attributes.size());
  row("Obj.", s.objects.size());
  row("Attr. x Obj.", s.attributes.size() * s.objects.size());
  row("Train Pair", s.train_pairs.size());
  row("Train Img.", s.train_samples.size());
  row("Val Seen Pair", s.val_seen_pairs.size());
  row("Val Unseen Pair", s.val_unseen_pairs.size());
  row("Val Img.", s.val_samples.size());
  row("Test Seen Pair", s.test_seen_pairs.size());
  row("Test Unseen Pair", s.test_unseen_pairs.size());
  row("Test Img.", s.test_samples.size());
  return 0;
}

// ---------------------------------------------------------------- train ----

int cmd_train(const ConfigFlags& flags, const std::string& out,
              const std::string& resume) {
  check(!out.empty(), ErrorKind::config, "--out is required for train");
  RunConfig cfg = flags.merge();
  cfg.out = out;
  cfg.resume = resume;
  cfg.validate_train();
  auto space = load_space_or_fail(cfg);
  auto features = load_features_or_fail(cfg);

  fs::create_directories(out);
  std::ofstream log((fs::path(out) / "train.log").string());
  check(log.good(), ErrorKind::io, "cannot write training log under '", out, "'");

  auto log_epoch = [&](const EpochStats& es) {
    const EvalReport& v = es.val_report;
    const std::string line =
        "epoch=" + std::to_string(es.epoch) + " loss=" + fmt_g(es.mean_loss) +
        " train_acc=" + fmt_g(es.train_acc) + " val_S=" + fmt_g(v.S) +
        " val_U=" + fmt_g(v.U) + " val_HM=" + fmt_g(v.HM) +
        " val_AUC=" + fmt_g(v.AUC);
    std::cout << line << "\n";
    log << line << "\n";
  };
  const TrainResult result = train(cfg, space, features, out, resume, log_epoch);

  const idx_t best = result.stats.best_epoch;
  const EvalReport* best_report = nullptr;
  for (const EpochStats& es : result.stats.epochs)
    if (es.epoch == best) best_report = &es.val_report;
  std::string final_line = "best epoch=" + std::to_string(best);
  if (best_report != nullptr) {
    final_line += " val_S=" + fmt_g(best_report->S) +
                  " val_U=" + fmt_g(best_report->U) +
                  " val_HM=" + fmt_g(best_report->HM) +
                  " val_AUC=" + fmt_g(best_report->AUC);
  } else {
    // Best epoch predates this (resumed) run; only the AUC is tracked.
    final_line += " val_AUC=" + fmt_g(result.stats.best_val_auc);
  }
  std::cout << final_line << "\n";
  log << final_line << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ----

struct EvalFlags {
  std::string checkpoint;
  std::string init_mode;  // untrained baseline instead of a checkpoint
  std::string setting = "generalized";
  std::string phase = "test";
  std::string out;
  std::optional<double> threshold;
};

ModelSnapshot snapshot_from_flags(const ConfigFlags& flags,
                                  const std::string& ckpt_path,
                                  const std::string& init_mode,
                                  std::string* echo_out) {
  RunConfig cfg = flags.merge();
  check(ckpt_path.empty() != init_mode.empty(), ErrorKind::config,
        "provide exactly one of --checkpoint or --init <mode>");
  ModelSnapshot snap;
  if (!ckpt_path.empty()) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig stored = config_from_echo(ckpt.config_echo);
    // The checkpoint pins the model configuration; path flags say which data
    // to evaluate against (defaulting to the paths it was trained on).
    if (!cfg.data_dir.empty()) stored.data_dir = cfg.data_dir;
    if (!cfg.features.empty()) stored.features = cfg.features;
    auto space = load_space_or_fail(stored);
    auto features = load_features_or_fail(stored);
    RestoredModel restored = restore_model(ckpt, space, features);
    if (echo_out) *echo_out = ckpt.config_echo;
    snap = std::move(restored.snapshot);
  } else {
    cfg.mode = init_mode;
    parse_prompt_mode(init_mode);  // validate the name early
    auto space = load_space_or_fail(cfg);
    auto features = load_features_or_fail(cfg);
    if (echo_out) *echo_out = config_echo(cfg);
    snap = init_snapshot(cfg, space, features);
  }
  if (flags.given("tau")) {
    const RunConfig overridden = flags.merge();
    check(overridden.tau > 0.0, ErrorKind::config, "--tau must be positive");
    snap.tau = overridden.tau;
  }
  return snap;
}

int cmd_eval(const ConfigFlags& flags, const EvalFlags& f) {
  const CzslSetting setting = parse_setting(f.setting);
  if (setting == CzslSetting::open_world)
    check(f.threshold.has_value(), ErrorKind::config,
          "open-world evaluation requires --feasibility-threshold");
  check(f.phase == "val" || f.phase == "test", ErrorKind::config,
        "--phase must be val or test, got '", f.phase, "'");
  std::string echo;
  ModelSnapshot snap = snapshot_from_flags(flags, f.checkpoint, f.init_mode, &echo);
  EvalReport report = evaluate(
      snap, setting, f.phase == "val" ? Phase::val : Phase::test, f.threshold);
  report.config_echo = echo;
  const std::string text = report_to_text(report);
  std::cout << text;
  if (!f.out.empty()) {
    std::ofstream os(f.out);
    check(os.good(), ErrorKind::io, "cannot write report to '", f.out, "'");
    os << text;
    os.flush();
    check(os.good(), ErrorKind::io, "write failed for '", f.out, "'");
  }
  return 0;
}

// -------------------------------------------------------------- predict ----

struct PredictFlags {
  std::string checkpoint;
  std::string image_id;
  std::string setting = "generalized";
  std::string phase = "test";
  std::optional<double> threshold;
};

int cmd_predict(const ConfigFlags& flags, const PredictFlags& f) {
  const CzslSetting setting = parse_setting(f.setting);
  if (setting == CzslSetting::open_world)
    check(f.threshold.has_value(), ErrorKind::config,
          "open-world prediction requires --feasibility-threshold");
  ModelSnapshot snap = snapshot_from_flags(flags, f.checkpoint, "", nullptr);
  const Phase phase = f.phase == "val" ? Phase::val : Phase::test;
  const std::vector<Pair> targets = target_set(*snap.space, setting, phase);

  std::vector<bool> keep(targets.size(), true);
  if (setting == CzslSetting::open_world) {
    const FeasibilityScores feas =
        feasibility_scores(*snap.space, snap.prompt.soft_embedding.tensor);
    for (std::size_t j = 0; j < targets.size(); ++j)
      if (!snap.space->is_seen(targets[j]) && feas.at(targets[j]) < *f.threshold)
        keep[j] = false;
  }
  const auto ranked = rank_pairs(snap, f.image_id, targets, &keep);
  const Pair top = targets[static_cast<std::size_t>(ranked.front().first)];
  std::cout << snap.space->pair_name(top) << "\n";
  const std::size_t k = std::min<std::size_t>(5, ranked.size());
  for (std::size_t r = 0; r < k; ++r) {
    const Pair p = targets[static_cast<std::size_t>(ranked[r].first)];
    std::cout << (r + 1) << " " << snap.space->pair_name(p) << " "
              << fmt_g(ranked[r].second, "%.6f") << "\n";
  }
  return 0;
}

// -------------------------------------------------------------- inspect ----

int cmd_inspect(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  std::cout << "version=" << ckpt.version << "\n";
  std::cout << "mode=" << ckpt.mode << "\n";
  std::cout << "seed=" << ckpt.seed << "\n";
  std::cout << "epoch=" << ckpt.epoch << "\n";
  std::cout << "best_epoch=" << ckpt.best_epoch << "\n";
  std::cout << "best_val_auc=" << fmt_g(ckpt.best_val_auc) << "\n";

  const PromptMode mode = parse_prompt_mode(ckpt.mode);
  const Tensor* theta = ckpt.find("soft_prompt");
  const Tensor* phi = ckpt.find("soft_embedding");
  check(phi != nullptr, ErrorKind::integrity,
        "checkpoint is missing tensor 'soft_embedding'");
  std::cout << "soft_prompt="
            << (theta ? shape_str(theta->shape()) : std::string("none (k=0)"))
            << "\n";
  std::cout << "soft_embedding=" << shape_str(phi->shape()) << "\n";

  idx_t trainable = 0;
  const bool prompt_trains = mode == PromptMode::coop_soft_prompt ||
                             mode == PromptMode::promptcompvl;
  const bool embedding_trains = mode == PromptMode::csp_soft_embedding ||
                                mode == PromptMode::promptcompvl;
  if (prompt_trains && theta) trainable += theta->numel();
  if (embedding_trains) trainable += phi->numel();
  std::cout << "trainable_scalars=" << trainable << "\n";
  std::cout << "tensors=" << ckpt.tensors.size() << "\n";
  std::cout << "optimizer_steps=" << ckpt.opt_step_count << "\n";
  std::cout << "config:\n";
  std::istringstream is(ckpt.config_echo);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) std::cout << "  " << line << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "compositional zero-shot learning with soft prompts over frozen encoders"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthFlags sf;
  synth->add_option("--out", sf.out, "output directory")->required();
  synth->add_option("--seed", sf.seed, "RNG seed");
  synth->add_option("--attrs", sf.attrs, "number of attributes");
  synth->add_option("--objs", sf.objs, "number of objects");
  synth->add_option("--dimg", sf.dimg, "image feature dimension");
  synth->add_option("--sigma", sf.sigma, "feature noise stddev");
  synth->add_option("--images-per-pair", sf.images, "images per pair");
  synth->add_option("--unseen-frac", sf.unseen_frac, "fraction of pairs held out");

  auto* train_cmd = app.add_subcommand("train", "train the soft layers");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);
  std::string train_out, train_resume;
  train_cmd->add_option("--out", train_out, "checkpoint/log directory");
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or baseline");
  ConfigFlags eval_flags;
  eval_flags.attach(eval_cmd);
  EvalFlags ef;
  eval_cmd->add_option("--checkpoint", ef.checkpoint, "trained checkpoint");
  eval_cmd->add_option("--init", ef.init_mode,
                       "evaluate an untrained baseline of this mode");
  eval_cmd->add_option("--setting", ef.setting, "standard|generalized|open_world");
  eval_cmd->add_option("--phase", ef.phase, "val|test");
  double eval_threshold = 0.0;
  auto* eval_th = eval_cmd->add_option("--feasibility-threshold", eval_threshold,
                                       "open-world mask threshold");
  eval_cmd->add_option("--out", ef.out, "also write the report here");

  auto* pred_cmd = app.add_subcommand("predict", "label one image");
  ConfigFlags pred_flags;
  pred_flags.attach(pred_cmd);
  PredictFlags pf;
  pred_cmd->add_option("--checkpoint", pf.checkpoint, "trained checkpoint")
      ->required();
  pred_cmd->add_option("--image-id", pf.image_id, "image id to label")->required();
  pred_cmd->add_option("--setting", pf.setting, "standard|generalized|open_world");
  pred_cmd->add_option("--phase", pf.phase, "val|test");
  double pred_threshold = 0.0;
  auto* pred_th = pred_cmd->add_option("--feasibility-threshold", pred_threshold,
                                       "open-world mask threshold");

  auto* ins_cmd = app.add_subcommand("inspect", "summarize a checkpoint");
  std::string ins_path;
  ins_cmd->add_option("--checkpoint", ins_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems exit 1, --help exits 0
  }

  try {
    if (synth->parsed()) return cmd_synth(sf);
    if (train_cmd->parsed()) return cmd_train(train_flags, train_out, train_resume);
    if (eval_cmd->parsed()) {
      if (eval_th->count()) ef.threshold = eval_threshold;
      return cmd_eval(eval_flags, ef);
    }
    if (pred_cmd->parsed()) {
      if (pred_th->count()) pf.threshold = pred_threshold;
      return cmd_predict(pred_flags, pf);
    }
    if (ins_cmd->parsed()) return cmd_inspect(ins_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
