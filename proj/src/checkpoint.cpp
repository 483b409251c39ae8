#include "czsl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "czsl/binio.hpp"

namespace czsl {

namespace {

constexpr char kCkptMagic[8] = {'C', 'Z', 'S', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

void write_tensor_record(std::ostream& os, const std::string& name,
                         const Tensor& t) {
  binio::write_string(os, name);
  const auto& shape = t.shape();
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (idx_t d : shape)
    binio::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  binio::write_doubles(os, t.values());
}

std::pair<std::string, Tensor> read_tensor_record(std::istream& is) {
  const std::string name = binio::read_string(is, "tensor record name");
  const std::string what_shape = "tensor '" + name + "' shape";
  const auto rank = binio::read_le<std::uint32_t>(is, what_shape.c_str());
  check(rank <= 4, ErrorKind::integrity, "tensor '", name,
        "' has implausible rank ", rank);
  std::vector<idx_t> shape;
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = binio::read_le<std::uint64_t>(is, what_shape.c_str());
    check(d > 0 && d <= (1ull << 32), ErrorKind::integrity, "tensor '", name,
          "' has implausible dimension ", d);
    shape.push_back(static_cast<idx_t>(d));
    numel *= static_cast<std::size_t>(d);
  }
  const std::string what_values = "tensor '" + name + "' values";
  auto values = binio::read_doubles(is, numel, what_values.c_str());
  return {name, Tensor::from(std::move(shape), std::move(values))};
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), ErrorKind::io, "cannot write checkpoint '", path, "'");
  binio::write_bytes(os, kCkptMagic, sizeof(kCkptMagic));
  binio::write_le<std::uint32_t>(os, ckpt.version);
  binio::write_string(os, ckpt.mode);
  binio::write_le<std::uint64_t>(os, ckpt.seed);
  binio::write_le<std::uint32_t>(os, ckpt.epoch);
  binio::write_le<double>(os, ckpt.best_val_auc);
  binio::write_le<std::uint32_t>(os, ckpt.best_epoch);
  binio::write_string(os, ckpt.config_echo);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) write_tensor_record(os, name, t);
  binio::write_le<std::int64_t>(os, ckpt.opt_step_count);
  binio::write_le<std::uint32_t>(os,
                                 static_cast<std::uint32_t>(ckpt.opt_tensors.size()));
  for (const auto& [name, t] : ckpt.opt_tensors) write_tensor_record(os, name, t);
  os.flush();
  check(os.good(), ErrorKind::io, "write failed for checkpoint '", path, "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), ErrorKind::io, "cannot open checkpoint '", path, "'");
  char magic[8];
  binio::read_bytes(is, magic, sizeof(magic), "checkpoint magic");
  check(std::memcmp(magic, kCkptMagic, sizeof(magic)) == 0, ErrorKind::integrity,
        "'", path, "' is not a checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.version = binio::read_le<std::uint32_t>(is, "checkpoint version");
  check(ckpt.version == kCkptVersion, ErrorKind::integrity,
        "unsupported checkpoint version ", ckpt.version, " (expected ",
        kCkptVersion, ")");
  ckpt.mode = binio::read_string(is, "prompt mode");
  ckpt.seed = binio::read_le<std::uint64_t>(is, "seed");
  ckpt.epoch = binio::read_le<std::uint32_t>(is, "epoch");
  ckpt.best_val_auc = binio::read_le<double>(is, "best_val_auc");
  ckpt.best_epoch = binio::read_le<std::uint32_t>(is, "best_epoch");
  ckpt.config_echo = binio::read_string(is, "config echo");
  const auto n_tensors = binio::read_le<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i)
    ckpt.tensors.push_back(read_tensor_record(is));
  ckpt.opt_step_count = binio::read_le<std::int64_t>(is, "optimizer step count");
  const auto n_opt = binio::read_le<std::uint32_t>(is, "optimizer tensor count");
  for (std::uint32_t i = 0; i < n_opt; ++i)
    ckpt.opt_tensors.push_back(read_tensor_record(is));
  is.peek();
  check(is.eof(), ErrorKind::integrity, "trailing bytes at end of checkpoint '",
        path, "'");
  return ckpt;
}

Checkpoint make_checkpoint(const RunConfig& cfg, const ModelSnapshot& snap,
                           const Optimizer* opt, std::uint32_t epoch,
                           double best_val_auc, std::uint32_t best_epoch) {
  Checkpoint ckpt;
  ckpt.mode = to_string(snap.prompt.mode);
  ckpt.seed = cfg.seed;
  ckpt.epoch = epoch;
  ckpt.best_val_auc = best_val_auc;
  ckpt.best_epoch = best_epoch;
  ckpt.config_echo = config_echo(cfg);
  if (snap.prompt.soft_prompt.tensor.defined())
    ckpt.tensors.emplace_back("soft_prompt",
                              snap.prompt.soft_prompt.tensor.detached_copy());
  ckpt.tensors.emplace_back("soft_embedding",
                            snap.prompt.soft_embedding.tensor.detached_copy());
  for (const auto& [name, t] : snap.text.named_tensors())
    ckpt.tensors.emplace_back(name, t->detached_copy());
  ckpt.tensors.emplace_back("img.proj", snap.image_projection.detached_copy());
  if (opt != nullptr) {
    const Optimizer::State state = opt->export_state();
    ckpt.opt_step_count = state.step_count;
    for (const auto& [name, values] : state.first_moment)
      ckpt.opt_tensors.emplace_back(
          "m." + name,
          Tensor::from({static_cast<idx_t>(values.size())}, values));
    for (const auto& [name, values] : state.second_moment)
      ckpt.opt_tensors.emplace_back(
          "v." + name,
          Tensor::from({static_cast<idx_t>(values.size())}, values));
  }
  return ckpt;
}

RestoredModel restore_model(const Checkpoint& ckpt,
                            std::shared_ptr<const CompositionSpace> space,
                            std::shared_ptr<const ImageFeatureTable> features) {
  RestoredModel out;
  out.cfg = config_from_echo(ckpt.config_echo);
  out.epoch = ckpt.epoch;
  out.best_val_auc = ckpt.best_val_auc;
  out.best_epoch = ckpt.best_epoch;

  const PromptMode mode = parse_prompt_mode(ckpt.mode);
  check(space != nullptr, ErrorKind::contract, "restore_model: no space");

  // Prompt blocks.
  PromptState prompt = init_prompt_state(*space, mode, ckpt.seed,
                                         out.cfg.prompt_len, out.cfg.dim,
                                         nullptr);
  const Tensor* phi = ckpt.find("soft_embedding");
  check(phi != nullptr, ErrorKind::integrity,
        "checkpoint is missing tensor 'soft_embedding'");
  check(phi->rows() == space->num_primitives() && phi->cols() == out.cfg.dim,
        ErrorKind::data, "checkpoint soft_embedding is ",
        shape_str(phi->shape()), " but the loaded space needs ",
        space->num_primitives(), "x", out.cfg.dim);
  prompt.soft_embedding.tensor = phi->detached_copy();
  prompt.soft_embedding.tensor.set_requires_grad(true);
  if (out.cfg.prompt_len > 0) {
    const Tensor* theta = ckpt.find("soft_prompt");
    check(theta != nullptr, ErrorKind::integrity,
          "checkpoint is missing tensor 'soft_prompt'");
    check(theta->rows() == out.cfg.prompt_len && theta->cols() == out.cfg.dim,
          ErrorKind::integrity, "checkpoint soft_prompt is ",
          shape_str(theta->shape()), ", expected ", out.cfg.prompt_len, "x",
          out.cfg.dim);
    prompt.soft_prompt.tensor = theta->detached_copy();
    prompt.soft_prompt.tensor.set_requires_grad(true);
  }

  // Frozen encoder.
  EncoderDims dims;
  dims.d = out.cfg.dim;
  dims.blocks = out.cfg.blocks;
  dims.heads = out.cfg.heads;
  dims.context_len = out.cfg.context_len;
  TextEncoderWeights enc = init_frozen_text(ckpt.seed, dims);
  for (auto& [name, slot] : enc.named_tensors()) {
    const Tensor* stored = ckpt.find(name);
    check(stored != nullptr, ErrorKind::integrity,
          "checkpoint is missing tensor '", name, "'");
    check(stored->shape() == slot->shape(), ErrorKind::integrity, "tensor '",
          name, "' is ", shape_str(stored->shape()), ", expected ",
          shape_str(slot->shape()));
    *slot = stored->detached_copy();
  }
  enc.finalize();

  const Tensor* proj = ckpt.find("img.proj");
  check(proj != nullptr, ErrorKind::integrity,
        "checkpoint is missing tensor 'img.proj'");
  if (features != nullptr)
    check(proj->rows() == features->d_img, ErrorKind::data,
          "checkpoint image projection expects d_img ", proj->rows(),
          " but the feature table has ", features->d_img);

  out.snapshot.text = std::move(enc);
  out.snapshot.image_projection = proj->detached_copy();
  out.snapshot.features = std::move(features);
  out.snapshot.space = std::move(space);
  out.snapshot.prompt = std::move(prompt);
  out.snapshot.tau = out.cfg.tau;

  // Optimizer moments.
  out.opt_state.step_count = ckpt.opt_step_count;
  for (const auto& [name, t] : ckpt.opt_tensors) {
    check(name.size() > 2 && (name[0] == 'm' || name[0] == 'v') && name[1] == '.',
          ErrorKind::integrity, "unrecognized optimizer record '", name, "'");
    auto& dst = name[0] == 'm' ? out.opt_state.first_moment
                               : out.opt_state.second_moment;
    dst.emplace(name.substr(2), t.values());
  }
  return out;
}

}  // namespace czsl
