#include "czsl/prompt.hpp"

#include "czsl/rng.hpp"

namespace czsl {

PromptMode parse_prompt_mode(const std::string& s) {
  if (s == "clip_hard") return PromptMode::clip_hard;
  if (s == "coop_soft_prompt") return PromptMode::coop_soft_prompt;
  if (s == "csp_soft_embedding") return PromptMode::csp_soft_embedding;
  if (s == "promptcompvl") return PromptMode::promptcompvl;
  fail(ErrorKind::config, "unknown prompt mode '", s,
       "' (expected clip_hard|coop_soft_prompt|csp_soft_embedding|promptcompvl)");
}

std::string to_string(PromptMode m) {
  switch (m) {
    case PromptMode::clip_hard: return "clip_hard";
    case PromptMode::coop_soft_prompt: return "coop_soft_prompt";
    case PromptMode::csp_soft_embedding: return "csp_soft_embedding";
    case PromptMode::promptcompvl: return "promptcompvl";
  }
  return "?";
}

namespace {

constexpr double kInitStd = 0.02;

bool prompt_frozen(PromptMode m) {
  return m == PromptMode::clip_hard || m == PromptMode::csp_soft_embedding;
}

bool embedding_frozen(PromptMode m) {
  return m == PromptMode::clip_hard || m == PromptMode::coop_soft_prompt;
}

Tensor random_init(Rng rng, idx_t rows, idx_t cols) {
  std::vector<double> v(static_cast<std::size_t>(rows * cols));
  for (double& x : v) x = rng.normal(0.0, kInitStd);
  return Tensor::from({rows, cols}, std::move(v), true);
}

}  // namespace

PromptState PromptState::detached_copy() const {
  PromptState copy = *this;
  if (soft_prompt.tensor.defined()) {
    copy.soft_prompt.tensor = soft_prompt.tensor.detached_copy();
    copy.soft_prompt.tensor.set_requires_grad(true);
  }
  copy.soft_embedding.tensor = soft_embedding.tensor.detached_copy();
  copy.soft_embedding.tensor.set_requires_grad(true);
  return copy;
}

PromptState init_prompt_state(const CompositionSpace& space, PromptMode mode,
                              std::uint64_t seed, idx_t prompt_len, idx_t d,
                              const Tensor* frozen_vocab) {
  check(prompt_len >= 0, ErrorKind::config, "prompt length must be >= 0");
  check(d > 0, ErrorKind::config, "embedding width must be positive");
  const idx_t primitives = space.num_primitives();
  check(primitives > 0, ErrorKind::contract, "empty composition space");

  Rng root(seed);
  PromptState state;
  state.mode = mode;
  state.prompt_len = prompt_len;
  state.num_attrs = space.num_attrs();
  state.num_objs = space.num_objs();

  // Fixed-prompt modes share one seed-deterministic stand-in for the hard
  // prompt phrase, so clip_hard and csp_soft_embedding see the same context
  // prefix for a given seed.
  state.soft_prompt.name = "soft_prompt";
  if (prompt_len > 0) {
    state.soft_prompt.tensor = prompt_frozen(mode)
                                   ? random_init(root.split(11), prompt_len, d)
                                   : random_init(root.split(12), prompt_len, d);
  }
  state.soft_prompt.frozen = prompt_frozen(mode) || prompt_len == 0;

  state.soft_embedding.name = "soft_embedding";
  if (frozen_vocab != nullptr) {
    check(frozen_vocab->defined() && frozen_vocab->rows() == primitives &&
              frozen_vocab->cols() == d,
          ErrorKind::contract, "frozen vocab must be ", primitives, "x", d,
          ", got ", shape_str(frozen_vocab->shape()));
    state.soft_embedding.tensor = frozen_vocab->detached_copy();
    state.soft_embedding.tensor.set_requires_grad(true);
  } else {
    state.soft_embedding.tensor = random_init(root.split(13), primitives, d);
  }
  state.soft_embedding.frozen = embedding_frozen(mode);
  return state;
}

std::pair<Tensor, idx_t> build_context(Tape* tape, const PromptState& state,
                                       const TextEncoderWeights& enc,
                                       const Pair& pair) {
  const idx_t L = enc.dims.context_len;
  const idx_t k = state.prompt_len;
  check(k + 4 <= L, ErrorKind::config, "prompt length ", k,
        " does not fit: k + 4 = ", k + 4, " exceeds context length ", L);
  check(state.dim() == enc.dims.d, ErrorKind::contract,
        "prompt width ", state.dim(), " differs from encoder width ",
        enc.dims.d);
  check(pair.attr >= 0 && pair.attr < state.num_attrs && pair.obj >= 0 &&
            pair.obj < state.num_objs,
        ErrorKind::lookup, "pair (", pair.attr, ", ", pair.obj,
        ") outside the bound space of ", state.num_attrs, " attributes and ",
        state.num_objs, " objects");

  Tensor sos = slice_rows(tape, enc.special, kSos, 1);
  Tensor eos = slice_rows(tape, enc.special, kEos, 1);
  Tensor pad = slice_rows(tape, enc.special, kPad, 1);
  Tensor concepts = embedding_lookup(
      tape, state.soft_embedding.tensor,
      {pair.attr, state.num_attrs + pair.obj});

  std::vector<Tensor> parts;
  parts.reserve(static_cast<std::size_t>(L));
  parts.push_back(sos);
  if (k > 0) parts.push_back(state.soft_prompt.tensor);
  parts.push_back(concepts);
  parts.push_back(eos);
  for (idx_t p = k + 4; p < L; ++p) parts.push_back(pad);
  return {concat_rows(tape, parts), state.eos_position()};
}

std::vector<Parameter*> trainable_params(PromptState& state) {
  std::vector<Parameter*> out;
  if (!state.soft_prompt.frozen && state.soft_prompt.tensor.defined())
    out.push_back(&state.soft_prompt);
  if (!state.soft_embedding.frozen) out.push_back(&state.soft_embedding);
  return out;
}

idx_t trainable_scalar_count(const PromptState& state) {
  idx_t n = 0;
  if (!state.soft_prompt.frozen && state.soft_prompt.tensor.defined())
    n += state.soft_prompt.tensor.numel();
  if (!state.soft_embedding.frozen) n += state.soft_embedding.tensor.numel();
  return n;
}

}  // namespace czsl
