#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "czsl/data.hpp"
#include "czsl/encoders.hpp"
#include "czsl/optim.hpp"
#include "czsl/tensor.hpp"

namespace czsl {

// The four prompting strategies. The trainable set is fixed per mode:
//   clip_hard          -> nothing (fixed prompt, fixed embedding)
//   coop_soft_prompt   -> soft prompt only
//   csp_soft_embedding -> soft embedding only
//   promptcompvl       -> both
enum class PromptMode { clip_hard, coop_soft_prompt, csp_soft_embedding, promptcompvl };

PromptMode parse_prompt_mode(const std::string& s);
std::string to_string(PromptMode m);

// The two learnable blocks plus layout bookkeeping. The soft-embedding table
// stores attribute rows 0..|A|-1 followed by object rows |A|..|A|+|O|-1.
struct PromptState {
  PromptMode mode = PromptMode::promptcompvl;
  idx_t prompt_len = 3;  // k
  idx_t num_attrs = 0;
  idx_t num_objs = 0;
  Parameter soft_prompt;     // k x d; tensor undefined when k = 0
  Parameter soft_embedding;  // (|A|+|O|) x d

  idx_t dim() const { return soft_embedding.tensor.cols(); }
  idx_t eos_position() const { return prompt_len + 3; }

  PromptState detached_copy() const;
};

// Builds the prompt state for a space. Soft-embedding rows are copied from
// `frozen_vocab` when given (one row per primitive), otherwise drawn from
// N(0, 0.02^2). The prompt block is drawn from the same distribution, except
// in the fixed-prompt modes where it is a seed-deterministic frozen stand-in
// for a hard prompt phrase.
PromptState init_prompt_state(const CompositionSpace& space, PromptMode mode,
                              std::uint64_t seed, idx_t prompt_len, idx_t d,
                              const Tensor* frozen_vocab);

// Assembles [SOS, v_1..v_k, e_attr, e_obj, EOS, PAD...] padded to L_ctx.
// Returns the context matrix and eos_position = k + 3. Differentiable w.r.t.
// whichever blocks the mode trains.
std::pair<Tensor, idx_t> build_context(Tape* tape, const PromptState& state,
                                       const TextEncoderWeights& enc,
                                       const Pair& pair);

// Exactly the parameters the mode trains, in fixed order (prompt, embedding).
std::vector<Parameter*> trainable_params(PromptState& state);

idx_t trainable_scalar_count(const PromptState& state);

}  // namespace czsl
