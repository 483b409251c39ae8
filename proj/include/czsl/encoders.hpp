#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "czsl/tensor.hpp"

namespace czsl {

struct EncoderDims {
  idx_t d = 64;           // embedding width
  idx_t blocks = 2;       // transformer blocks
  idx_t heads = 4;        // attention heads
  idx_t context_len = 8;  // L_ctx
  bool causal = true;     // CLIP-style causal text attention
  double ln_eps = 1e-5;
};

// Special-token rows in the special embedding table.
enum SpecialToken : idx_t { kSos = 0, kEos = 1, kPad = 2 };

struct BlockWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, wk, wv, wo;  // d x d each
  Tensor ln2_gain, ln2_bias;
  Tensor mlp_in;   // d x 4d
  Tensor mlp_out;  // 4d x d
};

// Frozen miniature text transformer. All tensors have requires_grad = false
// and never appear in a trainable-parameter list.
struct TextEncoderWeights {
  EncoderDims dims;
  Tensor special;     // 3 x d  (SOS, EOS, PAD)
  Tensor positional;  // L_ctx x d
  std::vector<BlockWeights> blocks;
  Tensor final_proj;  // d x d

  // Derived: per-head projection slices and the attention mask, rebuilt by
  // finalize() after init or load.
  struct HeadSlices {
    std::vector<Tensor> wq, wk, wv;  // d x head_dim
    std::vector<Tensor> wo;          // head_dim x d
  };
  std::vector<HeadSlices> head_cache;
  Tensor attn_mask;  // L_ctx x L_ctx, 0 or -inf

  void finalize();
  idx_t head_dim() const { return dims.d / dims.heads; }

  // Stable (name, tensor) listing used by the checkpoint format.
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
};

// Deterministic frozen initialization: every weight entry drawn from
// N(0, 0.02^2) via a seed-keyed substream per tensor.
TextEncoderWeights init_frozen_text(std::uint64_t seed, const EncoderDims& dims);

// Frozen stand-in for a pretrained vocabulary embedding over the primitive
// concepts; rows are handed to the prompt layer as initialization and as the
// fixed embedding in the hard-prompt modes.
Tensor frozen_concept_vocab(std::uint64_t seed, idx_t count, idx_t d);

Tensor init_frozen_image_projection(std::uint64_t seed, idx_t d_img, idx_t d);

// Runs the causal blocks over an L_ctx x d context, takes the hidden state at
// eos_position, applies the final projection and l2-normalizes. Differentiable
// w.r.t. the context rows; the weights are frozen.
Tensor encode_text(const TextEncoderWeights& w, Tape* tape,
                   const Tensor& context, idx_t eos_position);

// Precomputed image features keyed by id, plus a frozen projection into the
// shared d-dimensional space.
struct ImageFeatureTable {
  idx_t d_img = 0;
  std::vector<std::string> ids;  // insertion order, serialized order
  std::unordered_map<std::string, idx_t> index;
  std::vector<std::vector<double>> features;

  void add(const std::string& id, std::vector<double> feature);
  const std::vector<double>& feature(const std::string& id) const;
  bool contains(const std::string& id) const { return index.count(id) > 0; }
};

// Projection of the stored feature, l2-normalized. Deterministic.
Tensor encode_image(const ImageFeatureTable& table, const Tensor& projection,
                    const std::string& image_id);

// Binary feature-table file:
//   magic "CZSLFEAT", u32 version, u64 count, u32 d_img, then per record
//   u32 id length, id bytes, d_img little-endian f64 values.
void save_feature_table(const ImageFeatureTable& table, const std::string& path);
ImageFeatureTable load_feature_table(const std::string& path);

}  // namespace czsl
