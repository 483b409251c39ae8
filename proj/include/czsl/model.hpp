#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "czsl/data.hpp"
#include "czsl/encoders.hpp"
#include "czsl/prompt.hpp"
#include "czsl/tensor.hpp"

namespace czsl {

// Everything needed to score images against attr-obj pairs: frozen encoders,
// the (possibly trained) prompt state and the softmax temperature.
struct ModelSnapshot {
  TextEncoderWeights text;
  Tensor image_projection;
  std::shared_ptr<const ImageFeatureTable> features;
  std::shared_ptr<const CompositionSpace> space;
  PromptState prompt;
  double tau = 0.01;

  void validate() const;
};

// Row i = encode_text(build_context(pairs[i])). Rows are unit norm.
Tensor text_matrix(Tape* tape, const ModelSnapshot& snap,
                   const std::vector<Pair>& pairs);

// Cosine similarity (dot product of unit vectors) divided by tau.
Tensor pair_logits(Tape* tape, const Tensor& image_vec, const Tensor& texts,
                   double tau);

// Softmax over a 1 x P logit row.
Tensor label_probability(Tape* tape, const Tensor& logit_row);

// Argmax of sim(t_i, x) over unmasked target pairs; exact ties resolved by the
// lowest pair index.
Pair predict(const ModelSnapshot& snap, const std::string& image_id,
             const std::vector<Pair>& target_pairs,
             const std::vector<bool>* mask = nullptr);

// Ranked (pair index, similarity) list for the same scoring rule; used by the
// CLI's top-k output.
std::vector<std::pair<idx_t, double>> rank_pairs(
    const ModelSnapshot& snap, const std::string& image_id,
    const std::vector<Pair>& target_pairs,
    const std::vector<bool>* mask = nullptr);

}  // namespace czsl
