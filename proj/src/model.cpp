#include "czsl/model.hpp"

#include <algorithm>

namespace czsl {

void ModelSnapshot::validate() const {
  check(tau > 0.0, ErrorKind::config, "temperature must be positive, got ", tau);
  check(space != nullptr, ErrorKind::contract, "snapshot has no bound space");
  check(prompt.num_attrs == space->num_attrs() &&
            prompt.num_objs == space->num_objs(),
        ErrorKind::contract, "prompt state bound to ", prompt.num_attrs, "+",
        prompt.num_objs, " primitives but space has ", space->num_attrs(), "+",
        space->num_objs());
}

Tensor text_matrix(Tape* tape, const ModelSnapshot& snap,
                   const std::vector<Pair>& pairs) {
  check(!pairs.empty(), ErrorKind::contract, "text_matrix: empty pair list");
  std::vector<Tensor> rows;
  rows.reserve(pairs.size());
  for (const Pair& p : pairs) {
    auto [context, eos] = build_context(tape, snap.prompt, snap.text, p);
    rows.push_back(encode_text(snap.text, tape, context, eos));
  }
  return concat_rows(tape, rows);
}

Tensor pair_logits(Tape* tape, const Tensor& image_vec, const Tensor& texts,
                   double tau) {
  check(tau > 0.0, ErrorKind::config, "temperature must be positive, got ", tau);
  check(image_vec.defined() && image_vec.rows() == 1 &&
            image_vec.cols() == texts.cols(),
        ErrorKind::shape, "pair_logits: image vector ",
        shape_str(image_vec.shape()), " incompatible with texts ",
        shape_str(texts.shape()));
  return scale(tape, matmul(tape, image_vec, transpose(tape, texts)), 1.0 / tau);
}

Tensor label_probability(Tape* tape, const Tensor& logit_row) {
  return softmax_rows(tape, logit_row);
}

std::vector<std::pair<idx_t, double>> rank_pairs(
    const ModelSnapshot& snap, const std::string& image_id,
    const std::vector<Pair>& target_pairs, const std::vector<bool>* mask) {
  snap.validate();
  check(!target_pairs.empty(), ErrorKind::contract, "empty target pair set");
  check(mask == nullptr || mask->size() == target_pairs.size(),
        ErrorKind::contract, "mask size ", mask ? mask->size() : 0,
        " does not match ", target_pairs.size(), " target pairs");
  check(snap.features != nullptr, ErrorKind::contract,
        "snapshot has no feature table");

  Tensor texts = text_matrix(nullptr, snap, target_pairs);
  Tensor img = encode_image(*snap.features, snap.image_projection, image_id);
  std::vector<std::pair<idx_t, double>> scored;
  scored.reserve(target_pairs.size());
  const idx_t d = texts.cols();
  for (idx_t i = 0; i < texts.rows(); ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
    double dot = 0.0;
    for (idx_t c = 0; c < d; ++c) dot += img.at(0, c) * texts.at(i, c);
    scored.emplace_back(i, dot);
  }
  check(!scored.empty(), ErrorKind::contract,
        "every target pair is masked; nothing to predict");
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  return scored;
}

Pair predict(const ModelSnapshot& snap, const std::string& image_id,
             const std::vector<Pair>& target_pairs,
             const std::vector<bool>* mask) {
  const auto ranked = rank_pairs(snap, image_id, target_pairs, mask);
  return target_pairs[static_cast<std::size_t>(ranked.front().first)];
}

}  // namespace czsl
