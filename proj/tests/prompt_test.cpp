#include "czsl/prompt.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace czsl {
namespace {

CompositionSpace toy_space(idx_t attrs, idx_t objs) {
  CompositionSpace s;
  for (idx_t a = 0; a < attrs; ++a)
    s.attributes.push_back("a" + std::to_string(a));
  for (idx_t o = 0; o < objs; ++o) s.objects.push_back("o" + std::to_string(o));
  for (idx_t a = 0; a < attrs; ++a)
    for (idx_t o = 0; o < objs; ++o) s.train_pairs.push_back({a, o});
  return s;
}

TEST(PromptState, SeedDeterminism) {
  const CompositionSpace space = toy_space(3, 4);
  PromptState a = init_prompt_state(space, PromptMode::promptcompvl, 9, 3, 16, nullptr);
  PromptState b = init_prompt_state(space, PromptMode::promptcompvl, 9, 3, 16, nullptr);
  EXPECT_EQ(a.soft_prompt.tensor.values(), b.soft_prompt.tensor.values());
  EXPECT_EQ(a.soft_embedding.tensor.values(), b.soft_embedding.tensor.values());
}

TEST(PromptState, TrainableSetPerMode) {
  const CompositionSpace space = toy_space(5, 7);
  {
    PromptState s = init_prompt_state(space, PromptMode::clip_hard, 1, 3, 64, nullptr);
    EXPECT_TRUE(trainable_params(s).empty());
    EXPECT_EQ(trainable_scalar_count(s), 0);
  }
  {
    PromptState s =
        init_prompt_state(space, PromptMode::coop_soft_prompt, 1, 3, 64, nullptr);
    auto params = trainable_params(s);
    ASSERT_EQ(params.size(), 1u);
    EXPECT_EQ(params[0]->name, "soft_prompt");
  }
  {
    PromptState s =
        init_prompt_state(space, PromptMode::csp_soft_embedding, 1, 3, 64, nullptr);
    auto params = trainable_params(s);
    ASSERT_EQ(params.size(), 1u);
    EXPECT_EQ(params[0]->name, "soft_embedding");
  }
  {
    PromptState s = init_prompt_state(space, PromptMode::promptcompvl, 1, 3, 64, nullptr);
    auto params = trainable_params(s);
    ASSERT_EQ(params.size(), 2u);
    EXPECT_EQ(params[0]->name, "soft_prompt");
    EXPECT_EQ(params[1]->name, "soft_embedding");
    // 3*64 + (5+7)*64 = 960 trainable scalars
    EXPECT_EQ(trainable_scalar_count(s), 960);
  }
}

TEST(PromptState, VocabCopyAndMismatch) {
  const CompositionSpace space = toy_space(2, 3);
  const Tensor vocab = frozen_concept_vocab(4, 5, 8);
  PromptState s =
      init_prompt_state(space, PromptMode::csp_soft_embedding, 4, 2, 8, &vocab);
  EXPECT_EQ(s.soft_embedding.tensor.values(), vocab.values());
  EXPECT_TRUE(s.soft_embedding.tensor.requires_grad());
  const Tensor wrong = frozen_concept_vocab(4, 6, 8);
  EXPECT_THROW(
      init_prompt_state(space, PromptMode::csp_soft_embedding, 4, 2, 8, &wrong),
      Error);
}

TEST(BuildContext, LayoutMatchesPromptFormat) {
  const CompositionSpace space = toy_space(4, 6);
  EncoderDims dims;
  dims.d = 16;
  dims.context_len = 8;
  const TextEncoderWeights enc = init_frozen_text(2, dims);
  PromptState s = init_prompt_state(space, PromptMode::promptcompvl, 2, 3, 16, nullptr);
  const Pair pair{1, 2};
  auto [ctx, eos] = build_context(nullptr, s, enc, pair);
  EXPECT_EQ(eos, 6);
  ASSERT_EQ(ctx.rows(), 8);
  const auto& theta = s.soft_prompt.tensor;
  const auto& phi = s.soft_embedding.tensor;
  for (idx_t c = 0; c < 16; ++c) {
    EXPECT_EQ(ctx.at(0, c), enc.special.at(kSos, c));
    EXPECT_EQ(ctx.at(1, c), theta.at(0, c));
    EXPECT_EQ(ctx.at(2, c), theta.at(1, c));
    EXPECT_EQ(ctx.at(3, c), theta.at(2, c));
    EXPECT_EQ(ctx.at(4, c), phi.at(1, c));          // attr row
    EXPECT_EQ(ctx.at(5, c), phi.at(4 + 2, c));      // object row offset |A|
    EXPECT_EQ(ctx.at(6, c), enc.special.at(kEos, c));
    EXPECT_EQ(ctx.at(7, c), enc.special.at(kPad, c));
  }
}

TEST(BuildContext, DegeneratePromptLength) {
  const CompositionSpace space = toy_space(2, 2);
  EncoderDims dims;
  dims.d = 8;
  dims.context_len = 6;
  const TextEncoderWeights enc = init_frozen_text(2, dims);
  PromptState s = init_prompt_state(space, PromptMode::promptcompvl, 2, 0, 8, nullptr);
  auto [ctx, eos] = build_context(nullptr, s, enc, {0, 1});
  EXPECT_EQ(eos, 3);
  for (idx_t c = 0; c < 8; ++c) {
    EXPECT_EQ(ctx.at(0, c), enc.special.at(kSos, c));
    EXPECT_EQ(ctx.at(1, c), s.soft_embedding.tensor.at(0, c));
    EXPECT_EQ(ctx.at(2, c), s.soft_embedding.tensor.at(2 + 1, c));
    EXPECT_EQ(ctx.at(3, c), enc.special.at(kEos, c));
    EXPECT_EQ(ctx.at(4, c), enc.special.at(kPad, c));
    EXPECT_EQ(ctx.at(5, c), enc.special.at(kPad, c));
  }
}

TEST(BuildContext, PromptTooLongRejected) {
  const CompositionSpace space = toy_space(2, 2);
  EncoderDims dims;
  dims.d = 8;
  dims.context_len = 8;
  const TextEncoderWeights enc = init_frozen_text(2, dims);
  PromptState s = init_prompt_state(space, PromptMode::promptcompvl, 2, 5, 8, nullptr);
  try {
    build_context(nullptr, s, enc, {0, 0});
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(BuildContext, SwappingPairChangesExactlyTheConceptRows) {
  const CompositionSpace space = toy_space(3, 3);
  EncoderDims dims;
  dims.d = 8;
  dims.context_len = 8;
  const TextEncoderWeights enc = init_frozen_text(5, dims);
  PromptState s = init_prompt_state(space, PromptMode::promptcompvl, 5, 2, 8, nullptr);
  auto [ca, eos_a] = build_context(nullptr, s, enc, {0, 1});
  auto [cb, eos_b] = build_context(nullptr, s, enc, {2, 0});
  EXPECT_EQ(eos_a, eos_b);
  for (idx_t r = 0; r < 8; ++r) {
    bool differs = false;
    for (idx_t c = 0; c < 8; ++c)
      if (ca.at(r, c) != cb.at(r, c)) differs = true;
    EXPECT_EQ(differs, r == 3 || r == 4) << "row " << r;
  }
}

TEST(BuildContext, GradientReachesExactlyTheLookedUpRows) {
  const CompositionSpace space = toy_space(4, 5);
  EncoderDims dims;
  dims.d = 16;
  dims.context_len = 8;
  const TextEncoderWeights enc = init_frozen_text(6, dims);
  PromptState s = init_prompt_state(space, PromptMode::promptcompvl, 6, 2, 16, nullptr);
  const Pair pair{2, 3};
  Tape tape;
  auto [ctx, eos] = build_context(&tape, s, enc, pair);
  Tensor loss = sum(&tape, encode_text(enc, &tape, ctx, eos));
  tape.backward(loss);
  const auto& phi_grad = s.soft_embedding.tensor.grad();
  const idx_t d = 16;
  for (idx_t row = 0; row < s.soft_embedding.tensor.rows(); ++row) {
    double norm = 0.0;
    for (idx_t c = 0; c < d; ++c)
      norm += std::fabs(phi_grad[static_cast<std::size_t>(row * d + c)]);
    const bool expected_nonzero = row == 2 || row == 4 + 3;
    EXPECT_EQ(norm > 0.0, expected_nonzero) << "row " << row;
  }
  // The prompt block is fully used, so every row of theta receives gradient.
  const auto& theta_grad = s.soft_prompt.tensor.grad();
  double total = 0.0;
  for (double g : theta_grad) total += std::fabs(g);
  EXPECT_GT(total, 0.0);
}

TEST(PromptMode, ParseRoundTrip) {
  for (const char* name :
       {"clip_hard", "coop_soft_prompt", "csp_soft_embedding", "promptcompvl"})
    EXPECT_EQ(to_string(parse_prompt_mode(name)), name);
  EXPECT_THROW(parse_prompt_mode("hard_soft"), Error);
}

}  // namespace
}  // namespace czsl
