// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/core.hpp"
#include "dplane/penalty.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

namespace dplane {
namespace {

using testing::random_tokens;

std::vector<std::uint32_t> U(std::initializer_list<std::uint32_t> xs) { return xs; }
std::vector<std::uint8_t> M(std::initializer_list<std::uint8_t> xs) { return xs; }

template <typename T>
std::vector<T> vec(std::span<const T> s) {
  return {s.begin(), s.end()};
}

TEST(SequenceState, EmptyPrompt) {
  const auto s = new_sequence_state(0, {}, 4);
  EXPECT_EQ(vec(s.prompt_counts()), U({0, 0, 0, 0}));
  EXPECT_EQ(vec(s.prompt_mask()), M({0, 0, 0, 0}));
  EXPECT_TRUE(s.penalized_ids().empty());
}

TEST(SequenceState, PromptHistogram) {
  const std::vector<TokenId> prompt{1, 1, 3};
  const auto s = new_sequence_state(0, prompt, 4);
  EXPECT_EQ(vec(s.prompt_counts()), U({0, 2, 0, 1}));
  EXPECT_EQ(vec(s.prompt_mask()), M({0, 1, 0, 1}));
  EXPECT_EQ(vec(s.output_counts()), U({0, 0, 0, 0}));
}

TEST(SequenceState, PromptOutOfRange) {
  const std::vector<TokenId> prompt{5};
  EXPECT_THROW(new_sequence_state(0, prompt, 4), RangeError);
  const std::vector<TokenId> negative{-1};
  EXPECT_THROW(new_sequence_state(0, negative, 4), RangeError);
}

TEST(SequenceState, FirstToken) {
  auto s = new_sequence_state(0, {}, 2);
  s.append(1);
  EXPECT_EQ(vec(s.output_counts()), U({0, 1}));
  EXPECT_EQ(vec(s.output_mask()), M({0, 1}));
}

TEST(SequenceState, RepeatedToken) {
  auto s = new_sequence_state(0, {}, 4);
  update_output_histogram(s, 3);
  update_output_histogram(s, 3);
  EXPECT_EQ(s.output_count(3), 2u);
  EXPECT_EQ(s.generated_len(), 2u);
  EXPECT_EQ(s.penalized_ids().size(), 1u);
}

TEST(SequenceState, AppendRejectsBadToken) {
  auto s = new_sequence_state(0, {}, 4);
  EXPECT_THROW(s.append(4), RangeError);
  EXPECT_THROW(s.append(-1), RangeError);
}

TEST(SequenceState, MaxLength) {
  auto s = new_sequence_state(0, {}, 4, 2);
  s.append(0);
  s.append(1);
  EXPECT_THROW(s.append(2), std::length_error);
}

TEST(SequenceState, RandomAppendsMatchRebuild) {
  std::mt19937_64 rng(7);
  const int V = 50;
  const auto prompt = random_tokens(rng, 20, V);
  auto s = new_sequence_state(9, prompt, V);
  const auto history = random_tokens(rng, 1000, V);
  for (TokenId t : history) s.append(t);

  std::vector<std::uint32_t> counts(V, 0);
  std::vector<std::uint8_t> pmask(V, 0), omask(V, 0);
  for (TokenId t : history) ++counts[t];
  for (TokenId t : prompt) pmask[t] = 1;
  for (int v = 0; v < V; ++v) omask[v] = counts[v] > 0;
  EXPECT_EQ(vec(s.output_counts()), counts);
  EXPECT_EQ(vec(s.output_mask()), omask);
  EXPECT_EQ(vec(s.prompt_mask()), pmask);
  for (int v = 0; v < V; ++v) EXPECT_EQ(s.penalized(v), pmask[v] || omask[v]);
  std::vector<TokenId> ids(s.penalized_ids().begin(), s.penalized_ids().end());
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
}

TEST(ValidateParams, NeutralOk) {
  SamplingParams p;
  EXPECT_TRUE(validate_params(p, 8).empty());
}

TEST(ValidateParams, Errors) {
  SamplingParams p;
  p.temperature = 0.0;
  auto errs = validate_params(p, 8);
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].message, "temperature must be positive");

  p = SamplingParams{};
  p.top_k = 9;
  errs = validate_params(p, 8);
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].message, "top_k exceeds vocabulary");

  p = SamplingParams{};
  p.top_p = 0.0;
  p.min_p = 1.0;
  p.repetition_penalty = -1.0;
  EXPECT_EQ(validate_params(p, 8).size(), 3u);
}

TEST(SamplingParams, TruncationFlags) {
  SamplingParams p;
  EXPECT_FALSE(p.truncation_active());
  p.top_k = 4;
  EXPECT_TRUE(p.truncation_active());
  EXPECT_FALSE(p.without_truncation().truncation_active());
}

}  // namespace
}  // namespace dplane
