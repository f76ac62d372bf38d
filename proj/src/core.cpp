// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/core.hpp"

#include <cmath>
#include <limits>

namespace dplane {

std::vector<ParamError> validate_params(const SamplingParams& p,
                                        int vocab_size) {
  std::vector<ParamError> errors;
  auto fail = [&](const char* field, const char* message) {
    errors.push_back({field, message});
  };
  if (!(p.temperature > 0.0) || !std::isfinite(p.temperature)) {
    fail("temperature", "temperature must be positive");
  }
  if (p.top_k) {
    if (*p.top_k < 1) fail("top_k", "top_k must be at least 1");
    if (*p.top_k > vocab_size) fail("top_k", "top_k exceeds vocabulary");
  }
  if (!(p.top_p > 0.0 && p.top_p <= 1.0)) {
    fail("top_p", "top_p must be in (0, 1]");
  }
  if (!(p.min_p >= 0.0 && p.min_p < 1.0)) {
    fail("min_p", "min_p must be in [0, 1)");
  }
  if (!(p.repetition_penalty > 0.0) || !std::isfinite(p.repetition_penalty)) {
    fail("repetition_penalty", "repetition_penalty must be positive");
  }
  if (!std::isfinite(p.presence_penalty)) {
    fail("presence_penalty", "presence_penalty must be finite");
  }
  if (!std::isfinite(p.frequency_penalty)) {
    fail("frequency_penalty", "frequency_penalty must be finite");
  }
  return errors;
}

SequenceState::SequenceState(SeqId id, std::span<const TokenId> prompt,
                             int vocab_size, std::size_t max_len)
    : id_(id),
      vocab_size_(vocab_size),
      max_len_(max_len),
      prompt_(prompt.begin(), prompt.end()),
      prompt_counts_(static_cast<std::size_t>(vocab_size), 0),
      output_counts_(static_cast<std::size_t>(vocab_size), 0),
      prompt_mask_(static_cast<std::size_t>(vocab_size), 0),
      output_mask_(static_cast<std::size_t>(vocab_size), 0),
      any_mask_(static_cast<std::size_t>(vocab_size), 0) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  for (TokenId t : prompt) {
    if (t < 0 || t >= vocab_size) {
      throw RangeError("prompt token " + std::to_string(t) +
                       " outside vocabulary of size " +
                       std::to_string(vocab_size));
    }
    auto& c = prompt_counts_[t];
    if (c != std::numeric_limits<std::uint32_t>::max()) ++c;
    prompt_mask_[t] = 1;
    if (!any_mask_[t]) {
      any_mask_[t] = 1;
      penalized_ids_.push_back(t);
    }
  }
  generated_.reserve(max_len_);
}

void SequenceState::append(TokenId token) {
  if (token < 0 || token >= vocab_size_) {
    throw RangeError("token " + std::to_string(token) +
                     " outside vocabulary of size " +
                     std::to_string(vocab_size_));
  }
  if (generated_.size() >= max_len_) {
    throw std::length_error("sequence " + std::to_string(id_) +
                            " reached its maximum length");
  }
  generated_.push_back(token);
  auto& c = output_counts_[token];
  if (c != std::numeric_limits<std::uint32_t>::max()) ++c;
  output_mask_[token] = 1;
  if (!any_mask_[token]) {
    any_mask_[token] = 1;
    penalized_ids_.push_back(token);
  }
}

SequenceState new_sequence_state(SeqId id, std::span<const TokenId> prompt,
                                 int vocab_size, std::size_t max_len) {
  return SequenceState(id, prompt, vocab_size, max_len);
}

}  // namespace dplane
