// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dplane {

using TokenId = std::int32_t;
using SeqId = std::uint64_t;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Column-major: one column per sequence, the vocabulary axis contiguous.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Generated-token column length a sequence may reach before it retires.
inline constexpr std::size_t kDefaultMaxLen = std::size_t{1} << 16;

// Uniform variates consumed per sequence per iteration: hot draw, accept
// test, tail draw. The full-vocabulary samplers use only the first.
using Draws = std::array<double, 3>;

struct SamplingParams {
  double temperature = 1.0;
  std::optional<int> top_k;  // nullopt: disabled
  double top_p = 1.0;
  double min_p = 0.0;
  double repetition_penalty = 1.0;
  double presence_penalty = 0.0;
  double frequency_penalty = 0.0;
  std::uint64_t seed = 0;

  bool penalties_neutral() const {
    return repetition_penalty == 1.0 && presence_penalty == 0.0 &&
           frequency_penalty == 0.0;
  }

  // Any truncation stage enabled. An enabled top_k counts even when it keeps
  // the whole domain: it still switches candidates to descending order.
  bool truncation_active() const {
    return top_k.has_value() || top_p < 1.0 || min_p > 0.0;
  }

  SamplingParams without_truncation() const {
    SamplingParams p = *this;
    p.top_k.reset();
    p.top_p = 1.0;
    p.min_p = 0.0;
    return p;
  }

  bool operator==(const SamplingParams&) const = default;
};

struct ParamError {
  std::string field;
  std::string message;
};

// Every violated constraint, in field order. Empty means valid.
std::vector<ParamError> validate_params(const SamplingParams& params,
                                        int vocab_size);

struct TokenDecision {
  std::uint64_t iteration = 0;
  SeqId seq_id = 0;
  TokenId token = 0;
  bool is_eos = false;
  bool accepted_hot = false;
  std::optional<float> logprob;

  bool operator==(const TokenDecision&) const = default;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Per-sequence penalty state: prompt and output histograms, their presence
/// masks, and the append-only column of generated tokens.
///
/// The prompt histogram is fixed at construction. Output counts change only
/// through append(), which touches a single vocabulary entry. Counts saturate
/// at the maximum of their type.
class SequenceState {
 public:
  SequenceState(SeqId id, std::span<const TokenId> prompt, int vocab_size,
                std::size_t max_len = kDefaultMaxLen);

  SeqId id() const { return id_; }
  int vocab_size() const { return vocab_size_; }
  std::size_t max_len() const { return max_len_; }

  std::span<const std::uint32_t> prompt_counts() const { return prompt_counts_; }
  std::span<const std::uint32_t> output_counts() const { return output_counts_; }
  std::span<const std::uint8_t> prompt_mask() const { return prompt_mask_; }
  std::span<const std::uint8_t> output_mask() const { return output_mask_; }

  std::uint32_t output_count(TokenId v) const { return output_counts_[v]; }
  bool in_output(TokenId v) const { return output_mask_[v] != 0; }
  // M_p or M_o.
  bool penalized(TokenId v) const { return any_mask_[v] != 0; }

  // Ids with M_p or M_o set, in first-touch order.
  std::span<const TokenId> penalized_ids() const { return penalized_ids_; }

  std::size_t generated_len() const { return generated_.size(); }
  std::span<const TokenId> generated() const { return generated_; }
  std::span<const TokenId> prompt() const { return prompt_; }

  void append(TokenId token);

 private:
  SeqId id_;
  int vocab_size_;
  std::size_t max_len_;
  std::vector<TokenId> prompt_;
  std::vector<std::uint32_t> prompt_counts_;
  std::vector<std::uint32_t> output_counts_;
  std::vector<std::uint8_t> prompt_mask_;
  std::vector<std::uint8_t> output_mask_;
  std::vector<std::uint8_t> any_mask_;
  std::vector<TokenId> penalized_ids_;
  std::vector<TokenId> generated_;
};

SequenceState new_sequence_state(SeqId id, std::span<const TokenId> prompt,
                                 int vocab_size,
                                 std::size_t max_len = kDefaultMaxLen);

}  // namespace dplane
