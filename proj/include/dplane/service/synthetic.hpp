// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Deterministic stand-in for the model forward pass. Token v with
// popularity rank r(v) gets the raw logit
//   z_v = -s * ln(r(v) + 1) + sigma * n(seed, iteration, seq, v),
// where n is an approximately standard normal hash. Rows are a pure
// function of their key, so any sharding reproduces them exactly.

#pragma once

#include "dplane/core.hpp"
#include "dplane/shvs.hpp"

namespace dplane {

// Irwin-Hall sum of the four 16-bit lanes of h, scaled to unit variance.
inline double approx_normal(std::uint64_t h) {
  const double sum = static_cast<double>(h & 0xffff) +
                     static_cast<double>((h >> 16) & 0xffff) +
                     static_cast<double>((h >> 32) & 0xffff) +
                     static_cast<double>(h >> 48);
  return (sum / 65536.0 - 2.0) * 1.7320508075688772;
}

class SyntheticLogits {
 public:
  SyntheticLogits(int vocab_size, double zipf_s, double noise,
                  std::uint64_t seed);

  int vocab_size() const { return static_cast<int>(base_.size()); }

  void fill_row(std::uint64_t iteration, SeqId seq, std::span<float> out) const;
  std::vector<float> row(std::uint64_t iteration, SeqId seq) const;

  // Token ids by popularity, most popular first.
  std::span<const TokenId> ranking() const { return ranking_; }
  // Expected relative frequency of each token (noise-free law).
  std::vector<double> expected_law() const;
  // Integer counts proportional to the expected law, as an offline trace.
  std::vector<std::uint64_t> expected_counts() const;
  // Most popular h ids.
  HotVocab hot_vocab(int h) const;

  // Deterministic prompt of `len` tokens for a sequence.
  std::vector<TokenId> prompt(SeqId seq, int len) const;

 private:
  std::uint64_t seed_;
  double noise_;
  std::vector<double> base_;  // by token id
  std::vector<TokenId> ranking_;
};

}  // namespace dplane
