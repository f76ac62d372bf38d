// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/service/synthetic.hpp"

#include "dplane/rng.hpp"

#include <cmath>

namespace dplane {

SyntheticLogits::SyntheticLogits(int vocab_size, double zipf_s, double noise,
                                 std::uint64_t seed)
    : seed_(seed), noise_(noise) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  ranking_.resize(static_cast<std::size_t>(vocab_size));
  for (int i = 0; i < vocab_size; ++i) ranking_[i] = i;
  // Fisher-Yates on the counter hash, identical on every platform.
  std::uint64_t h = mix64(seed ^ 0x7065726d75746531ULL);
  for (std::size_t i = ranking_.size() - 1; i > 0; --i) {
    h = mix64(h);
    std::swap(ranking_[i], ranking_[h % (i + 1)]);
  }
  base_.resize(ranking_.size());
  for (std::size_t r = 0; r < ranking_.size(); ++r) {
    base_[ranking_[r]] = -zipf_s * std::log(static_cast<double>(r) + 1.0);
  }
}

void SyntheticLogits::fill_row(std::uint64_t iteration, SeqId seq,
                               std::span<float> out) const {
  if (out.size() != base_.size()) throw std::invalid_argument("row length differs from V");
  const std::uint64_t key = mix64(mix64(mix64(seed_ ^ 0x6c6f67697473ULL) ^ iteration) ^ seq);
  if (noise_ == 0.0) {
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = static_cast<float>(base_[v]);
    return;
  }
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = static_cast<float>(base_[v] + noise_ * approx_normal(mix64(key ^ v)));
  }
}

std::vector<float> SyntheticLogits::row(std::uint64_t iteration, SeqId seq) const {
  std::vector<float> out(base_.size());
  fill_row(iteration, seq, out);
  return out;
}

std::vector<double> SyntheticLogits::expected_law() const {
  const double m = base_[ranking_.front()];
  std::vector<double> law(base_.size());
  double s = 0.0;
  for (std::size_t v = 0; v < base_.size(); ++v) {
    law[v] = std::exp(base_[v] - m);
    s += law[v];
  }
  for (double& p : law) p /= s;
  return law;
}

std::vector<std::uint64_t> SyntheticLogits::expected_counts() const {
  const std::vector<double> law = expected_law();
  std::vector<std::uint64_t> counts(law.size());
  // Keep the ranking strict: scale so every rank gets a distinct count.
  for (std::size_t r = 0; r < ranking_.size(); ++r) {
    const TokenId v = ranking_[r];
    counts[v] = static_cast<std::uint64_t>(law[v] * 1e15) + (ranking_.size() - r);
  }
  return counts;
}

HotVocab SyntheticLogits::hot_vocab(int h) const {
  if (h < 1 || h > vocab_size()) throw std::invalid_argument("hot size out of range");
  return HotVocab(std::vector<TokenId>(ranking_.begin(), ranking_.begin() + h),
                  vocab_size());
}

std::vector<TokenId> SyntheticLogits::prompt(SeqId seq, int len) const {
  std::vector<TokenId> out(static_cast<std::size_t>(std::max(len, 0)));
  std::uint64_t h = mix64(mix64(seed_ ^ 0x70726f6d7074ULL) ^ seq);
  for (auto& t : out) {
    h = mix64(h);
    t = static_cast<TokenId>(h % base_.size());
  }
  return out;
}

}  // namespace dplane
