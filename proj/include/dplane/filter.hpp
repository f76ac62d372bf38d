// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Truncation-first candidate filtering and the exact full-vocabulary sampler.
//
// Filter stages run top-k -> top-p -> min-p on temperature-scaled logits.
// Candidates are ranked by (logit desc, domain index asc). Top-p keeps the
// smallest ranked prefix whose mass reaches p (mass measured over the
// candidates surviving top-k). Min-p keeps v iff p_v >= min_p * max_w p_w.
//
// When any stage is enabled the candidate map is emitted in ranked order;
// with every stage disabled it is the identity map in domain order and
// nothing is sorted.

#pragma once

#include "dplane/core.hpp"

#include <span>
#include <vector>

namespace dplane {

enum class Domain : std::uint8_t { kFullVocab, kHotSet, kTailSet };

const char* to_string(Domain d);

struct FilterIndexMap {
  Domain domain = Domain::kFullVocab;
  // Subset index -> domain index.
  std::vector<TokenId> forward;
  bool ranked = false;

  std::size_t size() const { return forward.size(); }
  // Domain index -> subset index, -1 where filtered out.
  std::vector<std::int32_t> inverse(std::size_t domain_size) const;
};

// Sampler work counters. Plain integers: each worker owns its own copy.
struct WorkStats {
  std::uint64_t visits = 0;            // logits read from the row
  std::uint64_t truncated_visits = 0;  // elements touched after truncation
  std::uint64_t rows = 0;
  std::uint64_t accepted = 0;  // SHVS fast-path acceptances
  double alpha_sum = 0.0;

  void merge(const WorkStats& o) {
    visits += o.visits;
    truncated_visits += o.truncated_visits;
    rows += o.rows;
    accepted += o.accepted;
    alpha_sum += o.alpha_sum;
  }
};

enum class Selection {
  kTruncationFirst,  // partial selection, never sorts the whole domain
  kFullSort,         // sorts every candidate first
};

struct FilterScratch {
  std::vector<TokenId> order;
  std::vector<double> weights;
  std::vector<double> truncated;
  std::vector<double> probs;
};

// Candidate selection over a domain of penalized logits.
FilterIndexMap select_candidates(std::span<const double> logits,
                                 const SamplingParams& params, Domain domain,
                                 FilterScratch& scratch,
                                 Selection mode = Selection::kTruncationFirst);

// Stable softmax of logits / temperature into `probs`. Returns the
// normaliser sum_i exp((z_i - max) / temperature) and writes the max.
double subset_softmax(std::span<const double> logits, double temperature,
                      std::vector<double>& probs, double* max_out = nullptr);

namespace detail {
// Sum of exp((z_i - zmax) * inv_tau), written to `out` when non-null.
double exp_weights(const double* z, std::size_t n, double zmax, double inv_tau,
                   double* out);
}  // namespace detail

// Smallest i with cumulative probability > u. Rounding shortfalls land on
// the last index with positive mass.
std::size_t categorical_draw(std::span<const double> probs, double u);

struct Pick {
  TokenId index = 0;  // domain index
  double logprob = 0.0;
};

// Filter -> subset softmax -> categorical draw over one domain.
Pick sample_domain(std::span<const double> logits, const SamplingParams& params,
                   Domain domain, double u, FilterScratch& scratch,
                   WorkStats* stats = nullptr,
                   Selection mode = Selection::kTruncationFirst);

/// Inverse-CDF table for repeated draws from one fixed distribution.
/// Produces the same index as categorical_draw for every u.
class CategoricalTable {
 public:
  CategoricalTable() = default;
  explicit CategoricalTable(std::span<const double> probs);
  std::size_t draw(double u) const;
  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
  std::size_t last_positive_ = 0;
};

// ---------------------------------------------------------------------------
// Eigen-facing API.

template <typename Derived>
std::pair<FilterIndexMap, Vector<double>> build_filter_index_map(
    const Eigen::MatrixBase<Derived>& logits, const SamplingParams& params,
    Domain domain = Domain::kFullVocab) {
  const Vector<double> z = logits.template cast<double>();
  FilterScratch scratch;
  FilterIndexMap map = select_candidates(
      std::span<const double>(z.data(), static_cast<std::size_t>(z.size())),
      params, domain, scratch);
  Vector<double> truncated(static_cast<Eigen::Index>(map.size()));
  for (std::size_t i = 0; i < map.size(); ++i) {
    truncated(static_cast<Eigen::Index>(i)) = z(map.forward[i]);
  }
  return {std::move(map), std::move(truncated)};
}

template <typename Derived>
Vector<double> subset_softmax(const Eigen::MatrixBase<Derived>& logits,
                              double temperature) {
  const Vector<double> z = logits.template cast<double>();
  std::vector<double> probs;
  subset_softmax(
      std::span<const double>(z.data(), static_cast<std::size_t>(z.size())),
      temperature, probs);
  return Eigen::Map<const Vector<double>>(probs.data(),
                                          static_cast<Eigen::Index>(probs.size()));
}

template <typename Derived>
std::size_t categorical_draw(const Eigen::MatrixBase<Derived>& probs,
                             double u) {
  const Vector<double> p = probs.template cast<double>();
  return categorical_draw(
      std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), u);
}

// Reference sampler over the full vocabulary: penalties, truncation-first
// filter, subset softmax, categorical draw with draws[0], remap to the
// vocabulary. `logits` are raw (unpenalized) logits.
TokenDecision sample_full(std::span<const double> raw_logits,
                          const SequenceState& state,
                          const SamplingParams& params, const Draws& draws,
                          WorkStats* stats = nullptr);

template <typename Derived>
TokenDecision sample_full(const Eigen::MatrixBase<Derived>& raw_logits,
                          const SequenceState& state,
                          const SamplingParams& params, const Draws& draws,
                          WorkStats* stats = nullptr) {
  const Vector<double> z = raw_logits.template cast<double>();
  return sample_full(
      std::span<const double>(z.data(), static_cast<std::size_t>(z.size())),
      state, params, draws, stats);
}

}  // namespace dplane
