// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Speculative hot-vocab sampling.
//
// With weights w_v = exp((z'_v - row_max) / tau) over the full row:
//   alpha = S_H / S_total,  q = w|H / S_H,  r = w|tail / S_tail.
// Draw y from q, accept with probability alpha, else draw from r. Since
// p(v) / q(v) = alpha on H, the output law is exactly softmax(z' / tau).
// An accepted draw reads only the H hot logits.

#pragma once

#include "dplane/core.hpp"
#include "dplane/filter.hpp"

#include <concepts>
#include <filesystem>
#include <utility>

namespace dplane {

class DegenerateRowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hot token set, kept in ranking order (most frequent first). Logits of
/// the hot set are always read in ascending id order; the tail is the
/// ascending complement and is never materialized.
class HotVocab {
 public:
  HotVocab(std::vector<TokenId> ranked_ids, int vocab_size);

  int size() const { return static_cast<int>(ids_.size()); }
  int vocab_size() const { return vocab_size_; }
  std::size_t tail_size() const {
    return static_cast<std::size_t>(vocab_size_) - ids_.size();
  }

  std::span<const TokenId> ids() const { return ids_; }
  std::span<const TokenId> sorted_ids() const { return sorted_; }
  // Hot-set index (ranking order) or -1 for tail ids.
  std::int32_t inverse(TokenId v) const { return inverse_[v]; }
  bool is_hot(TokenId v) const { return inverse_[v] >= 0; }

  // Full-vocabulary id of the j-th tail element in ascending order.
  TokenId tail_id(std::size_t j) const;

  // The first h ids of this ranking.
  HotVocab prefix(int h) const;

 private:
  int vocab_size_;
  std::vector<TokenId> ids_;
  std::vector<TokenId> sorted_;
  std::vector<std::int32_t> inverse_;
};

using TokenCount = std::pair<TokenId, std::uint64_t>;

// Top-H ids by count, ties to the smaller id. Ids absent from the trace
// count as zero.
HotVocab build_hot_vocab(std::span<const TokenCount> freq_trace, int vocab_size,
                         int hot_size);
// counts[v] is the count of token v.
HotVocab build_hot_vocab(std::span<const std::uint64_t> counts, int hot_size);

// `token_id<TAB>count` lines, '#' comments.
std::vector<TokenCount> load_token_counts(const std::filesystem::path& path);
// Writes counts in descending-count order.
void save_token_counts(const std::filesystem::path& path,
                       std::span<const TokenCount> counts);

// Producer-side per-row quantities, over the full penalized row.
struct RowContext {
  double row_max = 0.0;
  double total_expsum = 0.0;  // sum_v exp((z'_v - row_max) / tau)
};

RowContext compute_row_context(std::span<const double> penalized,
                               double temperature);

// w_v = exp((z_v - row_max) / tau).
std::vector<double> stable_weights(std::span<const double> logits,
                                   double row_max, double temperature = 1.0);

// alpha = S_H / S_total. Throws DegenerateRowError when S_total <= 0.
double hot_mass(double hot_sum, double total_sum);

// Random access to one penalized logits row.
template <typename R>
concept LogitsRow = requires(const R& r, std::span<const TokenId> ids,
                             std::vector<double>& out) {
  { r.size() } -> std::convertible_to<std::size_t>;
  r.gather(ids, out);             // out[i] = z'[ids[i]]
  r.gather_complement(ids, out);  // z' over the ascending complement of ids
};

// A contiguous, already penalized row.
struct DenseRow {
  std::span<const double> z;

  std::size_t size() const { return z.size(); }
  void gather(std::span<const TokenId> ids, std::vector<double>& out) const {
    out.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = z[ids[i]];
  }
  void gather_complement(std::span<const TokenId> sorted_ids,
                         std::vector<double>& out) const {
    out.clear();
    out.reserve(z.size() - sorted_ids.size());
    std::size_t v = 0;
    for (TokenId h : sorted_ids) {
      for (; v < static_cast<std::size_t>(h); ++v) out.push_back(z[v]);
      v = static_cast<std::size_t>(h) + 1;
    }
    for (; v < z.size(); ++v) out.push_back(z[v]);
  }
};

struct ShvsScratch {
  std::vector<double> hot;
  std::vector<double> tail;
  FilterScratch filter;
};

struct ShvsOutcome {
  TokenId token = 0;
  bool accepted = false;
  double alpha = 0.0;
  double logprob = 0.0;
};

namespace detail {

struct HotPass {
  double alpha = 0.0;
  double hot_sum = 0.0;
};

// Hot mass, plus the softmax of the hot logits in scratch.filter.probs
// when `need_probs` is set.
HotPass hot_pass(const std::vector<double>& hot_logits, bool tail_empty,
                 const RowContext& ctx, double temperature,
                 FilterScratch& scratch, bool need_probs = true);

}  // namespace detail

// One SHVS decision. `draws` = (u_hot, u_accept, u_tail); acceptance is
// u_accept < alpha. Truncation, when enabled, runs inside the chosen
// sub-vocabulary. The tail is read only on rejection.
template <LogitsRow Row>
ShvsOutcome shvs_sample(const Row& row, const RowContext& ctx,
                        const HotVocab& hot, const SamplingParams& params,
                        const Draws& draws, ShvsScratch& scratch,
                        WorkStats* stats = nullptr) {
  if (!(ctx.total_expsum > 0.0) || !std::isfinite(ctx.total_expsum) ||
      !std::isfinite(ctx.row_max)) {
    throw DegenerateRowError("row has no finite probability mass");
  }
  row.gather(hot.sorted_ids(), scratch.hot);
  const bool tail_empty = hot.tail_size() == 0;
  const detail::HotPass hp = detail::hot_pass(
      scratch.hot, tail_empty, ctx, params.temperature, scratch.filter,
      !params.truncation_active());
  if (stats) {
    stats->visits += scratch.hot.size();
    stats->alpha_sum += hp.alpha;
    ++stats->rows;
  }
  ShvsOutcome out;
  out.alpha = hp.alpha;
  if (draws[1] < hp.alpha) {
    std::size_t i;
    double logq;
    if (params.truncation_active()) {
      const Pick pick = sample_domain(scratch.hot, params, Domain::kHotSet,
                                      draws[0], scratch.filter, stats);
      i = static_cast<std::size_t>(pick.index);
      logq = pick.logprob;
    } else {
      i = categorical_draw(scratch.filter.probs, draws[0]);
      logq = std::log(scratch.filter.probs[i]);
      if (stats) stats->truncated_visits += scratch.hot.size() + i + 1;
    }
    out.token = hot.sorted_ids()[i];
    out.accepted = true;
    out.logprob = std::log(hp.alpha) + logq;
    if (stats) ++stats->accepted;
    return out;
  }
  row.gather_complement(hot.sorted_ids(), scratch.tail);
  if (stats) stats->visits += scratch.tail.size();
  const Pick pick = sample_domain(scratch.tail, params, Domain::kTailSet,
                                  draws[2], scratch.filter, stats);
  out.token = hot.tail_id(static_cast<std::size_t>(pick.index));
  out.logprob = std::log1p(-hp.alpha) + pick.logprob;
  return out;
}

// Exact output law alpha * q + (1 - alpha) * r of shvs_sample over a dense
// penalized row, with q and r filtered as in the sampler.
std::vector<double> analytic_shvs_distribution(std::span<const double> penalized,
                                               const HotVocab& hot,
                                               const SamplingParams& params);

// Law of the full-vocabulary path over a penalized row (filter + softmax,
// scattered back to V entries).
std::vector<double> full_distribution(std::span<const double> penalized,
                                      const SamplingParams& params);

// Fraction of decisions taken on the hot path. Throws on an empty window.
double acceptance_rate(std::span<const TokenDecision> window);
double acceptance_rate(const WorkStats& stats);

/// Both SHVS proposals of one fixed row, tabulated for repeated draws.
/// sample() returns the token shvs_sample would return for the same draws.
class PreparedShvsRow {
 public:
  PreparedShvsRow(std::span<const double> penalized, const HotVocab& hot,
                  const SamplingParams& params);

  TokenId sample(const Draws& draws, bool* accepted = nullptr) const;
  double alpha() const { return alpha_; }

 private:
  double alpha_ = 1.0;
  std::vector<TokenId> hot_ids_;
  std::vector<TokenId> tail_ids_;
  CategoricalTable hot_;
  CategoricalTable tail_;
};

/// Full-vocabulary path of one fixed row, tabulated for repeated draws.
class PreparedFullRow {
 public:
  PreparedFullRow(std::span<const double> penalized,
                  const SamplingParams& params);
  TokenId sample(double u) const;

 private:
  std::vector<TokenId> ids_;
  CategoricalTable table_;
};

}  // namespace dplane
