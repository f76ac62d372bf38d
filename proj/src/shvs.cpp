// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/shvs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace dplane {

HotVocab::HotVocab(std::vector<TokenId> ranked_ids, int vocab_size)
    : vocab_size_(vocab_size),
      ids_(std::move(ranked_ids)),
      inverse_(static_cast<std::size_t>(std::max(vocab_size, 0)), -1) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (ids_.empty() || ids_.size() > static_cast<std::size_t>(vocab_size)) {
    throw std::invalid_argument("hot size must be in [1, V]");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const TokenId v = ids_[i];
    if (v < 0 || v >= vocab_size) {
      throw RangeError("hot id " + std::to_string(v) + " outside vocabulary");
    }
    if (inverse_[v] >= 0) {
      throw std::invalid_argument("duplicate hot id " + std::to_string(v));
    }
    inverse_[v] = static_cast<std::int32_t>(i);
  }
  sorted_ = ids_;
  std::sort(sorted_.begin(), sorted_.end());
}

TokenId HotVocab::tail_id(std::size_t j) const {
  if (j >= tail_size()) throw RangeError("tail index out of range");
  // Tail ids below sorted_[i] number sorted_[i] - i.
  std::size_t lo = 0;
  std::size_t hi = sorted_.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (static_cast<std::size_t>(sorted_[mid]) - mid > j) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return static_cast<TokenId>(j + lo);
}

HotVocab HotVocab::prefix(int h) const {
  if (h < 1 || h > size()) throw std::invalid_argument("prefix size out of range");
  return HotVocab(std::vector<TokenId>(ids_.begin(), ids_.begin() + h),
                  vocab_size_);
}

HotVocab build_hot_vocab(std::span<const std::uint64_t> counts, int hot_size) {
  const int v = static_cast<int>(counts.size());
  if (hot_size < 1 || hot_size > v) {
    throw std::invalid_argument("hot size " + std::to_string(hot_size) +
                                " outside [1, " + std::to_string(v) + "]");
  }
  std::vector<TokenId> ids(counts.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto before = [&](TokenId a, TokenId b) {
    return counts[a] > counts[b] || (counts[a] == counts[b] && a < b);
  };
  std::partial_sort(ids.begin(), ids.begin() + hot_size, ids.end(), before);
  ids.resize(static_cast<std::size_t>(hot_size));
  return HotVocab(std::move(ids), v);
}

HotVocab build_hot_vocab(std::span<const TokenCount> freq_trace, int vocab_size,
                         int hot_size) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(vocab_size), 0);
  for (const auto& [id, c] : freq_trace) {
    if (id < 0 || id >= vocab_size) {
      throw RangeError("trace id " + std::to_string(id) + " outside vocabulary");
    }
    counts[id] += c;
  }
  return build_hot_vocab(counts, hot_size);
}

std::vector<TokenCount> load_token_counts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<TokenCount> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    long long id = -1;
    long long count = -1;
    std::string extra;
    if (!(fields >> id >> count) || (fields >> extra) || id < 0 || count < 0 ||
        id > std::numeric_limits<TokenId>::max()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected token_id<TAB>count");
    }
    out.emplace_back(static_cast<TokenId>(id), static_cast<std::uint64_t>(count));
  }
  return out;
}

void save_token_counts(const std::filesystem::path& path,
                       std::span<const TokenCount> counts) {
  std::vector<TokenCount> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# token_id\tcount\n";
  for (const auto& [id, c] : sorted) out << id << '\t' << c << '\n';
}

RowContext compute_row_context(std::span<const double> penalized,
                               double temperature) {
  RowContext ctx;
  ctx.row_max = -std::numeric_limits<double>::infinity();
  for (double z : penalized) ctx.row_max = std::max(ctx.row_max, z);
  if (!std::isfinite(ctx.row_max)) return ctx;
  const double inv_tau = 1.0 / temperature;
  ctx.total_expsum = detail::exp_weights(penalized.data(), penalized.size(), ctx.row_max,
                                         inv_tau, nullptr);
  return ctx;
}

std::vector<double> stable_weights(std::span<const double> logits,
                                   double row_max, double temperature) {
  std::vector<double> w(logits.size());
  const double inv_tau = 1.0 / temperature;
  detail::exp_weights(logits.data(), logits.size(), row_max, inv_tau, w.data());
  return w;
}

double hot_mass(double hot_sum, double total_sum) {
  if (!(total_sum > 0.0) || !std::isfinite(total_sum)) {
    throw DegenerateRowError("total probability mass is zero");
  }
  return std::clamp(hot_sum / total_sum, 0.0, 1.0);
}

namespace detail {

HotPass hot_pass(const std::vector<double>& hot_logits, bool tail_empty,
                 const RowContext& ctx, double temperature,
                 FilterScratch& scratch, bool need_probs) {
  HotPass hp;
  const double m = *std::max_element(hot_logits.begin(), hot_logits.end());
  if (!std::isfinite(m)) {
    // No hot mass: every draw goes to the tail.
    if (tail_empty) throw DegenerateRowError("row has no finite probability mass");
    return hp;
  }
  const double sum =
      need_probs ? subset_softmax(hot_logits, temperature, scratch.probs)
                 : exp_weights(hot_logits.data(), hot_logits.size(), m, 1.0 / temperature,
                               nullptr);
  hp.hot_sum = std::exp((m - ctx.row_max) / temperature) * sum;
  hp.alpha = tail_empty ? 1.0 : hot_mass(hp.hot_sum, ctx.total_expsum);
  return hp;
}

}  // namespace detail

namespace {

// Filtered proposal over one sub-vocabulary, scattered to full ids.
void add_proposal(std::span<const double> z, std::span<const TokenId> ids,
                  const SamplingParams& params, Domain domain, double scale,
                  std::vector<double>& law) {
  FilterScratch scratch;
  const FilterIndexMap map = select_candidates(z, params, domain, scratch);
  std::vector<double> sub(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) sub[i] = z[map.forward[i]];
  std::vector<double> probs;
  subset_softmax(sub, params.temperature, probs);
  for (std::size_t i = 0; i < map.size(); ++i) {
    law[ids[map.forward[i]]] += scale * probs[i];
  }
}

std::vector<TokenId> tail_ids_of(const HotVocab& hot) {
  std::vector<TokenId> tail;
  tail.reserve(hot.tail_size());
  std::size_t v = 0;
  for (TokenId h : hot.sorted_ids()) {
    for (; v < static_cast<std::size_t>(h); ++v) tail.push_back(static_cast<TokenId>(v));
    v = static_cast<std::size_t>(h) + 1;
  }
  for (; v < static_cast<std::size_t>(hot.vocab_size()); ++v) {
    tail.push_back(static_cast<TokenId>(v));
  }
  return tail;
}

struct SplitRow {
  std::vector<double> hot;
  std::vector<double> tail;
  std::vector<TokenId> tail_ids;
  double alpha = 1.0;
};

SplitRow split_row(std::span<const double> penalized, const HotVocab& hot,
                   const SamplingParams& params) {
  if (penalized.size() != static_cast<std::size_t>(hot.vocab_size())) {
    throw std::invalid_argument("row length differs from hot-set vocabulary");
  }
  const DenseRow row{penalized};
  SplitRow s;
  row.gather(hot.sorted_ids(), s.hot);
  row.gather_complement(hot.sorted_ids(), s.tail);
  s.tail_ids = tail_ids_of(hot);
  const RowContext ctx = compute_row_context(penalized, params.temperature);
  if (!(ctx.total_expsum > 0.0)) {
    throw DegenerateRowError("row has no finite probability mass");
  }
  FilterScratch scratch;
  s.alpha = detail::hot_pass(s.hot, s.tail.empty(), ctx, params.temperature,
                             scratch, false)
                .alpha;
  return s;
}

}  // namespace

std::vector<double> analytic_shvs_distribution(std::span<const double> penalized,
                                               const HotVocab& hot,
                                               const SamplingParams& params) {
  const SplitRow s = split_row(penalized, hot, params);
  std::vector<double> law(penalized.size(), 0.0);
  if (s.alpha > 0.0) {
    add_proposal(s.hot, hot.sorted_ids(), params, Domain::kHotSet, s.alpha, law);
  }
  if (s.alpha < 1.0) {
    add_proposal(s.tail, s.tail_ids, params, Domain::kTailSet, 1.0 - s.alpha,
                 law);
  }
  return law;
}

std::vector<double> full_distribution(std::span<const double> penalized,
                                      const SamplingParams& params) {
  std::vector<TokenId> ids(penalized.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<double> law(penalized.size(), 0.0);
  add_proposal(penalized, ids, params, Domain::kFullVocab, 1.0, law);
  return law;
}

double acceptance_rate(std::span<const TokenDecision> window) {
  if (window.empty()) throw std::invalid_argument("empty acceptance window");
  std::size_t hits = 0;
  for (const auto& d : window) hits += d.accepted_hot ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(window.size());
}

double acceptance_rate(const WorkStats& stats) {
  if (stats.rows == 0) throw std::invalid_argument("empty acceptance window");
  return static_cast<double>(stats.accepted) / static_cast<double>(stats.rows);
}

namespace {

// Filter + softmax over one domain, returning full ids and probabilities
// in the order the sampler draws from.
CategoricalTable proposal_table(std::span<const double> z,
                                std::span<const TokenId> ids,
                                const SamplingParams& params, Domain domain,
                                std::vector<TokenId>& out_ids) {
  FilterScratch scratch;
  std::vector<double> probs;
  if (params.truncation_active()) {
    const FilterIndexMap map = select_candidates(z, params, domain, scratch);
    std::vector<double> sub(map.size());
    out_ids.resize(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
      sub[i] = z[map.forward[i]];
      out_ids[i] = ids[map.forward[i]];
    }
    subset_softmax(sub, params.temperature, probs);
  } else {
    out_ids.assign(ids.begin(), ids.end());
    subset_softmax(z, params.temperature, probs);
  }
  return CategoricalTable(probs);
}

}  // namespace

PreparedShvsRow::PreparedShvsRow(std::span<const double> penalized,
                                 const HotVocab& hot,
                                 const SamplingParams& params) {
  const SplitRow s = split_row(penalized, hot, params);
  alpha_ = s.alpha;
  if (alpha_ > 0.0) {
    hot_ = proposal_table(s.hot, hot.sorted_ids(), params, Domain::kHotSet,
                          hot_ids_);
  }
  if (alpha_ < 1.0) {
    tail_ = proposal_table(s.tail, s.tail_ids, params, Domain::kTailSet,
                           tail_ids_);
  }
}

TokenId PreparedShvsRow::sample(const Draws& draws, bool* accepted) const {
  const bool hit = draws[1] < alpha_;
  if (accepted) *accepted = hit;
  return hit ? hot_ids_[hot_.draw(draws[0])] : tail_ids_[tail_.draw(draws[2])];
}

PreparedFullRow::PreparedFullRow(std::span<const double> penalized,
                                 const SamplingParams& params) {
  std::vector<TokenId> ids(penalized.size());
  std::iota(ids.begin(), ids.end(), 0);
  table_ = proposal_table(penalized, ids, params, Domain::kFullVocab, ids_);
}

TokenId PreparedFullRow::sample(double u) const { return ids_[table_.draw(u)]; }

}  // namespace dplane
