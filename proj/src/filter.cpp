// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/filter.hpp"

#include "dplane/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dplane {
namespace {

struct RanksBefore {
  const double* z;
  bool operator()(TokenId a, TokenId b) const {
    return z[a] > z[b] || (z[a] == z[b] && a < b);
  }
};

// Best `k` of `n` in ranked order, via a bounded heap whose front is the
// worst survivor. O(n log k), never sorts the whole domain.
void top_k_ranked(const double* z, std::size_t n, std::size_t k,
                  std::vector<TokenId>& out) {
  out.clear();
  if (k == 0) return;
  const RanksBefore before{z};
  out.reserve(k);
  std::size_t v = 0;
  for (; v < n && out.size() < k; ++v) out.push_back(static_cast<TokenId>(v));
  std::make_heap(out.begin(), out.end(), before);
  for (; v < n; ++v) {
    const TokenId worst = out.front();
    // Ties lose to the incumbent: it has the smaller id.
    if (!(z[v] > z[worst])) continue;
    std::pop_heap(out.begin(), out.end(), before);
    out.back() = static_cast<TokenId>(v);
    std::push_heap(out.begin(), out.end(), before);
  }
  std::sort_heap(out.begin(), out.end(), before);
}

double domain_max(const double* z, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < n; ++v) m = std::max(m, z[v]);
  return m;
}

double weight(double z, double zmax, double inv_tau) {
  return std::exp((z - zmax) * inv_tau);
}

// Cut `ranked` to the shortest prefix whose mass reaches top_p * total.
void cut_nucleus(const double* z, std::vector<TokenId>& ranked, double zmax,
                 double inv_tau, double target) {
  double cum = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    cum += weight(z[ranked[i]], zmax, inv_tau);
    if (cum >= target) {
      ranked.resize(i + 1);
      return;
    }
  }
}

// Ranked lists are nonincreasing in weight, so min-p cuts a suffix.
void cut_min_p(const double* z, std::vector<TokenId>& ranked, double zmax,
               double inv_tau, double min_p) {
  std::size_t keep = 0;
  while (keep < ranked.size() && weight(z[ranked[keep]], zmax, inv_tau) >= min_p) {
    ++keep;
  }
  ranked.resize(std::max<std::size_t>(keep, 1));
}

double natural_sum(const double* z, std::size_t n, double zmax,
                   double inv_tau) {
  double s = 0.0;
  for (std::size_t v = 0; v < n; ++v) s += weight(z[v], zmax, inv_tau);
  return s;
}

void select_truncation_first(const double* z, std::size_t n,
                             const SamplingParams& p,
                             std::vector<TokenId>& out) {
  const double inv_tau = 1.0 / p.temperature;
  if (p.top_k) {
    top_k_ranked(z, n, std::min<std::size_t>(*p.top_k, n), out);
    const double zmax = z[out.front()];
    if (p.top_p < 1.0) {
      double s = 0.0;
      for (TokenId v : out) s += weight(z[v], zmax, inv_tau);
      cut_nucleus(z, out, zmax, inv_tau, p.top_p * s);
    }
    if (p.min_p > 0.0) cut_min_p(z, out, zmax, inv_tau, p.min_p);
    return;
  }
  const double zmax = domain_max(z, n);
  if (p.top_p < 1.0) {
    const double target = p.top_p * natural_sum(z, n, zmax, inv_tau);
    // Grow a ranked prefix until it holds the nucleus.
    std::size_t g = std::min<std::size_t>(n, 64);
    for (;;) {
      top_k_ranked(z, n, g, out);
      double cum = 0.0;
      std::size_t cut = 0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        cum += weight(z[out[i]], zmax, inv_tau);
        if (cum >= target) {
          cut = i + 1;
          break;
        }
      }
      if (cut != 0) {
        out.resize(cut);
        break;
      }
      if (g == n) break;
      g = std::min(n, g * 4);
    }
    if (p.min_p > 0.0) cut_min_p(z, out, zmax, inv_tau, p.min_p);
    return;
  }
  // min-p alone: screen on the logit threshold, confirm on the exact weight.
  out.clear();
  const double z_cut = zmax + p.temperature * std::log(p.min_p) - 1e-6;
  for (std::size_t v = 0; v < n; ++v) {
    if (z[v] >= z_cut && weight(z[v], zmax, inv_tau) >= p.min_p) {
      out.push_back(static_cast<TokenId>(v));
    }
  }
  std::sort(out.begin(), out.end(), RanksBefore{z});
}

void select_full_sort(const double* z, std::size_t n, const SamplingParams& p,
                      std::vector<TokenId>& out) {
  const double inv_tau = 1.0 / p.temperature;
  out.resize(n);
  std::iota(out.begin(), out.end(), 0);
  std::sort(out.begin(), out.end(), RanksBefore{z});
  const double zmax = z[out.front()];
  if (p.top_k) out.resize(std::min<std::size_t>(*p.top_k, n));
  if (p.top_p < 1.0) {
    double s = 0.0;
    if (p.top_k) {
      for (TokenId v : out) s += weight(z[v], zmax, inv_tau);
    } else {
      s = natural_sum(z, n, zmax, inv_tau);
    }
    cut_nucleus(z, out, zmax, inv_tau, p.top_p * s);
  }
  if (p.min_p > 0.0) cut_min_p(z, out, zmax, inv_tau, p.min_p);
}

}  // namespace

const char* to_string(Domain d) {
  switch (d) {
    case Domain::kFullVocab:
      return "full-vocab";
    case Domain::kHotSet:
      return "hot-set";
    case Domain::kTailSet:
      return "tail-set";
  }
  return "?";
}

std::vector<std::int32_t> FilterIndexMap::inverse(std::size_t domain_size) const {
  std::vector<std::int32_t> inv(domain_size, -1);
  for (std::size_t i = 0; i < forward.size(); ++i) {
    inv[static_cast<std::size_t>(forward[i])] = static_cast<std::int32_t>(i);
  }
  return inv;
}

FilterIndexMap select_candidates(std::span<const double> logits,
                                 const SamplingParams& params, Domain domain,
                                 FilterScratch& scratch, Selection mode) {
  if (logits.empty()) throw std::invalid_argument("empty filter domain");
  FilterIndexMap map;
  map.domain = domain;
  const std::size_t n = logits.size();
  if (!params.truncation_active()) {
    map.forward.resize(n);
    std::iota(map.forward.begin(), map.forward.end(), 0);
    return map;
  }
  map.ranked = true;
  if (mode == Selection::kFullSort) {
    select_full_sort(logits.data(), n, params, scratch.order);
  } else {
    select_truncation_first(logits.data(), n, params, scratch.order);
  }
  map.forward.assign(scratch.order.begin(), scratch.order.end());
  return map;
}

double detail::exp_weights(const double* z, std::size_t n, double zmax,
                           double inv_tau, double* out) {
  double s = 0.0;
  if (out) {
    for (std::size_t i = 0; i < n; ++i) s += out[i] = weight(z[i], zmax, inv_tau);
  } else {
    for (std::size_t i = 0; i < n; ++i) s += weight(z[i], zmax, inv_tau);
  }
  return s;
}

double subset_softmax(std::span<const double> logits, double temperature,
                      std::vector<double>& probs, double* max_out) {
  if (logits.empty()) throw std::invalid_argument("empty softmax input");
  const double inv_tau = 1.0 / temperature;
  const double m = domain_max(logits.data(), logits.size());
  if (!std::isfinite(m)) throw std::domain_error("softmax input has no finite logit");
  probs.resize(logits.size());
  const double s = detail::exp_weights(logits.data(), logits.size(), m, inv_tau, probs.data());
  const double inv = 1.0 / s;
  for (double& p : probs) p *= inv;
  if (max_out) *max_out = m;
  return s;
}

std::size_t categorical_draw(std::span<const double> probs, double u) {
  if (probs.empty()) throw std::invalid_argument("empty distribution");
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    cum += probs[i];
    if (cum > u && probs[i] > 0.0) return i;
  }
  return last_positive;
}

CategoricalTable::CategoricalTable(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("empty distribution");
  cdf_.resize(probs.size());
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive_ = i;
    cum += probs[i];
    cdf_[i] = cum;
  }
}

std::size_t CategoricalTable::draw(double u) const {
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) return last_positive_;
  // Zero-mass entries share their predecessor's cdf; upper_bound already
  // lands on the first index whose cdf exceeds u, which has positive mass.
  return static_cast<std::size_t>(it - cdf_.begin());
}

Pick sample_domain(std::span<const double> logits, const SamplingParams& params,
                   Domain domain, double u, FilterScratch& scratch,
                   WorkStats* stats, Selection mode) {
  std::span<const double> z = logits;
  FilterIndexMap map;
  const bool truncate = params.truncation_active();
  if (truncate) {
    map = select_candidates(logits, params, domain, scratch, mode);
    scratch.truncated.resize(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
      scratch.truncated[i] = logits[static_cast<std::size_t>(map.forward[i])];
    }
    z = scratch.truncated;
  }
  subset_softmax(z, params.temperature, scratch.probs);
  const std::size_t i = categorical_draw(scratch.probs, u);
  if (stats) stats->truncated_visits += z.size() + i + 1;
  Pick pick;
  pick.index = truncate ? map.forward[i] : static_cast<TokenId>(i);
  pick.logprob = std::log(scratch.probs[i]);
  return pick;
}

TokenDecision sample_full(std::span<const double> raw_logits,
                          const SequenceState& state,
                          const SamplingParams& params, const Draws& draws,
                          WorkStats* stats) {
  if (raw_logits.size() != static_cast<std::size_t>(state.vocab_size())) {
    throw std::invalid_argument("logits row length differs from vocabulary");
  }
  std::vector<double> z(raw_logits.begin(), raw_logits.end());
  if (!params.penalties_neutral()) {
    const double f = repetition_factor(params.repetition_penalty);
    for (TokenId v : state.penalized_ids()) {
      z[static_cast<std::size_t>(v)] =
          penalize_one(z[static_cast<std::size_t>(v)], v, state, params, f);
    }
  }
  FilterScratch scratch;
  const Pick pick =
      sample_domain(z, params, Domain::kFullVocab, draws[0], scratch, stats);
  if (stats) {
    stats->visits += z.size();
    ++stats->rows;
  }
  TokenDecision d;
  d.seq_id = state.id();
  d.token = pick.index;
  d.logprob = static_cast<float>(pick.logprob);
  return d;
}

}  // namespace dplane
