// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Column-wise penalties over one sequence's logits.
//
// Repetition: Z'_v = Z_v / f_v with f_v = 1 + (lambda_rep - 1) * (M_p,v | M_o,v).
// Presence/frequency: Z'_v = Z_v - lambda_pres * M_o,v - lambda_freq * C_o,v.
// Repetition is applied first. Only ids in the state's penalized set are
// visited; every other entry is left bit-identical.

#pragma once

#include "dplane/core.hpp"

namespace dplane {

// Applies the histogram update for one committed token (C_o += Hist([v])).
inline void update_output_histogram(SequenceState& state, TokenId token) {
  state.append(token);
}

inline double repetition_factor(double lambda_rep) {
  return 1.0 + (lambda_rep - 1.0);
}

// Penalized value of one entry. Every path that produces penalized logits
// goes through this so the arithmetic is identical everywhere.
inline double penalize_one(double z, TokenId v, const SequenceState& state,
                           const SamplingParams& params, double rep_factor) {
  if (!state.penalized(v)) return z;
  z = z / rep_factor;
  if (state.in_output(v)) {
    z = z - params.presence_penalty -
        params.frequency_penalty * static_cast<double>(state.output_count(v));
  }
  return z;
}

template <typename Derived>
void apply_repetition_penalty_inplace(const Eigen::MatrixBase<Derived>& logits_,
                                      const SequenceState& state,
                                      double lambda_rep) {
  auto& logits = const_cast<Eigen::MatrixBase<Derived>&>(logits_);
  if (lambda_rep == 1.0) return;
  const double f = repetition_factor(lambda_rep);
  for (TokenId v : state.penalized_ids()) {
    logits(v) = static_cast<typename Derived::Scalar>(logits(v) / f);
  }
}

template <typename Derived>
void apply_presence_frequency_inplace(const Eigen::MatrixBase<Derived>& logits_,
                                      const SequenceState& state,
                                      double presence, double frequency) {
  auto& logits = const_cast<Eigen::MatrixBase<Derived>&>(logits_);
  if (presence == 0.0 && frequency == 0.0) return;
  for (TokenId v : state.penalized_ids()) {
    if (!state.in_output(v)) continue;
    logits(v) = static_cast<typename Derived::Scalar>(
        logits(v) - presence -
        frequency * static_cast<double>(state.output_count(v)));
  }
}

template <typename Derived>
void apply_penalties_inplace(const Eigen::MatrixBase<Derived>& logits,
                             const SequenceState& state,
                             const SamplingParams& params) {
  if (params.penalties_neutral()) return;
  apply_repetition_penalty_inplace(logits, state, params.repetition_penalty);
  apply_presence_frequency_inplace(logits, state, params.presence_penalty,
                                   params.frequency_penalty);
}

template <typename Derived>
Vector<typename Derived::Scalar> apply_repetition_penalty(
    const Eigen::MatrixBase<Derived>& logits, const SequenceState& state,
    double lambda_rep) {
  Vector<typename Derived::Scalar> out = logits;
  apply_repetition_penalty_inplace(out, state, lambda_rep);
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> apply_presence_frequency(
    const Eigen::MatrixBase<Derived>& logits, const SequenceState& state,
    double presence, double frequency) {
  Vector<typename Derived::Scalar> out = logits;
  apply_presence_frequency_inplace(out, state, presence, frequency);
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> apply_penalties(
    const Eigen::MatrixBase<Derived>& logits, const SequenceState& state,
    const SamplingParams& params) {
  Vector<typename Derived::Scalar> out = logits;
  apply_penalties_inplace(out, state, params);
  return out;
}

}  // namespace dplane
