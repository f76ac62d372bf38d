// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Counter-based uniform variates. A draw is a pure function of
// (seed, iteration, sequence, index), so any worker can produce the
// variates of any sequence and the result never depends on how sequences
// are partitioned.

#pragma once

#include "dplane/core.hpp"

namespace dplane {

// Per-(iteration, sequence) draw slots.
enum DrawIndex : std::uint32_t { kHotDraw = 0, kAcceptDraw = 1, kTailDraw = 2 };
inline constexpr std::uint32_t kDrawsPerSequence = 3;

struct DrawKey {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t seq_id = 0;
  std::uint32_t draw_index = 0;
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t draw_bits(const DrawKey& k) {
  std::uint64_t h = mix64(k.seed);
  h = mix64(h ^ k.iteration);
  h = mix64(h ^ k.seq_id);
  return mix64(h ^ k.draw_index);
}

// Uniform in [0, 1) with 53 random bits.
constexpr double draw(const DrawKey& k) {
  return static_cast<double>(draw_bits(k) >> 11) * 0x1.0p-53;
}

inline Draws draws_for(std::uint64_t seed, std::uint64_t iteration,
                       std::uint64_t seq_id) {
  return {draw({seed, iteration, seq_id, kHotDraw}),
          draw({seed, iteration, seq_id, kAcceptDraw}),
          draw({seed, iteration, seq_id, kTailDraw})};
}

// block(b, i) = draw(seed, iteration, seq_ids[b], i); one row per sequence.
Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> pregenerate_slice(
    std::uint64_t seed, std::uint64_t iteration,
    std::span<const SeqId> seq_ids);

}  // namespace dplane
