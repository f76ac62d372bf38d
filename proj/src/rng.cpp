// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/rng.hpp"

namespace dplane {

Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> pregenerate_slice(
    std::uint64_t seed, std::uint64_t iteration,
    std::span<const SeqId> seq_ids) {
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> block(
      static_cast<Eigen::Index>(seq_ids.size()), 3);
  for (std::size_t b = 0; b < seq_ids.size(); ++b) {
    const Draws d = draws_for(seed, iteration, seq_ids[b]);
    for (int i = 0; i < 3; ++i) block(static_cast<Eigen::Index>(b), i) = d[i];
  }
  return block;
}

}  // namespace dplane
