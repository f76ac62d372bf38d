// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Logits shard layout, batch partitioning, and the zero-copy view a sampler
// reads its columns through.

#pragma once

#include "dplane/core.hpp"
#include "dplane/transport/frame.hpp"

#include <memory>
#include <unordered_map>

namespace dplane {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IncompleteIterationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const IndexRange&) const = default;
};

// m contiguous blocks of [0, B), larger blocks first, sizes within one.
std::vector<IndexRange> partition_batch(std::size_t batch, std::size_t workers);

// Vocabulary tiles of V / t ids each. Throws ConfigError unless t divides V.
std::vector<IndexRange> shard_ranges(std::size_t vocab, std::size_t tp);

/// One TP rank's slice of an iteration's logits: (v_hi - v_lo) x B floats,
/// vocabulary contiguous within each sequence column.
struct LogitsShardBlock {
  std::uint64_t iteration = 0;
  std::uint16_t rank = 0;
  std::uint16_t tp = 1;
  std::uint32_t v_lo = 0;
  std::uint32_t v_hi = 0;
  Vector<double> row_max;       // B, over the full vocabulary
  Vector<double> total_expsum;  // B, over the full vocabulary
  Matrix<float> values;

  std::size_t batch() const { return static_cast<std::size_t>(values.cols()); }
  bool operator==(const LogitsShardBlock& o) const;
};

RawFrame to_frame(const LogitsShardBlock& block);
LogitsShardBlock shard_from_frame(const RawFrame& f);
// Decodes into an existing block, reusing its storage.
void shard_from_frame(const RawFrame& f, LogitsShardBlock& out);

/// V x |B_j| logical matrix over t shard blocks. Element (v, j) reads
/// shard v / (V/t), local row v % (V/t), column begin + j. Nothing is copied
/// except by materialize(), which counts the elements it copies.
class AssembledLogitsView {
 public:
  AssembledLogitsView(std::vector<const LogitsShardBlock*> shards,
                      IndexRange columns);

  std::size_t vocab_size() const { return vocab_; }
  std::size_t cols() const { return columns_.size(); }
  IndexRange columns() const { return columns_; }
  std::uint64_t iteration() const { return shards_.front()->iteration; }

  // Column j of this view (batch column columns().begin + j).
  float operator()(std::size_t v, std::size_t j) const {
    const std::size_t c = checked_column(j);
    return shards_[v / rows_]->values(static_cast<Eigen::Index>(v % rows_),
                                      static_cast<Eigen::Index>(c));
  }
  // Contiguous slice of column j held by `rank`.
  Eigen::Map<const Vector<float>> segment(std::size_t rank, std::size_t j) const;

  double row_max(std::size_t j) const {
    return shards_.front()->row_max(static_cast<Eigen::Index>(checked_column(j)));
  }
  double total_expsum(std::size_t j) const {
    return shards_.front()->total_expsum(
        static_cast<Eigen::Index>(checked_column(j)));
  }

  std::size_t rows_per_shard() const { return rows_; }
  std::size_t tp() const { return shards_.size(); }

  Matrix<float> materialize() const;
  std::uint64_t copies() const { return copies_; }

 private:
  std::size_t checked_column(std::size_t j) const {
    if (j >= columns_.size()) {
      throw std::out_of_range("column " + std::to_string(j) +
                              " outside this view's partition");
    }
    return columns_.begin + j;
  }

  std::vector<const LogitsShardBlock*> shards_;
  IndexRange columns_;
  std::size_t vocab_ = 0;
  std::size_t rows_ = 0;
  mutable std::uint64_t copies_ = 0;
};

AssembledLogitsView assemble_view(std::span<const LogitsShardBlock* const> shards,
                                  IndexRange columns);

// Splits a V x B vocabulary-major matrix into t shard blocks.
std::vector<LogitsShardBlock> split_into_shards(const Matrix<float>& logits,
                                                std::size_t tp,
                                                std::uint64_t iteration,
                                                const Vector<double>& row_max,
                                                const Vector<double>& total_expsum);

// Collects one iteration's decisions from any number of partial batches.
class DecisionAssembler {
 public:
  DecisionAssembler(std::uint64_t iteration, std::span<const SeqId> expected);

  // Throws FrameError(kMalformed) on a duplicate, unknown, or
  // wrong-iteration decision.
  void add(std::span<const TokenDecision> batch);
  bool complete() const { return received_ == slots_.size(); }
  std::size_t missing() const { return slots_.size() - received_; }
  // Decisions in expected order. Requires complete().
  std::vector<TokenDecision> take();

 private:
  std::uint64_t iteration_;
  std::vector<SeqId> order_;
  std::vector<std::optional<TokenDecision>> slots_;
  std::unordered_map<SeqId, std::size_t> index_;
  std::size_t received_ = 0;
};

}  // namespace dplane
