// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/transport/layout.hpp"

namespace dplane {

std::vector<IndexRange> partition_batch(std::size_t batch, std::size_t workers) {
  if (workers == 0) throw std::invalid_argument("need at least one worker");
  std::vector<IndexRange> parts(workers);
  const std::size_t base = batch / workers;
  const std::size_t extra = batch % workers;
  std::size_t at = 0;
  for (std::size_t j = 0; j < workers; ++j) {
    const std::size_t n = base + (j < extra ? 1 : 0);
    parts[j] = {at, at + n};
    at += n;
  }
  return parts;
}

std::vector<IndexRange> shard_ranges(std::size_t vocab, std::size_t tp) {
  if (tp == 0 || vocab == 0) throw ConfigError("V and t must be positive");
  if (vocab % tp != 0) {
    throw ConfigError("vocabulary size " + std::to_string(vocab) +
                      " is not divisible by tensor-parallel degree " +
                      std::to_string(tp));
  }
  const std::size_t rows = vocab / tp;
  std::vector<IndexRange> out(tp);
  for (std::size_t r = 0; r < tp; ++r) out[r] = {r * rows, (r + 1) * rows};
  return out;
}

bool LogitsShardBlock::operator==(const LogitsShardBlock& o) const {
  return iteration == o.iteration && rank == o.rank && tp == o.tp &&
         v_lo == o.v_lo && v_hi == o.v_hi && row_max.size() == o.row_max.size() &&
         row_max == o.row_max && total_expsum.size() == o.total_expsum.size() &&
         total_expsum == o.total_expsum && values.rows() == o.values.rows() &&
         values.cols() == o.values.cols() && values == o.values;
}

RawFrame to_frame(const LogitsShardBlock& b) {
  const auto batch = static_cast<std::size_t>(b.values.cols());
  if (b.values.rows() != static_cast<Eigen::Index>(b.v_hi - b.v_lo) ||
      static_cast<std::size_t>(b.row_max.size()) != batch ||
      static_cast<std::size_t>(b.total_expsum.size()) != batch) {
    throw std::invalid_argument("shard block dimensions disagree");
  }
  ByteWriter w;
  w.bytes().reserve(16 + batch * 16 + static_cast<std::size_t>(b.values.size()) * 4);
  w.put<std::uint16_t>(b.rank);
  w.put<std::uint16_t>(b.tp);
  w.put<std::uint32_t>(b.v_lo);
  w.put<std::uint32_t>(b.v_hi);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(batch));
  w.put_array<double>({b.row_max.data(), batch});
  w.put_array<double>({b.total_expsum.data(), batch});
  // Column-major storage is already vocabulary-major.
  w.put_array<float>({b.values.data(), static_cast<std::size_t>(b.values.size())});
  return {FrameType::kLogitsShard, b.iteration, w.take()};
}

void shard_from_frame(const RawFrame& f, LogitsShardBlock& b) {
  if (f.type != FrameType::kLogitsShard) {
    throw FrameError(FrameErrorKind::kMalformed,
                     std::string("expected logits-shard frame, got ") + to_string(f.type));
  }
  ByteReader r(f.payload);
  b.iteration = f.iteration;
  b.rank = r.get<std::uint16_t>();
  b.tp = r.get<std::uint16_t>();
  b.v_lo = r.get<std::uint32_t>();
  b.v_hi = r.get<std::uint32_t>();
  const auto batch = r.get<std::uint32_t>();
  if (b.tp == 0 || b.rank >= b.tp || b.v_hi < b.v_lo) {
    throw FrameError(FrameErrorKind::kMalformed, "inconsistent shard header");
  }
  const std::size_t rows = b.v_hi - b.v_lo;
  if (r.remaining() != static_cast<std::size_t>(batch) * (16 + rows * 4)) {
    throw FrameError(FrameErrorKind::kMalformed, "shard payload size disagrees with header");
  }
  b.row_max.resize(batch);
  b.total_expsum.resize(batch);
  b.values.resize(static_cast<Eigen::Index>(rows), batch);
  r.get_array<double>({b.row_max.data(), batch});
  r.get_array<double>({b.total_expsum.data(), batch});
  r.get_array<float>({b.values.data(), static_cast<std::size_t>(b.values.size())});
}

LogitsShardBlock shard_from_frame(const RawFrame& f) {
  LogitsShardBlock b;
  shard_from_frame(f, b);
  return b;
}

AssembledLogitsView::AssembledLogitsView(
    std::vector<const LogitsShardBlock*> shards, IndexRange columns)
    : shards_(std::move(shards)), columns_(columns) {
  if (shards_.empty()) throw IncompleteIterationError("no shards for iteration");
  const std::size_t tp = shards_.size();
  for (std::size_t r = 0; r < tp; ++r) {
    if (shards_[r] == nullptr) {
      throw IncompleteIterationError("shard " + std::to_string(r) + " of " +
                                     std::to_string(tp) + " missing");
    }
  }
  const LogitsShardBlock& first = *shards_.front();
  rows_ = first.v_hi - first.v_lo;
  vocab_ = rows_ * tp;
  for (std::size_t r = 0; r < tp; ++r) {
    const LogitsShardBlock& s = *shards_[r];
    if (s.iteration != first.iteration) {
      throw IncompleteIterationError("shard " + std::to_string(r) +
                                     " belongs to iteration " +
                                     std::to_string(s.iteration) + ", expected " +
                                     std::to_string(first.iteration));
    }
    if (s.rank != r || s.tp != tp || s.v_lo != r * rows_ || s.v_hi != (r + 1) * rows_ ||
        s.batch() != first.batch()) {
      throw IncompleteIterationError("shard " + std::to_string(r) +
                                     " does not tile the vocabulary");
    }
  }
  if (columns_.end > first.batch() || columns_.begin > columns_.end) {
    throw std::out_of_range("column range outside the batch");
  }
}

Eigen::Map<const Vector<float>> AssembledLogitsView::segment(std::size_t rank,
                                                             std::size_t j) const {
  const std::size_t c = checked_column(j);
  const LogitsShardBlock& s = *shards_.at(rank);
  return {s.values.col(static_cast<Eigen::Index>(c)).data(),
          static_cast<Eigen::Index>(rows_)};
}

Matrix<float> AssembledLogitsView::materialize() const {
  Matrix<float> out(static_cast<Eigen::Index>(vocab_),
                    static_cast<Eigen::Index>(cols()));
  for (std::size_t j = 0; j < cols(); ++j) {
    for (std::size_t r = 0; r < shards_.size(); ++r) {
      out.col(static_cast<Eigen::Index>(j))
          .segment(static_cast<Eigen::Index>(r * rows_), static_cast<Eigen::Index>(rows_)) =
          segment(r, j);
    }
  }
  copies_ += static_cast<std::uint64_t>(out.size());
  return out;
}

AssembledLogitsView assemble_view(std::span<const LogitsShardBlock* const> shards,
                                  IndexRange columns) {
  return AssembledLogitsView({shards.begin(), shards.end()}, columns);
}

std::vector<LogitsShardBlock> split_into_shards(const Matrix<float>& logits,
                                                std::size_t tp,
                                                std::uint64_t iteration,
                                                const Vector<double>& row_max,
                                                const Vector<double>& total_expsum) {
  const auto ranges = shard_ranges(static_cast<std::size_t>(logits.rows()), tp);
  std::vector<LogitsShardBlock> out(tp);
  for (std::size_t r = 0; r < tp; ++r) {
    LogitsShardBlock& b = out[r];
    b.iteration = iteration;
    b.rank = static_cast<std::uint16_t>(r);
    b.tp = static_cast<std::uint16_t>(tp);
    b.v_lo = static_cast<std::uint32_t>(ranges[r].begin);
    b.v_hi = static_cast<std::uint32_t>(ranges[r].end);
    b.row_max = row_max;
    b.total_expsum = total_expsum;
    b.values = logits.middleRows(static_cast<Eigen::Index>(ranges[r].begin),
                                 static_cast<Eigen::Index>(ranges[r].size()));
  }
  return out;
}

DecisionAssembler::DecisionAssembler(std::uint64_t iteration,
                                     std::span<const SeqId> expected)
    : iteration_(iteration),
      order_(expected.begin(), expected.end()),
      slots_(expected.size()) {
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (!index_.emplace(order_[i], i).second) {
      throw std::invalid_argument("duplicate sequence id in batch");
    }
  }
}

void DecisionAssembler::add(std::span<const TokenDecision> batch) {
  for (const TokenDecision& d : batch) {
    if (d.iteration != iteration_) {
      throw FrameError(FrameErrorKind::kMalformed,
                       "decision for iteration " + std::to_string(d.iteration) +
                           " while assembling " + std::to_string(iteration_));
    }
    const auto it = index_.find(d.seq_id);
    if (it == index_.end()) {
      throw FrameError(FrameErrorKind::kMalformed,
                       "decision for unscheduled sequence " + std::to_string(d.seq_id));
    }
    auto& slot = slots_[it->second];
    if (slot) {
      throw FrameError(FrameErrorKind::kMalformed,
                       "duplicate decision for (" + std::to_string(iteration_) + ", " +
                           std::to_string(d.seq_id) + ")");
    }
    slot = d;
    ++received_;
  }
}

std::vector<TokenDecision> DecisionAssembler::take() {
  if (!complete()) {
    throw IncompleteIterationError(std::to_string(missing()) +
                                   " decisions missing for iteration " +
                                   std::to_string(iteration_));
  }
  std::vector<TokenDecision> out;
  out.reserve(slots_.size());
  for (auto& s : slots_) out.push_back(*s);
  return out;
}

}  // namespace dplane
