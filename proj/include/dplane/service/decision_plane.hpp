// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Sampler worker pool and the rings that feed it.
//
// The scheduler submits a SchedulingOutput; the logits producer fills one
// shard slot per TP rank; worker j reads its partition of the batch from
// every rank through an AssembledLogitsView and posts one DecisionBatch
// frame to its return lane. Submissions, shard slots and return frames are
// matched by order.

#pragma once

#include "dplane/core.hpp"
#include "dplane/filter.hpp"
#include "dplane/penalty.hpp"
#include "dplane/service/config.hpp"
#include "dplane/shvs.hpp"
#include "dplane/transport/frame.hpp"
#include "dplane/transport/layout.hpp"
#include "dplane/transport/ring.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace dplane {

class IterationAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EndOfStream : public std::runtime_error {
 public:
  EndOfStream() : std::runtime_error("logits stream ended") {}
};

// One submitted iteration as the workers see it. States are resolved by
// the submitting thread; column b's state is touched only by the worker
// whose partition holds b.
struct IterationWork {
  SchedulingOutput sched;
  std::vector<SequenceState*> states;
  std::shared_ptr<const HotVocab> hot;
};

struct PlaneOptions {
  int vocab_size = 0;
  int tp = 1;
  int samplers = 1;
  int threads_per_sampler = 1;
  Variant variant = Variant::kShvs;
  std::size_t ring_capacity = 2;
  std::chrono::milliseconds collect_timeout{10000};
  bool logprobs = false;
  std::vector<TokenId> eos_ids;
  std::size_t max_len = kDefaultMaxLen;
  // Readers of the scheduling ring besides the workers (the producer).
  std::size_t extra_sched_consumers = 0;

  static PlaneOptions from(const EngineConfig& cfg, std::size_t in_flight);
};

struct WorkerStats {
  WorkStats work;
  std::uint64_t tokens = 0;
  std::uint64_t iterations = 0;
  double cpu_seconds = 0.0;   // sampling only, worker thread CPU time
  double busy_seconds = 0.0;  // sampling only, wall clock
};

/// Random access to one sequence's penalized logits inside a view.
class PenalizedColumn {
 public:
  PenalizedColumn(const AssembledLogitsView& view, std::size_t j,
                  const SequenceState& state, const SamplingParams& params);

  std::size_t size() const { return vocab_; }
  void gather(std::span<const TokenId> ids, std::vector<double>& out) const;
  void gather_complement(std::span<const TokenId> sorted_ids,
                         std::vector<double>& out) const;
  // Whole column, penalties applied at the state's touched ids only.
  void gather_all(std::vector<double>& out) const;

 private:
  double penalize(double z, std::size_t v) const {
    return penalize_one(z, static_cast<TokenId>(v), state_, params_, rep_);
  }
  // Appends ids [lo, hi), walking shard by shard.
  void append_range(std::size_t lo, std::size_t hi, std::vector<double>& out) const;

  std::vector<const float*> cols_;
  std::size_t rows_;
  std::size_t vocab_;
  const SequenceState& state_;
  const SamplingParams& params_;
  double rep_;
};

// Samples column j of `view` with the given variant. The baseline variant
// reads `dense` (the materialized view) when given, else materializes.
TokenDecision sample_column(Variant variant, const AssembledLogitsView& view,
                            std::size_t j, SequenceState& state,
                            const SamplingParams& params, const HotVocab* hot,
                            std::uint64_t iteration, SeqId seq_id,
                            ShvsScratch& scratch, WorkStats& stats,
                            const Matrix<float>* dense = nullptr);

class DecisionPlane {
 public:
  DecisionPlane(PlaneOptions options, std::shared_ptr<const HotVocab> hot);
  ~DecisionPlane();
  DecisionPlane(const DecisionPlane&) = delete;
  DecisionPlane& operator=(const DecisionPlane&) = delete;

  const PlaneOptions& options() const { return opt_; }

  // Scheduler thread. Creates states for new sequences, drops retired
  // ones, and publishes the work. Blocks while the ring is full.
  void submit(SchedulingOutput sched);
  // Decisions of the oldest uncollected iteration, in submission order.
  // Throws IterationAborted when a worker fails or the deadline passes,
  // and EndOfStream when the producer ran out of logits.
  std::vector<TokenDecision> collect();
  std::size_t in_flight() const { return pending_.size(); }

  // Takes effect at the next submit.
  void set_hot_vocab(std::shared_ptr<const HotVocab> hot);
  std::shared_ptr<const HotVocab> hot_vocab() const;

  // Producer side: one writer per rank.
  LogitsShardBlock& claim_shard(int rank) { return logits_[rank]->claim(); }
  void publish_shard(int rank) { logits_[rank]->publish(); }
  // Producer's view of the scheduling stream (consumer index >= samplers).
  const IterationWork* acquire_work(std::uint64_t seq) const {
    return sched_.acquire(seq);
  }
  void release_work(std::size_t extra_index) {
    sched_.release(static_cast<std::size_t>(opt_.samplers) + extra_index);
  }
  // No more shards will be produced. A non-empty reason marks a failure.
  void end_stream(const std::string& reason = "");

  // Worker `worker` stops dead while handling `iteration`, after applying
  // its sequence updates and before posting decisions.
  void inject_fault(std::size_t worker, std::uint64_t iteration);

  std::vector<WorkerStats> worker_stats() const;
  std::uint64_t logits_stalls() const;
  std::uint64_t sched_stalls() const { return sched_.stalls(); }

  // Closes the rings and joins the workers after they drain.
  void shutdown();

 private:
  void worker_loop(std::size_t j);
  void sample_partition(std::size_t j, const IterationWork& work,
                        const AssembledLogitsView& view,
                        std::vector<TokenDecision>& out, WorkerStats& stats);

  PlaneOptions opt_;
  mutable std::mutex hot_mu_;
  std::shared_ptr<const HotVocab> hot_;

  BroadcastRing<IterationWork> sched_;
  std::vector<std::unique_ptr<BroadcastRing<LogitsShardBlock>>> logits_;
  ReturnChannel returns_;

  // Scheduler-thread state.
  std::unordered_map<SeqId, std::unique_ptr<SequenceState>> states_;
  std::deque<std::pair<std::uint64_t, std::vector<SeqId>>> pending_;
  bool broken_ = false;
  std::string broken_reason_;

  std::atomic<bool> stream_ended_{false};
  mutable std::mutex end_mu_;
  std::string end_reason_;

  mutable std::mutex fault_mu_;
  std::vector<std::optional<std::uint64_t>> faults_;

  mutable std::mutex stats_mu_;
  std::vector<WorkerStats> stats_;

  std::vector<std::thread> workers_;
  bool stopped_ = false;
};

}  // namespace dplane
