// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// In-process serving loop: a round-robin scheduler over p microbatch
// groups, a logits producer thread standing in for the model, and the
// decision plane. Up to p iterations are in flight at once.

#pragma once

#include "dplane/service/config.hpp"
#include "dplane/service/decision_plane.hpp"
#include "dplane/service/synthetic.hpp"
#include "dplane/transport/stream.hpp"

#include <functional>

namespace dplane {

struct IterationRecord {
  std::uint64_t iteration = 0;
  int hot_size = 0;  // hot set the iteration was submitted with
  std::vector<TokenDecision> decisions;
};

struct EngineMetrics {
  std::uint64_t iterations = 0;
  std::uint64_t tokens = 0;
  double wall_seconds = 0.0;
  double tokens_per_second = 0.0;  // wall clock, whole engine
  // Per sampler: tokens per second of sampling CPU time.
  std::vector<double> sampler_tokens_per_second;
  std::vector<double> sampler_cpu_seconds;
  double producer_busy_seconds = 0.0;
  double max_sampler_busy_seconds = 0.0;
  // Fraction of the shorter of (producer, slowest sampler) busy time that
  // ran concurrently with the other, in [0, 1].
  double overlap_ratio = 0.0;
  double acceptance_rate = 0.0;  // shvs only, else 0
  double mean_alpha = 0.0;
  WorkStats work;
  std::uint64_t logits_stalls = 0;
  std::uint64_t sched_stalls = 0;
};

std::string format_metrics(const EngineMetrics& m);

// Full-vocabulary popularity ranking: the counts file when configured,
// otherwise the synthetic model's ranking. Hot sets are its prefixes.
std::shared_ptr<const HotVocab> base_ranking_for(const EngineConfig& cfg,
                                                 const SyntheticLogits& synth);

class Engine {
 public:
  explicit Engine(EngineConfig cfg);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineConfig& config() const { return cfg_; }
  const SyntheticLogits& synthetic() const { return synth_; }
  const HotVocab& base_ranking() const { return *base_; }

  // Runs until `iterations` more iterations are collected or the logits
  // stream ends. `on_iteration` sees each iteration as it completes.
  // Throws IterationAborted on a failed iteration.
  std::vector<IterationRecord> run(
      int iterations,
      const std::function<void(const IterationRecord&)>& on_iteration = {});

  // Runtime control. Supported key: hot_size. Throws ConfigError.
  void apply_control(const std::string& key, const std::string& value);
  int hot_size() const;

  // Forwarded to the plane; iteration numbers are global.
  void inject_fault(std::size_t worker, std::uint64_t iteration) {
    plane_->inject_fault(worker, iteration);
  }

  EngineMetrics metrics() const;
  bool stream_ended() const { return ended_; }

 private:
  struct Slot {
    SeqId seq_id = 0;
    std::uint32_t history_len = 0;
    TokenId last_token = -1;
    bool fresh = true;
  };

  SchedulingOutput schedule(std::uint64_t iteration);
  void commit(const IterationRecord& rec);
  void producer_loop();
  void produce(const SchedulingOutput& sched,
               std::unordered_map<SeqId, SequenceState>& mirror,
               std::vector<float>& row, std::vector<double>& penalized);

  EngineConfig cfg_;
  SyntheticLogits synth_;
  std::shared_ptr<const HotVocab> base_;
  std::unique_ptr<DecisionPlane> plane_;

  // Scheduler state, caller thread only.
  std::vector<std::vector<Slot>> groups_;
  std::vector<std::vector<SeqId>> retired_;
  std::deque<int> in_flight_hot_;
  SeqId next_seq_ = 0;
  std::uint64_t next_submit_ = 0;
  std::uint64_t next_collect_ = 0;
  bool ended_ = false;
  EngineMetrics totals_;

  std::unique_ptr<FileStream> replay_;
  std::unique_ptr<FileStream> record_;
  std::atomic<double> producer_busy_{0.0};
  std::thread producer_;
};

}  // namespace dplane
