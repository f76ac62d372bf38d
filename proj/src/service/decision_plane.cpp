// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/service/decision_plane.hpp"

#include "dplane/penalty.hpp"
#include "dplane/rng.hpp"

#include <algorithm>
#include <bit>
#include <ctime>

namespace dplane {
namespace {

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

TokenDecision from_pick(const Pick& pick, SeqId seq_id) {
  TokenDecision d;
  d.seq_id = seq_id;
  d.token = pick.index;
  d.logprob = static_cast<float>(pick.logprob);
  return d;
}

// Baseline path: rebuild the history-derived state from scratch, the way a
// sampler that keeps no per-sequence state would.
SequenceState rebuild_state(const SequenceState& s) {
  SequenceState fresh(s.id(), s.prompt(), s.vocab_size(), s.max_len());
  for (TokenId t : s.generated()) fresh.append(t);
  return fresh;
}

}  // namespace

PlaneOptions PlaneOptions::from(const EngineConfig& cfg, std::size_t in_flight) {
  PlaneOptions o;
  o.vocab_size = cfg.vocab_size;
  o.tp = cfg.tp;
  o.samplers = cfg.samplers;
  o.threads_per_sampler = cfg.threads_per_sampler;
  o.variant = cfg.variant;
  o.ring_capacity = std::bit_ceil(std::max<std::size_t>(in_flight, 1));
  o.collect_timeout = std::chrono::milliseconds(cfg.collect_timeout_ms);
  o.logprobs = cfg.logprobs;
  o.eos_ids = cfg.eos_ids;
  o.max_len = cfg.max_len;
  return o;
}

// ---------------------------------------------------------------------------
// PenalizedColumn

PenalizedColumn::PenalizedColumn(const AssembledLogitsView& view, std::size_t j,
                                 const SequenceState& state,
                                 const SamplingParams& params)
    : rows_(view.rows_per_shard()),
      vocab_(view.vocab_size()),
      state_(state),
      params_(params),
      rep_(repetition_factor(params.repetition_penalty)) {
  if (static_cast<std::size_t>(state.vocab_size()) != vocab_) {
    throw std::invalid_argument("sequence vocabulary differs from logits view");
  }
  cols_.reserve(view.tp());
  for (std::size_t r = 0; r < view.tp(); ++r) cols_.push_back(view.segment(r, j).data());
}

void PenalizedColumn::gather(std::span<const TokenId> ids,
                             std::vector<double>& out) const {
  out.resize(ids.size());
  // Ids usually arrive ascending, so the shard changes at most tp times.
  constexpr std::size_t kAhead = 16;
  std::size_t r = 0, lo = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i + kAhead < ids.size()) {
      const auto a = static_cast<std::size_t>(ids[i + kAhead]);
      __builtin_prefetch(cols_[a / rows_] + a % rows_);
    }
    const auto v = static_cast<std::size_t>(ids[i]);
    if (v < lo || v >= lo + rows_) {
      r = v / rows_;
      lo = r * rows_;
    }
    const double z = static_cast<double>(cols_[r][v - lo]);
    out[i] = state_.penalized(static_cast<TokenId>(v)) ? penalize(z, v) : z;
  }
}

void PenalizedColumn::append_range(std::size_t lo, std::size_t hi,
                                   std::vector<double>& out) const {
  while (lo < hi) {
    const std::size_t r = lo / rows_;
    const std::size_t end = std::min(hi, (r + 1) * rows_);
    const float* c = cols_[r];
    const std::size_t base = r * rows_;
    for (std::size_t v = lo; v < end; ++v) {
      const double z = static_cast<double>(c[v - base]);
      out.push_back(state_.penalized(static_cast<TokenId>(v)) ? penalize(z, v) : z);
    }
    lo = end;
  }
}

void PenalizedColumn::gather_complement(std::span<const TokenId> sorted_ids,
                                        std::vector<double>& out) const {
  out.clear();
  out.reserve(vocab_ - sorted_ids.size());
  std::size_t v = 0;
  for (TokenId h : sorted_ids) {
    append_range(v, static_cast<std::size_t>(h), out);
    v = static_cast<std::size_t>(h) + 1;
  }
  append_range(v, vocab_, out);
}

void PenalizedColumn::gather_all(std::vector<double>& out) const {
  out.resize(vocab_);
  for (std::size_t r = 0; r < cols_.size(); ++r) {
    const float* c = cols_[r];
    double* dst = out.data() + r * rows_;
    for (std::size_t i = 0; i < rows_; ++i) dst[i] = static_cast<double>(c[i]);
  }
  if (params_.penalties_neutral()) return;
  for (TokenId v : state_.penalized_ids()) {
    const auto u = static_cast<std::size_t>(v);
    out[u] = penalize_one(out[u], v, state_, params_, rep_);
  }
}

// ---------------------------------------------------------------------------
// Variant kernels

TokenDecision sample_column(Variant variant, const AssembledLogitsView& view,
                            std::size_t j, SequenceState& state,
                            const SamplingParams& params, const HotVocab* hot,
                            std::uint64_t iteration, SeqId seq_id,
                            ShvsScratch& scratch, WorkStats& stats,
                            const Matrix<float>* dense) {
  const Draws draws = draws_for(params.seed, iteration, seq_id);
  const std::size_t V = view.vocab_size();
  switch (variant) {
    case Variant::kShvs: {
      if (!hot) throw std::invalid_argument("shvs variant needs a hot vocabulary");
      const PenalizedColumn row(view, j, state, params);
      const RowContext ctx{view.row_max(j), view.total_expsum(j)};
      const ShvsOutcome o =
          shvs_sample(row, ctx, *hot, params, draws, scratch, &stats);
      TokenDecision d;
      d.seq_id = seq_id;
      d.token = o.token;
      d.accepted_hot = o.accepted;
      d.logprob = static_cast<float>(o.logprob);
      return d;
    }
    case Variant::kOffloadTruncate: {
      const PenalizedColumn row(view, j, state, params);
      row.gather_all(scratch.tail);
      stats.visits += V;
      ++stats.rows;
      return from_pick(sample_domain(scratch.tail, params, Domain::kFullVocab,
                                     draws[0], scratch.filter, &stats),
                       seq_id);
    }
    case Variant::kParallelFull: {
      // Every logit passes through the penalty transform.
      std::vector<double>& z = scratch.tail;
      z.resize(V);
      const double f = repetition_factor(params.repetition_penalty);
      for (std::size_t v = 0; v < V; ++v) {
        z[v] = penalize_one(static_cast<double>(view(v, j)),
                            static_cast<TokenId>(v), state, params, f);
      }
      stats.visits += V;
      ++stats.rows;
      return from_pick(sample_domain(z, params, Domain::kFullVocab, draws[0],
                                     scratch.filter, &stats, Selection::kFullSort),
                       seq_id);
    }
    case Variant::kBaselineFull: {
      Matrix<float> local;
      if (!dense) {
        local = view.materialize();
        dense = &local;
      }
      const SequenceState fresh = rebuild_state(state);
      std::vector<double>& z = scratch.tail;
      z.resize(V);
      const auto col = dense->col(static_cast<Eigen::Index>(j));
      for (std::size_t v = 0; v < V; ++v) {
        z[v] = static_cast<double>(col(static_cast<Eigen::Index>(v)));
      }
      const double f = repetition_factor(params.repetition_penalty);
      for (std::size_t v = 0; v < V; ++v) {
        z[v] = penalize_one(z[v], static_cast<TokenId>(v), fresh, params, f);
      }
      stats.visits += V;
      ++stats.rows;
      return from_pick(sample_domain(z, params, Domain::kFullVocab, draws[0],
                                     scratch.filter, &stats, Selection::kFullSort),
                       seq_id);
    }
  }
  throw std::logic_error("unknown variant");
}

// ---------------------------------------------------------------------------
// DecisionPlane

DecisionPlane::DecisionPlane(PlaneOptions options,
                             std::shared_ptr<const HotVocab> hot)
    : opt_(std::move(options)),
      hot_(std::move(hot)),
      sched_(opt_.ring_capacity,
             static_cast<std::size_t>(opt_.samplers) + opt_.extra_sched_consumers),
      returns_(static_cast<std::size_t>(opt_.samplers)),
      faults_(static_cast<std::size_t>(opt_.samplers)),
      stats_(static_cast<std::size_t>(opt_.samplers)) {
  if (opt_.samplers < 1) throw ConfigError("need at least one sampler");
  if (opt_.threads_per_sampler < 1) throw ConfigError("threads_per_sampler < 1");
  if (opt_.vocab_size < 1) throw ConfigError("vocab_size < 1");
  shard_ranges(static_cast<std::size_t>(opt_.vocab_size),
               static_cast<std::size_t>(opt_.tp));
  if (opt_.variant == Variant::kShvs) {
    if (!hot_) throw ConfigError("shvs variant needs a hot vocabulary");
    if (hot_->vocab_size() != opt_.vocab_size) {
      throw ConfigError("hot vocabulary built for a different vocab size");
    }
  }
  for (int r = 0; r < opt_.tp; ++r) {
    logits_.push_back(std::make_unique<BroadcastRing<LogitsShardBlock>>(
        opt_.ring_capacity, static_cast<std::size_t>(opt_.samplers)));
  }
  workers_.reserve(static_cast<std::size_t>(opt_.samplers));
  for (int j = 0; j < opt_.samplers; ++j) {
    workers_.emplace_back([this, j] { worker_loop(static_cast<std::size_t>(j)); });
  }
}

DecisionPlane::~DecisionPlane() { shutdown(); }

void DecisionPlane::set_hot_vocab(std::shared_ptr<const HotVocab> hot) {
  if (!hot || hot->vocab_size() != opt_.vocab_size) {
    throw ConfigError("hot vocabulary does not match the vocabulary size");
  }
  std::lock_guard lock(hot_mu_);
  hot_ = std::move(hot);
}

std::shared_ptr<const HotVocab> DecisionPlane::hot_vocab() const {
  std::lock_guard lock(hot_mu_);
  return hot_;
}

void DecisionPlane::submit(SchedulingOutput sched) {
  if (stopped_) throw RingClosed();
  if (broken_) throw IterationAborted(broken_reason_);
  for (SeqId id : sched.retired) states_.erase(id);
  std::vector<SequenceState*> states;
  std::vector<SeqId> ids;
  states.reserve(sched.seqs.size());
  ids.reserve(sched.seqs.size());
  for (const SeqDescriptor& d : sched.seqs) {
    auto it = states_.find(d.seq_id);
    if (d.prompt) {
      if (it != states_.end()) {
        throw std::invalid_argument("sequence " + std::to_string(d.seq_id) +
                                    " submitted with a prompt twice");
      }
      it = states_
               .emplace(d.seq_id, std::make_unique<SequenceState>(
                                      d.seq_id, *d.prompt, opt_.vocab_size,
                                      opt_.max_len))
               .first;
    } else if (it == states_.end()) {
      throw std::invalid_argument("unknown sequence " + std::to_string(d.seq_id));
    }
    states.push_back(it->second.get());
    ids.push_back(d.seq_id);
  }
  IterationWork& slot = sched_.claim();
  slot.sched = std::move(sched);
  slot.states = std::move(states);
  slot.hot = hot_vocab();
  pending_.emplace_back(slot.sched.iteration, std::move(ids));
  sched_.publish();
}

std::vector<TokenDecision> DecisionPlane::collect() {
  if (broken_) throw IterationAborted(broken_reason_);
  if (pending_.empty()) throw std::logic_error("collect without a submitted iteration");
  auto [iteration, expected] = std::move(pending_.front());
  pending_.pop_front();
  const auto deadline = std::chrono::steady_clock::now() + opt_.collect_timeout;

  DecisionAssembler assembler(iteration, expected);
  std::string error;
  bool ended = false;
  for (std::size_t lane = 0; lane < returns_.lanes(); ++lane) {
    auto bytes = returns_.pop(lane, deadline);
    if (!bytes) {
      error = "iteration " + std::to_string(iteration) + ": sampler " +
              std::to_string(lane) + " missed the deadline";
      break;
    }
    const RawFrame f = decode_frame(*bytes);
    if (f.type == FrameType::kControl) {
      for (const auto& [k, v] : control_from_frame(f)) {
        if (k == "error" && error.empty()) error = v;
        if (k == "end") {
          ended = true;
          if (!v.empty() && error.empty()) error = v;
        }
      }
      continue;
    }
    if (f.iteration != iteration) {
      error = "sampler " + std::to_string(lane) + " answered iteration " +
              std::to_string(f.iteration) + " while " +
              std::to_string(iteration) + " was expected";
      continue;
    }
    try {
      assembler.add(decisions_from_frame(f));
    } catch (const FrameError& e) {
      if (error.empty()) error = e.what();
    }
  }
  if (ended && error.empty()) {
    broken_ = true;
    broken_reason_ = "logits stream ended";
    throw EndOfStream();
  }
  if (error.empty() && !assembler.complete()) {
    error = std::to_string(assembler.missing()) + " decisions missing";
  }
  if (!error.empty()) {
    // Lanes may now be out of step with submissions; nothing after this
    // iteration can be trusted.
    broken_ = true;
    broken_reason_ = error;
    throw IterationAborted(error);
  }
  return assembler.take();
}

void DecisionPlane::end_stream(const std::string& reason) {
  {
    std::lock_guard lock(end_mu_);
    end_reason_ = reason;
  }
  for (auto& ring : logits_) ring->close();
}

void DecisionPlane::inject_fault(std::size_t worker, std::uint64_t iteration) {
  std::lock_guard lock(fault_mu_);
  faults_.at(worker) = iteration;
}

std::vector<WorkerStats> DecisionPlane::worker_stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

std::uint64_t DecisionPlane::logits_stalls() const {
  std::uint64_t n = 0;
  for (const auto& ring : logits_) n += ring->stalls();
  return n;
}

void DecisionPlane::shutdown() {
  if (stopped_) return;
  stopped_ = true;
  sched_.close();
  for (auto& ring : logits_) ring->close();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
}

void DecisionPlane::sample_partition(std::size_t j, const IterationWork& work,
                                     const AssembledLogitsView& view,
                                     std::vector<TokenDecision>& out,
                                     WorkerStats& stats) {
  const IndexRange cols = view.columns();
  const std::uint64_t iteration = work.sched.iteration;
  const HotVocab* hot = work.hot.get();
  Matrix<float> dense;
  if (opt_.variant == Variant::kBaselineFull && !cols.empty()) {
    dense = view.materialize();
  }
  const Matrix<float>* dense_ptr =
      opt_.variant == Variant::kBaselineFull ? &dense : nullptr;

  out.assign(cols.size(), TokenDecision{});
  auto run = [&](std::size_t lo, std::size_t hi, WorkStats& ws) {
    ShvsScratch scratch;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t b = cols.begin + i;
      const SeqDescriptor& d = work.sched.seqs[b];
      TokenDecision dec =
          sample_column(opt_.variant, view, i, *work.states[b], d.params, hot,
                        iteration, d.seq_id, scratch, ws, dense_ptr);
      dec.iteration = iteration;
      dec.is_eos = std::find(opt_.eos_ids.begin(), opt_.eos_ids.end(),
                             dec.token) != opt_.eos_ids.end();
      if (!opt_.logprobs) dec.logprob.reset();
      out[i] = dec;
    }
  };

  const auto helpers = std::min<std::size_t>(
      static_cast<std::size_t>(opt_.threads_per_sampler), cols.size());
  if (helpers <= 1) {
    run(0, cols.size(), stats.work);
    return;
  }
  // Column split across helper threads; each owns its scratch and counters.
  const auto parts = partition_batch(cols.size(), helpers);
  std::vector<WorkStats> part_stats(parts.size());
  std::vector<double> part_cpu(parts.size(), 0.0);
  std::vector<std::exception_ptr> part_error(parts.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t h = 1; h < parts.size(); ++h) {
      threads.emplace_back([&, h] {
        const double c0 = thread_cpu_seconds();
        try {
          run(parts[h].begin, parts[h].end, part_stats[h]);
        } catch (...) {
          part_error[h] = std::current_exception();
        }
        part_cpu[h] = thread_cpu_seconds() - c0;
      });
    }
    try {
      run(parts[0].begin, parts[0].end, part_stats[0]);
    } catch (...) {
      part_error[0] = std::current_exception();
    }
  }
  for (std::size_t h = 0; h < parts.size(); ++h) {
    if (part_error[h]) std::rethrow_exception(part_error[h]);
    stats.work.merge(part_stats[h]);
    stats.cpu_seconds += part_cpu[h];
  }
  (void)j;
}

void DecisionPlane::worker_loop(std::size_t j) {
  WorkerStats local;
  std::vector<const LogitsShardBlock*> blocks(logits_.size());
  std::vector<TokenDecision> decisions;
  for (std::uint64_t seq = 0;; ++seq) {
    const IterationWork* work = sched_.acquire(seq);
    if (!work) return;
    bool have_all = true;
    for (std::size_t r = 0; r < logits_.size(); ++r) {
      blocks[r] = logits_[r]->acquire(seq);
      have_all = have_all && blocks[r] != nullptr;
    }
    if (!have_all) {
      std::string reason;
      {
        std::lock_guard lock(end_mu_);
        reason = end_reason_;
      }
      returns_.push(j, encode_frame(control_to_frame(work->sched.iteration,
                                                     {{"end", reason}})));
      return;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const double c0 = thread_cpu_seconds();
    const std::uint64_t iteration = work->sched.iteration;
    const IndexRange cols =
        partition_batch(work->sched.seqs.size(),
                        static_cast<std::size_t>(opt_.samplers))[j];
    std::vector<std::uint8_t> reply;
    try {
      for (const LogitsShardBlock* b : blocks) {
        if (b->iteration != iteration) {
          throw std::runtime_error("logits for iteration " +
                                   std::to_string(b->iteration) +
                                   " arrived with scheduling output " +
                                   std::to_string(iteration));
        }
      }
      for (std::size_t b = cols.begin; b < cols.end; ++b) {
        const SeqDescriptor& d = work->sched.seqs[b];
        SequenceState& s = *work->states[b];
        if (d.last_token >= 0) s.append(d.last_token);
        if (s.generated_len() != d.history_len) {
          throw std::runtime_error(
              "sequence " + std::to_string(d.seq_id) + " history length " +
              std::to_string(s.generated_len()) + " but scheduler reports " +
              std::to_string(d.history_len));
        }
      }
      bool die = false;
      {
        std::lock_guard lock(fault_mu_);
        die = faults_[j] == iteration;
      }
      if (die) return;  // simulated crash: no reply, slots never released
      if (cols.empty()) {
        decisions.clear();
      } else {
        const AssembledLogitsView view(blocks, cols);
        sample_partition(j, *work, view, decisions, local);
      }
      reply = encode_frame(decisions_to_frame(iteration, decisions));
    } catch (const std::exception& e) {
      decisions.clear();
      reply = encode_frame(control_to_frame(iteration, {{"error", e.what()}}));
    }
    local.cpu_seconds += thread_cpu_seconds() - c0;
    local.busy_seconds += seconds_since(t0);
    local.tokens += decisions.size();
    ++local.iterations;
    decisions.clear();
    {
      std::lock_guard lock(stats_mu_);
      stats_[j] = local;
    }
    for (auto& ring : logits_) ring->release(j);
    sched_.release(j);
    returns_.push(j, std::move(reply));
  }
}

}  // namespace dplane
