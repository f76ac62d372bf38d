// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/service/engine.hpp"

#include "dplane/penalty.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace dplane {

std::shared_ptr<const HotVocab> base_ranking_for(const EngineConfig& cfg,
                                                 const SyntheticLogits& synth) {
  if (cfg.hot_vocab_path.empty()) {
    return std::make_shared<const HotVocab>(synth.hot_vocab(cfg.vocab_size));
  }
  const auto counts = load_token_counts(cfg.hot_vocab_path);
  return std::make_shared<const HotVocab>(
      build_hot_vocab(counts, cfg.vocab_size, cfg.vocab_size));
}

std::string format_metrics(const EngineMetrics& m) {
  std::ostringstream os;
  os << "iterations: " << m.iterations << '\n'
     << "tokens: " << m.tokens << '\n'
     << "wall_seconds: " << m.wall_seconds << '\n'
     << "tokens_per_second: " << m.tokens_per_second << '\n';
  for (std::size_t j = 0; j < m.sampler_tokens_per_second.size(); ++j) {
    os << "sampler_" << j << "_tokens_per_cpu_second: "
       << m.sampler_tokens_per_second[j] << '\n';
  }
  os << "producer_busy_seconds: " << m.producer_busy_seconds << '\n'
     << "max_sampler_busy_seconds: " << m.max_sampler_busy_seconds << '\n'
     << "overlap_ratio: " << m.overlap_ratio << '\n'
     << "acceptance_rate: " << m.acceptance_rate << '\n'
     << "mean_alpha: " << m.mean_alpha << '\n'
     << "logits_visited: " << m.work.visits << '\n'
     << "truncated_visited: " << m.work.truncated_visits << '\n'
     << "logits_stalls: " << m.logits_stalls << '\n'
     << "sched_stalls: " << m.sched_stalls << '\n';
  return os.str();
}

Engine::Engine(EngineConfig cfg)
    : cfg_(std::move(cfg)),
      synth_(cfg_.vocab_size, cfg_.zipf_s, cfg_.noise, cfg_.seed) {
  cfg_.validate();
  base_ = base_ranking_for(cfg_, synth_);
  PlaneOptions opt = PlaneOptions::from(
      cfg_, static_cast<std::size_t>(cfg_.pipeline_depth));
  opt.extra_sched_consumers = 1;
  plane_ = std::make_unique<DecisionPlane>(
      opt, std::make_shared<const HotVocab>(base_->prefix(cfg_.hot_size)));

  groups_.resize(static_cast<std::size_t>(cfg_.pipeline_depth));
  retired_.resize(groups_.size());
  for (auto& g : groups_) {
    g.resize(static_cast<std::size_t>(cfg_.batch));
    for (Slot& s : g) s.seq_id = next_seq_++;
  }
  if (cfg_.source == LogitsSource::kTrace) {
    replay_ = std::make_unique<FileStream>(cfg_.trace_path, FileStream::Mode::kRead);
  }
  if (!cfg_.record_path.empty()) {
    record_ = std::make_unique<FileStream>(cfg_.record_path, FileStream::Mode::kWrite);
  }
  producer_ = std::thread([this] { producer_loop(); });
}

Engine::~Engine() {
  plane_->shutdown();
  if (producer_.joinable()) producer_.join();
}

int Engine::hot_size() const { return plane_->hot_vocab()->size(); }

void Engine::apply_control(const std::string& key, const std::string& value) {
  if (key != "hot_size") throw ConfigError("unknown control key '" + key + "'");
  int h = 0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), h);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ConfigError("hot_size: not an integer: '" + value + "'");
  }
  if (h < 1 || h > cfg_.vocab_size) {
    throw ConfigError("hot_size must be in [1, " + std::to_string(cfg_.vocab_size) +
                      "], got " + value);
  }
  plane_->set_hot_vocab(std::make_shared<const HotVocab>(base_->prefix(h)));
  cfg_.hot_size = h;
}

SchedulingOutput Engine::schedule(std::uint64_t iteration) {
  const std::size_t g = iteration % groups_.size();
  SchedulingOutput s;
  s.iteration = iteration;
  s.seqs.reserve(groups_[g].size());
  for (Slot& slot : groups_[g]) {
    SeqDescriptor d;
    d.seq_id = slot.seq_id;
    d.history_len = slot.history_len;
    d.last_token = slot.last_token;
    d.params = cfg_.params;
    if (slot.fresh) {
      d.prompt = synth_.prompt(slot.seq_id, cfg_.prompt_len);
      slot.fresh = false;
    }
    s.seqs.push_back(std::move(d));
  }
  s.retired = std::move(retired_[g]);
  retired_[g].clear();
  return s;
}

void Engine::commit(const IterationRecord& rec) {
  const std::size_t g = rec.iteration % groups_.size();
  auto& slots = groups_[g];
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Slot& s = slots[i];
    const TokenDecision& d = rec.decisions.at(i);
    ++s.history_len;
    s.last_token = d.token;
    const bool done = (d.is_eos && !cfg_.ignore_eos) || s.history_len >= cfg_.max_len;
    if (done) {
      retired_[g].push_back(s.seq_id);
      s = Slot{};
      s.seq_id = next_seq_++;
    }
  }
}

std::vector<IterationRecord> Engine::run(
    int iterations, const std::function<void(const IterationRecord&)>& on_iteration) {
  std::vector<IterationRecord> out;
  if (ended_ || iterations <= 0) return out;
  const std::uint64_t target = next_collect_ + static_cast<std::uint64_t>(iterations);
  const auto depth = static_cast<std::uint64_t>(cfg_.pipeline_depth);
  const auto t0 = std::chrono::steady_clock::now();
  while (next_collect_ < target) {
    while (next_submit_ < target && next_submit_ < next_collect_ + depth) {
      in_flight_hot_.push_back(plane_->hot_vocab()->size());
      plane_->submit(schedule(next_submit_++));
    }
    IterationRecord rec;
    rec.iteration = next_collect_;
    rec.hot_size = in_flight_hot_.front();
    try {
      rec.decisions = plane_->collect();
    } catch (const EndOfStream&) {
      ended_ = true;
      break;
    }
    in_flight_hot_.pop_front();
    ++next_collect_;
    commit(rec);
    ++totals_.iterations;
    totals_.tokens += rec.decisions.size();
    if (on_iteration) on_iteration(rec);
    out.push_back(std::move(rec));
  }
  totals_.wall_seconds +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

EngineMetrics Engine::metrics() const {
  EngineMetrics m = totals_;
  for (const WorkerStats& w : plane_->worker_stats()) {
    m.work.merge(w.work);
    m.sampler_cpu_seconds.push_back(w.cpu_seconds);
    m.sampler_tokens_per_second.push_back(
        w.cpu_seconds > 0.0 ? static_cast<double>(w.tokens) / w.cpu_seconds : 0.0);
    m.max_sampler_busy_seconds = std::max(m.max_sampler_busy_seconds, w.busy_seconds);
  }
  m.producer_busy_seconds = producer_busy_.load();
  if (m.wall_seconds > 0.0) m.tokens_per_second = static_cast<double>(m.tokens) / m.wall_seconds;
  const double shorter = std::min(m.producer_busy_seconds, m.max_sampler_busy_seconds);
  if (shorter > 0.0) {
    const double both = m.producer_busy_seconds + m.max_sampler_busy_seconds - m.wall_seconds;
    m.overlap_ratio = std::clamp(both / shorter, 0.0, 1.0);
  }
  if (cfg_.variant == Variant::kShvs && m.work.rows > 0) {
    m.acceptance_rate = acceptance_rate(m.work);
    m.mean_alpha = m.work.alpha_sum / static_cast<double>(m.work.rows);
  }
  m.logits_stalls = plane_->logits_stalls();
  m.sched_stalls = plane_->sched_stalls();
  return m;
}

void Engine::produce(const SchedulingOutput& sched,
                     std::unordered_map<SeqId, SequenceState>& mirror,
                     std::vector<float>& row, std::vector<double>& penalized) {
  for (SeqId id : sched.retired) mirror.erase(id);
  const std::size_t B = sched.seqs.size();
  std::vector<const SequenceState*> states(B);
  for (std::size_t b = 0; b < B; ++b) {
    const SeqDescriptor& d = sched.seqs[b];
    auto it = mirror.find(d.seq_id);
    if (d.prompt) {
      it = mirror
               .insert_or_assign(d.seq_id, SequenceState(d.seq_id, *d.prompt,
                                                         cfg_.vocab_size, cfg_.max_len))
               .first;
    } else if (it == mirror.end()) {
      throw std::runtime_error("producer lost sequence " + std::to_string(d.seq_id));
    }
    if (d.last_token >= 0) it->second.append(d.last_token);
    states[b] = &it->second;
  }

  const auto tp = static_cast<std::size_t>(cfg_.tp);
  const auto ranges = shard_ranges(static_cast<std::size_t>(cfg_.vocab_size), tp);

  if (replay_) {
    for (std::size_t r = 0; r < tp; ++r) {
      const auto f = read_frame(*replay_);
      if (!f) {
        if (r != 0) throw std::runtime_error("trace ends inside an iteration");
        throw EndOfStream();
      }
      LogitsShardBlock& blk = plane_->claim_shard(static_cast<int>(r));
      shard_from_frame(*f, blk);
      if (blk.iteration != sched.iteration || blk.rank != r || blk.tp != tp ||
          blk.batch() != B || blk.v_lo != ranges[r].begin) {
        throw std::runtime_error("trace shard does not match iteration " +
                                 std::to_string(sched.iteration));
      }
      if (record_) write_frame(*record_, *f);
      plane_->publish_shard(static_cast<int>(r));
    }
    return;
  }

  // Synthetic rows: the producer computes row statistics over the
  // penalized row, exactly as a model-side epilogue would.
  std::vector<LogitsShardBlock*> blocks(tp);
  for (std::size_t r = 0; r < tp; ++r) {
    LogitsShardBlock& blk = plane_->claim_shard(static_cast<int>(r));
    blk.iteration = sched.iteration;
    blk.rank = static_cast<std::uint16_t>(r);
    blk.tp = static_cast<std::uint16_t>(tp);
    blk.v_lo = static_cast<std::uint32_t>(ranges[r].begin);
    blk.v_hi = static_cast<std::uint32_t>(ranges[r].end);
    blk.values.resize(static_cast<Eigen::Index>(ranges[r].size()),
                      static_cast<Eigen::Index>(B));
    blk.row_max.resize(static_cast<Eigen::Index>(B));
    blk.total_expsum.resize(static_cast<Eigen::Index>(B));
    blocks[r] = &blk;
  }
  const double rep = repetition_factor(cfg_.params.repetition_penalty);
  for (std::size_t b = 0; b < B; ++b) {
    const SeqDescriptor& d = sched.seqs[b];
    synth_.fill_row(sched.iteration, d.seq_id, row);
    penalized.assign(row.begin(), row.end());
    for (TokenId v : states[b]->penalized_ids()) {
      const auto u = static_cast<std::size_t>(v);
      penalized[u] = penalize_one(penalized[u], v, *states[b], d.params, rep);
    }
    const RowContext ctx = compute_row_context(penalized, d.params.temperature);
    for (std::size_t r = 0; r < tp; ++r) {
      const auto c = static_cast<Eigen::Index>(b);
      blocks[r]->values.col(c) = Eigen::Map<const Vector<float>>(
          row.data() + ranges[r].begin, static_cast<Eigen::Index>(ranges[r].size()));
      blocks[r]->row_max(c) = ctx.row_max;
      blocks[r]->total_expsum(c) = ctx.total_expsum;
    }
  }
  for (std::size_t r = 0; r < tp; ++r) {
    if (record_) write_frame(*record_, to_frame(*blocks[r]));
    plane_->publish_shard(static_cast<int>(r));
  }
}

void Engine::producer_loop() {
  std::unordered_map<SeqId, SequenceState> mirror;
  std::vector<float> row(static_cast<std::size_t>(cfg_.vocab_size));
  std::vector<double> penalized;
  double busy = 0.0;
  try {
    for (std::uint64_t seq = 0;; ++seq) {
      const IterationWork* work = plane_->acquire_work(seq);
      if (!work) return;
      const auto t0 = std::chrono::steady_clock::now();
      produce(work->sched, mirror, row, penalized);
      busy += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      producer_busy_.store(busy);
      plane_->release_work(0);
    }
  } catch (const RingClosed&) {
  } catch (const EndOfStream&) {
    plane_->end_stream();
  } catch (const std::exception& e) {
    plane_->end_stream(std::string("logits producer: ") + e.what());
  }
}

}  // namespace dplane
