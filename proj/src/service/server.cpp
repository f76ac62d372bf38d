// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/service/server.hpp"

#include "dplane/service/engine.hpp"

#include <charconv>

namespace dplane {
namespace {

RawFrame error_frame(std::uint64_t iteration, const std::string& msg) {
  return control_to_frame(iteration, {{"error", msg}});
}

}  // namespace

FrameServer::FrameServer(EngineConfig cfg, const std::string& endpoint)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  const SyntheticLogits synth(cfg_.vocab_size, cfg_.zipf_s, cfg_.noise, cfg_.seed);
  base_ = base_ranking_for(cfg_, synth);
  reset_plane();
  if (!endpoint.empty()) {
    listener_ = std::make_unique<Listener>(endpoint);
    endpoint_ = listener_->endpoint();
  }
}

FrameServer::~FrameServer() { stop(); }

const std::string& FrameServer::endpoint() const { return endpoint_; }

void FrameServer::reset_plane() {
  auto hot = plane_ ? plane_->hot_vocab()
                    : std::make_shared<const HotVocab>(base_->prefix(cfg_.hot_size));
  plane_.reset();
  plane_ = std::make_unique<DecisionPlane>(PlaneOptions::from(cfg_, 1), std::move(hot));
}

void FrameServer::stop() {
  stop_.store(true);
  if (listener_) listener_->shutdown();
}

void FrameServer::serve() {
  if (!listener_) throw std::logic_error("server has no listening endpoint");
  while (!stop_.load()) {
    auto conn = listener_->accept();
    if (!conn) break;
    try {
      serve_stream(*conn);
    } catch (const StreamClosed&) {
      // Peer went away mid-reply; wait for the next one.
    }
  }
}

void FrameServer::serve_stream(ByteStream& s) {
  while (!stop_.load()) {
    std::optional<RawFrame> f;
    try {
      f = read_frame(s);
    } catch (const FrameError& e) {
      // The byte stream can no longer be trusted to be frame aligned.
      write_frame(s, error_frame(0, e.what()));
      return;
    }
    if (!f) return;
    RawFrame reply;
    switch (f->type) {
      case FrameType::kControl:
        reply = handle_control(*f);
        break;
      case FrameType::kSchedulingOutput:
        reply = handle_iteration(*f, s);
        break;
      default:
        reply = error_frame(f->iteration, std::string("unexpected ") +
                                              to_string(f->type) + " frame");
    }
    write_frame(s, reply);
  }
}

RawFrame FrameServer::handle_control(const RawFrame& f) {
  ControlPairs pairs;
  try {
    pairs = control_from_frame(f);
  } catch (const FrameError& e) {
    return error_frame(f.iteration, e.what());
  }
  ControlPairs reply;
  for (const auto& [k, v] : pairs) {
    if (k == "version") {
      unsigned client = 0;
      const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), client);
      if (ec != std::errc() || end != v.data() + v.size() || client != kProtocolVersion) {
        return error_frame(f.iteration, "protocol version mismatch: client " + v +
                                            ", server " +
                                            std::to_string(kProtocolVersion));
      }
      reply.emplace_back("version", std::to_string(kProtocolVersion));
      reply.emplace_back("vocab_size", std::to_string(cfg_.vocab_size));
      reply.emplace_back("tp", std::to_string(cfg_.tp));
    } else if (k == "hot_size") {
      int h = 0;
      const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), h);
      if (ec != std::errc() || end != v.data() + v.size() || h < 1 ||
          h > cfg_.vocab_size) {
        return error_frame(f.iteration, "hot_size must be an integer in [1, " +
                                            std::to_string(cfg_.vocab_size) + "]");
      }
      plane_->set_hot_vocab(std::make_shared<const HotVocab>(base_->prefix(h)));
      reply.emplace_back("ok", "1");
    } else if (k == "shutdown") {
      stop_.store(true);
      if (listener_) listener_->shutdown();
      reply.emplace_back("ok", "1");
    } else {
      return error_frame(f.iteration, "unknown control key '" + k + "'");
    }
  }
  return control_to_frame(f.iteration, reply);
}

RawFrame FrameServer::handle_iteration(const RawFrame& sched_frame, ByteStream& s) {
  const std::uint64_t it = sched_frame.iteration;
  const auto tp = static_cast<std::size_t>(cfg_.tp);
  // The shard frames follow unconditionally; read them all so the stream
  // stays aligned whatever goes wrong.
  std::vector<RawFrame> shard_frames;
  for (std::size_t r = 0; r < tp; ++r) {
    auto f = read_frame(s);
    if (!f) throw StreamClosed();
    shard_frames.push_back(std::move(*f));
  }
  try {
    SchedulingOutput sched = scheduling_from_frame(sched_frame);
    const auto ranges = shard_ranges(static_cast<std::size_t>(cfg_.vocab_size), tp);
    for (std::size_t r = 0; r < tp; ++r) {
      LogitsShardBlock& blk = plane_->claim_shard(static_cast<int>(r));
      shard_from_frame(shard_frames[r], blk);
      if (blk.iteration != it || blk.rank != r || blk.tp != tp ||
          blk.v_lo != ranges[r].begin || blk.v_hi != ranges[r].end ||
          blk.batch() != sched.seqs.size()) {
        throw IncompleteIterationError(
            "logits shard " + std::to_string(r) + " does not match iteration " +
            std::to_string(it) + " (rank, range, or batch differs)");
      }
    }
    plane_->submit(std::move(sched));
    for (std::size_t r = 0; r < tp; ++r) plane_->publish_shard(static_cast<int>(r));
  } catch (const std::exception& e) {
    return error_frame(it, e.what());
  }
  try {
    const auto decisions = plane_->collect();
    ++served_;
    return decisions_to_frame(it, decisions);
  } catch (const std::exception& e) {
    // Worker state is suspect after an aborted iteration; start over.
    reset_plane();
    return error_frame(it, std::string(e.what()) + "; sequence state reset");
  }
}

}  // namespace dplane
