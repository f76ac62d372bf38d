// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Frame endpoint for remote engines. Lockstep per connection:
//
//   client: SchedulingOutput, then t LogitsShard frames (ranks 0..t-1)
//   server: DecisionBatch for that iteration
//
// Control frames carry `key=value` pairs:
//   version=N    handshake; answered with version, vocab_size, tp
//   hot_size=H   new hot set from the next iteration on; answered ok=1
//   shutdown=1   answered ok=1, then the server stops
// Any failure is answered with a control frame holding `error=<message>`.

#pragma once

#include "dplane/service/decision_plane.hpp"
#include "dplane/transport/stream.hpp"

#include <atomic>

namespace dplane {

class FrameServer {
 public:
  // Empty endpoint: no listener, only serve_stream().
  FrameServer(EngineConfig cfg, const std::string& endpoint);
  ~FrameServer();

  const std::string& endpoint() const;

  // Accepts connections one at a time until shutdown.
  void serve();
  // Serves one connection until the peer closes or asks for shutdown.
  void serve_stream(ByteStream& s);
  void stop();
  bool stopped() const { return stop_.load(); }

  std::uint64_t iterations_served() const { return served_; }

 private:
  void reset_plane();
  RawFrame handle_control(const RawFrame& f);
  RawFrame handle_iteration(const RawFrame& sched_frame, ByteStream& s);

  EngineConfig cfg_;
  std::shared_ptr<const HotVocab> base_;
  std::unique_ptr<DecisionPlane> plane_;
  std::unique_ptr<Listener> listener_;
  std::string endpoint_;
  std::atomic<bool> stop_{false};
  std::uint64_t served_ = 0;
};

}  // namespace dplane
