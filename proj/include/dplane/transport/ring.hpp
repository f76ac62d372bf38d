// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <bit>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

namespace dplane {

class RingClosed : public std::runtime_error {
 public:
  RingClosed() : std::runtime_error("ring closed") {}
};

/// Single-producer ring whose every slot is read by each of N consumers.
/// The producer fills a slot in place and publishes it; consumers get a
/// const pointer into the slot (no copy) and release it when done. A slot
/// is reused only after every consumer has released it, so a full ring
/// blocks the producer instead of overwriting.
template <typename T>
class BroadcastRing {
 public:
  BroadcastRing(std::size_t capacity, std::size_t consumers)
      : slots_(capacity), cursors_(consumers) {
    if (capacity == 0 || !std::has_single_bit(capacity)) {
      throw std::invalid_argument("ring capacity must be a power of two");
    }
    if (consumers == 0) throw std::invalid_argument("ring needs a consumer");
    for (auto& c : cursors_) c.store(0, std::memory_order_relaxed);
  }

  BroadcastRing(const BroadcastRing&) = delete;
  BroadcastRing& operator=(const BroadcastRing&) = delete;

  std::size_t capacity() const { return slots_.size(); }
  std::size_t consumers() const { return cursors_.size(); }

  // Producer: slot for the next sequence number, waiting while the ring is
  // full. Throws RingClosed if the ring closes while waiting.
  T& claim() {
    const std::uint64_t seq = head_.load(std::memory_order_relaxed);
    bool stalled = false;
    for (;;) {
      const std::uint64_t epoch = released_.load(std::memory_order_acquire);
      if (closed_.load(std::memory_order_acquire)) throw RingClosed();
      if (seq - slowest() < slots_.size()) break;
      if (!stalled) {
        stalled = true;
        stalls_.fetch_add(1, std::memory_order_relaxed);
      }
      released_.wait(epoch, std::memory_order_acquire);
    }
    return slots_[seq & (slots_.size() - 1)];
  }

  // Producer: makes the claimed slot visible.
  void publish() {
    head_.fetch_add(1, std::memory_order_release);
    published_epoch_.fetch_add(1, std::memory_order_release);
    published_epoch_.notify_all();
  }

  // Consumer: slot `seq`, waiting until it is published. nullptr once the
  // ring is closed and `seq` was never published.
  const T* acquire(std::uint64_t seq) const {
    for (;;) {
      const std::uint64_t epoch = published_epoch_.load(std::memory_order_acquire);
      if (seq < head_.load(std::memory_order_acquire)) {
        return &slots_[seq & (slots_.size() - 1)];
      }
      if (closed_.load(std::memory_order_acquire)) return nullptr;
      published_epoch_.wait(epoch, std::memory_order_acquire);
    }
  }

  // Consumer: done with its oldest held slot.
  void release(std::size_t consumer) {
    cursors_[consumer].fetch_add(1, std::memory_order_release);
    released_.fetch_add(1, std::memory_order_release);
    released_.notify_all();
  }

  std::uint64_t cursor(std::size_t consumer) const {
    return cursors_[consumer].load(std::memory_order_acquire);
  }
  std::uint64_t published() const { return head_.load(std::memory_order_acquire); }

  void close() {
    closed_.store(true, std::memory_order_release);
    // Bump both epochs so blocked waits on either side re-check.
    published_epoch_.fetch_add(1, std::memory_order_release);
    published_epoch_.notify_all();
    released_.fetch_add(1, std::memory_order_release);
    released_.notify_all();
  }
  bool closed() const { return closed_.load(std::memory_order_acquire); }

  // Times the producer found the ring full.
  std::uint64_t stalls() const { return stalls_.load(std::memory_order_relaxed); }

 private:
  std::uint64_t slowest() const {
    std::uint64_t m = UINT64_MAX;
    for (const auto& c : cursors_) m = std::min(m, c.load(std::memory_order_acquire));
    return m;
  }

  std::vector<T> slots_;
  std::vector<std::atomic<std::uint64_t>> cursors_;
  std::atomic<std::uint64_t> head_{0};
  mutable std::atomic<std::uint64_t> published_epoch_{0};
  std::atomic<std::uint64_t> released_{0};
  std::atomic<bool> closed_{false};
  std::atomic<std::uint64_t> stalls_{0};
};

/// Many-lane return path: lane j carries worker j's encoded decision
/// frames in order. One reader waits with a deadline across all lanes.
class ReturnChannel {
 public:
  explicit ReturnChannel(std::size_t lanes) : lanes_(lanes) {}

  void push(std::size_t lane, std::vector<std::uint8_t> frame) {
    {
      std::lock_guard lock(mu_);
      lanes_.at(lane).push_back(std::move(frame));
    }
    cv_.notify_all();
  }

  // Oldest frame on `lane`, or nullopt at the deadline.
  std::optional<std::vector<std::uint8_t>> pop(
      std::size_t lane, std::chrono::steady_clock::time_point deadline) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_until(lock, deadline, [&] { return !lanes_.at(lane).empty(); })) {
      return std::nullopt;
    }
    auto out = std::move(lanes_[lane].front());
    lanes_[lane].pop_front();
    return out;
  }

  std::size_t lanes() const { return lanes_.size(); }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::deque<std::vector<std::uint8_t>>> lanes_;
};

}  // namespace dplane
