// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Reliable byte streams that carry frames: an in-memory loopback pair and
// TCP / Unix-domain sockets.

#pragma once

#include "dplane/transport/frame.hpp"

#include <chrono>
#include <cstdio>
#include <memory>
#include <string>

namespace dplane {

class StreamClosed : public std::runtime_error {
 public:
  StreamClosed() : std::runtime_error("stream closed by peer") {}
};

class StreamTimeout : public std::runtime_error {
 public:
  StreamTimeout() : std::runtime_error("stream read timed out") {}
};

class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
  // Fills `out` completely. Throws StreamClosed on EOF and StreamTimeout
  // when a read timeout is set and expires.
  virtual void read_exact(std::span<std::uint8_t> out) = 0;
  virtual void close() = 0;
  virtual void set_read_timeout(std::chrono::milliseconds timeout) = 0;
};

// Two connected ends of an in-process pipe.
std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>>
make_loopback_pair();

void write_frame(ByteStream& s, const RawFrame& f);
// Next frame, or nullopt when the peer closed cleanly between frames.
std::optional<RawFrame> read_frame(ByteStream& s);

/// Frames stored back to back in a file (trace record and replay).
class FileStream final : public ByteStream {
 public:
  enum class Mode { kRead, kWrite };
  FileStream(const std::string& path, Mode mode);
  ~FileStream() override;

  void write_all(std::span<const std::uint8_t> bytes) override;
  void read_exact(std::span<std::uint8_t> out) override;
  void close() override;
  void set_read_timeout(std::chrono::milliseconds) override {}

 private:
  std::FILE* f_ = nullptr;
};

/// Owned socket descriptor.
class SocketStream final : public ByteStream {
 public:
  explicit SocketStream(int fd) : fd_(fd) {}
  ~SocketStream() override;
  SocketStream(const SocketStream&) = delete;
  SocketStream& operator=(const SocketStream&) = delete;

  void write_all(std::span<const std::uint8_t> bytes) override;
  void read_exact(std::span<std::uint8_t> out) override;
  void close() override;
  void set_read_timeout(std::chrono::milliseconds timeout) override;

 private:
  int fd_;
};

/// Endpoint syntax: `host:port` for TCP (port 0 picks a free port), or a
/// filesystem path (anything containing '/', or prefixed `unix:`) for a
/// Unix-domain socket.
class Listener {
 public:
  explicit Listener(const std::string& endpoint);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  // Blocks for the next connection; nullptr after shutdown().
  std::unique_ptr<SocketStream> accept();
  void shutdown();
  // Resolved address, with the real port for TCP.
  const std::string& endpoint() const { return endpoint_; }

 private:
  int fd_ = -1;
  std::string endpoint_;
  std::string unix_path_;
};

std::unique_ptr<SocketStream> connect_endpoint(const std::string& endpoint);

}  // namespace dplane
