// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/transport/stream.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <system_error>

namespace dplane {
namespace {

struct PipeBuffer {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> bytes;
  bool closed = false;
};

class LoopbackEnd final : public ByteStream {
 public:
  LoopbackEnd(std::shared_ptr<PipeBuffer> in, std::shared_ptr<PipeBuffer> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~LoopbackEnd() override { close(); }

  void write_all(std::span<const std::uint8_t> bytes) override {
    {
      std::lock_guard lock(out_->mu);
      if (out_->closed) throw StreamClosed();
      out_->bytes.insert(out_->bytes.end(), bytes.begin(), bytes.end());
    }
    out_->cv.notify_all();
  }

  void read_exact(std::span<std::uint8_t> out) override {
    std::unique_lock lock(in_->mu);
    std::size_t got = 0;
    while (got < out.size()) {
      auto ready = [&] { return !in_->bytes.empty() || in_->closed; };
      if (timeout_.count() > 0) {
        if (!in_->cv.wait_for(lock, timeout_, ready)) throw StreamTimeout();
      } else {
        in_->cv.wait(lock, ready);
      }
      if (in_->bytes.empty()) throw StreamClosed();
      const std::size_t n = std::min(out.size() - got, in_->bytes.size());
      std::copy_n(in_->bytes.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(got));
      in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(n));
      got += n;
    }
  }

  void close() override {
    for (const auto& p : {in_, out_}) {
      {
        std::lock_guard lock(p->mu);
        p->closed = true;
      }
      p->cv.notify_all();
    }
  }

  void set_read_timeout(std::chrono::milliseconds timeout) override {
    timeout_ = timeout;
  }

 private:
  std::shared_ptr<PipeBuffer> in_;
  std::shared_ptr<PipeBuffer> out_;
  std::chrono::milliseconds timeout_{0};
};

[[noreturn]] void throw_errno(const std::string& what) {
  throw std::system_error(errno, std::generic_category(), what);
}

bool is_unix_endpoint(const std::string& ep, std::string& path) {
  if (ep.rfind("unix:", 0) == 0) {
    path = ep.substr(5);
    return true;
  }
  if (ep.find('/') != std::string::npos) {
    path = ep;
    return true;
  }
  return false;
}

sockaddr_un unix_address(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) {
    throw std::invalid_argument("socket path too long: " + path);
  }
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

void split_host_port(const std::string& ep, std::string& host, std::string& port) {
  const auto colon = ep.rfind(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("endpoint '" + ep + "' is not host:port or a path");
  }
  host = ep.substr(0, colon);
  port = ep.substr(colon + 1);
  if (host.empty()) host = "127.0.0.1";
}

addrinfo* resolve(const std::string& host, const std::string& port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const int rc = getaddrinfo(host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) {
    throw std::runtime_error("cannot resolve " + host + ":" + port + ": " +
                             gai_strerror(rc));
  }
  return res;
}

}  // namespace

std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>>
make_loopback_pair() {
  auto a = std::make_shared<PipeBuffer>();
  auto b = std::make_shared<PipeBuffer>();
  return {std::make_unique<LoopbackEnd>(a, b), std::make_unique<LoopbackEnd>(b, a)};
}

void write_frame(ByteStream& s, const RawFrame& f) { s.write_all(encode_frame(f)); }

std::optional<RawFrame> read_frame(ByteStream& s) {
  std::vector<std::uint8_t> buf(kFrameHeaderSize);
  try {
    s.read_exact(std::span<std::uint8_t>(buf.data(), 1));
  } catch (const StreamClosed&) {
    return std::nullopt;
  }
  try {
    s.read_exact(std::span<std::uint8_t>(buf.data() + 1, kFrameHeaderSize - 1));
  } catch (const StreamClosed&) {
    throw FrameError(FrameErrorKind::kTruncated, "stream ended inside a frame header");
  }
  const FrameHeader h = decode_header(buf);
  buf.resize(kFrameOverhead + h.payload_len);
  try {
    s.read_exact(std::span<std::uint8_t>(buf.data() + kFrameHeaderSize,
                                         h.payload_len + kFrameTrailerSize));
  } catch (const StreamClosed&) {
    throw FrameError(FrameErrorKind::kTruncated, "stream ended inside a frame");
  }
  return decode_frame(buf);
}

FileStream::FileStream(const std::string& path, Mode mode)
    : f_(std::fopen(path.c_str(), mode == Mode::kRead ? "rb" : "wb")) {
  if (!f_) throw std::runtime_error("cannot open " + path);
}

FileStream::~FileStream() { close(); }

void FileStream::write_all(std::span<const std::uint8_t> bytes) {
  if (!f_ || std::fwrite(bytes.data(), 1, bytes.size(), f_) != bytes.size()) {
    throw std::runtime_error("file write failed");
  }
}

void FileStream::read_exact(std::span<std::uint8_t> out) {
  if (!f_) throw StreamClosed();
  if (std::fread(out.data(), 1, out.size(), f_) != out.size()) throw StreamClosed();
}

void FileStream::close() {
  if (f_) {
    std::fclose(f_);
    f_ = nullptr;
  }
}

SocketStream::~SocketStream() { close(); }

void SocketStream::write_all(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) throw StreamClosed();
      throw_errno("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

void SocketStream::read_exact(std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n == 0) throw StreamClosed();
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw StreamTimeout();
      if (errno == ECONNRESET) throw StreamClosed();
      throw_errno("recv");
    }
    got += static_cast<std::size_t>(n);
  }
}

void SocketStream::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

void SocketStream::set_read_timeout(std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  if (::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv)) != 0) {
    throw_errno("setsockopt");
  }
}

Listener::Listener(const std::string& endpoint) {
  std::string path;
  if (is_unix_endpoint(endpoint, path)) {
    fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd_ < 0) throw_errno("socket");
    ::unlink(path.c_str());
    const sockaddr_un addr = unix_address(path);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd_);
      throw_errno("bind " + path);
    }
    unix_path_ = path;
    endpoint_ = path;
  } else {
    std::string host;
    std::string port;
    split_host_port(endpoint, host, port);
    addrinfo* res = resolve(host, port, true);
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd_ < 0) {
      freeaddrinfo(res);
      throw_errno("socket");
    }
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0) {
      freeaddrinfo(res);
      ::close(fd_);
      throw_errno("bind " + endpoint);
    }
    freeaddrinfo(res);
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    endpoint_ = host + ":" + std::to_string(ntohs(bound.sin_port));
  }
  if (::listen(fd_, 16) != 0) {
    ::close(fd_);
    throw_errno("listen");
  }
}

Listener::~Listener() {
  shutdown();
  if (fd_ >= 0) ::close(fd_);
  if (!unix_path_.empty()) ::unlink(unix_path_.c_str());
}

std::unique_ptr<SocketStream> Listener::accept() {
  for (;;) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) {
      if (unix_path_.empty()) {
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      }
      return std::make_unique<SocketStream>(fd);
    }
    if (errno == EINTR) continue;
    return nullptr;
  }
}

void Listener::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::unique_ptr<SocketStream> connect_endpoint(const std::string& endpoint) {
  std::string path;
  if (is_unix_endpoint(endpoint, path)) {
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    const sockaddr_un addr = unix_address(path);
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      throw_errno("connect " + path);
    }
    return std::make_unique<SocketStream>(fd);
  }
  std::string host;
  std::string port;
  split_host_port(endpoint, host, port);
  addrinfo* res = resolve(host, port, false);
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    throw_errno("socket");
  }
  if (::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    freeaddrinfo(res);
    ::close(fd);
    throw_errno("connect " + endpoint);
  }
  freeaddrinfo(res);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return std::make_unique<SocketStream>(fd);
}

}  // namespace dplane
