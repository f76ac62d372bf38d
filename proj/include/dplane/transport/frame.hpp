// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Versioned binary framing. All integers and floats are little-endian.
//
//   u32 magic "SIMP" | u16 version | u16 type | u64 iteration |
//   u32 payload_len | payload | u32 crc32(payload)

#pragma once

#include "dplane/core.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <utility>

namespace dplane {

inline constexpr std::uint32_t kFrameMagic = 0x53494D50;
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 20;
inline constexpr std::size_t kFrameTrailerSize = 4;
inline constexpr std::size_t kFrameOverhead = kFrameHeaderSize + kFrameTrailerSize;
inline constexpr std::uint32_t kMaxPayload = 1u << 30;

enum class FrameType : std::uint16_t {
  kSchedulingOutput = 1,
  kLogitsShard = 2,
  kDecisionBatch = 3,
  kControl = 4,
};

const char* to_string(FrameType t);

enum class FrameErrorKind {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kChecksum,
  kMalformed,
  kOversize,
};

const char* to_string(FrameErrorKind k);

class FrameError : public std::runtime_error {
 public:
  FrameError(FrameErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}
  FrameErrorKind kind() const { return kind_; }

 private:
  FrameErrorKind kind_;
};

struct FrameHeader {
  std::uint16_t version = kProtocolVersion;
  FrameType type = FrameType::kControl;
  std::uint64_t iteration = 0;
  std::uint32_t payload_len = 0;
};

struct RawFrame {
  FrameType type = FrameType::kControl;
  std::uint64_t iteration = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const RawFrame&) const = default;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_frame(const RawFrame& frame);

// Parses the fixed header. Throws on bad magic, version, or a short buffer.
FrameHeader decode_header(std::span<const std::uint8_t> bytes);

// `bytes` must hold exactly one frame.
RawFrame decode_frame(std::span<const std::uint8_t> bytes);

// Little-endian serialization helpers.
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(raw, raw + sizeof(T));
    }
    buf_.insert(buf_.end(), raw, raw + sizeof(T));
  }
  void put_bytes(std::span<const std::uint8_t> bytes) {
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
  }
  template <typename T>
  void put_array(std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
      buf_.insert(buf_.end(), p, p + values.size_bytes());
    } else {
      for (const T& v : values) put(v);
    }
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(raw, raw + sizeof(T));
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  template <typename T>
  void get_array(std::span<T> out) {
    need(out.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
      pos_ += out.size_bytes();
    } else {
      for (T& v : out) v = get<T>();
    }
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) {
      throw FrameError(FrameErrorKind::kMalformed,
                       std::to_string(remaining()) + " trailing payload bytes");
    }
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FrameError(FrameErrorKind::kMalformed, "payload ends early");
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Typed payloads.

struct SeqDescriptor {
  SeqId seq_id = 0;
  // Generated tokens including last_token.
  std::uint32_t history_len = 0;
  // Token committed last iteration, -1 on the first decode step.
  TokenId last_token = -1;
  SamplingParams params;
  // Present on the first iteration of a sequence.
  std::optional<std::vector<TokenId>> prompt;

  bool operator==(const SeqDescriptor&) const = default;
};

struct SchedulingOutput {
  std::uint64_t iteration = 0;
  std::vector<SeqDescriptor> seqs;
  // Sequences whose state can be dropped.
  std::vector<SeqId> retired;

  bool operator==(const SchedulingOutput&) const = default;
};

RawFrame to_frame(const SchedulingOutput& s);
SchedulingOutput scheduling_from_frame(const RawFrame& f);

// Decision flag bits.
inline constexpr std::uint8_t kFlagEos = 1u << 0;
inline constexpr std::uint8_t kFlagAcceptedHot = 1u << 1;
inline constexpr std::uint8_t kFlagLogprob = 1u << 2;

// An empty batch encodes as a zero-length payload.
RawFrame decisions_to_frame(std::uint64_t iteration,
                            std::span<const TokenDecision> decisions);
std::vector<TokenDecision> decisions_from_frame(const RawFrame& f);

using ControlPairs = std::vector<std::pair<std::string, std::string>>;

RawFrame control_to_frame(std::uint64_t iteration, const ControlPairs& pairs);
ControlPairs control_from_frame(const RawFrame& f);

}  // namespace dplane
