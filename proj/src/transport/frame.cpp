// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/transport/frame.hpp"

#include <zlib.h>

namespace dplane {

const char* to_string(FrameType t) {
  switch (t) {
    case FrameType::kSchedulingOutput:
      return "scheduling-output";
    case FrameType::kLogitsShard:
      return "logits-shard";
    case FrameType::kDecisionBatch:
      return "decision-batch";
    case FrameType::kControl:
      return "control";
  }
  return "unknown";
}

const char* to_string(FrameErrorKind k) {
  switch (k) {
    case FrameErrorKind::kBadMagic:
      return "bad magic";
    case FrameErrorKind::kVersionMismatch:
      return "version mismatch";
    case FrameErrorKind::kTruncated:
      return "truncated frame";
    case FrameErrorKind::kChecksum:
      return "checksum failure";
    case FrameErrorKind::kMalformed:
      return "malformed payload";
    case FrameErrorKind::kOversize:
      return "oversize payload";
  }
  return "frame error";
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_frame(const RawFrame& frame) {
  if (frame.payload.size() > kMaxPayload) {
    throw FrameError(FrameErrorKind::kOversize,
                     std::to_string(frame.payload.size()) + " bytes");
  }
  ByteWriter w;
  w.bytes().reserve(kFrameOverhead + frame.payload.size());
  w.put<std::uint32_t>(kFrameMagic);
  w.put<std::uint16_t>(kProtocolVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(frame.type));
  w.put<std::uint64_t>(frame.iteration);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(frame.payload.size()));
  w.put_bytes(frame.payload);
  w.put<std::uint32_t>(crc32_of(frame.payload));
  return w.take();
}

FrameHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) {
    throw FrameError(FrameErrorKind::kTruncated,
                     "header needs 20 bytes, got " + std::to_string(bytes.size()));
  }
  ByteReader r(bytes.first(kFrameHeaderSize));
  const auto magic = r.get<std::uint32_t>();
  if (magic != kFrameMagic) {
    throw FrameError(FrameErrorKind::kBadMagic, "magic " + std::to_string(magic));
  }
  FrameHeader h;
  h.version = r.get<std::uint16_t>();
  if (h.version != kProtocolVersion) {
    throw FrameError(FrameErrorKind::kVersionMismatch,
                     "peer version " + std::to_string(h.version) +
                         ", local version " + std::to_string(kProtocolVersion));
  }
  const auto type = r.get<std::uint16_t>();
  if (type < 1 || type > 4) {
    throw FrameError(FrameErrorKind::kMalformed,
                     "unknown frame type " + std::to_string(type));
  }
  h.type = static_cast<FrameType>(type);
  h.iteration = r.get<std::uint64_t>();
  h.payload_len = r.get<std::uint32_t>();
  if (h.payload_len > kMaxPayload) {
    throw FrameError(FrameErrorKind::kOversize,
                     std::to_string(h.payload_len) + " bytes");
  }
  return h;
}

RawFrame decode_frame(std::span<const std::uint8_t> bytes) {
  const FrameHeader h = decode_header(bytes);
  const std::size_t total = kFrameOverhead + h.payload_len;
  if (bytes.size() < total) {
    throw FrameError(FrameErrorKind::kTruncated,
                     "frame needs " + std::to_string(total) + " bytes, got " +
                         std::to_string(bytes.size()));
  }
  if (bytes.size() > total) {
    throw FrameError(FrameErrorKind::kMalformed,
                     std::to_string(bytes.size() - total) + " bytes after frame");
  }
  const auto payload = bytes.subspan(kFrameHeaderSize, h.payload_len);
  ByteReader tail(bytes.subspan(kFrameHeaderSize + h.payload_len));
  const auto crc = tail.get<std::uint32_t>();
  if (crc != crc32_of(payload)) {
    throw FrameError(FrameErrorKind::kChecksum, "payload crc mismatch");
  }
  RawFrame f;
  f.type = h.type;
  f.iteration = h.iteration;
  f.payload.assign(payload.begin(), payload.end());
  return f;
}

namespace {

void expect_type(const RawFrame& f, FrameType t) {
  if (f.type != t) {
    throw FrameError(FrameErrorKind::kMalformed,
                     std::string("expected ") + to_string(t) + " frame, got " +
                         to_string(f.type));
  }
}

constexpr std::uint8_t kSeqNew = 1u << 0;

}  // namespace

RawFrame to_frame(const SchedulingOutput& s) {
  ByteWriter w;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.seqs.size()));
  for (const SeqDescriptor& d : s.seqs) {
    w.put<std::uint64_t>(d.seq_id);
    w.put<std::uint32_t>(d.history_len);
    w.put<std::int32_t>(d.last_token);
    w.put<std::uint8_t>(d.prompt ? kSeqNew : 0);
    const SamplingParams& p = d.params;
    w.put<double>(p.temperature);
    w.put<std::uint32_t>(p.top_k ? static_cast<std::uint32_t>(*p.top_k) : 0u);
    w.put<double>(p.top_p);
    w.put<double>(p.min_p);
    w.put<double>(p.repetition_penalty);
    w.put<double>(p.presence_penalty);
    w.put<double>(p.frequency_penalty);
    w.put<std::uint64_t>(p.seed);
    if (d.prompt) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(d.prompt->size()));
      w.put_array<std::int32_t>(*d.prompt);
    }
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.retired.size()));
  w.put_array<std::uint64_t>(s.retired);
  return {FrameType::kSchedulingOutput, s.iteration, w.take()};
}

SchedulingOutput scheduling_from_frame(const RawFrame& f) {
  expect_type(f, FrameType::kSchedulingOutput);
  ByteReader r(f.payload);
  SchedulingOutput s;
  s.iteration = f.iteration;
  const auto n = r.get<std::uint32_t>();
  // Each descriptor takes at least 77 bytes; reject absurd counts early.
  if (n > r.remaining() / 77) {
    throw FrameError(FrameErrorKind::kMalformed, "sequence count exceeds payload");
  }
  s.seqs.resize(n);
  for (SeqDescriptor& d : s.seqs) {
    d.seq_id = r.get<std::uint64_t>();
    d.history_len = r.get<std::uint32_t>();
    d.last_token = r.get<std::int32_t>();
    const auto flags = r.get<std::uint8_t>();
    if (flags & ~kSeqNew) {
      throw FrameError(FrameErrorKind::kMalformed, "unknown sequence flags");
    }
    SamplingParams& p = d.params;
    p.temperature = r.get<double>();
    const auto k = r.get<std::uint32_t>();
    if (k != 0) p.top_k = static_cast<int>(k);
    p.top_p = r.get<double>();
    p.min_p = r.get<double>();
    p.repetition_penalty = r.get<double>();
    p.presence_penalty = r.get<double>();
    p.frequency_penalty = r.get<double>();
    p.seed = r.get<std::uint64_t>();
    if (flags & kSeqNew) {
      const auto len = r.get<std::uint32_t>();
      if (len > r.remaining() / 4) {
        throw FrameError(FrameErrorKind::kMalformed, "prompt length exceeds payload");
      }
      std::vector<TokenId> prompt(len);
      r.get_array<std::int32_t>(prompt);
      d.prompt = std::move(prompt);
    }
  }
  const auto retired = r.get<std::uint32_t>();
  if (retired > r.remaining() / 8) {
    throw FrameError(FrameErrorKind::kMalformed, "retired count exceeds payload");
  }
  s.retired.resize(retired);
  r.get_array<std::uint64_t>(s.retired);
  r.expect_end();
  return s;
}

RawFrame decisions_to_frame(std::uint64_t iteration,
                            std::span<const TokenDecision> decisions) {
  ByteWriter w;
  if (!decisions.empty()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(decisions.size()));
    for (const TokenDecision& d : decisions) {
      w.put<std::uint64_t>(d.seq_id);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(d.token));
      std::uint8_t flags = 0;
      if (d.is_eos) flags |= kFlagEos;
      if (d.accepted_hot) flags |= kFlagAcceptedHot;
      if (d.logprob) flags |= kFlagLogprob;
      w.put<std::uint8_t>(flags);
      if (d.logprob) w.put<float>(*d.logprob);
    }
  }
  return {FrameType::kDecisionBatch, iteration, w.take()};
}

std::vector<TokenDecision> decisions_from_frame(const RawFrame& f) {
  expect_type(f, FrameType::kDecisionBatch);
  std::vector<TokenDecision> out;
  if (f.payload.empty()) return out;
  ByteReader r(f.payload);
  const auto n = r.get<std::uint32_t>();
  if (n > r.remaining() / 13) {
    throw FrameError(FrameErrorKind::kMalformed, "decision count exceeds payload");
  }
  out.resize(n);
  for (TokenDecision& d : out) {
    d.iteration = f.iteration;
    d.seq_id = r.get<std::uint64_t>();
    const auto token = r.get<std::uint32_t>();
    if (token > static_cast<std::uint32_t>(std::numeric_limits<TokenId>::max())) {
      throw FrameError(FrameErrorKind::kMalformed, "token id out of range");
    }
    d.token = static_cast<TokenId>(token);
    const auto flags = r.get<std::uint8_t>();
    if (flags & ~(kFlagEos | kFlagAcceptedHot | kFlagLogprob)) {
      throw FrameError(FrameErrorKind::kMalformed, "unknown decision flags");
    }
    d.is_eos = flags & kFlagEos;
    d.accepted_hot = flags & kFlagAcceptedHot;
    if (flags & kFlagLogprob) d.logprob = r.get<float>();
  }
  r.expect_end();
  return out;
}

RawFrame control_to_frame(std::uint64_t iteration, const ControlPairs& pairs) {
  std::string text;
  for (const auto& [k, v] : pairs) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw std::invalid_argument("control key/value must be single-line, key without '='");
    }
    text += k;
    text += '=';
    text += v;
    text += '\n';
  }
  return {FrameType::kControl, iteration,
          std::vector<std::uint8_t>(text.begin(), text.end())};
}

ControlPairs control_from_frame(const RawFrame& f) {
  expect_type(f, FrameType::kControl);
  ControlPairs pairs;
  const std::string text(f.payload.begin(), f.payload.end());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FrameError(FrameErrorKind::kMalformed, "control line '" + line + "'");
    }
    pairs.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return pairs;
}

}  // namespace dplane
