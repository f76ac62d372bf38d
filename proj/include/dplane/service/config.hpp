// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Engine configuration: `key = value` lines, '#' comments. The file named
// by SIMPLE_CONFIG is read when no explicit path is given; command-line
// overrides apply last.

#pragma once

#include "dplane/core.hpp"
#include "dplane/pipesim.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace dplane {

enum class Variant { kBaselineFull, kParallelFull, kOffloadTruncate, kShvs };

Variant parse_variant(const std::string& s);
const char* to_string(Variant v);

enum class LogitsSource { kSyntheticZipf, kTrace };

struct EngineConfig {
  int vocab_size = 1024;
  int tp = 1;
  int pipeline_depth = 1;  // microbatches in flight
  int batch = 8;           // sequences per microbatch
  int samplers = 1;
  int threads_per_sampler = 1;
  std::uint64_t seed = 0;
  std::string hot_vocab_path;  // empty: derive from the synthetic ranking
  int hot_size = 256;
  Variant variant = Variant::kShvs;
  LogitsSource source = LogitsSource::kSyntheticZipf;
  double zipf_s = 1.2;
  double noise = 0.5;
  std::string trace_path;   // replayed when source = trace
  std::string record_path;  // produced shards are appended here when set
  int iterations = 100;
  std::size_t max_len = kDefaultMaxLen;
  int prompt_len = 8;
  std::vector<TokenId> eos_ids;
  bool ignore_eos = true;
  bool logprobs = false;
  int collect_timeout_ms = 10000;
  SamplingParams params;

  // Pipeline model inputs shared with the simulator.
  PipelineSpec pipeline{{10.0, 10.0, 12.0}, 3.0, Placement::kLastStage,
                        kDefaultOverlapEfficiency};

  // Throws ConfigError listing every problem.
  void validate() const;
};

using ConfigPairs = std::map<std::string, std::string>;

// Parses `key = value` text. Throws ConfigError on syntax errors.
ConfigPairs parse_config_text(const std::string& text);

// Applies pairs onto `cfg`. Throws ConfigError on unknown keys or bad values.
void apply_config(EngineConfig& cfg, const ConfigPairs& pairs);

// File (or $SIMPLE_CONFIG when `path` is empty and the variable is set),
// then overrides, then validation.
EngineConfig load_config(const std::filesystem::path& path,
                         const ConfigPairs& overrides = {});

std::string format_config(const EngineConfig& cfg);

}  // namespace dplane
