// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/service/config.hpp"

#include "dplane/transport/layout.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace dplane {

Variant parse_variant(const std::string& s) {
  if (s == "baseline-full") return Variant::kBaselineFull;
  if (s == "parallel-full") return Variant::kParallelFull;
  if (s == "offload-truncate") return Variant::kOffloadTruncate;
  if (s == "shvs") return Variant::kShvs;
  throw ConfigError("unknown variant '" + s +
                    "' (baseline-full, parallel-full, offload-truncate, shvs)");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kBaselineFull:
      return "baseline-full";
    case Variant::kParallelFull:
      return "parallel-full";
    case Variant::kOffloadTruncate:
      return "offload-truncate";
    case Variant::kShvs:
      return "shvs";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const std::from_chars_result r = std::from_chars(first, last, out);
  if (r.ec != std::errc() || r.ptr != last) {
    throw ConfigError("bad value for " + key + ": '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  return out;
}

using Setter = std::function<void(EngineConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto integer = [&t](const std::string& key, int EngineConfig::*field) {
      t[key] = [key, field](EngineConfig& c, const std::string& v) {
        c.*field = parse_number<int>(key, v);
      };
    };
    integer("vocab_size", &EngineConfig::vocab_size);
    integer("tp", &EngineConfig::tp);
    integer("pipeline_depth", &EngineConfig::pipeline_depth);
    integer("batch", &EngineConfig::batch);
    integer("samplers", &EngineConfig::samplers);
    integer("threads_per_sampler", &EngineConfig::threads_per_sampler);
    integer("hot_size", &EngineConfig::hot_size);
    integer("iterations", &EngineConfig::iterations);
    integer("prompt_len", &EngineConfig::prompt_len);
    integer("collect_timeout_ms", &EngineConfig::collect_timeout_ms);
    t["seed"] = [](EngineConfig& c, const std::string& v) {
      c.seed = parse_number<std::uint64_t>("seed", v);
      c.params.seed = c.seed;
    };
    t["max_len"] = [](EngineConfig& c, const std::string& v) {
      c.max_len = parse_number<std::size_t>("max_len", v);
    };
    t["hot_vocab_path"] = [](EngineConfig& c, const std::string& v) { c.hot_vocab_path = v; };
    t["trace_path"] = [](EngineConfig& c, const std::string& v) { c.trace_path = v; };
    t["record_path"] = [](EngineConfig& c, const std::string& v) { c.record_path = v; };
    t["variant"] = [](EngineConfig& c, const std::string& v) { c.variant = parse_variant(v); };
    t["source"] = [](EngineConfig& c, const std::string& v) {
      if (v == "synthetic-zipf" || v == "synthetic") {
        c.source = LogitsSource::kSyntheticZipf;
      } else if (v == "trace" || v == "file-trace") {
        c.source = LogitsSource::kTrace;
      } else {
        throw ConfigError("unknown source '" + v + "' (synthetic-zipf, trace)");
      }
    };
    t["zipf_s"] = [](EngineConfig& c, const std::string& v) {
      c.zipf_s = parse_number<double>("zipf_s", v);
    };
    t["noise"] = [](EngineConfig& c, const std::string& v) {
      c.noise = parse_number<double>("noise", v);
    };
    t["eos_ids"] = [](EngineConfig& c, const std::string& v) {
      c.eos_ids.clear();
      for (double d : parse_doubles("eos_ids", v)) c.eos_ids.push_back(static_cast<TokenId>(d));
    };
    t["ignore_eos"] = [](EngineConfig& c, const std::string& v) {
      c.ignore_eos = parse_bool("ignore_eos", v);
    };
    t["logprobs"] = [](EngineConfig& c, const std::string& v) {
      c.logprobs = parse_bool("logprobs", v);
    };
    t["temperature"] = [](EngineConfig& c, const std::string& v) {
      c.params.temperature = parse_number<double>("temperature", v);
    };
    t["top_k"] = [](EngineConfig& c, const std::string& v) {
      if (v == "disabled" || v == "none" || v == "0") {
        c.params.top_k.reset();
      } else {
        c.params.top_k = parse_number<int>("top_k", v);
      }
    };
    t["top_p"] = [](EngineConfig& c, const std::string& v) {
      c.params.top_p = parse_number<double>("top_p", v);
    };
    t["min_p"] = [](EngineConfig& c, const std::string& v) {
      c.params.min_p = parse_number<double>("min_p", v);
    };
    t["repetition_penalty"] = [](EngineConfig& c, const std::string& v) {
      c.params.repetition_penalty = parse_number<double>("repetition_penalty", v);
    };
    t["presence_penalty"] = [](EngineConfig& c, const std::string& v) {
      c.params.presence_penalty = parse_number<double>("presence_penalty", v);
    };
    t["frequency_penalty"] = [](EngineConfig& c, const std::string& v) {
      c.params.frequency_penalty = parse_number<double>("frequency_penalty", v);
    };
    t["stages"] = [](EngineConfig& c, const std::string& v) {
      c.pipeline.stages = parse_doubles("stages", v);
    };
    t["sampling"] = [](EngineConfig& c, const std::string& v) {
      c.pipeline.sampling = parse_number<double>("sampling", v);
    };
    t["placement"] = [](EngineConfig& c, const std::string& v) {
      try {
        c.pipeline.placement = parse_placement(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    };
    t["eta"] = [](EngineConfig& c, const std::string& v) {
      c.pipeline.eta = parse_number<double>("eta", v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void EngineConfig::validate() const {
  std::vector<std::string> errors;
  if (vocab_size < 1) errors.push_back("vocab_size must be >= 1");
  if (tp < 1) errors.push_back("tp must be >= 1");
  if (vocab_size >= 1 && tp >= 1 && vocab_size % tp != 0) {
    errors.push_back("vocab_size " + std::to_string(vocab_size) +
                     " is not divisible by tp " + std::to_string(tp));
  }
  if (pipeline_depth < 1) errors.push_back("pipeline_depth must be >= 1");
  if (batch < 1) errors.push_back("batch must be >= 1");
  if (samplers < 1) errors.push_back("samplers must be >= 1");
  if (threads_per_sampler < 1) errors.push_back("threads_per_sampler must be >= 1");
  if (hot_size < 1 || hot_size > vocab_size) errors.push_back("hot_size must be in [1, vocab_size]");
  if (iterations < 0) errors.push_back("iterations must be >= 0");
  if (max_len < 1) errors.push_back("max_len must be >= 1");
  if (prompt_len < 0) errors.push_back("prompt_len must be >= 0");
  if (collect_timeout_ms < 1) errors.push_back("collect_timeout_ms must be >= 1");
  if (!(noise >= 0.0)) errors.push_back("noise must be >= 0");
  if (!(zipf_s >= 0.0)) errors.push_back("zipf_s must be >= 0");
  if (source == LogitsSource::kTrace && trace_path.empty()) {
    errors.push_back("source = trace needs trace_path");
  }
  for (TokenId e : eos_ids) {
    if (e < 0 || e >= vocab_size) errors.push_back("eos id " + std::to_string(e) + " outside vocabulary");
  }
  for (const ParamError& e : validate_params(params, vocab_size)) errors.push_back(e.message);
  try {
    pipeline.validate();
  } catch (const std::invalid_argument& e) {
    errors.push_back(e.what());
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

ConfigPairs parse_config_text(const std::string& text) {
  ConfigPairs pairs;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    pairs[key] = trim(line.substr(eq + 1));
  }
  return pairs;
}

void apply_config(EngineConfig& cfg, const ConfigPairs& pairs) {
  const auto& table = setters();
  for (const auto& [key, value] : pairs) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, value);
  }
}

EngineConfig load_config(const std::filesystem::path& path,
                         const ConfigPairs& overrides) {
  std::filesystem::path file = path;
  if (file.empty()) {
    if (const char* env = std::getenv("SIMPLE_CONFIG"); env && *env) file = env;
  }
  EngineConfig cfg;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config(cfg, parse_config_text(ss.str()));
  }
  apply_config(cfg, overrides);
  cfg.validate();
  return cfg;
}

std::string format_config(const EngineConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "vocab_size = " << c.vocab_size << '\n'
     << "tp = " << c.tp << '\n'
     << "pipeline_depth = " << c.pipeline_depth << '\n'
     << "batch = " << c.batch << '\n'
     << "samplers = " << c.samplers << '\n'
     << "threads_per_sampler = " << c.threads_per_sampler << '\n'
     << "seed = " << c.seed << '\n'
     << "hot_vocab_path = " << c.hot_vocab_path << '\n'
     << "hot_size = " << c.hot_size << '\n'
     << "variant = " << to_string(c.variant) << '\n'
     << "source = " << (c.source == LogitsSource::kTrace ? "trace" : "synthetic-zipf") << '\n'
     << "zipf_s = " << c.zipf_s << '\n'
     << "noise = " << c.noise << '\n'
     << "trace_path = " << c.trace_path << '\n'
     << "record_path = " << c.record_path << '\n'
     << "iterations = " << c.iterations << '\n'
     << "max_len = " << c.max_len << '\n'
     << "prompt_len = " << c.prompt_len << '\n'
     << "eos_ids = ";
  for (std::size_t i = 0; i < c.eos_ids.size(); ++i) os << (i ? "," : "") << c.eos_ids[i];
  os << '\n'
     << "ignore_eos = " << (c.ignore_eos ? "true" : "false") << '\n'
     << "logprobs = " << (c.logprobs ? "true" : "false") << '\n'
     << "collect_timeout_ms = " << c.collect_timeout_ms << '\n'
     << "temperature = " << c.params.temperature << '\n'
     << "top_k = " << (c.params.top_k ? std::to_string(*c.params.top_k) : "disabled") << '\n'
     << "top_p = " << c.params.top_p << '\n'
     << "min_p = " << c.params.min_p << '\n'
     << "repetition_penalty = " << c.params.repetition_penalty << '\n'
     << "presence_penalty = " << c.params.presence_penalty << '\n'
     << "frequency_penalty = " << c.params.frequency_penalty << '\n'
     << "stages = ";
  for (std::size_t i = 0; i < c.pipeline.stages.size(); ++i) {
    os << (i ? "," : "") << c.pipeline.stages[i];
  }
  os << '\n'
     << "sampling = " << c.pipeline.sampling << '\n'
     << "placement = " << to_string(c.pipeline.placement) << '\n'
     << "eta = " << c.pipeline.eta << '\n';
  return os.str();
}

}  // namespace dplane
