// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Validation and benchmark drivers: distribution distance checks, the
// variant throughput ladder, and hot-size sweeps against the cost model.

#pragma once

#include "dplane/service/engine.hpp"
#include "dplane/sizing.hpp"

#include <iosfwd>

namespace dplane {

// 0.5 * sum |p - q|. Both must sum to 1 within 1e-9 and have equal length.
double tvd(std::span<const double> p, std::span<const double> q);

enum class TvdPair {
  kAnalytic,         // exact SHVS law vs softmax
  kShvsVsSoftmax,    // SHVS histogram vs softmax
  kFullVsSoftmax,    // full-path histogram vs softmax (noise-floor control)
};

const char* to_string(TvdPair p);

struct TvdConfig {
  int vocab_size = 1024;
  int hot_size = 256;
  int steps = 1000;
  std::uint64_t draws = 100000;
  TvdPair pair = TvdPair::kShvsVsSoftmax;
  // Synthetic rows. Peaked rows keep the Monte Carlo floor of a 10^5-draw
  // histogram well under one percent at V = 1024.
  double zipf_s = 2.5;
  double noise = 1.0;
  std::uint64_t seed = 0;
  SamplingParams params;
  std::optional<double> slope_bound;
  // Refuse runs whose estimated work exceeds this many element operations.
  double max_work = 2e11;
};

struct TvdReport {
  std::vector<double> per_step;
  std::vector<double> cumulative_mean;
  std::string window;       // which steps the slope is measured over
  std::string fingerprint;  // config summary
  double last_half_slope = 0.0;
  double per_step_stddev = 0.0;
  double mean_alpha = 0.0;
  bool drift = false;

  double final_mean() const {
    return cumulative_mean.empty() ? 0.0 : cumulative_mean.back();
  }
};

// Throws std::invalid_argument when truncation is enabled or the run is
// too large, with the work estimate in the message.
TvdReport run_tvd_validation(const TvdConfig& cfg);

// Largest last-half slope magnitude consistent with pure sampling noise,
// judged from a control run of the same length.
double slope_floor(const TvdReport& control);

// OLS slope of ys[first..] against their indices.
double tail_slope(std::span<const double> ys, std::size_t first);

void write_tvd_csv(std::ostream& os, const TvdReport& r);
void write_tvd_summary(std::ostream& os, const TvdReport& r);

struct AblationReport {
  Variant variant = Variant::kShvs;
  std::vector<double> sampler_tokens_per_second;
  double tokens_per_second = 0.0;  // per sampler, over the window
  double ci95 = 0.0;               // half width, over per-iteration rates
  double visits_per_token = 0.0;
  double truncated_visits_per_token = 0.0;
  double acceptance_rate = 0.0;
  double mean_alpha = 0.0;
  std::uint64_t iterations = 0;
  std::uint64_t tokens = 0;
};

// Runs `warmup` iterations, then measures until `duration_s` of wall time
// and at least `min_iterations` iterations have passed.
AblationReport run_ablation_bench(EngineConfig cfg, Variant variant,
                                  double duration_s, int warmup = 2,
                                  int min_iterations = 3);

void write_ablation_report(std::ostream& os, const AblationReport& r);

enum class SizingMeasure {
  kCpuTime,  // sampler CPU seconds per token
  kVisits,   // logits read per token, deterministic
};

struct SizingValidation {
  std::vector<int> grid;
  std::vector<double> measured_cost;  // per token, in the chosen measure
  std::vector<double> mean_alpha;
  std::vector<double> predicted_cost;  // fitted F(H)
  AffineFit fit;
  int measured_best = 0;
  int predicted_best = 0;
  bool agree = false;  // argmax of 1/cost within one grid step
};

// Runs the shvs engine at each grid H for `iterations` iterations. Throws
// std::invalid_argument for fewer than three grid points.
SizingValidation run_sizing_validation(EngineConfig cfg, std::span<const int> grid,
                                       int iterations,
                                       SizingMeasure measure = SizingMeasure::kVisits);

void write_sizing_validation(std::ostream& os, const SizingValidation& v);

}  // namespace dplane
