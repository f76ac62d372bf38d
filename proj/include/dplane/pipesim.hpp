// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Pipeline analytics for the sampling stage: drift of the sampling share
// under speedup, cycle time, bubble fraction, and a discrete-event serving
// model. Times are in any consistent unit.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dplane {

enum class Placement { kLastStage, kOffloaded };

Placement parse_placement(const std::string& s);
const char* to_string(Placement p);

inline constexpr double kDefaultOverlapEfficiency = 0.9;

struct PipelineSpec {
  std::vector<double> stages;  // per-stage compute time, sampling excluded
  double sampling = 0.0;
  Placement placement = Placement::kLastStage;
  // Fraction of the sampling time hidden under compute when offloaded.
  double eta = kDefaultOverlapEfficiency;

  void validate() const;
};

// f' = f / (f + (1 - f) / rho).
double sampling_fraction_after_speedup(double f, double rho);

double cycle_time(const PipelineSpec& spec);

// sum_i (T_cycle - T_i) / (p * T_cycle).
double bubble_fraction(const PipelineSpec& spec);

struct ServingOptions {
  double rate = 0.0;     // request arrivals per time unit
  double horizon = 0.0;  // simulated time
  int slots = 8;         // tokens injected per microbatch
  int tokens_per_request = 32;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct ServingReport {
  double rate = 0.0;
  double throughput = 0.0;  // tokens per time unit
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  double bubble = 0.0;
  std::uint64_t tokens = 0;  // completed inside the measurement window
};

// One microbatch of `slots` tokens enters the pipeline every T_cycle and
// completes p cycles later. Each request emits its tokens one after
// another; a token becomes ready when its predecessor completes. Latency is
// completion minus ready time. Arrival times for different rates share the
// same unit-exponential gaps.
ServingReport simulate_serving(const PipelineSpec& spec,
                               const ServingOptions& options);

void write_serving_csv_header(std::ostream& os);
void write_serving_csv_row(std::ostream& os, const ServingReport& r);

}  // namespace dplane
