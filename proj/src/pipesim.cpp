// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/pipesim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <random>
#include <stdexcept>

namespace dplane {

Placement parse_placement(const std::string& s) {
  if (s == "last" || s == "last-stage") return Placement::kLastStage;
  if (s == "offload" || s == "offloaded") return Placement::kOffloaded;
  throw std::invalid_argument("unknown placement '" + s + "'");
}

const char* to_string(Placement p) {
  return p == Placement::kLastStage ? "last" : "offload";
}

void PipelineSpec::validate() const {
  if (stages.empty()) throw std::invalid_argument("pipeline needs at least one stage");
  for (double t : stages) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw std::invalid_argument("stage times must be finite and >= 0");
    }
  }
  if (!(sampling >= 0.0) || !std::isfinite(sampling)) {
    throw std::invalid_argument("sampling time must be finite and >= 0");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must be in [0, 1]");
}

double sampling_fraction_after_speedup(double f, double rho) {
  if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("f must be in [0, 1]");
  if (!(rho >= 1.0)) throw std::invalid_argument("rho must be >= 1");
  if (std::isinf(rho)) return f > 0.0 ? 1.0 : 0.0;
  if (f == 0.0) return 0.0;
  return f / (f + (1.0 - f) / rho);
}

double cycle_time(const PipelineSpec& spec) {
  spec.validate();
  const double max_stage = *std::max_element(spec.stages.begin(), spec.stages.end());
  const double exposed = spec.placement == Placement::kLastStage
                             ? spec.sampling
                             : (1.0 - spec.eta) * spec.sampling;
  return std::max(max_stage, spec.stages.back() + exposed);
}

double bubble_fraction(const PipelineSpec& spec) {
  const double cycle = cycle_time(spec);
  if (cycle == 0.0) return 0.0;
  double idle = 0.0;
  for (double t : spec.stages) idle += cycle - t;
  return idle / (static_cast<double>(spec.stages.size()) * cycle);
}

namespace {

double percentile(std::vector<double>& xs, double q) {
  if (xs.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(xs.size())));
  const std::size_t idx = std::clamp<std::size_t>(rank, 1, xs.size()) - 1;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(idx), xs.end());
  return xs[idx];
}

struct Token {
  std::uint32_t request;
  double ready;
};

}  // namespace

ServingReport simulate_serving(const PipelineSpec& spec,
                               const ServingOptions& opt) {
  const double cycle = cycle_time(spec);
  if (!(cycle > 0.0)) throw std::invalid_argument("cycle time must be positive");
  if (!(opt.rate >= 0.0)) throw std::invalid_argument("rate must be >= 0");
  if (!(opt.horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (opt.slots < 1 || opt.tokens_per_request < 1) {
    throw std::invalid_argument("slots and tokens_per_request must be >= 1");
  }
  const auto depth = static_cast<std::int64_t>(spec.stages.size());
  const double warmup = opt.warmup_fraction * opt.horizon;

  std::vector<double> arrivals;
  if (opt.rate > 0.0) {
    std::mt19937_64 gen(opt.seed);
    std::exponential_distribution<double> unit(1.0);
    double acc = 0.0;
    for (;;) {
      acc += unit(gen);
      const double t = acc / opt.rate;
      if (t >= opt.horizon) break;
      arrivals.push_back(t);
    }
  }

  std::vector<int> remaining(arrivals.size(), opt.tokens_per_request);
  std::deque<Token> ready;
  // In-flight microbatches complete in injection order.
  std::deque<std::pair<std::int64_t, std::vector<Token>>> in_flight;
  std::vector<double> latencies;
  std::uint64_t window_tokens = 0;
  std::size_t next_arrival = 0;

  for (std::int64_t k = 0;; ++k) {
    const double now = static_cast<double>(k) * cycle;
    if (now > opt.horizon) break;
    while (next_arrival < arrivals.size() && arrivals[next_arrival] <= now) {
      ready.push_back({static_cast<std::uint32_t>(next_arrival), arrivals[next_arrival]});
      ++next_arrival;
    }
    while (!in_flight.empty() && in_flight.front().first + depth <= k) {
      for (const Token& tok : in_flight.front().second) {
        if (now >= warmup) {
          latencies.push_back(now - tok.ready);
          ++window_tokens;
        }
        if (--remaining[tok.request] > 0) ready.push_back({tok.request, now});
      }
      in_flight.pop_front();
    }
    std::vector<Token> batch;
    while (!ready.empty() && batch.size() < static_cast<std::size_t>(opt.slots)) {
      batch.push_back(ready.front());
      ready.pop_front();
    }
    if (!batch.empty()) in_flight.emplace_back(k, std::move(batch));
  }

  ServingReport r;
  r.rate = opt.rate;
  r.bubble = bubble_fraction(spec);
  r.tokens = window_tokens;
  r.throughput = static_cast<double>(window_tokens) / (opt.horizon - warmup);
  r.p50 = percentile(latencies, 0.50);
  r.p95 = percentile(latencies, 0.95);
  r.p99 = percentile(latencies, 0.99);
  return r;
}

void write_serving_csv_header(std::ostream& os) {
  os << "rate,throughput,p50,p95,p99,bubble\n";
}

void write_serving_csv_row(std::ostream& os, const ServingReport& r) {
  os << r.rate << ',' << r.throughput << ',' << r.p50 << ',' << r.p95 << ','
     << r.p99 << ',' << r.bubble << '\n';
}

}  // namespace dplane
