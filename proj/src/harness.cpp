// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/harness.hpp"

#include "dplane/penalty.hpp"
#include "dplane/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace dplane {
namespace {

void check_law(std::span<const double> p, const char* name) {
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  if (std::abs(s - 1.0) > 1e-9) {
    std::ostringstream os;
    os.precision(17);
    os << name << " sums to " << s << ", not 1";
    throw std::invalid_argument(os.str());
  }
}

double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

constexpr std::uint64_t kControlSalt = 0x636f6e74726f6cULL;

}  // namespace

double tvd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("tvd: support sizes differ (" + std::to_string(p.size()) +
                                " vs " + std::to_string(q.size()) + ")");
  }
  check_law(p, "tvd: first distribution");
  check_law(q, "tvd: second distribution");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return std::clamp(0.5 * d, 0.0, 1.0);
}

const char* to_string(TvdPair p) {
  switch (p) {
    case TvdPair::kAnalytic:
      return "analytic";
    case TvdPair::kShvsVsSoftmax:
      return "shvs-vs-softmax";
    case TvdPair::kFullVsSoftmax:
      return "full-vs-softmax";
  }
  return "?";
}

double tail_slope(std::span<const double> ys, std::size_t first) {
  if (ys.size() < first + 2) return 0.0;
  const std::size_t n = ys.size() - first;
  Eigen::ArrayXd x = Eigen::ArrayXd::LinSpaced(static_cast<Eigen::Index>(n),
                                               static_cast<double>(first),
                                               static_cast<double>(ys.size() - 1));
  Eigen::ArrayXd y = Eigen::Map<const Eigen::ArrayXd>(ys.data() + first,
                                                      static_cast<Eigen::Index>(n));
  x -= x.mean();
  y -= y.mean();
  return (x * y).sum() / (x * x).sum();
}

double slope_floor(const TvdReport& control) {
  const double n = static_cast<double>(control.per_step.size());
  if (n < 2) return 0.0;
  // The cumulative mean moves like a random walk divided by k; over the
  // last half its fitted slope has standard deviation near 2 sigma / n^1.5.
  return std::abs(control.last_half_slope) +
         3.0 * 2.0 * control.per_step_stddev / std::pow(n, 1.5);
}

TvdReport run_tvd_validation(const TvdConfig& cfg) {
  if (cfg.params.truncation_active()) {
    throw std::invalid_argument("tvd validation needs truncation disabled");
  }
  if (cfg.steps < 1 || cfg.vocab_size < 2) throw std::invalid_argument("tvd: empty run");
  if (cfg.hot_size < 1 || cfg.hot_size > cfg.vocab_size) {
    throw std::invalid_argument("tvd: hot_size outside [1, V]");
  }
  const double per_step = cfg.pair == TvdPair::kAnalytic
                              ? 8.0 * cfg.vocab_size
                              : 4.0 * cfg.vocab_size + 40.0 * static_cast<double>(cfg.draws);
  const double work = per_step * cfg.steps;
  if (work > cfg.max_work) {
    std::ostringstream os;
    os << "tvd run too large for this machine: about " << work
       << " element operations (limit " << cfg.max_work << ", roughly "
       << work / 2e8 << " s)";
    throw std::invalid_argument(os.str());
  }
  if (cfg.pair != TvdPair::kAnalytic && cfg.draws == 0) {
    throw std::invalid_argument("tvd: empirical mode needs draws > 0");
  }

  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const SyntheticLogits synth(cfg.vocab_size, cfg.zipf_s, cfg.noise, cfg.seed);
  const HotVocab hot = synth.hot_vocab(cfg.hot_size);
  const auto prompt = synth.prompt(0, 8);
  SequenceState state(0, prompt, cfg.vocab_size);
  const double rep = repetition_factor(cfg.params.repetition_penalty);

  TvdReport rep_out;
  rep_out.per_step.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<double> z(V);
  std::vector<std::uint64_t> hist(V);
  std::vector<double> emp(V);
  double alpha_sum = 0.0;
  double cum = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto it = static_cast<std::uint64_t>(step);
    const std::vector<float> raw = synth.row(it, 0);
    for (std::size_t v = 0; v < V; ++v) z[v] = raw[v];
    for (TokenId v : state.penalized_ids()) {
      z[static_cast<std::size_t>(v)] =
          penalize_one(z[static_cast<std::size_t>(v)], v, state, cfg.params, rep);
    }
    const std::vector<double> exact = full_distribution(z, cfg.params);
    const PreparedShvsRow shvs(z, hot, cfg.params);
    alpha_sum += shvs.alpha();

    double d = 0.0;
    if (cfg.pair == TvdPair::kAnalytic) {
      d = tvd(analytic_shvs_distribution(z, hot, cfg.params), exact);
    } else {
      std::fill(hist.begin(), hist.end(), 0);
      if (cfg.pair == TvdPair::kShvsVsSoftmax) {
        for (std::uint64_t k = 0; k < cfg.draws; ++k) {
          ++hist[static_cast<std::size_t>(shvs.sample(draws_for(cfg.seed, it, k)))];
        }
      } else {
        const PreparedFullRow full(z, cfg.params);
        const std::uint64_t seed = cfg.seed ^ kControlSalt;
        for (std::uint64_t k = 0; k < cfg.draws; ++k) {
          ++hist[static_cast<std::size_t>(full.sample(draw({seed, it, k, kHotDraw})))];
        }
      }
      const double inv = 1.0 / static_cast<double>(cfg.draws);
      for (std::size_t v = 0; v < V; ++v) emp[v] = static_cast<double>(hist[v]) * inv;
      d = tvd(emp, exact);
    }
    rep_out.per_step.push_back(d);
    cum += d;
    rep_out.cumulative_mean.push_back(cum / static_cast<double>(step + 1));

    // Grow the history so penalties evolve along the run.
    const PreparedFullRow next(z, cfg.params);
    state.append(next.sample(draw({cfg.seed, it, ~std::uint64_t{0}, kHotDraw})));
  }

  const std::size_t half = rep_out.per_step.size() / 2;
  rep_out.last_half_slope = tail_slope(rep_out.cumulative_mean, half);
  rep_out.per_step_stddev = stddev(rep_out.per_step);
  rep_out.mean_alpha = alpha_sum / cfg.steps;
  rep_out.window = "steps " + std::to_string(half) + ".." +
                   std::to_string(rep_out.per_step.size() - 1);
  std::ostringstream fp;
  fp << "pair=" << to_string(cfg.pair) << " V=" << cfg.vocab_size
     << " H=" << cfg.hot_size << " steps=" << cfg.steps << " draws=" << cfg.draws
     << " zipf_s=" << cfg.zipf_s << " noise=" << cfg.noise << " seed=" << cfg.seed
     << " temperature=" << cfg.params.temperature;
  rep_out.fingerprint = fp.str();
  if (cfg.slope_bound) {
    rep_out.drift = std::abs(rep_out.last_half_slope) > *cfg.slope_bound;
  }
  return rep_out;
}

void write_tvd_csv(std::ostream& os, const TvdReport& r) {
  os << "step,tvd,cumulative_mean\n";
  for (std::size_t i = 0; i < r.per_step.size(); ++i) {
    os << i << ',' << r.per_step[i] << ',' << r.cumulative_mean[i] << '\n';
  }
}

void write_tvd_summary(std::ostream& os, const TvdReport& r) {
  os << "config: " << r.fingerprint << '\n'
     << "steps: " << r.per_step.size() << '\n'
     << "final_cumulative_mean: " << r.final_mean() << '\n'
     << "max_step_tvd: "
     << (r.per_step.empty() ? 0.0 : *std::max_element(r.per_step.begin(), r.per_step.end()))
     << '\n'
     << "slope_window: " << r.window << '\n'
     << "last_half_slope: " << r.last_half_slope << '\n'
     << "per_step_stddev: " << r.per_step_stddev << '\n'
     << "mean_alpha: " << r.mean_alpha << '\n'
     << "drift: " << (r.drift ? "yes" : "no") << '\n';
}

// ---------------------------------------------------------------------------

AblationReport run_ablation_bench(EngineConfig cfg, Variant variant,
                                  double duration_s, int warmup, int min_iterations) {
  cfg.variant = variant;
  cfg.ignore_eos = true;
  Engine engine(cfg);
  engine.run(warmup);
  const EngineMetrics start = engine.metrics();

  auto sums = [](const EngineMetrics& m) {
    double cpu = 0.0;
    for (double c : m.sampler_cpu_seconds) cpu += c;
    return cpu;
  };
  std::vector<double> rates;
  EngineMetrics prev = start;
  const auto t0 = std::chrono::steady_clock::now();
  int done = 0;
  for (;;) {
    if (engine.run(1).empty()) break;
    ++done;
    const EngineMetrics now = engine.metrics();
    const double dcpu = sums(now) - sums(prev);
    const double dtok = static_cast<double>(now.tokens - prev.tokens);
    if (dcpu > 0.0) rates.push_back(dtok / dcpu);
    prev = now;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (done >= min_iterations && elapsed >= duration_s) break;
  }

  AblationReport r;
  r.variant = variant;
  r.iterations = prev.iterations - start.iterations;
  r.tokens = prev.tokens - start.tokens;
  for (std::size_t j = 0; j < prev.sampler_cpu_seconds.size(); ++j) {
    const double cpu = prev.sampler_cpu_seconds[j] - start.sampler_cpu_seconds[j];
    // Each sampler handles its partition of every iteration.
    const auto parts = partition_batch(static_cast<std::size_t>(cfg.batch),
                                       static_cast<std::size_t>(cfg.samplers));
    const double tok = static_cast<double>(parts[j].size() * r.iterations);
    r.sampler_tokens_per_second.push_back(cpu > 0.0 ? tok / cpu : 0.0);
  }
  const double cpu = sums(prev) - sums(start);
  r.tokens_per_second = cpu > 0.0 ? static_cast<double>(r.tokens) / cpu : 0.0;
  if (rates.size() > 1) r.ci95 = 1.96 * stddev(rates) / std::sqrt(static_cast<double>(rates.size()));

  WorkStats w = prev.work;
  w.visits -= start.work.visits;
  w.truncated_visits -= start.work.truncated_visits;
  w.rows -= start.work.rows;
  w.accepted -= start.work.accepted;
  w.alpha_sum -= start.work.alpha_sum;
  if (w.rows > 0) {
    r.visits_per_token = static_cast<double>(w.visits) / static_cast<double>(w.rows);
    r.truncated_visits_per_token =
        static_cast<double>(w.truncated_visits) / static_cast<double>(w.rows);
    if (variant == Variant::kShvs) {
      r.acceptance_rate = acceptance_rate(w);
      r.mean_alpha = w.alpha_sum / static_cast<double>(w.rows);
    }
  }
  return r;
}

void write_ablation_report(std::ostream& os, const AblationReport& r) {
  os << "variant: " << to_string(r.variant) << '\n'
     << "iterations: " << r.iterations << '\n'
     << "tokens: " << r.tokens << '\n'
     << "tokens_per_sampler_second: " << r.tokens_per_second << '\n'
     << "ci95: " << r.ci95 << '\n';
  for (std::size_t j = 0; j < r.sampler_tokens_per_second.size(); ++j) {
    os << "sampler_" << j << "_tokens_per_second: " << r.sampler_tokens_per_second[j] << '\n';
  }
  os << "visits_per_token: " << r.visits_per_token << '\n'
     << "truncated_visits_per_token: " << r.truncated_visits_per_token << '\n'
     << "acceptance_rate: " << r.acceptance_rate << '\n'
     << "mean_alpha: " << r.mean_alpha << '\n';
}

// ---------------------------------------------------------------------------

SizingValidation run_sizing_validation(EngineConfig cfg, std::span<const int> grid,
                                       int iterations, SizingMeasure measure) {
  if (grid.size() < 3) throw std::invalid_argument("sizing grid needs at least 3 points");
  if (!std::is_sorted(grid.begin(), grid.end()) ||
      std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
    throw std::invalid_argument("sizing grid must be strictly increasing");
  }
  if (grid.front() < 1 || grid.back() > cfg.vocab_size) {
    throw std::invalid_argument("sizing grid outside [1, V]");
  }
  cfg.variant = Variant::kShvs;
  cfg.ignore_eos = true;
  const double V = cfg.vocab_size;

  SizingValidation out;
  out.grid.assign(grid.begin(), grid.end());
  std::vector<std::pair<double, double>> points;
  for (int h : grid) {
    cfg.hot_size = h;
    Engine engine(cfg);
    engine.run(iterations);
    const EngineMetrics m = engine.metrics();
    const double rows = static_cast<double>(std::max<std::uint64_t>(m.work.rows, 1));
    double cost = 0.0;
    if (measure == SizingMeasure::kVisits) {
      cost = static_cast<double>(m.work.visits) / rows;
    } else {
      double cpu = 0.0;
      for (double c : m.sampler_cpu_seconds) cpu += c;
      cost = cpu / rows;
    }
    const double a = m.mean_alpha;
    out.measured_cost.push_back(cost);
    out.mean_alpha.push_back(a);
    points.emplace_back(a * h + (1.0 - a) * (V - h), cost);
  }
  out.fit = fit_affine_cost(points);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.predicted_cost.push_back(out.fit.c0 + out.fit.c * points[i].first);
  }
  const auto best = [&](const std::vector<double>& cost) {
    return static_cast<std::size_t>(std::min_element(cost.begin(), cost.end()) - cost.begin());
  };
  const std::size_t mb = best(out.measured_cost);
  const std::size_t pb = best(out.predicted_cost);
  out.measured_best = out.grid[mb];
  out.predicted_best = out.grid[pb];
  out.agree = (mb > pb ? mb - pb : pb - mb) <= 1;
  return out;
}

void write_sizing_validation(std::ostream& os, const SizingValidation& v) {
  os << "hot_size,mean_alpha,measured_cost,predicted_cost,measured_rate,predicted_rate\n";
  for (std::size_t i = 0; i < v.grid.size(); ++i) {
    os << v.grid[i] << ',' << v.mean_alpha[i] << ',' << v.measured_cost[i] << ','
       << v.predicted_cost[i] << ',' << 1.0 / v.measured_cost[i] << ','
       << 1.0 / v.predicted_cost[i] << '\n';
  }
  os << "# c0: " << v.fit.c0 << '\n'
     << "# c: " << v.fit.c << '\n'
     << "# measured_best: " << v.measured_best << '\n'
     << "# predicted_best: " << v.predicted_best << '\n'
     << "# agree: " << (v.agree ? "yes" : "no") << '\n';
}

}  // namespace dplane
