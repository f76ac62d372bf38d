// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/harness.hpp"
#include "dplane/pipesim.hpp"
#include "dplane/rng.hpp"
#include "dplane/service/server.hpp"
#include "dplane/shvs.hpp"
#include "dplane/sizing.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <csignal>
#include <iostream>

namespace {

using namespace dplane;

// `key=value` strings from repeated --set flags.
ConfigPairs parse_overrides(const std::vector<std::string>& sets) {
  ConfigPairs out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value: " + s);
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

// a:b:step, inclusive of b when it lands on the step.
std::vector<double> parse_grid(const std::string& s) {
  const auto a = s.find(':'), b = s.rfind(':');
  if (a == std::string::npos || a == b) throw CLI::ValidationError("--grid", "expected a:b:step");
  const double lo = std::stod(s.substr(0, a));
  const double hi = std::stod(s.substr(a + 1, b - a - 1));
  const double step = std::stod(s.substr(b + 1));
  if (!(step > 0.0) || hi < lo) throw CLI::ValidationError("--grid", "empty grid " + s);
  std::vector<double> out;
  for (double h = lo; h <= hi + 1e-9 * step; h += step) out.push_back(std::round(h));
  return out;
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  EngineConfig load() const {
    ConfigPairs o = parse_overrides(sets);
    if (seed) o["seed"] = std::to_string(*seed);
    return load_config(config, o);
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value config file (default: $SIMPLE_CONFIG)");
  app->add_option("--set", c.sets, "override one config key, key=value");
  app->add_option("--seed", c.seed, "seed for draws and synthetic logits");
}

FrameServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Common& c, const std::string& endpoint) {
  FrameServer server(c.load(), endpoint);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "endpoint: " << server.endpoint() << std::endl;
  server.serve();
  std::cout << "iterations_served: " << server.iterations_served() << '\n';
  g_server = nullptr;
  return 0;
}

int cmd_bench(const Common& c, const std::string& variant, double duration, int warmup,
              int min_iterations) {
  EngineConfig cfg = c.load();
  const std::vector<Variant> variants =
      variant == "all" ? std::vector<Variant>{Variant::kBaselineFull, Variant::kParallelFull,
                                              Variant::kOffloadTruncate, Variant::kShvs}
                       : std::vector<Variant>{parse_variant(variant)};
  for (Variant v : variants) {
    write_ablation_report(std::cout, run_ablation_bench(cfg, v, duration, warmup, min_iterations));
    std::cout << '\n';
  }
  return 0;
}

struct TvdArgs {
  int vocab = 1024;
  int hot = 256;
  int steps = 1000;
  std::uint64_t draws = 100000;
  bool analytic = false;
  bool control = false;
  bool csv = false;
  double zipf_s = 2.5;
  double temperature = 1.0;
  double repetition = 1.0;
  std::optional<double> slope_bound;
  std::uint64_t seed = 0;
};

int cmd_validate_tvd(const TvdArgs& a) {
  TvdConfig cfg;
  cfg.vocab_size = a.vocab;
  cfg.hot_size = std::min(a.hot, a.vocab);
  cfg.steps = a.steps;
  cfg.draws = a.draws;
  cfg.zipf_s = a.zipf_s;
  cfg.seed = a.seed;
  cfg.params.temperature = a.temperature;
  cfg.params.repetition_penalty = a.repetition;
  cfg.slope_bound = a.slope_bound;
  cfg.pair = a.analytic ? TvdPair::kAnalytic : TvdPair::kShvsVsSoftmax;
  const TvdReport r = run_tvd_validation(cfg);
  if (a.csv) {
    write_tvd_csv(std::cout, r);
    return 0;
  }
  write_tvd_summary(std::cout, r);
  if (a.control && !a.analytic) {
    cfg.pair = TvdPair::kFullVsSoftmax;
    const TvdReport ctl = run_tvd_validation(cfg);
    std::cout << "control_final_cumulative_mean: " << ctl.final_mean() << '\n'
              << "control_slope_floor: " << slope_floor(ctl) << '\n'
              << "slope_below_floor: "
              << (std::abs(r.last_half_slope) < slope_floor(ctl) ? "yes" : "no") << '\n';
  }
  return r.drift ? 2 : 0;
}

struct SizingArgs {
  std::string trace;
  std::string grid;
  std::optional<double> c0, c;
  std::optional<double> cycle_bound;
  int vocab = 0;
  int rows = 16;
  std::uint64_t seed = 0;
};

// Per-row seconds of an always-accepted SHVS decision at each H, which is
// the c0 + c * H part of the cost model.
std::vector<std::pair<double, double>> time_hot_pass(int V, std::span<const double> grid,
                                                     std::span<const TokenId> ranking,
                                                     int rows, std::uint64_t seed) {
  const SyntheticLogits synth(V, 1.1, 0.5, seed);
  std::vector<std::vector<double>> z;
  std::vector<RowContext> ctx;
  for (int r = 0; r < rows; ++r) {
    const auto f = synth.row(static_cast<std::uint64_t>(r), static_cast<SeqId>(r));
    z.emplace_back(f.begin(), f.end());
    ctx.push_back(compute_row_context(z.back(), 1.0));
  }
  const HotVocab full(std::vector<TokenId>(ranking.begin(), ranking.end()), V);
  SamplingParams params;
  ShvsScratch scratch;
  std::vector<std::pair<double, double>> pts;
  for (double h : grid) {
    const int H = std::clamp(static_cast<int>(h), 1, V);
    const HotVocab hot = full.prefix(H);
    // Repeat so each point covers a few milliseconds.
    const int reps = std::max(1, 2000000 / (H * rows));
    const auto t0 = std::chrono::steady_clock::now();
    for (int k = 0; k < reps; ++k) {
      for (int r = 0; r < rows; ++r) {
        Draws d = draws_for(seed, static_cast<std::uint64_t>(k), static_cast<SeqId>(r));
        d[kAcceptDraw] = 0.0;
        shvs_sample(DenseRow{z[static_cast<std::size_t>(r)]}, ctx[static_cast<std::size_t>(r)],
                    hot, params, d, scratch);
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    pts.emplace_back(H, secs / (reps * rows));
  }
  return pts;
}

int cmd_fit_sizing(const SizingArgs& a) {
  const std::vector<TokenCount> counts = load_token_counts(a.trace);
  int V = a.vocab;
  for (const auto& [id, n] : counts) V = std::max(V, id + 1);
  const HotVocab ranking = build_hot_vocab(counts, V, V);
  // Mean hot mass over traffic is the share of emitted tokens that are hot.
  std::vector<double> law(static_cast<std::size_t>(V), 0.0);
  double total = 0.0;
  for (const auto& [id, n] : counts) total += law[static_cast<std::size_t>(id)] = static_cast<double>(n);
  if (!(total > 0.0)) throw std::invalid_argument("trace has no counts");
  for (double& p : law) p /= total;
  std::vector<double> grid = parse_grid(a.grid);
  std::erase_if(grid, [&](double h) { return h < 1 || h > V; });
  if (grid.empty()) throw std::invalid_argument("grid has no point inside [1, V]");
  const std::vector<std::vector<double>> rows{law};
  const HitRatioCurve curve = estimate_hit_ratio_curve(rows, ranking.ids(), grid);

  AffineFit fit;
  if (a.c0 && a.c) {
    fit.c0 = *a.c0;
    fit.c = *a.c;
  } else {
    const auto pts = time_hot_pass(V, grid, ranking.ids(), a.rows, a.seed);
    if (pts.size() < 2) throw std::invalid_argument("need at least two grid points to fit");
    fit = fit_affine_cost(pts);
    std::cout << "fit_points: " << pts.size() << '\n' << "fit_residual: " << fit.residual << '\n';
  }
  const SizingModel model{fit.c0, fit.c, curve};
  write_sizing_report(std::cout, model, optimal_hot_size(model, a.cycle_bound));
  return 0;
}

struct PipeArgs {
  std::string stages = "10,10,12";
  double sampling = 3.0;
  std::string placement = "last";
  double eta = kDefaultOverlapEfficiency;
  std::string rates;
  double horizon = 50000.0;
  int slots = 8;
  int tokens_per_request = 32;
  std::optional<double> fraction, speedup;
  std::uint64_t seed = 0;
};

int cmd_simulate_pipeline(const PipeArgs& a) {
  const PipelineSpec spec{parse_list(a.stages), a.sampling, parse_placement(a.placement), a.eta};
  spec.validate();
  std::cout << "placement: " << to_string(spec.placement) << '\n'
            << "cycle_time: " << cycle_time(spec) << '\n'
            << "bubble_fraction: " << bubble_fraction(spec) << '\n';
  if (a.fraction && a.speedup) {
    std::cout << "sampling_fraction_after_speedup: "
              << sampling_fraction_after_speedup(*a.fraction, *a.speedup) << '\n';
  }
  if (!a.rates.empty()) {
    write_serving_csv_header(std::cout);
    for (double rate : parse_list(a.rates)) {
      ServingOptions o;
      o.rate = rate;
      o.horizon = a.horizon;
      o.slots = a.slots;
      o.tokens_per_request = a.tokens_per_request;
      o.seed = a.seed;
      write_serving_csv_row(std::cout, simulate_serving(spec, o));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disaggregated decision plane: serving, benchmarks and validation"};
  app.require_subcommand(1);
  int rc = 0;

  Common serve_common;
  std::string endpoint = "127.0.0.1:7411";
  auto* serve = app.add_subcommand("serve", "serve decision frames on a socket endpoint");
  add_common(serve, serve_common);
  serve->add_option("--endpoint", endpoint, "host:port or unix socket path");
  serve->callback([&] { rc = cmd_serve(serve_common, endpoint); });

  Common bench_common;
  std::string variant = "shvs";
  double duration = 5.0;
  int warmup = 2, min_iterations = 3;
  auto* bench = app.add_subcommand("bench", "per-sampler throughput of one variant (or all)");
  add_common(bench, bench_common);
  bench->add_option("--variant", variant, "baseline-full|parallel-full|offload-truncate|shvs|all");
  bench->add_option("--duration", duration, "measured seconds per variant");
  bench->add_option("--warmup", warmup, "iterations before measuring");
  bench->add_option("--min-iterations", min_iterations, "measure at least this many iterations");
  bench->callback(
      [&] { rc = cmd_bench(bench_common, variant, duration, warmup, min_iterations); });

  TvdArgs tvd;
  auto* val = app.add_subcommand("validate-tvd", "SHVS vs softmax distance over synthetic rows");
  val->add_option("--vocab", tvd.vocab);
  val->add_option("--hot", tvd.hot, "hot set size");
  val->add_option("--steps", tvd.steps);
  val->add_option("--draws", tvd.draws, "draws per step");
  val->add_flag("--analytic", tvd.analytic, "exact law instead of histograms");
  val->add_flag("--control", tvd.control, "also run the softmax-vs-softmax control");
  val->add_flag("--csv", tvd.csv, "per-step CSV instead of the summary");
  val->add_option("--zipf-s", tvd.zipf_s);
  val->add_option("--temperature", tvd.temperature);
  val->add_option("--repetition-penalty", tvd.repetition);
  val->add_option("--slope-bound", tvd.slope_bound);
  val->add_option("--seed", tvd.seed);
  val->callback([&] { rc = cmd_validate_tvd(tvd); });

  SizingArgs sz;
  auto* fit = app.add_subcommand("fit-sizing", "hot-set size from a token-count trace");
  fit->add_option("--trace", sz.trace, "token_id<TAB>count file")->required();
  fit->add_option("--grid", sz.grid, "hot sizes a:b:step")->required();
  fit->add_option("--c0", sz.c0, "fixed per-row cost; skips timing when given with --c");
  fit->add_option("--c", sz.c, "per-element cost");
  fit->add_option("--cycle-bound", sz.cycle_bound, "only H with F(H) below this");
  fit->add_option("--vocab", sz.vocab, "vocabulary size if larger than the trace's max id");
  fit->add_option("--rows", sz.rows, "synthetic rows for the timing sweep");
  fit->add_option("--seed", sz.seed);
  fit->callback([&] { rc = cmd_fit_sizing(sz); });

  PipeArgs pa;
  auto* sim = app.add_subcommand("simulate-pipeline", "bubble and latency model of the pipeline");
  sim->add_option("--stages", pa.stages, "per-stage compute times, comma separated");
  sim->add_option("--sampling", pa.sampling, "sampling time per cycle");
  sim->add_option("--placement", pa.placement, "last|offload");
  sim->add_option("--eta", pa.eta, "overlap efficiency when offloaded");
  sim->add_option("--rates", pa.rates, "arrival rates to simulate, comma separated");
  sim->add_option("--horizon", pa.horizon);
  sim->add_option("--slots", pa.slots);
  sim->add_option("--tokens-per-request", pa.tokens_per_request);
  sim->add_option("--fraction", pa.fraction, "sampling share f for the speedup formula");
  sim->add_option("--speedup", pa.speedup, "non-sampling speedup rho");
  sim->add_option("--seed", pa.seed);
  sim->callback([&] { rc = cmd_simulate_pipeline(pa); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return rc;
}
