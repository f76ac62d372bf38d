// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/sizing.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dplane {

HitRatioCurve::HitRatioCurve(std::vector<double> grid,
                             std::vector<double> alpha_bar, int vocab_size)
    : vocab_size_(vocab_size) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (grid.size() != alpha_bar.size()) {
    throw std::invalid_argument("grid and alpha_bar differ in length");
  }
  const double v = vocab_size;
  grid_.push_back(0.0);
  alpha_.push_back(0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double h = grid[i];
    const double a = alpha_bar[i];
    if (!(h > grid_.back()) || h > v) {
      throw std::invalid_argument("grid must ascend within (0, V]");
    }
    if (!(a >= 0.0 && a <= 1.0)) {
      throw std::invalid_argument("hit ratio outside [0, 1]");
    }
    if (a < alpha_.back()) throw std::invalid_argument("hit ratio must be monotone");
    grid_.push_back(h);
    alpha_.push_back(a);
  }
  // Every id is hot at H = V.
  if (grid_.back() == v) {
    alpha_.back() = 1.0;
  } else {
    grid_.push_back(v);
    alpha_.push_back(1.0);
  }
}

double HitRatioCurve::operator()(double h) const {
  if (h <= 0.0) return 0.0;
  if (h >= grid_.back()) return 1.0;
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), h);
  const std::size_t i = static_cast<std::size_t>(it - grid_.begin());
  const double x0 = grid_[i - 1];
  const double x1 = grid_[i];
  const double t = (h - x0) / (x1 - x0);
  return alpha_[i - 1] + t * (alpha_[i] - alpha_[i - 1]);
}

double HitRatioCurve::spacing(double h) const {
  auto it = std::upper_bound(grid_.begin(), grid_.end(), h);
  if (it == grid_.end()) --it;
  if (it == grid_.begin()) ++it;
  return *it - *(it - 1);
}

double HitRatioCurve::derivative(double h) const {
  const double step = spacing(h);
  const double lo = std::max(0.0, h - step);
  const double hi = std::min(grid_.back(), h + step);
  return ((*this)(hi) - (*this)(lo)) / (hi - lo);
}

HitRatioCurve estimate_hit_ratio_curve(std::span<const std::vector<double>> rows,
                                       std::span<const TokenId> ranking,
                                       std::span<const double> grid) {
  if (rows.empty()) throw std::invalid_argument("empty trace");
  const std::size_t v = rows.front().size();
  std::vector<TokenId> order(ranking.begin(), ranking.end());
  std::vector<std::uint8_t> seen(v, 0);
  for (TokenId id : order) {
    if (id < 0 || static_cast<std::size_t>(id) >= v || seen[id]) {
      throw std::invalid_argument("ranking must hold distinct vocabulary ids");
    }
    seen[id] = 1;
  }
  for (std::size_t id = 0; id < v; ++id) {
    if (!seen[id]) order.push_back(static_cast<TokenId>(id));
  }
  std::vector<std::size_t> points;
  for (double g : grid) {
    if (!(g >= 1.0 && g <= static_cast<double>(v)) || g != std::floor(g)) {
      throw std::invalid_argument("grid points must be integers in [1, V]");
    }
    points.push_back(static_cast<std::size_t>(g));
  }
  std::vector<double> sums(points.size(), 0.0);
  for (const auto& row : rows) {
    if (row.size() != v) throw std::invalid_argument("rows differ in length");
    double prefix = 0.0;
    std::size_t next = 0;
    for (std::size_t h = 1; h <= v && next < points.size(); ++h) {
      prefix += row[order[h - 1]];
      while (next < points.size() && points[next] == h) {
        sums[next++] += std::min(prefix, 1.0);
      }
    }
  }
  std::vector<double> alpha(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    alpha[i] = sums[i] / static_cast<double>(rows.size());
    if (i > 0) alpha[i] = std::max(alpha[i], alpha[i - 1]);
  }
  return HitRatioCurve(std::vector<double>(grid.begin(), grid.end()),
                       std::move(alpha), static_cast<int>(v));
}

AffineFit fit_affine_cost(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw std::invalid_argument("need at least two points");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::ArrayXd x(n);
  Eigen::ArrayXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i) = points[static_cast<std::size_t>(i)].first;
    y(i) = points[static_cast<std::size_t>(i)].second;
  }
  const Eigen::ArrayXd dx = x - x.mean();
  const double sxx = dx.square().sum();
  if (!(sxx > 0.0)) throw std::invalid_argument("degenerate fit: all H equal");
  AffineFit fit;
  fit.c = (dx * (y - y.mean())).sum() / sxx;
  fit.c0 = y.mean() - fit.c * x.mean();
  fit.residual = (y - (fit.c0 + fit.c * x)).abs().maxCoeff();
  return fit;
}

double expected_cost(double h, const SizingModel& model) {
  const double v = model.vocab_size();
  if (h < 1.0 || h > v) throw std::out_of_range("H outside [1, V]");
  const double a = model.curve(h);
  return model.c0 + model.c * (a * h + (1.0 - a) * (v - h));
}

double cost_derivative(double h, const SizingModel& model) {
  const double v = model.vocab_size();
  if (h < 1.0 || h > v) throw std::out_of_range("H outside [1, V]");
  const double a = model.curve(h);
  return model.c * (-1.0 + 2.0 * a + (2.0 * h - v) * model.curve.derivative(h));
}

SizingResult optimal_hot_size(const SizingModel& model,
                              std::optional<double> cycle_bound) {
  const int v = model.vocab_size();
  SizingResult r;
  auto cost = [&](int h) { return expected_cost(h, model); };

  // Stationary point by bisection on the derivative sign.
  double lo = 1.0;
  double hi = v;
  const double d_lo = cost_derivative(lo, model);
  const double d_hi = cost_derivative(hi, model);
  if (d_lo < 0.0 && d_hi > 0.0) {
    r.interior = true;
    for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
      const double mid = 0.5 * (lo + hi);
      (cost_derivative(mid, model) < 0.0 ? lo : hi) = mid;
    }
    r.stationary = 0.5 * (lo + hi);
  } else {
    r.stationary = cost(1) <= cost(v) ? 1.0 : v;
  }

  std::vector<int> candidates{1, v};
  const int w = static_cast<int>(std::ceil(model.curve.spacing(r.stationary)));
  const int centre = static_cast<int>(std::lround(r.stationary));
  for (int h = std::max(1, centre - w); h <= std::min(v, centre + w); ++h) {
    candidates.push_back(h);
  }
  // F is quadratic on each grid segment, so its integer minimum sits at a
  // segment end or next to the segment vertex. This makes the result a
  // global argmin even when the derivative changes sign more than once.
  const auto grid = model.curve.grid();
  const auto alpha = model.curve.values();
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double x0 = grid[i - 1];
    const double x1 = grid[i];
    for (double e : {std::floor(x0), std::ceil(x0), std::floor(x1), std::ceil(x1)}) {
      if (e >= 1 && e <= v) candidates.push_back(static_cast<int>(e));
    }
    const double b = (alpha[i] - alpha[i - 1]) / (x1 - x0);
    const double a = alpha[i - 1] - b * x0;
    // F/c - const = 2b H^2 + (2a - 1 - bV) H.
    if (b > 0.0) {
      const double vertex = -(2.0 * a - 1.0 - b * v) / (4.0 * b);
      if (vertex > x0 && vertex < x1) {
        for (double e : {std::floor(vertex), std::ceil(vertex)}) {
          if (e >= 1 && e <= v) candidates.push_back(static_cast<int>(e));
        }
      }
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  auto pick = [&](bool constrained) {
    std::optional<int> best;
    double best_cost = 0.0;
    for (int h : candidates) {
      const double f = cost(h);
      if (constrained && f > *cycle_bound) continue;
      if (!best || f < best_cost) {
        best = h;
        best_cost = f;
      }
    }
    return best;
  };
  std::optional<int> best;
  if (cycle_bound) {
    best = pick(true);
    r.feasible = best.has_value();
  }
  if (!best) best = pick(false);
  r.hot_size = *best;
  r.cost = cost(r.hot_size);
  return r;
}

void write_sizing_report(std::ostream& os, const SizingModel& model,
                         const SizingResult& result) {
  const auto old = os.precision(17);
  os << "c0: " << model.c0 << '\n';
  os << "c: " << model.c << '\n';
  os << "vocab_size: " << model.vocab_size() << '\n';
  os << "grid:";
  for (std::size_t i = 1; i < model.curve.grid().size(); ++i) {
    os << ' ' << model.curve.grid()[i];
  }
  os << "\nalpha_bar:";
  for (std::size_t i = 1; i < model.curve.values().size(); ++i) {
    os << ' ' << model.curve.values()[i];
  }
  os << "\nhot_size: " << result.hot_size << '\n';
  os << "cost: " << result.cost << '\n';
  os << "stationary: " << result.stationary << '\n';
  os << "interior: " << (result.interior ? "true" : "false") << '\n';
  os << "feasible: " << (result.feasible ? "true" : "false") << '\n';
  os.precision(old);
}

}  // namespace dplane
