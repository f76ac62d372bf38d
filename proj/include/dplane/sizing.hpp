// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

// Hot-set sizing. Expected per-row CPU time for hot size H is
//   F(H) = c0 + c * (a(H) * H + (1 - a(H)) * (V - H)),
// where a(H) is the mean hot mass of the top-H ids. H* minimizes F.

#pragma once

#include "dplane/core.hpp"

#include <iosfwd>
#include <optional>
#include <utility>

namespace dplane {

/// Mean hot mass as a function of H, piecewise linear through the grid.
/// The curve passes through (0, 0) and ends at (V, 1).
class HitRatioCurve {
 public:
  HitRatioCurve(std::vector<double> grid, std::vector<double> alpha_bar,
                int vocab_size);

  double operator()(double h) const;
  // Central difference with step equal to the local grid spacing,
  // one-sided at either end.
  double derivative(double h) const;

  int vocab_size() const { return vocab_size_; }
  std::span<const double> grid() const { return grid_; }
  std::span<const double> values() const { return alpha_; }
  // Local grid spacing around h.
  double spacing(double h) const;

 private:
  int vocab_size_;
  std::vector<double> grid_;   // includes 0 and V
  std::vector<double> alpha_;
};

// rows: next-token laws (length V each). ranking: hot order, most frequent
// first; ids it leaves out follow in ascending order.
HitRatioCurve estimate_hit_ratio_curve(std::span<const std::vector<double>> rows,
                                       std::span<const TokenId> ranking,
                                       std::span<const double> grid);

struct AffineFit {
  double c0 = 0.0;
  double c = 0.0;
  double residual = 0.0;  // max |y - (c0 + c x)|
};

// Ordinary least squares of seconds against H.
AffineFit fit_affine_cost(std::span<const std::pair<double, double>> points);

struct SizingModel {
  double c0 = 0.0;
  double c = 0.0;
  HitRatioCurve curve;
  int vocab_size() const { return curve.vocab_size(); }
};

double expected_cost(double h, const SizingModel& model);
double cost_derivative(double h, const SizingModel& model);

struct SizingResult {
  int hot_size = 1;
  double cost = 0.0;
  double stationary = 0.0;  // bisection root, or the chosen boundary
  bool interior = false;    // derivative changed sign on [1, V]
  bool feasible = true;     // F(H*) <= T_cycle when a bound was given
};

// Argmin of F over integer H in [1, V], ties to the smaller H. With a
// cycle bound, only H with F(H) <= bound are candidates; if none
// qualifies the unconstrained argmin is returned with feasible = false.
SizingResult optimal_hot_size(const SizingModel& model,
                              std::optional<double> cycle_bound = std::nullopt);

// key: value lines.
void write_sizing_report(std::ostream& os, const SizingModel& model,
                         const SizingResult& result);

}  // namespace dplane
