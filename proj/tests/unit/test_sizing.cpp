// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/sizing.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace dplane {
namespace {

HitRatioCurve linear_curve(int V) { return HitRatioCurve({}, {}, V); }

// Every grid point at 1, so the curve is flat from H = 1 on.
HitRatioCurve constant_one(int V) {
  std::vector<double> grid(V);
  std::iota(grid.begin(), grid.end(), 1.0);
  return HitRatioCurve(grid, std::vector<double>(V, 1.0), V);
}

// Zipf-like hit ratio sampled on a grid.
HitRatioCurve zipf_curve(int V, double s, int points) {
  std::vector<double> w(V);
  double total = 0.0;
  for (int i = 0; i < V; ++i) total += w[i] = std::pow(i + 1.0, -s);
  std::vector<double> grid, alpha;
  double cum = 0.0;
  int next = 0;
  for (int i = 0; i < V; ++i) {
    cum += w[i];
    const int h = i + 1;
    if (h == static_cast<int>(std::lround(static_cast<double>(V) * (next + 1) / points))) {
      grid.push_back(h);
      alpha.push_back(std::min(1.0, cum / total));
      ++next;
    }
  }
  return HitRatioCurve(grid, alpha, V);
}

TEST(HitRatioCurve, EndpointsAndInterpolation) {
  const HitRatioCurve c({2.0, 4.0}, {0.5, 1.0}, 4);
  EXPECT_EQ(c(0.0), 0.0);
  EXPECT_EQ(c(1.0), 0.25);
  EXPECT_EQ(c(3.0), 0.75);
  EXPECT_EQ(c(4.0), 1.0);
  EXPECT_THROW(HitRatioCurve({2.0}, {0.5, 0.6}, 4), std::invalid_argument);
  EXPECT_THROW(HitRatioCurve({2.0, 3.0}, {0.6, 0.5}, 4), std::invalid_argument);
}

TEST(EstimateHitRatio, UniformRow) {
  const int V = 8;
  const std::vector<std::vector<double>> rows{std::vector<double>(V, 1.0 / V)};
  const std::vector<TokenId> ranking{0, 1, 2, 3, 4, 5, 6, 7};
  const std::vector<double> grid{1, 2, 4, 8};
  const auto c = estimate_hit_ratio_curve(rows, ranking, grid);
  for (double h : grid) EXPECT_NEAR(c(h), h / V, 1e-15);
}

TEST(EstimateHitRatio, PrefixSums) {
  const std::vector<std::vector<double>> rows{{0.7, 0.2, 0.1}};
  const std::vector<TokenId> ranking{0, 1, 2};
  const std::vector<double> grid{1, 2, 3};
  const auto c = estimate_hit_ratio_curve(rows, ranking, grid);
  EXPECT_NEAR(c(1), 0.7, 1e-15);
  EXPECT_NEAR(c(2), 0.9, 1e-15);
  EXPECT_EQ(c(3), 1.0);
}

TEST(EstimateHitRatio, PartialRankingAndAverage) {
  const std::vector<std::vector<double>> rows{{0.1, 0.6, 0.3}, {0.5, 0.3, 0.2}};
  const std::vector<TokenId> ranking{1};
  const std::vector<double> grid{1, 2};
  const auto c = estimate_hit_ratio_curve(rows, ranking, grid);
  EXPECT_NEAR(c(1), 0.45, 1e-15);
  EXPECT_NEAR(c(2), 0.75, 1e-15);  // id 0 follows
  EXPECT_EQ(c(3), 1.0);
}

TEST(FitAffineCost, ExactLine) {
  const double c0 = 8.55e-6, c = 1.06e-8;
  std::vector<std::pair<double, double>> pts;
  for (double h : {1000.0, 4000.0, 16000.0, 64000.0, 151936.0}) pts.emplace_back(h, c0 + c * h);
  const auto fit = fit_affine_cost(pts);
  EXPECT_NEAR(fit.c0, c0, 1e-12 * c0);
  EXPECT_NEAR(fit.c, c, 1e-12 * c);
}

TEST(FitAffineCost, TwoPoints) {
  const std::vector<std::pair<double, double>> pts{{0, 5}, {10, 15}};
  const auto fit = fit_affine_cost(pts);
  EXPECT_NEAR(fit.c0, 5.0, 1e-12);
  EXPECT_NEAR(fit.c, 1.0, 1e-12);
  EXPECT_NEAR(fit.residual, 0.0, 1e-12);
}

TEST(FitAffineCost, NoisyPoints) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.01);
  std::vector<std::pair<double, double>> pts;
  // Hot sizes where the fixed cost is still visible next to the noise.
  for (int i = 1; i <= 200; ++i) {
    const double h = 50.0 * i;
    pts.emplace_back(h, (8.55e-6 + 1.06e-8 * h) * (1.0 + n(rng)));
  }
  const auto fit = fit_affine_cost(pts);
  EXPECT_NEAR(fit.c, 1.06e-8, 0.05 * 1.06e-8);
  EXPECT_NEAR(fit.c0, 8.55e-6, 0.05 * 8.55e-6);
}

TEST(FitAffineCost, Degenerate) {
  const std::vector<std::pair<double, double>> one{{1, 1}};
  EXPECT_THROW(fit_affine_cost(one), std::invalid_argument);
  const std::vector<std::pair<double, double>> same_x{{1, 1}, {1, 2}};
  EXPECT_THROW(fit_affine_cost(same_x), std::invalid_argument);
}

TEST(ExpectedCost, Cases) {
  const int V = 100;
  const SizingModel flat{2.0, 3.0, constant_one(V)};
  EXPECT_DOUBLE_EQ(expected_cost(10, flat), 2.0 + 30.0);
  EXPECT_DOUBLE_EQ(cost_derivative(10, flat), 3.0);
  const SizingModel lin{0.0, 1.0, linear_curve(V)};
  for (double h : {1.0, 25.0, 60.0}) {
    EXPECT_NEAR(expected_cost(h, lin), (h * h + (V - h) * (V - h)) / V, 1e-12);
  }
  EXPECT_NEAR(cost_derivative(V / 2.0, lin), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(expected_cost(V, SizingModel{2.0, 3.0, zipf_curve(V, 1.1, 10)}), 2.0 + 3.0 * V);
}

TEST(OptimalHotSize, LinearIsHalf) {
  for (int V : {10, 1000, 151936}) {
    const auto r = optimal_hot_size(SizingModel{0.0, 1.0, linear_curve(V)});
    EXPECT_EQ(r.hot_size, V / 2);
    EXPECT_TRUE(r.interior);
  }
}

TEST(OptimalHotSize, ConstantOneIsBoundary) {
  const auto r = optimal_hot_size(SizingModel{1.0, 1.0, constant_one(500)});
  EXPECT_EQ(r.hot_size, 1);
}

TEST(OptimalHotSize, ZipfMatchesBruteForce) {
  for (double s : {0.6, 0.9, 1.1, 1.4}) {
    for (int points : {8, 32, 128}) {
      const int V = 4096;
      const SizingModel m{8.55e-6, 1.06e-8, zipf_curve(V, s, points)};
      int best = 1;
      for (int h = 2; h <= V; ++h) {
        if (expected_cost(h, m) < expected_cost(best, m)) best = h;
      }
      EXPECT_EQ(optimal_hot_size(m).hot_size, best) << "s " << s << " points " << points;
    }
  }
}

TEST(OptimalHotSize, CycleBound) {
  const SizingModel m{0.0, 1.0, linear_curve(100)};
  EXPECT_TRUE(optimal_hot_size(m, 60.0).feasible);
  const auto r = optimal_hot_size(m, 10.0);
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.hot_size, 50);
}

TEST(SizingReport, Keys) {
  const SizingModel m{0.0, 1.0, linear_curve(100)};
  std::ostringstream os;
  write_sizing_report(os, m, optimal_hot_size(m));
  EXPECT_NE(os.str().find("hot_size: 50"), std::string::npos) << os.str();
}

}  // namespace
}  // namespace dplane
