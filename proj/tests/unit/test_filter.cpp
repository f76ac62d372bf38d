// Copyright 2026 The dplane Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dplane/filter.hpp"
#include "dplane/penalty.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

namespace dplane {
namespace {

std::vector<TokenId> ids(std::initializer_list<TokenId> xs) { return xs; }

FilterIndexMap select(const std::vector<double>& z, const SamplingParams& p,
                      Selection mode = Selection::kTruncationFirst) {
  FilterScratch scratch;
  return select_candidates(z, p, Domain::kFullVocab, scratch, mode);
}

TEST(SelectCandidates, FullTopKIsDescendingPermutation) {
  SamplingParams p;
  p.top_k = 4;
  const auto m = select({0.5, 2.0, -1.0, 1.0}, p);
  EXPECT_TRUE(m.ranked);
  EXPECT_EQ(m.forward, ids({1, 3, 0, 2}));
}

TEST(SelectCandidates, NoTruncationIsIdentity) {
  const auto m = select({0.5, 2.0, -1.0, 1.0}, SamplingParams{});
  EXPECT_FALSE(m.ranked);
  EXPECT_EQ(m.forward, ids({0, 1, 2, 3}));
}

TEST(SelectCandidates, TopK) {
  SamplingParams p;
  p.top_k = 2;
  EXPECT_EQ(select({3, 1, 2}, p).forward, ids({0, 2}));
}

TEST(SelectCandidates, TopKTiesPreferSmallerIndex) {
  SamplingParams p;
  p.top_k = 2;
  EXPECT_EQ(select({1, 2, 2, 2}, p).forward, ids({1, 2}));
}

TEST(SelectCandidates, Nucleus) {
  SamplingParams p;
  p.top_p = 0.7;
  EXPECT_EQ(select({std::log(0.6), std::log(0.3), std::log(0.1)}, p).forward, ids({0, 1}));
}

TEST(SelectCandidates, NucleusInclusiveBoundary) {
  SamplingParams p;
  p.top_p = 0.5;
  // Masses .5, .25, .25: the first element alone reaches p.
  EXPECT_EQ(select({std::log(0.5), std::log(0.25), std::log(0.25)}, p).forward, ids({0}));
}

TEST(SelectCandidates, MinP) {
  SamplingParams p;
  p.min_p = 0.4;
  // Relative weights 1, .5, .25.
  EXPECT_EQ(select({0.0, std::log(0.5), std::log(0.25)}, p).forward, ids({0, 1}));
}

TEST(SelectCandidates, MinPKeepsArgmax) {
  SamplingParams p;
  p.min_p = 0.99;
  p.temperature = 1e-3;
  EXPECT_EQ(select({0.0, -1.0}, p).forward, ids({0}));
}

TEST(SelectCandidates, NucleusAfterTopKRenormalizes) {
  SamplingParams p;
  p.top_k = 2;
  p.top_p = 0.45;
  // Within the top-2 the first token carries half the mass; over the whole
  // row it would carry only .4 and a second token would be needed.
  EXPECT_EQ(select({std::log(0.4), std::log(0.4), std::log(0.2)}, p).forward, ids({0}));
}

TEST(SelectCandidates, InverseMap) {
  SamplingParams p;
  p.top_k = 2;
  const auto m = select({3, 1, 2}, p);
  EXPECT_EQ(m.inverse(3), (std::vector<std::int32_t>{0, -1, 1}));
}

TEST(SelectCandidates, EmptyDomainThrows) {
  EXPECT_THROW(select({}, SamplingParams{}), std::invalid_argument);
}

TEST(SelectCandidates, FullSortBaselineMatches) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int V = 1 + trial % 300;
    auto z = testing::gaussian_row(rng, V);
    if (trial % 5 == 0) {
      for (auto& x : z) x = std::round(x);  // force ties
    }
    const auto p = testing::random_truncation(rng, V);
    EXPECT_EQ(select(z, p).forward, select(z, p, Selection::kFullSort).forward);
    EXPECT_EQ(select(z, p).forward, testing::naive_filter(z, p).ids) << "trial " << trial;
  }
}

TEST(SubsetSoftmax, Examples) {
  std::vector<double> probs;
  subset_softmax(std::vector<double>{0, 0}, 1.0, probs);
  EXPECT_EQ(probs, (std::vector<double>{0.5, 0.5}));
  subset_softmax(std::vector<double>{1, 0}, 1.0, probs);
  EXPECT_NEAR(probs[0], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(probs[1], 1.0 - 0.7310585786300049, 1e-15);
}

TEST(SubsetSoftmax, HugeTemperatureIsUniform) {
  std::mt19937_64 rng(5);
  const auto z = testing::gaussian_row(rng, 100);
  std::vector<double> probs;
  subset_softmax(z, 1e6, probs);
  const auto [lo, hi] = std::minmax_element(probs.begin(), probs.end());
  EXPECT_LT(*hi - *lo, 1e-7);
}

TEST(SubsetSoftmax, RejectsDegenerateInput) {
  std::vector<double> probs;
  EXPECT_THROW(subset_softmax(std::vector<double>{}, 1.0, probs), std::invalid_argument);
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_THROW(subset_softmax(std::vector<double>{ninf, ninf}, 1.0, probs), std::domain_error);
}

TEST(SubsetSoftmax, EigenOverload) {
  Vector<float> z(2);
  z << 1.0f, 0.0f;
  const Vector<double> p = subset_softmax(z, 1.0);
  EXPECT_NEAR(p(0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
}

TEST(CategoricalDraw, Examples) {
  EXPECT_EQ(categorical_draw(std::vector<double>{1.0}, 0.999), 0u);
  const std::vector<double> p{0.3, 0.7};
  EXPECT_EQ(categorical_draw(p, 0.29), 0u);
  EXPECT_EQ(categorical_draw(p, 0.31), 1u);
}

TEST(CategoricalDraw, SkipsZeroMassAndShortfall) {
  const std::vector<double> p{0.0, 0.5, 0.0, 0.4999999, 0.0};
  EXPECT_EQ(categorical_draw(p, 0.0), 1u);
  EXPECT_EQ(categorical_draw(p, 0.99999995), 3u);  // cumulative never exceeds u
  EXPECT_THROW(categorical_draw(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST(CategoricalDraw, LatticeFrequencies) {
  const std::vector<double> p{0.1, 0.25, 0.05, 0.4, 0.2};
  const int n = 1000000;
  std::vector<int> counts(p.size(), 0);
  for (int i = 0; i < n; ++i) ++counts[categorical_draw(p, (i + 0.5) / n)];
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double sigma = std::sqrt(p[i] * (1 - p[i]) / n);
    EXPECT_NEAR(counts[i] / static_cast<double>(n), p[i], 3 * sigma);
  }
}

TEST(CategoricalTable, AgreesWithLinearScan) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w(1 + trial);
    for (auto& x : w) x = u(rng) < 0.2 ? 0.0 : u(rng);
    w.back() += 1e-3;
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<double> p(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) p[i] = w[i] / s;
    const CategoricalTable table(p);
    for (int k = 0; k < 2000; ++k) {
      const double uu = u(rng);
      ASSERT_EQ(table.draw(uu), categorical_draw(p, uu));
    }
  }
}

TEST(SampleFull, SingleToken) {
  const auto s = new_sequence_state(0, {}, 1);
  for (double u : {0.0, 0.5, 0.999}) {
    EXPECT_EQ(sample_full(std::vector<double>{3.0}, s, SamplingParams{}, {u, 0, 0}).token, 0);
  }
}

TEST(SampleFull, ClosedFormLaw) {
  const auto s = new_sequence_state(0, {}, 4);
  const std::vector<double> z{0, 0, 0, std::log(3.0)};
  std::vector<double> probs;
  subset_softmax(z, 1.0, probs);
  EXPECT_NEAR(probs[3], 0.5, 1e-15);
  EXPECT_EQ(sample_full(z, s, SamplingParams{}, {0.49, 0, 0}).token, 2);
  EXPECT_EQ(sample_full(z, s, SamplingParams{}, {0.51, 0, 0}).token, 3);
}

TEST(SampleFull, LengthMismatchThrows) {
  const auto s = new_sequence_state(0, {}, 4);
  EXPECT_THROW(sample_full(std::vector<double>{0, 0}, s, SamplingParams{}, {0.5, 0, 0}),
               std::invalid_argument);
}

TEST(SampleFull, MatchesNaiveOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int V = 2 + trial % 200;
    auto p = testing::random_truncation(rng, V);
    p.repetition_penalty = 1.0 + u(rng);
    p.presence_penalty = 0.3 * u(rng);
    p.frequency_penalty = 0.3 * u(rng);
    const auto prompt = testing::random_tokens(rng, 4, V);
    const auto history = testing::random_tokens(rng, trial % 10, V);
    auto s = new_sequence_state(0, prompt, V);
    for (TokenId t : history) s.append(t);
    const auto raw = testing::gaussian_row(rng, V);
    const double draw = u(rng);
    const TokenDecision d = sample_full(raw, s, p, {draw, 0, 0});
    const auto pen = testing::rebuild_penalized(raw, prompt, history, p);
    ASSERT_EQ(d.token, testing::naive_draw(testing::naive_filter(pen, p), draw))
        << "trial " << trial;
  }
}

TEST(SampleFull, CountsVisits) {
  const auto s = new_sequence_state(0, {}, 16);
  WorkStats stats;
  sample_full(std::vector<double>(16, 0.0), s, SamplingParams{}, {0.5, 0, 0}, &stats);
  EXPECT_EQ(stats.visits, 16u);
  EXPECT_EQ(stats.rows, 1u);
}

TEST(FilterIndexMapEigen, Builds) {
  Vector<double> z(3);
  z << 3, 1, 2;
  SamplingParams p;
  p.top_k = 2;
  const auto [map, truncated] = build_filter_index_map(z, p);
  EXPECT_EQ(map.forward, ids({0, 2}));
  EXPECT_EQ(truncated(0), 3.0);
  EXPECT_EQ(truncated(1), 2.0);
}

}  // namespace
}  // namespace dplane
