#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylelab/errors.hpp"
#include "stylelab/eval.hpp"
#include "stylelab/rng.hpp"

using namespace stylelab;
using namespace stylelab::eval;

namespace {

Embedding random_vec(std::size_t d, Rng& rng) {
  Embedding v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

// Ranking built from explicit gold ranks: candidate ids 0..n-1 with gold at
// position rank-1.
ScoredRanking with_gold_rank(std::size_t rank, std::size_t n) {
  ScoredRanking r;
  for (std::size_t i = 0; i < n; ++i) {
    r.candidates.push_back(static_cast<int>(i));
    r.scores.push_back(-static_cast<double>(i));
  }
  r.gold = static_cast<int>(rank - 1);
  return r;
}

// ROC from every threshold "score >= t" over the distinct scores, then the
// trapezoid area clipped at max_fpr.
double brute_partial_area(const std::vector<double>& s, const std::vector<int>& y, double p) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const double P = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double N = static_cast<double>(y.size()) - P;
  std::vector<std::pair<double, double>> roc = {{0.0, 0.0}};
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] == 1 ? tp : fp) += 1.0;
    roc.emplace_back(fp / N, tp / P);
  }
  double area = 0.0;
  for (std::size_t k = 1; k < roc.size(); ++k) {
    auto [x0, y0] = roc[k - 1];
    auto [x1, y1] = roc[k];
    if (x0 >= p) break;
    if (x1 > p) {
      y1 = y0 + (y1 - y0) * (p - x0) / (x1 - x0);
      x1 = p;
    }
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  return area;
}

}  // namespace

TEST(Rank, DuplicateOfQueryRanksFirst) {
  const Embedding q = {1.0, 2.0};
  const std::vector<Embedding> cands = {{2.0, -1.0}, {1.0, 2.0}};
  const std::vector<int> ids = {10, 11};
  const auto r = rank(0, q, cands, ids, 11);
  EXPECT_EQ(r.gold_rank(), 1u);
}

TEST(Rank, TiesBreakByAscendingId) {
  const Embedding q = {1.0, 0.0};
  const std::vector<Embedding> cands(4, Embedding{0.5, 0.5});
  const std::vector<int> ids = {7, 3, 9, 1};
  EXPECT_EQ(rank(0, q, cands, ids, 9).candidates, (std::vector<int>{1, 3, 7, 9}));
}

TEST(Rank, MatchesBruteForceAndIgnoresScale) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Embedding q = random_vec(5, rng);
    std::vector<Embedding> cands;
    std::vector<int> ids;
    for (int i = 0; i < 10; ++i) cands.push_back(random_vec(5, rng)), ids.push_back(i);
    const auto r = rank(0, q, cands, ids, 3);
    std::vector<std::pair<double, int>> brute;
    for (int i = 0; i < 10; ++i) brute.emplace_back(-cosine(q, cands[i]), i);
    std::sort(brute.begin(), brute.end());
    for (int i = 0; i < 10; ++i) EXPECT_EQ(r.candidates[i], brute[i].second);
    for (std::size_t i = 1; i < r.scores.size(); ++i) EXPECT_GE(r.scores[i - 1], r.scores[i]);
    auto scaled = cands;
    for (auto& c : scaled)
      for (double& v : c) v *= 3.5;
    EXPECT_EQ(rank(0, q, scaled, ids, 3).candidates, r.candidates);
  }
}

TEST(Rank, Errors) {
  const Embedding q = {1.0, 0.0};
  const std::vector<int> ids = {0};
  EXPECT_THROW(rank(0, q, {{0.0, 0.0}}, ids, 0), ContractError);
  EXPECT_THROW(rank(0, q, {{1.0, 0.0, 0.0}}, ids, 0), ShapeError);
  EXPECT_THROW(rank(0, q, {{1.0, 0.0}}, ids, 5), ContractError);
}

TEST(Mrr, HandCases) {
  EXPECT_DOUBLE_EQ(mrr({with_gold_rank(1, 5), with_gold_rank(1, 5)}), 1.0);
  EXPECT_NEAR(mrr({with_gold_rank(1, 5), with_gold_rank(2, 5), with_gold_rank(4, 5)}),
              0.5833333333333334, 1e-15);
  EXPECT_THROW(mrr({}), ContractError);
}

TEST(Mrr, UniformRanksSimulation) {
  // E[1/r] for r uniform on 1..100 is H_100 / 100.
  double h = 0.0;
  for (int r = 1; r <= 100; ++r) h += 1.0 / r;
  EXPECT_NEAR(h / 100.0, 0.0519, 1e-4);
  Rng rng(3);
  std::vector<ScoredRanking> rs;
  for (int q = 0; q < 10000; ++q) rs.push_back(with_gold_rank(1 + rng.index(100), 100));
  EXPECT_NEAR(mrr(rs), h / 100.0, 0.005);
}

TEST(Recall, HandCasesAndSimulation) {
  EXPECT_DOUBLE_EQ(recall_at_k({with_gold_rank(1, 10)}), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k({with_gold_rank(9, 10)}, 8), 0.0);
  EXPECT_DOUBLE_EQ(recall_at_k({with_gold_rank(8, 10)}, 8), 1.0);
  EXPECT_THROW(recall_at_k({with_gold_rank(1, 5)}, 8), ContractError);
  Rng rng(4);
  std::vector<ScoredRanking> rs;
  for (int q = 0; q < 10000; ++q) rs.push_back(with_gold_rank(1 + rng.index(16), 16));
  EXPECT_NEAR(recall_at_k(rs, 8), 0.5, 0.02);
}

TEST(Aggregate, SingleDocAndPermutation) {
  const Embedding d = {3.0, 4.0};
  const Embedding a = aggregate_author({d});
  EXPECT_NEAR(a[0], 0.6, 1e-15);
  EXPECT_NEAR(a[1], 0.8, 1e-15);
  Rng rng(2);
  std::vector<Embedding> docs;
  for (int i = 0; i < 6; ++i) docs.push_back(random_vec(4, rng));
  const Embedding base = aggregate_author(docs);
  std::reverse(docs.begin(), docs.end());
  const Embedding rev = aggregate_author(docs);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], rev[i], 1e-15);
}

TEST(Aggregate, Degenerate) {
  EXPECT_THROW(aggregate_author({}), ContractError);
  EXPECT_THROW(aggregate_author({{1.0, 0.0}, {-1.0, 0.0}}), ContractError);
}

TEST(Pauc, HandCase) {
  // ROC: (0,1/3) (0,2/3) (1/3,2/3) (1/3,1) (2/3,1) (1,1). Up to FPR 0.5 the
  // area is 1/3 * 2/3 + 1/6 * 1 = 7/18; standardized 0.5 (1 + 19/27) = 23/27.
  const std::vector<double> s = {0.9, 0.8, 0.4, 0.7, 0.3, 0.2};
  const std::vector<int> y = {1, 1, 1, 0, 0, 0};
  EXPECT_NEAR(partial_area(s, y, 0.5), 7.0 / 18.0, 1e-15);
  EXPECT_NEAR(pauc(s, y, 0.5), 23.0 / 27.0, 1e-15);
}

TEST(Pauc, PerfectAndChance) {
  const std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y = {1, 1, 0, 0};
  for (double p : {0.01, 0.05, 0.1, 1.0}) EXPECT_DOUBLE_EQ(pauc(s, y, p), 1.0);
  const std::vector<double> tied = {0.5, 0.5, 0.5, 0.5};
  for (double p : {0.01, 0.05, 0.1, 1.0}) EXPECT_NEAR(pauc(tied, y, p), 0.5, 1e-12);
}

TEST(Pauc, MatchesBruteForceAndIsMonotoneInvariant) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const std::size_t n = 4 + rng.index(46);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.index(2));
      s[i] = std::round(rng.normal() * 4.0 + y[i]) / 4.0;  // coarse grid forces ties
    }
    for (double p : {0.01, 0.05, 0.1, 0.5, 1.0}) {
      const double brute = brute_partial_area(s, y, p);
      EXPECT_NEAR(partial_area(s, y, p), brute, 1e-12) << "seed " << seed << " p " << p;
      std::vector<double> t(n);
      for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(2.0 * s[i]) - 7.0;
      EXPECT_NEAR(pauc(t, y, p), pauc(s, y, p), 1e-12);
    }
  }
}

TEST(Pauc, FullRangeIsAuc) {
  Rng rng(6);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    y.push_back(i % 2);
    s.push_back(rng.normal() + y.back());
  }
  double wins = 0.0, pairs = 0.0;
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  EXPECT_NEAR(pauc(s, y, 1.0), wins / pairs, 1e-12);
}

TEST(Pauc, Errors) {
  const std::vector<double> s = {0.1, 0.2};
  EXPECT_THROW(pauc(s, std::vector<int>{1, 1}, 0.1), ContractError);
  EXPECT_THROW(pauc(s, std::vector<int>{1, 0}, 0.0), ContractError);
  EXPECT_THROW(pauc(s, std::vector<int>{1, 0}, 1.5), ContractError);
  EXPECT_THROW(pauc(s, std::vector<int>{1}, 0.1), ShapeError);
}

TEST(Detect, SingleTarget) {
  Rng rng(1);
  std::vector<Embedding> refs;
  for (int i = 0; i < 4; ++i) refs.push_back(random_vec(6, rng));
  std::vector<Embedding> queries = {refs[2]};
  for (int i = 0; i < 10; ++i) queries.push_back(random_vec(6, rng));
  const auto s = detect_single_target(queries, refs);
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double best = -2.0;
    for (const auto& r : refs) best = std::max(best, cosine(queries[q], r));
    EXPECT_EQ(s[q], best);
    EXPECT_EQ(detect_single_target({queries[q]}, {refs[1]})[0], cosine(queries[q], refs[1]));
  }
  const auto mean = detect_single_target(queries, refs, Aggregation::Mean);
  EXPECT_LE(mean[3], s[3]);
}

TEST(Detect, MultiTarget) {
  Rng rng(2);
  std::vector<std::vector<Embedding>> gens(3);
  std::vector<Embedding> flat;
  for (auto& g : gens)
    for (int i = 0; i < 3; ++i) g.push_back(random_vec(5, rng)), flat.push_back(g.back());
  std::vector<Embedding> queries = {gens[1][0]};
  for (int i = 0; i < 10; ++i) queries.push_back(random_vec(5, rng));
  const auto s = detect_multi_target(queries, gens);
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  EXPECT_EQ(s, detect_single_target(queries, flat));
  EXPECT_EQ(detect_multi_target(queries, {gens[0]}), detect_single_target(queries, gens[0]));
}

TEST(Probe, SeparableAndChance) {
  Rng rng(3);
  std::vector<Embedding> x, xt;
  std::vector<int> y, yt;
  for (int i = 0; i < 200; ++i) {
    const int c = i % 4;
    Embedding v = random_vec(6, rng);
    v[static_cast<std::size_t>(c)] += 5.0;
    (i < 150 ? x : xt).push_back(v);
    (i < 150 ? y : yt).push_back(c);
  }
  EXPECT_GT(probe_accuracy(x, y, xt, yt, 4), 0.95);
  std::vector<Embedding> noise, noise_t;
  for (int i = 0; i < 150; ++i) noise.push_back(random_vec(6, rng));
  for (int i = 0; i < 50; ++i) noise_t.push_back(random_vec(6, rng));
  EXPECT_LT(probe_accuracy(noise, y, noise_t, yt, 4), 0.45);
}
