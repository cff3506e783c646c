#include "stylelab/eval.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylelab/errors.hpp"

namespace stylelab::eval {

std::size_t ScoredRanking::gold_rank() const {
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i] == gold) return i + 1;
  throw ContractError("gold id missing from ranking");
}

namespace {

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine of vectors with different dimensions");
  const double na = norm(a), nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw ContractError("cosine of a zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot / (na * nb);
}

ScoredRanking rank(int query_id, std::span<const double> query,
                   const std::vector<Embedding>& candidates, std::span<const int> candidate_ids,
                   int gold) {
  if (candidates.size() != candidate_ids.size()) {
    throw ShapeError("candidate ids do not match candidates");
  }
  if (std::find(candidate_ids.begin(), candidate_ids.end(), gold) == candidate_ids.end()) {
    throw ContractError("gold id " + std::to_string(gold) + " is not a candidate");
  }
  std::vector<std::pair<double, int>> scored;
  scored.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scored.emplace_back(cosine(query, candidates[i]), candidate_ids[i]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  ScoredRanking r;
  r.query_id = query_id;
  r.gold = gold;
  for (const auto& [s, id] : scored) {
    r.scores.push_back(s);
    r.candidates.push_back(id);
  }
  return r;
}

double mrr(const std::vector<ScoredRanking>& rankings) {
  if (rankings.empty()) throw ContractError("mrr of no rankings");
  double total = 0.0;
  for (const auto& r : rankings) total += 1.0 / static_cast<double>(r.gold_rank());
  return total / static_cast<double>(rankings.size());
}

double recall_at_k(const std::vector<ScoredRanking>& rankings, std::size_t k) {
  if (rankings.empty()) throw ContractError("recall of no rankings");
  std::size_t hits = 0;
  for (const auto& r : rankings) {
    if (r.candidates.size() < k) {
      throw ContractError("ranking has " + std::to_string(r.candidates.size()) +
                          " candidates, fewer than k=" + std::to_string(k));
    }
    if (r.gold_rank() <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

Embedding aggregate_author(const std::vector<Embedding>& docs) {
  if (docs.empty()) throw ContractError("cannot aggregate an empty document set");
  Embedding mean(docs.front().size(), 0.0);
  for (const auto& d : docs) {
    if (d.size() != mean.size()) throw ShapeError("embeddings of different dimensions");
    const double n = norm(d);
    if (!(n > 0.0)) throw ContractError("zero document embedding");
    for (std::size_t i = 0; i < d.size(); ++i) mean[i] += d[i] / n;
  }
  const double n = norm(mean);
  if (!(n > 1e-12 * static_cast<double>(docs.size()))) {
    throw ContractError("author embeddings cancel to a zero mean");
  }
  for (double& v : mean) v /= n;
  return mean;
}

namespace {

void check_labels(std::span<const double> scores, std::span<const int> labels, double max_fpr) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  if (!(max_fpr > 0.0) || max_fpr > 1.0) throw ContractError("max_fpr must lie in (0, 1]");
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ContractError("non-finite detection score");
    if (labels[i] == 1) pos = true;
    else if (labels[i] == 0) neg = true;
    else throw ContractError("labels must be 0 or 1");
  }
  if (!pos || !neg) throw ContractError("pauc needs both classes");
}

}  // namespace

double partial_area(std::span<const double> scores, std::span<const int> labels, double max_fpr) {
  check_labels(scores, labels, max_fpr);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double P = 0.0, N = 0.0;
  for (int l : labels) (l == 1 ? P : N) += 1.0;
  double tp = 0.0, fp = 0.0, area = 0.0;
  double x0 = 0.0, y0 = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1.0;
      ++i;
    }
    const double x1 = fp / N, y1 = tp / P;
    if (x1 > x0) {
      if (x1 >= max_fpr) {
        const double t = (max_fpr - x0) / (x1 - x0);
        const double ym = y0 + t * (y1 - y0);
        area += (max_fpr - x0) * (y0 + ym) / 2.0;
        return area;
      }
      area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    x0 = x1;
    y0 = y1;
  }
  return area;
}

double pauc(std::span<const double> scores, std::span<const int> labels, double max_fpr) {
  const double a = partial_area(scores, labels, max_fpr);
  const double p = max_fpr;
  const double lo = p * p / 2.0;
  return 0.5 * (1.0 + (a - lo) / (p - lo));
}

double pauc(const DetectionScores& scores, double max_fpr) {
  return pauc(scores.scores, scores.labels, max_fpr);
}

std::vector<double> detect_single_target(const std::vector<Embedding>& queries,
                                         const std::vector<Embedding>& references,
                                         Aggregation aggregation) {
  if (references.empty()) throw ContractError("detection needs at least one reference");
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    double best = -HUGE_VAL, total = 0.0;
    for (const auto& r : references) {
      const double c = cosine(q, r);
      best = std::max(best, c);
      total += c;
    }
    out.push_back(aggregation == Aggregation::Max ? best
                                                  : total / static_cast<double>(references.size()));
  }
  return out;
}

std::vector<double> detect_multi_target(const std::vector<Embedding>& queries,
                                        const std::vector<std::vector<Embedding>>& references,
                                        Aggregation aggregation) {
  if (references.empty()) throw ContractError("detection needs at least one generator");
  std::vector<double> out(queries.size(), -HUGE_VAL);
  for (const auto& refs : references) {
    const auto s = detect_single_target(queries, refs, aggregation);
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = std::max(out[i], s[i]);
  }
  return out;
}

namespace {

Eigen::MatrixXd to_matrix(const std::vector<Embedding>& x) {
  if (x.empty()) throw ContractError("probe needs data");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != x[0].size()) throw ShapeError("probe features of different widths");
    for (std::size_t j = 0; j < x[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i][j];
  }
  return m;
}

}  // namespace

double probe_accuracy(const std::vector<Embedding>& train_x, std::span<const int> train_y,
                      const std::vector<Embedding>& test_x, std::span<const int> test_y,
                      std::size_t n_classes, const ProbeConfig& config) {
  if (train_x.size() != train_y.size() || test_x.size() != test_y.size()) {
    throw ShapeError("probe features and labels differ in length");
  }
  Eigen::MatrixXd x = to_matrix(train_x);
  Eigen::MatrixXd xt = to_matrix(test_x);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd sd = ((x.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 1e-12)) sd(j) = 1.0;
  x = (x.rowwise() - mean).array().rowwise() / sd.array();
  xt = (xt.rowwise() - mean).array().rowwise() / sd.array();

  const auto n = x.rows();
  const auto k = static_cast<Eigen::Index>(n_classes);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = train_y[static_cast<std::size_t>(i)];
    if (c < 0 || c >= k) throw ContractError("probe label out of range");
    y(i, c) = 1.0;
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(x.cols(), k);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(k);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Eigen::MatrixXd logits = (x * w).rowwise() + b;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - mx).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    const Eigen::MatrixXd d = (logits - y) / static_cast<double>(n);
    w -= config.lr * (x.transpose() * d + config.l2 * w);
    b -= config.lr * d.colwise().sum();
  }
  const Eigen::MatrixXd scores = (xt * w).rowwise() + b;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < xt.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    if (best == test_y[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xt.rows());
}

}  // namespace stylelab::eval
