#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace stylelab::eval {

using Embedding = std::vector<double>;

struct ScoredRanking {
  int query_id = 0;
  std::vector<int> candidates;  ///< by descending score, ties by ascending id
  std::vector<double> scores;
  int gold = 0;

  /// 1-based rank of the gold candidate.
  std::size_t gold_rank() const;
};

double cosine(std::span<const double> a, std::span<const double> b);

/// Candidates ordered by cosine similarity to the query. ContractError on a
/// zero vector, a dimension mismatch (ShapeError) or a gold id that is not a
/// candidate.
ScoredRanking rank(int query_id, std::span<const double> query,
                   const std::vector<Embedding>& candidates, std::span<const int> candidate_ids,
                   int gold);

double mrr(const std::vector<ScoredRanking>& rankings);
/// ContractError when a ranking has fewer than k candidates.
double recall_at_k(const std::vector<ScoredRanking>& rankings, std::size_t k = 8);

/// Mean of the unit-normalized embeddings, normalized again. ContractError on
/// an empty set or a zero mean.
Embedding aggregate_author(const std::vector<Embedding>& docs);

enum class Protocol { SingleTarget, MultiTarget };
enum class Aggregation { Max, Mean };

struct DetectionScores {
  std::vector<double> scores;
  std::vector<int> labels;  ///< 1 machine, 0 human
  Protocol protocol = Protocol::SingleTarget;
  std::size_t k = 0;
};

/// Standardized partial AUC over FPR in [0, max_fpr] from the exact ROC
/// (every distinct score is a threshold, tied scores move diagonally):
///   0.5 (1 + (A - p^2/2) / (p - p^2/2)),  p = max_fpr.
/// ContractError on single-class input or max_fpr outside (0, 1].
double pauc(const DetectionScores& scores, double max_fpr = 0.01);
double pauc(std::span<const double> scores, std::span<const int> labels, double max_fpr);

/// Unstandardized partial area A.
double partial_area(std::span<const double> scores, std::span<const int> labels, double max_fpr);

/// Score of each query: max (or mean) cosine against the k references.
std::vector<double> detect_single_target(const std::vector<Embedding>& queries,
                                         const std::vector<Embedding>& references,
                                         Aggregation aggregation = Aggregation::Max);

/// Max over generators of the single-target score.
std::vector<double> detect_multi_target(const std::vector<Embedding>& queries,
                                        const std::vector<std::vector<Embedding>>& references,
                                        Aggregation aggregation = Aggregation::Max);

/// Multinomial logistic regression trained by full-batch gradient descent on
/// standardized features; returns the accuracy on the test rows.
struct ProbeConfig {
  double lr = 0.5;
  std::size_t iterations = 500;
  double l2 = 1e-3;
};

double probe_accuracy(const std::vector<Embedding>& train_x, std::span<const int> train_y,
                      const std::vector<Embedding>& test_x, std::span<const int> test_y,
                      std::size_t n_classes, const ProbeConfig& config = {});

}  // namespace stylelab::eval
