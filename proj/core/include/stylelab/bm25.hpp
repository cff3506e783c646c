#pragma once

#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stylelab/corpus.hpp"

namespace stylelab::data {

/// Okapi BM25 over a subset of a corpus.
///
///   score(q, d) = sum over distinct t in q of
///       idf(t) * tf(t,d) (k1 + 1) / (tf(t,d) + k1 (1 - b + b |d| / avg_len))
///   idf(t)      = ln((N - df(t) + 0.5) / (df(t) + 0.5) + 1)
///
/// Repeated query terms count once.
class Bm25Index {
 public:
  Bm25Index(const Corpus& corpus, std::span<const int> doc_ids, double k1 = 1.2,
            double b = 0.75);

  double score(std::span<const int> query, int doc_id) const;
  /// Scores of every indexed document, aligned with doc_ids().
  std::vector<double> score_all(std::span<const int> query) const;

  double idf(int term) const;
  bool contains(int doc_id) const { return slot_.count(doc_id) != 0; }
  const std::vector<int>& doc_ids() const noexcept { return doc_ids_; }
  const std::vector<int>& authors() const noexcept { return authors_; }
  double avg_len() const noexcept { return avg_len_; }
  double k1() const noexcept { return k1_; }
  double b() const noexcept { return b_; }
  std::size_t doc_freq(int term) const;
  std::size_t doc_len(int doc_id) const;
  /// (slot, term frequency) pairs for `term`; slots index doc_ids().
  const std::vector<std::pair<int, int>>& postings(int term) const;

 private:
  double term_score(double idf, int tf, std::size_t len) const;

  double k1_;
  double b_;
  double avg_len_ = 0.0;
  std::vector<int> doc_ids_;
  std::vector<int> authors_;
  std::vector<std::size_t> lens_;
  std::unordered_map<int, std::size_t> slot_;
  std::unordered_map<int, std::vector<std::pair<int, int>>> postings_;
};

/// The K highest-scoring indexed documents whose author differs from the
/// anchor's, ties broken by lower document id. MiningError when fewer than K
/// such documents exist.
std::vector<int> mine_hard_negatives(const Bm25Index& index, const Document& anchor,
                                     std::size_t k);

}  // namespace stylelab::data
