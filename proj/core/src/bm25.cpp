#include "stylelab/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "stylelab/errors.hpp"

namespace stylelab::data {

Bm25Index::Bm25Index(const Corpus& corpus, std::span<const int> doc_ids, double k1, double b)
    : k1_(k1), b_(b) {
  if (doc_ids.empty()) throw ContractError("BM25 index over no documents");
  double total = 0.0;
  for (int id : doc_ids) {
    const Document& d = corpus.doc(id);
    if (slot_.count(id)) throw ContractError("document indexed twice");
    const int slot = static_cast<int>(doc_ids_.size());
    slot_.emplace(id, doc_ids_.size());
    doc_ids_.push_back(id);
    authors_.push_back(d.author_id);
    lens_.push_back(d.tokens.size());
    total += static_cast<double>(d.tokens.size());
    std::map<int, int> tf;
    for (int t : d.tokens) ++tf[t];
    for (const auto& [term, count] : tf) postings_[term].emplace_back(slot, count);
  }
  avg_len_ = total / static_cast<double>(doc_ids_.size());
}

double Bm25Index::idf(int term) const {
  const double n = static_cast<double>(doc_ids_.size());
  const double df = static_cast<double>(doc_freq(term));
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::size_t Bm25Index::doc_freq(int term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

std::size_t Bm25Index::doc_len(int doc_id) const {
  auto it = slot_.find(doc_id);
  if (it == slot_.end()) throw NotFoundError("document " + std::to_string(doc_id) + " not indexed");
  return lens_[it->second];
}

const std::vector<std::pair<int, int>>& Bm25Index::postings(int term) const {
  static const std::vector<std::pair<int, int>> none;
  auto it = postings_.find(term);
  return it == postings_.end() ? none : it->second;
}

double Bm25Index::term_score(double idf, int tf, std::size_t len) const {
  const double f = static_cast<double>(tf);
  const double norm = 1.0 - b_ + b_ * static_cast<double>(len) / avg_len_;
  return idf * f * (k1_ + 1.0) / (f + k1_ * norm);
}

double Bm25Index::score(std::span<const int> query, int doc_id) const {
  auto it = slot_.find(doc_id);
  if (it == slot_.end()) throw NotFoundError("document " + std::to_string(doc_id) + " not indexed");
  const int slot = static_cast<int>(it->second);
  const std::set<int> terms(query.begin(), query.end());
  double total = 0.0;
  for (int term : terms) {
    for (const auto& [s, tf] : postings(term)) {
      if (s == slot) {
        total += term_score(idf(term), tf, lens_[it->second]);
        break;
      }
    }
  }
  return total;
}

std::vector<double> Bm25Index::score_all(std::span<const int> query) const {
  std::vector<double> scores(doc_ids_.size(), 0.0);
  const std::set<int> terms(query.begin(), query.end());
  for (int term : terms) {
    const auto& plist = postings(term);
    if (plist.empty()) continue;
    const double w = idf(term);
    for (const auto& [slot, tf] : plist) {
      scores[static_cast<std::size_t>(slot)] += term_score(w, tf, lens_[static_cast<std::size_t>(slot)]);
    }
  }
  return scores;
}

std::vector<int> mine_hard_negatives(const Bm25Index& index, const Document& anchor,
                                     std::size_t k) {
  const auto scores = index.score_all(anchor.tokens);
  std::vector<std::size_t> candidates;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (index.authors()[s] != anchor.author_id) candidates.push_back(s);
  }
  if (candidates.size() < k) {
    throw MiningError("only " + std::to_string(candidates.size()) +
                      " other-author documents for anchor " + std::to_string(anchor.id) +
                      ", need " + std::to_string(k));
  }
  const auto& ids = index.doc_ids();
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);
  std::vector<int> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(ids[candidates[i]]);
  return out;
}

}  // namespace stylelab::data
