#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "stylelab/corpus.hpp"

namespace stylelab::data {

enum class StyleLabel { SameAuthor, DifferentAuthor };
enum class ContentLabel { SameContent, DifferentContent };

/// "same author" / "different author".
std::string_view label_text(StyleLabel label);
/// "same content" / "different content".
std::string_view label_text(ContentLabel label);
StyleLabel parse_style_label(std::string_view text);
ContentLabel parse_content_label(std::string_view text);

struct PairRecord {
  int doc_i = 0;
  int doc_j = 0;
  StyleLabel style_label = StyleLabel::SameAuthor;
  ContentLabel content_label = ContentLabel::SameContent;
  std::string style_explanation;
  std::string content_explanation;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

/// L2-normalized TF-IDF rows, one per document in id order, with
/// idf(t) = ln((1 + N) / (1 + df(t))) + 1.
Eigen::MatrixXd tfidf_embeddings(const Corpus& corpus);

struct HardPairConfig {
  double theta_lo = 0.3;
  double theta_hi = 0.7;
  /// Pairs per family.
  std::size_t quota = 1000;
  std::uint64_t seed = 7;
  /// Also emit same-author/same-topic and different-author/different-topic
  /// pairs (up to this many each). Zero keeps only the two hard families.
  std::size_t easy_quota = 0;
};

struct HardPairResult {
  std::vector<PairRecord> pairs;
  std::size_t same_author_found = 0;
  std::size_t different_author_found = 0;
  /// quota minus pairs emitted, per family.
  std::size_t same_author_shortfall = 0;
  std::size_t different_author_shortfall = 0;
  std::size_t easy_found = 0;
};

/// Truncation order of qualifying pairs: ascending key, then (i, j).
std::uint64_t pair_order_key(std::uint64_t seed, int doc_i, int doc_j);

/// Two families of pairs (i < j):
///   same author, different cluster, cosine < theta_lo  -> same-author / different-content
///   different author, same cluster, cosine > theta_hi  -> different-author / same-content
/// Family one also requires different topic ids and family two equal topic ids,
/// so both labels agree with the corpus metadata. Each family is ordered by
/// pair_order_key and truncated to the quota. Explanations are left empty.
HardPairResult mine_hard_pairs(const Corpus& corpus, const Eigen::MatrixXd& content_embeddings,
                               const std::vector<int>& clusters, const HardPairConfig& config);

/// Fills both explanation fields from the documents' style factors and topics.
PairRecord synth_explanations(PairRecord pair, const Corpus& corpus);

std::string pairs_to_jsonl(const std::vector<PairRecord>& pairs);
std::vector<PairRecord> pairs_from_jsonl(const std::string& text);
void save_pairs(const std::vector<PairRecord>& pairs, const std::filesystem::path& path);
std::vector<PairRecord> load_pairs(const std::filesystem::path& path);

}  // namespace stylelab::data
