#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stylelab/vocab.hpp"

namespace stylelab::data {

inline constexpr std::size_t kMinDocTokens = 32;
inline constexpr std::size_t kMaxDocTokens = 512;

struct Document {
  int id = 0;
  int author_id = 0;
  int topic_id = 0;
  std::vector<int> style_factors;
  std::vector<int> tokens;
  std::string raw_text;

  friend bool operator==(const Document&, const Document&) = default;
};

struct Corpus {
  std::vector<Document> documents;
  Vocab vocab;
  std::map<int, std::vector<int>> authors;  ///< author id -> document ids
  std::map<int, std::vector<int>> topics;   ///< topic id -> document ids

  const Document& doc(int id) const;
  /// Rebuilds the author/topic indices from `documents`.
  void reindex();

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct CorpusConfig {
  std::uint64_t seed = 7;
  std::size_t n_authors = 16;
  std::size_t n_topics = 4;
  std::size_t docs_per_author = 128;
  /// Topics each author writes about (round-robin over a per-author rotation);
  /// 0 means all topics.
  std::size_t topics_per_author = 0;
  double style_strength = 0.8;
  double topic_strength = 0.8;
  std::size_t min_tokens = 32;
  std::size_t max_tokens = 48;
  /// Probability that a word slot holds a topic keyword.
  double keyword_rate = 0.3;
  /// Author-balance filter; authors outside the range are dropped.
  std::size_t min_docs_per_author = 10;
  std::size_t max_docs_per_author = 1000;
};

/// Per-(author, topic) emission parameters. Exposed so the degenerate-knob
/// behavior of the generator can be checked exactly.
struct EmissionModel {
  double sentence_length_mean = 0.0;
  std::vector<double> mark_weights;     ///< over lexicon::kPunctuationMarks
  std::vector<double> general_weights;  ///< over general_words()
  std::vector<double> keyword_weights;  ///< over all_keywords(n_topics)
  double keyword_rate = 0.0;
  double mark_rate = 0.0;

  friend bool operator==(const EmissionModel&, const EmissionModel&) = default;
};

/// Function words followed by neutral words.
const std::vector<std::string>& general_words();
/// Keywords of topics [0, n_topics) concatenated in topic order.
std::vector<std::string> all_keywords(std::size_t n_topics);

/// Style factors assigned to each author (distinct while combinations last).
std::vector<std::vector<int>> author_style_factors(const CorpusConfig& config);

EmissionModel emission_model(const CorpusConfig& config, int author, int topic);

/// Deterministic synthetic corpus. Throws ConfigError on invalid parameters,
/// including length bounds that cannot satisfy the 32..512 token filter. A
/// single author is accepted (no different-author pairs can then be mined).
Corpus generate_corpus(const CorpusConfig& config);

/// Drops documents outside [kMinDocTokens, kMaxDocTokens] and authors outside
/// the configured document-count range, then renumbers ids densely.
Corpus apply_filters(Corpus corpus, std::size_t min_docs_per_author,
                     std::size_t max_docs_per_author);

/// JSONL, one document per line: {id, author_id, topic_id, style_factors, text}.
std::string corpus_to_jsonl(const Corpus& corpus);
Corpus corpus_from_jsonl(const std::string& text);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

/// Train/query split where each author's query topics never appear among that
/// author's training documents.
struct CrossTopicSplit {
  std::vector<int> train;
  std::vector<int> query;
  std::map<int, std::vector<int>> heldout_topics;  ///< author -> topics
};

CrossTopicSplit split_cross_topic(const Corpus& corpus, std::size_t heldout_per_author);

}  // namespace stylelab::data
