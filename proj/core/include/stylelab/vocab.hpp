#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stylelab::data {

/// Word-level vocabulary with reserved control ids at the front.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSlotA = 4;  ///< first placeholder of a prompt template
  static constexpr int kSlotB = 5;  ///< second placeholder
  static constexpr int kNumReserved = 6;

  Vocab();

  /// Every word the corpus generator, the explanation synthesizer and the
  /// prompt templates can emit, for a corpus with `n_topics` topics.
  static Vocab standard(std::size_t n_topics);

  /// Returns the id of `token`, adding it when new.
  int add(std::string_view token);
  int id(std::string_view token) const;  ///< kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  /// Space-joined tokens; control ids other than UNK are dropped.
  std::string decode(const std::vector<int>& ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Splits on whitespace and isolates each punctuation character.
std::vector<std::string> split_words(std::string_view text);

/// Inserts spaces around punctuation and collapses whitespace runs; the
/// normal form under which tokenize/detokenize round-trips.
std::string normalize_whitespace(std::string_view text);

}  // namespace stylelab::data
