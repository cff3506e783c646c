#include "stylelab/vocab.hpp"

#include <cctype>

#include "stylelab/errors.hpp"
#include "stylelab/lexicon.hpp"

namespace stylelab::data {

namespace {

constexpr std::string_view kPunctuation = ".,;:!?-(){}[]\"'";

bool is_punct(char c) { return kPunctuation.find(c) != std::string_view::npos; }

}  // namespace

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<unk>", "<bos>", "<eos>", "<slot_a>", "<slot_b>"}) add(t);
}

Vocab Vocab::standard(std::size_t n_topics) {
  Vocab v;
  v.add(".");
  for (std::string_view mark : lexicon::kPunctuationMarks) v.add(mark);
  for (const auto& group : lexicon::register_words())
    for (const auto& w : group) v.add(w);
  for (const auto& w : lexicon::neutral_words()) v.add(w);
  for (std::size_t t = 0; t < n_topics; ++t) {
    v.add(lexicon::topic_name(t));
    for (const auto& w : lexicon::topic_keywords(t)) v.add(w);
  }
  for (const auto& w : lexicon::auxiliary_words()) v.add(w);
  return v;
}

int Vocab::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw NotFoundError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < kNumReserved && id != kUnk) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace stylelab::data
