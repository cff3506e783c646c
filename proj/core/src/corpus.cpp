#include "stylelab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "stylelab/errors.hpp"
#include "stylelab/io.hpp"
#include "stylelab/lexicon.hpp"
#include "stylelab/rng.hpp"

namespace stylelab::data {

namespace {

constexpr double kNeutralSentenceLength = 9.0;
constexpr double kMarkRate = 0.12;
constexpr double kRegisterMass = 0.6;  // share of the author component on function words

std::size_t n_function_words() {
  std::size_t n = 0;
  for (const auto& g : lexicon::register_words()) n += g.size();
  return n;
}

void validate(const CorpusConfig& c) {
  if (c.n_authors < 1) throw ConfigError("n_authors must be positive");
  if (c.n_topics < 2) throw ConfigError("n_topics must be at least 2");
  if (c.docs_per_author < 1) throw ConfigError("docs_per_author must be positive");
  if (c.style_strength < 0.0 || c.style_strength > 1.0)
    throw ConfigError("style_strength must lie in [0, 1]");
  if (c.topic_strength < 0.0 || c.topic_strength > 1.0)
    throw ConfigError("topic_strength must lie in [0, 1]");
  if (c.keyword_rate < 0.0 || c.keyword_rate > 1.0)
    throw ConfigError("keyword_rate must lie in [0, 1]");
  if (c.min_tokens > c.max_tokens) throw ConfigError("min_tokens exceeds max_tokens");
  if (c.max_tokens < kMinDocTokens || c.min_tokens > kMaxDocTokens) {
    throw ConfigError("document length bounds [" + std::to_string(c.min_tokens) + ", " +
                      std::to_string(c.max_tokens) + "] cannot meet the " +
                      std::to_string(kMinDocTokens) + ".." + std::to_string(kMaxDocTokens) +
                      " token filter");
  }
  if (c.topics_per_author == 1) {
    throw ConfigError("authors must write about at least two topics");
  }
}

std::vector<int> author_topics(const CorpusConfig& c, std::size_t author) {
  const std::size_t m = (c.topics_per_author == 0 || c.topics_per_author >= c.n_topics)
                            ? c.n_topics
                            : c.topics_per_author;
  std::vector<int> out;
  for (std::size_t k = 0; k < m; ++k) {
    out.push_back(static_cast<int>((author + k) % c.n_topics));
  }
  return out;
}

std::vector<double> idiolect(const CorpusConfig& c, std::size_t author) {
  Rng rng(derive_seed(c.seed, 100 + author));
  std::vector<double> w(lexicon::neutral_words().size());
  double total = 0.0;
  for (double& v : w) total += (v = std::exp(rng.normal()));
  for (double& v : w) v /= total;
  return w;
}

Document sample_document(const CorpusConfig& c, const Vocab& vocab,
                         const std::vector<int>& keyword_ids,
                         const std::vector<int>& general_ids, const EmissionModel& em,
                         Rng& rng) {
  const std::size_t target = c.min_tokens + rng.index(c.max_tokens - c.min_tokens + 1);
  const int period = vocab.id(".");
  std::vector<int> mark_ids;
  for (std::string_view m : lexicon::kPunctuationMarks) mark_ids.push_back(vocab.id(m));

  Document doc;
  while (doc.tokens.size() < target) {
    const double mean = em.sentence_length_mean;
    const long n = std::max(2L, std::lround(mean + 0.25 * mean * rng.normal()));
    for (long w = 0; w < n; ++w) {
      if (rng.uniform() < em.keyword_rate) {
        doc.tokens.push_back(keyword_ids[rng.categorical(em.keyword_weights)]);
      } else {
        doc.tokens.push_back(general_ids[rng.categorical(em.general_weights)]);
      }
      if (w + 1 < n && rng.uniform() < em.mark_rate) {
        doc.tokens.push_back(mark_ids[rng.categorical(em.mark_weights)]);
      }
    }
    doc.tokens.push_back(period);
  }
  doc.tokens.resize(target);
  doc.tokens.back() = period;
  doc.raw_text = vocab.decode(doc.tokens);
  return doc;
}

}  // namespace

const Document& Corpus::doc(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= documents.size() ||
      documents[static_cast<std::size_t>(id)].id != id) {
    throw NotFoundError("no document with id " + std::to_string(id));
  }
  return documents[static_cast<std::size_t>(id)];
}

void Corpus::reindex() {
  authors.clear();
  topics.clear();
  for (const auto& d : documents) {
    authors[d.author_id].push_back(d.id);
    topics[d.topic_id].push_back(d.id);
  }
}

const std::vector<std::string>& general_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> out;
    for (const auto& g : lexicon::register_words()) out.insert(out.end(), g.begin(), g.end());
    const auto& n = lexicon::neutral_words();
    out.insert(out.end(), n.begin(), n.end());
    return out;
  }();
  return words;
}

std::vector<std::string> all_keywords(std::size_t n_topics) {
  std::vector<std::string> out;
  for (std::size_t t = 0; t < n_topics; ++t) {
    const auto k = lexicon::topic_keywords(t);
    out.insert(out.end(), k.begin(), k.end());
  }
  return out;
}

std::vector<std::vector<int>> author_style_factors(const CorpusConfig& c) {
  std::vector<std::vector<int>> combos;
  for (std::size_t a = 0; a < lexicon::kFactorLevels[0]; ++a)
    for (std::size_t b = 0; b < lexicon::kFactorLevels[1]; ++b)
      for (std::size_t r = 0; r < lexicon::kFactorLevels[2]; ++r)
        combos.push_back({static_cast<int>(a), static_cast<int>(b), static_cast<int>(r)});
  Rng rng(derive_seed(c.seed, 1));
  rng.shuffle(combos);
  std::vector<std::vector<int>> out;
  for (std::size_t a = 0; a < c.n_authors; ++a) out.push_back(combos[a % combos.size()]);
  return out;
}

EmissionModel emission_model(const CorpusConfig& c, int author, int topic) {
  const auto factors = author_style_factors(c).at(static_cast<std::size_t>(author));
  const double s = c.style_strength;
  const double t = c.topic_strength;
  EmissionModel em;
  em.keyword_rate = c.keyword_rate;
  em.mark_rate = kMarkRate;
  em.sentence_length_mean =
      (1.0 - s) * kNeutralSentenceLength +
      s * lexicon::kSentenceLengthMeans[static_cast<std::size_t>(factors[0])];

  const std::size_t n_marks = lexicon::kPunctuationMarks.size();
  for (std::size_t m = 0; m < n_marks; ++m) {
    em.mark_weights.push_back((1.0 - s) / static_cast<double>(n_marks) +
                              s * (static_cast<int>(m) == factors[1] ? 1.0 : 0.0));
  }

  const std::size_t n_general = general_words().size();
  const std::size_t n_func = n_function_words();
  const std::size_t group = static_cast<std::size_t>(factors[2]);
  const std::size_t group_size = lexicon::register_words()[group].size();
  std::size_t group_begin = 0;
  for (std::size_t g = 0; g < group; ++g) group_begin += lexicon::register_words()[g].size();
  const auto idio = s > 0.0 ? idiolect(c, static_cast<std::size_t>(author))
                            : std::vector<double>(n_general - n_func, 0.0);
  for (std::size_t w = 0; w < n_general; ++w) {
    double author_part = 0.0;
    if (w >= group_begin && w < group_begin + group_size) {
      author_part = kRegisterMass / static_cast<double>(group_size);
    } else if (w >= n_func) {
      author_part = (1.0 - kRegisterMass) * idio[w - n_func];
    }
    em.general_weights.push_back((1.0 - s) / static_cast<double>(n_general) + s * author_part);
  }

  const std::size_t per_topic = lexicon::topic_keywords(0).size();
  const std::size_t n_kw = per_topic * c.n_topics;
  double zipf_total = 0.0;
  for (std::size_t r = 0; r < per_topic; ++r) zipf_total += 1.0 / static_cast<double>(r + 1);
  for (std::size_t k = 0; k < n_kw; ++k) {
    double topic_part = 0.0;
    if (k / per_topic == static_cast<std::size_t>(topic)) {
      topic_part = (1.0 / static_cast<double>(k % per_topic + 1)) / zipf_total;
    }
    em.keyword_weights.push_back((1.0 - t) / static_cast<double>(n_kw) + t * topic_part);
  }
  return em;
}

Corpus generate_corpus(const CorpusConfig& c) {
  validate(c);
  Corpus corpus;
  corpus.vocab = Vocab::standard(c.n_topics);
  std::vector<int> keyword_ids, general_ids;
  for (const auto& w : all_keywords(c.n_topics)) keyword_ids.push_back(corpus.vocab.id(w));
  for (const auto& w : general_words()) general_ids.push_back(corpus.vocab.id(w));
  const auto factors = author_style_factors(c);

  for (std::size_t a = 0; a < c.n_authors; ++a) {
    const auto topics = author_topics(c, a);
    std::vector<EmissionModel> models;
    for (int t : topics) models.push_back(emission_model(c, static_cast<int>(a), t));
    for (std::size_t k = 0; k < c.docs_per_author; ++k) {
      const std::size_t slot = k % topics.size();
      const auto index = corpus.documents.size();
      Rng rng(derive_seed(c.seed, 1000 + index));
      Document doc = sample_document(c, corpus.vocab, keyword_ids, general_ids, models[slot], rng);
      doc.id = static_cast<int>(index);
      doc.author_id = static_cast<int>(a);
      doc.topic_id = topics[slot];
      doc.style_factors = factors[a];
      corpus.documents.push_back(std::move(doc));
    }
  }
  return apply_filters(std::move(corpus), c.min_docs_per_author, c.max_docs_per_author);
}

Corpus apply_filters(Corpus corpus, std::size_t min_docs, std::size_t max_docs) {
  std::vector<Document> kept;
  for (auto& d : corpus.documents) {
    if (d.tokens.size() >= kMinDocTokens && d.tokens.size() <= kMaxDocTokens) {
      kept.push_back(std::move(d));
    }
  }
  std::map<int, std::size_t> counts;
  for (const auto& d : kept) ++counts[d.author_id];
  corpus.documents.clear();
  for (auto& d : kept) {
    const std::size_t n = counts[d.author_id];
    if (n < min_docs || n > max_docs) continue;
    d.id = static_cast<int>(corpus.documents.size());
    corpus.documents.push_back(std::move(d));
  }
  corpus.reindex();
  return corpus;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.documents) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["author_id"] = d.author_id;
    j["topic_id"] = d.topic_id;
    j["style_factors"] = d.style_factors;
    j["text"] = d.raw_text;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Corpus corpus_from_jsonl(const std::string& text) {
  std::vector<nlohmann::json> rows;
  std::istringstream in(text);
  std::string line;
  int max_topic = 1;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
      max_topic = std::max(max_topic, rows.back().at("topic_id").get<int>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad corpus line: ") + e.what(), line);
    }
  }
  Corpus corpus;
  corpus.vocab = Vocab::standard(static_cast<std::size_t>(max_topic) + 1);
  for (const auto& j : rows) {
    Document d;
    try {
      d.id = j.at("id").get<int>();
      d.author_id = j.at("author_id").get<int>();
      d.topic_id = j.at("topic_id").get<int>();
      d.style_factors = j.at("style_factors").get<std::vector<int>>();
      d.raw_text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad corpus record: ") + e.what(), j.dump());
    }
    if (d.author_id < 0 || d.topic_id < 0) {
      throw ParseError("negative author or topic id", j.dump());
    }
    for (const auto& w : split_words(d.raw_text)) d.tokens.push_back(corpus.vocab.add(w));
    if (d.id != static_cast<int>(corpus.documents.size())) {
      throw ParseError("document ids must be dense and ordered", j.dump());
    }
    corpus.documents.push_back(std::move(d));
  }
  corpus.reindex();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, corpus_to_jsonl(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) {
  return corpus_from_jsonl(read_file(path));
}

CrossTopicSplit split_cross_topic(const Corpus& corpus, std::size_t heldout_per_author) {
  CrossTopicSplit split;
  std::size_t index = 0;
  for (const auto& [author, ids] : corpus.authors) {
    std::set<int> topic_set;
    for (int id : ids) topic_set.insert(corpus.doc(id).topic_id);
    const std::vector<int> topics(topic_set.begin(), topic_set.end());
    if (heldout_per_author == 0 || heldout_per_author >= topics.size()) {
      throw ConfigError("author " + std::to_string(author) + " has " +
                        std::to_string(topics.size()) + " topics; cannot hold out " +
                        std::to_string(heldout_per_author));
    }
    std::vector<int> held;
    for (std::size_t k = 0; k < heldout_per_author; ++k) {
      held.push_back(topics[(index + k) % topics.size()]);
    }
    std::sort(held.begin(), held.end());
    for (int id : ids) {
      const int t = corpus.doc(id).topic_id;
      (std::binary_search(held.begin(), held.end(), t) ? split.query : split.train).push_back(id);
    }
    split.heldout_topics[author] = std::move(held);
    ++index;
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.query.begin(), split.query.end());
  return split;
}

}  // namespace stylelab::data
