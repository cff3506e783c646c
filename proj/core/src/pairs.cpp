#include "stylelab/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <tuple>

#include "stylelab/errors.hpp"
#include "stylelab/io.hpp"
#include "stylelab/lexicon.hpp"
#include "stylelab/rng.hpp"

namespace stylelab::data {

std::string_view label_text(StyleLabel label) {
  return label == StyleLabel::SameAuthor ? "same author" : "different author";
}

std::string_view label_text(ContentLabel label) {
  return label == ContentLabel::SameContent ? "same content" : "different content";
}

StyleLabel parse_style_label(std::string_view text) {
  if (text == "same author") return StyleLabel::SameAuthor;
  if (text == "different author") return StyleLabel::DifferentAuthor;
  throw ParseError("unknown style label", std::string(text));
}

ContentLabel parse_content_label(std::string_view text) {
  if (text == "same content") return ContentLabel::SameContent;
  if (text == "different content") return ContentLabel::DifferentContent;
  throw ParseError("unknown content label", std::string(text));
}

Eigen::MatrixXd tfidf_embeddings(const Corpus& corpus) {
  const auto n = static_cast<Eigen::Index>(corpus.documents.size());
  const auto v = static_cast<Eigen::Index>(corpus.vocab.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, v);
  std::vector<double> df(static_cast<std::size_t>(v), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Document& d = corpus.documents[static_cast<std::size_t>(i)];
    if (d.id != static_cast<int>(i)) throw ContractError("document ids are not dense");
    for (int t : d.tokens) x(i, t) += 1.0;
    for (Eigen::Index t = 0; t < v; ++t)
      if (x(i, t) > 0.0) df[static_cast<std::size_t>(t)] += 1.0;
  }
  for (Eigen::Index t = 0; t < v; ++t) {
    const double idf =
        std::log((1.0 + static_cast<double>(n)) / (1.0 + df[static_cast<std::size_t>(t)])) + 1.0;
    x.col(t) *= idf;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) x.row(i) /= norm;
  }
  return x;
}

std::uint64_t pair_order_key(std::uint64_t seed, int doc_i, int doc_j) {
  const auto packed = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(doc_i)) << 32) |
                      static_cast<std::uint32_t>(doc_j);
  return derive_seed(seed, packed);
}

namespace {

struct Candidate {
  std::uint64_t key;
  int i;
  int j;
  bool operator<(const Candidate& o) const {
    return std::tie(key, i, j) < std::tie(o.key, o.i, o.j);
  }
};

std::vector<Candidate> take(std::vector<Candidate> c, std::size_t quota) {
  std::sort(c.begin(), c.end());
  if (c.size() > quota) c.resize(quota);
  return c;
}

}  // namespace

HardPairResult mine_hard_pairs(const Corpus& corpus, const Eigen::MatrixXd& content_embeddings,
                               const std::vector<int>& clusters, const HardPairConfig& config) {
  const std::size_t n = corpus.documents.size();
  if (static_cast<std::size_t>(content_embeddings.rows()) != n || clusters.size() != n) {
    throw ShapeError("embeddings and cluster assignments must cover the corpus");
  }
  Eigen::VectorXd norms = content_embeddings.rowwise().norm();
  std::vector<Candidate> fam1, fam2, easy_same, easy_diff;
  for (std::size_t a = 0; a < n; ++a) {
    const Document& da = corpus.documents[a];
    for (std::size_t b = a + 1; b < n; ++b) {
      const Document& db = corpus.documents[b];
      const bool same_author = da.author_id == db.author_id;
      const bool same_cluster = clusters[a] == clusters[b];
      const bool same_topic = da.topic_id == db.topic_id;
      const double denom = norms(static_cast<Eigen::Index>(a)) * norms(static_cast<Eigen::Index>(b));
      const double cos =
          denom > 0.0 ? content_embeddings.row(static_cast<Eigen::Index>(a))
                                .dot(content_embeddings.row(static_cast<Eigen::Index>(b))) /
                            denom
                      : 0.0;
      const Candidate c{pair_order_key(config.seed, da.id, db.id), da.id, db.id};
      if (same_author && !same_cluster && !same_topic && cos < config.theta_lo) {
        fam1.push_back(c);
      } else if (!same_author && same_cluster && same_topic && cos > config.theta_hi) {
        fam2.push_back(c);
      } else if (config.easy_quota > 0) {
        if (same_author && same_topic) easy_same.push_back(c);
        if (!same_author && !same_topic) easy_diff.push_back(c);
      }
    }
  }
  HardPairResult r;
  r.same_author_found = fam1.size();
  r.different_author_found = fam2.size();
  r.easy_found = easy_same.size() + easy_diff.size();
  auto emit = [&](const std::vector<Candidate>& picked, StyleLabel s, ContentLabel c) {
    for (const auto& p : picked) r.pairs.push_back(PairRecord{p.i, p.j, s, c, {}, {}});
  };
  const auto f1 = take(std::move(fam1), config.quota);
  const auto f2 = take(std::move(fam2), config.quota);
  r.same_author_shortfall = config.quota - f1.size();
  r.different_author_shortfall = config.quota - f2.size();
  emit(f1, StyleLabel::SameAuthor, ContentLabel::DifferentContent);
  emit(f2, StyleLabel::DifferentAuthor, ContentLabel::SameContent);
  if (config.easy_quota > 0) {
    emit(take(std::move(easy_same), config.easy_quota), StyleLabel::SameAuthor,
         ContentLabel::SameContent);
    emit(take(std::move(easy_diff), config.easy_quota), StyleLabel::DifferentAuthor,
         ContentLabel::DifferentContent);
  }
  return r;
}

namespace {

std::string join_phrases(const std::vector<std::string_view>& items) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k > 0) out += (k + 1 == items.size()) ? " and " : " , ";
    out += items[k];
  }
  return out;
}

std::vector<std::string_view> phrases(const Document& d, const std::vector<std::size_t>& factors) {
  std::vector<std::string_view> out;
  for (std::size_t f : factors) {
    out.push_back(lexicon::factor_phrase(f, static_cast<std::size_t>(d.style_factors.at(f))));
  }
  return out;
}

}  // namespace

PairRecord synth_explanations(PairRecord pair, const Corpus& corpus) {
  const Document& a = corpus.doc(pair.doc_i);
  const Document& b = corpus.doc(pair.doc_j);
  std::vector<std::size_t> all, differing;
  for (std::size_t f = 0; f < lexicon::kNumStyleFactors; ++f) {
    all.push_back(f);
    if (a.style_factors.at(f) != b.style_factors.at(f)) differing.push_back(f);
  }
  if (pair.style_label == StyleLabel::SameAuthor || differing.empty()) {
    pair.style_explanation = "both texts share " + join_phrases(phrases(a, all));
    if (pair.style_label == StyleLabel::DifferentAuthor) {
      pair.style_explanation += " but differ in word choice";
    }
  } else {
    pair.style_explanation = "text 1 has " + join_phrases(phrases(a, differing)) +
                             " while text 2 has " + join_phrases(phrases(b, differing));
  }
  const std::string ta = lexicon::topic_name(static_cast<std::size_t>(a.topic_id));
  const std::string tb = lexicon::topic_name(static_cast<std::size_t>(b.topic_id));
  if (pair.content_label == ContentLabel::SameContent) {
    pair.content_explanation = "both texts discuss " + ta;
    if (a.topic_id != b.topic_id) pair.content_explanation += " and " + tb;
  } else if (a.topic_id != b.topic_id) {
    pair.content_explanation = "text 1 discusses " + ta + " while text 2 discusses " + tb;
  } else {
    pair.content_explanation = "both texts discuss " + ta + " but differ in word choice";
  }
  return pair;
}

std::string pairs_to_jsonl(const std::vector<PairRecord>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["doc_i"] = p.doc_i;
    j["doc_j"] = p.doc_j;
    j["style_label"] = label_text(p.style_label);
    j["content_label"] = label_text(p.content_label);
    j["style_explanation"] = p.style_explanation;
    j["content_explanation"] = p.content_explanation;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PairRecord> pairs_from_jsonl(const std::string& text) {
  std::vector<PairRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PairRecord p;
      p.doc_i = j.at("doc_i").get<int>();
      p.doc_j = j.at("doc_j").get<int>();
      p.style_label = parse_style_label(j.at("style_label").get<std::string>());
      p.content_label = parse_content_label(j.at("content_label").get<std::string>());
      p.style_explanation = j.at("style_explanation").get<std::string>();
      p.content_explanation = j.at("content_explanation").get<std::string>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad pair line: ") + e.what(), line);
    }
  }
  return out;
}

void save_pairs(const std::vector<PairRecord>& pairs, const std::filesystem::path& path) {
  write_file_atomic(path, pairs_to_jsonl(pairs));
}

std::vector<PairRecord> load_pairs(const std::filesystem::path& path) {
  return pairs_from_jsonl(read_file(path));
}

}  // namespace stylelab::data
