#include "stylelab/pipeline.hpp"

#include <openssl/evp.h>

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <optional>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "stylelab/errors.hpp"
#include "stylelab/io.hpp"
#include "stylelab/kmeans.hpp"
#include "stylelab/lexicon.hpp"
#include "stylelab/parallel.hpp"
#include "stylelab/rng.hpp"

namespace stylelab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ------------------------------------------------------------------ config

namespace {

// One field list serves both directions. Writer fills an object; Reader pulls
// the keys that are present and remembers which ones it consumed.
struct Writer {
  ordered_json& j;
  template <typename T>
  void operator()(const char* name, T& value) {
    j[name] = value;
  }
};

struct Reader {
  const json& j;
  std::string section;
  std::set<std::string> seen;
  template <typename T>
  void operator()(const char* name, T& value) {
    seen.insert(name);
    if (!j.contains(name)) return;
    try {
      value = j.at(name).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key " + section + name + ": " + e.what());
    }
  }
  void finish() const {
    for (const auto& [key, _] : j.items())
      if (!seen.count(key)) throw ConfigError("unknown config key " + section + key);
  }
};

template <typename V>
void fields(V& v, data::CorpusConfig& c) {
  v("n_authors", c.n_authors);
  v("n_topics", c.n_topics);
  v("docs_per_author", c.docs_per_author);
  v("topics_per_author", c.topics_per_author);
  v("style_strength", c.style_strength);
  v("topic_strength", c.topic_strength);
  v("min_tokens", c.min_tokens);
  v("max_tokens", c.max_tokens);
  v("keyword_rate", c.keyword_rate);
  v("min_docs_per_author", c.min_docs_per_author);
  v("max_docs_per_author", c.max_docs_per_author);
}

template <typename V>
void fields(V& v, MiningConfig& c) {
  v("theta_lo", c.theta_lo);
  v("theta_hi", c.theta_hi);
  v("quota", c.quota);
  v("easy_quota", c.easy_quota);
  v("kmeans_k", c.kmeans_k);
  v("kmeans_max_iter", c.kmeans_max_iter);
}

template <typename V>
void fields(V& v, PretrainConfig& c) {
  v("epochs", c.epochs);
  v("batch_size", c.batch_size);
  v("hard_negatives", c.hard_negatives);
  v("temperature", c.temperature);
  v("lr", c.lr);
  v("weight_decay", c.weight_decay);
  v("clip_norm", c.clip_norm);
  v("include_self", c.include_self);
  v("max_len", c.max_len);
  v("d_model", c.d_model);
  v("d_ff", c.d_ff);
  v("layers", c.layers);
  v("out_dim", c.out_dim);
  v("max_steps", c.max_steps);
}

template <typename V>
void fields(V& v, FinetuneConfig& c) {
  v("epochs", c.epochs);
  v("batch_size", c.batch_size);
  v("lr", c.lr);
  v("weight_decay", c.weight_decay);
  v("clip_norm", c.clip_norm);
  v("beta_s", c.beta_s);
  v("beta_c", c.beta_c);
  v("lambda_dis", c.lambda_dis);
  v("style_grad_reverse", c.style_grad_reverse);
  v("discriminator_uses_mean", c.discriminator_uses_mean);
  v("max_steps", c.max_steps);
  v("max_len", c.max_len);
  v("d_model", c.d_model);
  v("d_ff", c.d_ff);
  v("layers", c.layers);
  v("style_dim", c.style_dim);
  v("content_dim", c.content_dim);
  v("init_log_sigma", c.init_log_sigma);
  v("shared_encoder", c.shared_encoder);
}

template <typename V>
void fields(V& v, EvalConfig& c) {
  v("recall_k", c.recall_k);
  v("fpr_caps", c.fpr_caps);
  v("generators", c.generators);
  v("references", c.references);
  v("mean_aggregation", c.mean_aggregation);
  v("probe_train_fraction", c.probe_train_fraction);
  v("explain_pairs", c.explain_pairs);
  v("explain_max_len", c.explain_max_len);
}

template <typename T>
ordered_json section_to_json(T value) {
  ordered_json j = ordered_json::object();
  Writer w{j};
  fields(w, value);
  return j;
}

template <typename T>
void section_from_json(const json& root, const char* name, T& value) {
  if (!root.contains(name)) return;
  const json& j = root.at(name);
  if (!j.is_object()) throw ConfigError(std::string("config section ") + name + " must be an object");
  Reader r{j, std::string(name) + ".", {}};
  fields(r, value);
  r.finish();
}

ordered_json config_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["corpus"] = section_to_json(c.corpus);
  j["heldout_topics"] = c.heldout_topics;
  j["mining"] = section_to_json(c.mining);
  j["pretrain"] = section_to_json(c.pretrain);
  j["finetune"] = section_to_json(c.finetune);
  j["eval"] = section_to_json(c.eval);
  return j;
}

}  // namespace

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  r.corpus.seed = seed;
  r.pretrain.seed = seed;
  r.finetune.seed = seed;
  return r;
}

std::string config_to_json(const RunConfig& config) {
  return config_json(config.resolved()).dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, _] : root.items()) {
    static const std::set<std::string> known = {"seed",     "corpus",   "heldout_topics", "mining",
                                                "pretrain", "finetune", "eval"};
    if (!known.count(key)) throw ConfigError("unknown config key " + key);
  }
  try {
    if (root.contains("seed")) c.seed = root.at("seed").get<std::uint64_t>();
    if (root.contains("heldout_topics")) c.heldout_topics = root.at("heldout_topics").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  section_from_json(root, "corpus", c.corpus);
  section_from_json(root, "mining", c.mining);
  section_from_json(root, "pretrain", c.pretrain);
  section_from_json(root, "finetune", c.finetune);
  section_from_json(root, "eval", c.eval);
  return c.resolved();
}

RunConfig load_config(const fs::path& path) { return config_from_json(read_file(path)); }

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::string buffer = header;
  buffer.append(content);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(buffer.data(), buffer.size(), digest, &length, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < length; ++i) {
    const unsigned char b = digest[i];
    std::snprintf(buf, sizeof buf, "%02x", b);
    hex += buf;
  }
  return hex;
}

std::string config_hash(const RunConfig& config) { return git_blob_sha1(config_to_json(config)); }

std::string split_to_json(const data::CrossTopicSplit& split) {
  ordered_json j;
  j["train"] = split.train;
  j["query"] = split.query;
  ordered_json held = ordered_json::object();
  for (const auto& [author, topics] : split.heldout_topics) held[std::to_string(author)] = topics;
  j["heldout_topics"] = held;
  return j.dump() + "\n";
}

data::CrossTopicSplit split_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    data::CrossTopicSplit s;
    s.train = j.at("train").get<std::vector<int>>();
    s.query = j.at("query").get<std::vector<int>>();
    for (const auto& [author, topics] : j.at("heldout_topics").items())
      s.heldout_topics[std::stoi(author)] = topics.get<std::vector<int>>();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad split file: ") + e.what(), text);
  }
}

// ------------------------------------------------------------------ mining

MinedPairs mine_training_pairs(const data::Corpus& corpus, std::span<const int> train,
                               const MiningConfig& config, std::uint64_t seed) {
  // Mine inside a dense sub-corpus of the training documents, then map back.
  data::Corpus sub;
  sub.vocab = corpus.vocab;
  for (int id : train) {
    data::Document d = corpus.doc(id);
    d.id = static_cast<int>(sub.documents.size());
    sub.documents.push_back(std::move(d));
  }
  sub.reindex();
  const Eigen::MatrixXd x = data::tfidf_embeddings(sub);
  const std::size_t k = std::min(config.kmeans_k, sub.documents.size());
  const auto clusters = data::kmeans(x, k, seed, config.kmeans_max_iter).assignments;
  data::HardPairConfig hc;
  hc.theta_lo = config.theta_lo;
  hc.theta_hi = config.theta_hi;
  hc.quota = config.quota;
  hc.easy_quota = config.easy_quota;
  hc.seed = seed;
  MinedPairs out;
  out.stats = data::mine_hard_pairs(sub, x, clusters, hc);
  for (auto p : out.stats.pairs) {
    p = data::synth_explanations(p, sub);
    p.doc_i = train[static_cast<std::size_t>(p.doc_i)];
    p.doc_j = train[static_cast<std::size_t>(p.doc_j)];
    out.pairs.push_back(std::move(p));
  }
  out.stats.pairs.clear();
  return out;
}

// -------------------------------------------------------------- evaluation

Embedder pretrained_embedder(const StyleEncoder& encoder) {
  return [&encoder](std::span<const int> tokens) { return encoder.encode(tokens); };
}

Embedder style_embedder(const EavaeModel& model) {
  return [&model](std::span<const int> tokens) { return model.style_latent(tokens).mu; };
}

Embedder content_embedder(const EavaeModel& model) {
  return [&model](std::span<const int> tokens) { return model.content_latent(tokens).mu; };
}

std::vector<eval::Embedding> embed_documents(const data::Corpus& corpus, std::span<const int> ids,
                                             const Embedder& embed) {
  std::vector<eval::Embedding> out(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) { out[i] = embed(corpus.doc(ids[i]).tokens); });
  return out;
}

AttributionMetrics evaluate_attribution(const data::Corpus& corpus,
                                        const data::CrossTopicSplit& split, const Embedder& embed,
                                        std::size_t recall_k) {
  const auto train = embed_documents(corpus, split.train, embed);
  const auto queries = embed_documents(corpus, split.query, embed);
  std::map<int, std::vector<eval::Embedding>> by_author;
  for (std::size_t i = 0; i < split.train.size(); ++i)
    by_author[corpus.doc(split.train[i]).author_id].push_back(train[i]);
  std::vector<eval::Embedding> profiles;
  std::vector<int> authors;
  for (const auto& [author, docs] : by_author) {
    profiles.push_back(eval::aggregate_author(docs));
    authors.push_back(author);
  }
  const std::size_t k = std::min(recall_k, authors.size());
  std::vector<eval::ScoredRanking> all;
  std::map<int, std::vector<eval::ScoredRanking>> per_topic;
  for (std::size_t i = 0; i < split.query.size(); ++i) {
    const data::Document& d = corpus.doc(split.query[i]);
    auto r = eval::rank(d.id, queries[i], profiles, authors, d.author_id);
    per_topic[d.topic_id].push_back(r);
    all.push_back(std::move(r));
  }
  AttributionMetrics m;
  m.recall_k = k;
  m.queries = all.size();
  m.mrr = eval::mrr(all);
  m.recall = eval::recall_at_k(all, k);
  for (const auto& [topic, rs] : per_topic)
    m.per_domain[topic] = {eval::mrr(rs), eval::recall_at_k(rs, k), rs.size()};
  return m;
}

std::vector<DetectionResult> evaluate_detection(const data::Corpus& corpus,
                                                const data::CrossTopicSplit& split,
                                                const Embedder& embed, const EvalConfig& config,
                                                std::uint64_t seed) {
  if (config.references == 0) throw ConfigError("detection needs at least one reference");
  std::vector<int> author_ids;
  for (const auto& [author, _] : corpus.authors) author_ids.push_back(author);
  if (config.generators == 0 || config.generators >= author_ids.size()) {
    throw ConfigError("detection needs between 1 and n_authors - 1 generators");
  }
  const std::set<int> generators(author_ids.begin(),
                                 author_ids.begin() + static_cast<std::ptrdiff_t>(config.generators));

  // Few-shot references drawn from each generator's training documents.
  Rng rng(derive_seed(seed, 31));
  std::map<int, std::vector<int>> train_by_author;
  for (int id : split.train) train_by_author[corpus.doc(id).author_id].push_back(id);
  std::vector<std::vector<eval::Embedding>> refs;
  for (int g : generators) {
    auto pool = train_by_author[g];
    if (pool.size() < config.references) {
      throw ConfigError("generator " + std::to_string(g) + " has too few training documents");
    }
    rng.shuffle(pool);
    pool.resize(config.references);
    std::sort(pool.begin(), pool.end());
    refs.push_back(embed_documents(corpus, pool, embed));
  }
  const auto query_emb = embed_documents(corpus, split.query, embed);
  const auto agg = config.mean_aggregation ? eval::Aggregation::Mean : eval::Aggregation::Max;

  DetectionResult single{"single-target", config.references, config.fpr_caps,
                         std::vector<double>(config.fpr_caps.size(), 0.0), {}};
  std::size_t gi = 0;
  for (int g : generators) {
    std::vector<eval::Embedding> q;
    std::vector<int> ids, labels;
    for (std::size_t i = 0; i < split.query.size(); ++i) {
      const int author = corpus.doc(split.query[i]).author_id;
      if (author != g && generators.count(author)) continue;
      q.push_back(query_emb[i]);
      ids.push_back(split.query[i]);
      labels.push_back(author == g ? 1 : 0);
    }
    const auto s = eval::detect_single_target(q, refs[gi], agg);
    for (std::size_t c = 0; c < config.fpr_caps.size(); ++c)
      single.pauc[c] += eval::pauc(s, labels, config.fpr_caps[c]) / static_cast<double>(generators.size());
    for (std::size_t i = 0; i < s.size(); ++i) single.scores.push_back({ids[i], g, s[i], labels[i]});
    ++gi;
  }

  DetectionResult multi{"multi-target", config.references, config.fpr_caps, {}, {}};
  std::vector<int> labels;
  for (int id : split.query) labels.push_back(generators.count(corpus.doc(id).author_id) ? 1 : 0);
  const auto s = eval::detect_multi_target(query_emb, refs, agg);
  for (double cap : config.fpr_caps) multi.pauc.push_back(eval::pauc(s, labels, cap));
  for (std::size_t i = 0; i < s.size(); ++i) multi.scores.push_back({split.query[i], -1, s[i], labels[i]});
  return {single, multi};
}

double topic_probe(const data::Corpus& corpus, const Embedder& embed, double train_fraction,
                   std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
    throw ConfigError("probe_train_fraction must lie in (0, 1)");
  }
  std::vector<int> ids;
  for (const auto& d : corpus.documents) ids.push_back(d.id);
  Rng rng(derive_seed(seed, 41));
  rng.shuffle(ids);
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(ids.size()));
  const std::vector<int> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<int> test(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  auto labels = [&](const std::vector<int>& s) {
    std::vector<int> y;
    for (int id : s) y.push_back(corpus.doc(id).topic_id);
    return y;
  };
  return eval::probe_accuracy(embed_documents(corpus, train, embed), labels(train),
                              embed_documents(corpus, test, embed), labels(test),
                              corpus.topics.size());
}

std::vector<data::PairRecord> heldout_pairs(const data::Corpus& corpus, std::span<const int> ids,
                                            std::size_t n, std::uint64_t seed) {
  std::map<int, std::vector<int>> by_author;
  for (int id : ids) by_author[corpus.doc(id).author_id].push_back(id);
  std::vector<int> multi;
  for (const auto& [a, docs] : by_author)
    if (docs.size() >= 2) multi.push_back(a);
  if (multi.empty() || by_author.size() < 2) {
    throw ContractError("held-out pairs need two authors and a repeated author");
  }
  Rng rng(derive_seed(seed, 51));
  std::vector<data::PairRecord> out;
  for (std::size_t k = 0; k < n; ++k) {
    data::PairRecord p;
    if (k % 2 == 0) {
      const auto& docs = by_author[multi[rng.index(multi.size())]];
      const std::size_t a = rng.index(docs.size());
      std::size_t b = rng.index(docs.size() - 1);
      if (b >= a) ++b;
      p.doc_i = docs[a];
      p.doc_j = docs[b];
    } else {
      p.doc_i = ids[rng.index(ids.size())];
      do {
        p.doc_j = ids[rng.index(ids.size())];
      } while (corpus.doc(p.doc_j).author_id == corpus.doc(p.doc_i).author_id);
    }
    const auto& a = corpus.doc(p.doc_i);
    const auto& b = corpus.doc(p.doc_j);
    p.style_label = a.author_id == b.author_id ? data::StyleLabel::SameAuthor
                                               : data::StyleLabel::DifferentAuthor;
    p.content_label = a.topic_id == b.topic_id ? data::ContentLabel::SameContent
                                               : data::ContentLabel::DifferentContent;
    out.push_back(data::synth_explanations(p, corpus));
  }
  return out;
}

double TaskOutcome::parse_rate() const {
  return pairs == 0 ? 0.0 : static_cast<double>(parsed) / static_cast<double>(pairs);
}

double TaskOutcome::label_accuracy() const {
  return parsed == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(parsed);
}

ExplanationMetrics evaluate_explanations(const EavaeModel& model, const data::Corpus& corpus,
                                         const std::vector<data::PairRecord>& pairs,
                                         std::size_t max_len) {
  const std::size_t n = pairs.size();
  std::vector<std::string> style_text(n), content_text(n);
  parallel_for(2 * n, [&](std::size_t t) {
    const auto& p = pairs[t / 2];
    if (t % 2 == 0) style_text[t / 2] = discriminate(model, corpus, p, Task::StyleDiscrimination, max_len);
    else content_text[t / 2] = discriminate(model, corpus, p, Task::ContentDiscrimination, max_len);
  });
  ExplanationMetrics m;
  auto score = [](TaskOutcome& o, const std::string& text, std::string_view gold, auto parse_label) {
    ++o.pairs;
    try {
      const auto d = parse_decision(text);
      ++o.parsed;
      if (parse_label(d.determination) == parse_label(gold)) ++o.correct;
    } catch (const Error&) {
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    score(m.style, style_text[i], data::label_text(pairs[i].style_label),
          [](std::string_view s) { return data::parse_style_label(s); });
    score(m.content, content_text[i], data::label_text(pairs[i].content_label),
          [](std::string_view s) { return data::parse_content_label(s); });
    if (m.samples.size() < 4) {
      m.samples.push_back(style_text[i]);
      m.samples.push_back(content_text[i]);
    }
  }
  return m;
}

// ---------------------------------------------------------------- commands

namespace {

using Clock = std::chrono::steady_clock;

std::string hash_file(const fs::path& path) { return git_blob_sha1(read_file(path)); }

void require(const fs::path& path) {
  if (!fs::exists(path)) {
    throw NotFoundError("missing input " + path.string() + "; run the upstream command first");
  }
}

// Records a finished command in the manifest. The config hash ties the
// entries together; a different config starts a fresh manifest.
void record(const RunConfig& config, const fs::path& out, const std::string& command,
            const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
            double seconds, const std::vector<std::string>& warnings) {
  const fs::path path = out / files::kManifest;
  const std::string hash = config_hash(config);
  ordered_json m;
  if (fs::exists(path)) {
    try {
      m = ordered_json::parse(read_file(path));
    } catch (const json::exception&) {
      m = ordered_json();
    }
    if (!m.is_object() || m.value("config_hash", "") != hash) m = ordered_json();
  }
  m["config_hash"] = hash;
  m["config"] = config_json(config.resolved());
  ordered_json entry;
  ordered_json in = ordered_json::object(), o = ordered_json::object();
  for (const auto& f : inputs) in[f] = hash_file(out / f);
  for (const auto& f : outputs) o[f] = hash_file(out / f);
  entry["inputs"] = in;
  entry["outputs"] = o;
  entry["seconds"] = seconds;
  entry["warnings"] = warnings;
  m["commands"][command] = entry;
  write_file_atomic(path, m.dump(2) + "\n");
}

void write_config(const RunConfig& config, const fs::path& out) {
  fs::create_directories(out);
  write_file_atomic(out / files::kConfig, config_to_json(config));
}

double since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

data::Corpus load_run_corpus(const fs::path& out) {
  require(out / files::kCorpus);
  return data::load_corpus(out / files::kCorpus);
}

data::CrossTopicSplit load_run_split(const fs::path& out) {
  require(out / files::kSplit);
  return split_from_json(read_file(out / files::kSplit));
}

ordered_json metrics_json(const AttributionMetrics& m) {
  ordered_json j;
  j["system"] = m.system;
  j["mrr"] = m.mrr;
  j["recall_at_" + std::to_string(m.recall_k)] = m.recall;
  j["queries"] = m.queries;
  ordered_json per = ordered_json::object();
  for (const auto& [topic, d] : m.per_domain) {
    per[data::lexicon::topic_name(static_cast<std::size_t>(topic))] = {{"mrr", d.mrr}, {"recall", d.recall}, {"queries", d.queries}};
  }
  j["per_domain"] = per;
  return j;
}

}  // namespace


std::vector<std::string> cmd_gen_corpus(const RunConfig& config, const fs::path& out) {
  const auto t0 = Clock::now();
  std::vector<std::string> warnings;
  const RunConfig c = config.resolved();
  if (c.corpus.n_authors == 1) {
    warnings.push_back("single author: no different-author pairs can be mined");
  }
  const data::Corpus corpus = data::generate_corpus(c.corpus);
  const data::CrossTopicSplit split = data::split_cross_topic(corpus, c.heldout_topics);
  if (split.query.empty()) warnings.push_back("cross-topic split has no query documents");
  write_config(c, out);
  data::save_corpus(corpus, out / files::kCorpus);
  write_file_atomic(out / files::kSplit, split_to_json(split));
  record(c, out, "gen-corpus", {}, {files::kConfig, files::kCorpus, files::kSplit}, since(t0), warnings);
  return warnings;
}

std::vector<std::string> cmd_mine(const RunConfig& config, const fs::path& out) {
  const auto t0 = Clock::now();
  std::vector<std::string> warnings;
  const RunConfig c = config.resolved();
  const data::Corpus corpus = load_run_corpus(out);
  const data::CrossTopicSplit split = load_run_split(out);
  const MinedPairs mined = mine_training_pairs(corpus, split.train, c.mining, c.seed);
  const auto& s = mined.stats;
  if (s.same_author_shortfall > 0) {
    warnings.push_back("same-author family short by " + std::to_string(s.same_author_shortfall));
  }
  if (s.different_author_shortfall > 0) {
    warnings.push_back("different-author family short by " +
                       std::to_string(s.different_author_shortfall));
  }
  if (mined.pairs.empty()) warnings.push_back("no pairs qualified; fine-tuning will fail");
  ordered_json stats;
  stats["pairs"] = mined.pairs.size();
  stats["same_author_found"] = s.same_author_found;
  stats["different_author_found"] = s.different_author_found;
  stats["same_author_shortfall"] = s.same_author_shortfall;
  stats["different_author_shortfall"] = s.different_author_shortfall;
  stats["easy_found"] = s.easy_found;
  write_config(c, out);
  data::save_pairs(mined.pairs, out / files::kPairs);
  write_file_atomic(out / files::kMining, stats.dump(2) + "\n");
  record(c, out, "mine", {files::kCorpus, files::kSplit}, {files::kPairs, files::kMining}, since(t0),
         warnings);
  return warnings;
}

std::vector<std::string> cmd_pretrain(const RunConfig& config, const fs::path& out) {
  const auto t0 = Clock::now();
  const RunConfig c = config.resolved();
  const data::Corpus corpus = load_run_corpus(out);
  const data::CrossTopicSplit split = load_run_split(out);
  const PretrainResult r = pretrain(corpus, split.train, c.pretrain);
  write_config(c, out);
  to_checkpoint(r.encoder).save(out / files::kPretrain);
  write_file_atomic(out / files::kPretrainLog, log_to_csv(r.log));
  record(c, out, "pretrain", {files::kCorpus, files::kSplit}, {files::kPretrain, files::kPretrainLog},
         since(t0), {});
  return {};
}

std::vector<std::string> cmd_finetune(const RunConfig& config, const fs::path& out) {
  const auto t0 = Clock::now();
  const RunConfig c = config.resolved();
  const data::Corpus corpus = load_run_corpus(out);
  require(out / files::kPairs);
  require(out / files::kPretrain);
  const auto pairs = data::load_pairs(out / files::kPairs);
  const StyleEncoder encoder = encoder_from_checkpoint(Checkpoint::load(out / files::kPretrain));
  const FinetuneResult r = finetune(corpus, pairs, encoder, c.finetune);
  write_config(c, out);
  to_checkpoint(r.model).save(out / files::kFinetune);
  write_file_atomic(out / files::kFinetuneLog, finetune_log_to_csv(r.log));
  record(c, out, "finetune", {files::kCorpus, files::kPairs, files::kPretrain},
         {files::kFinetune, files::kFinetuneLog}, since(t0), {});
  return {};
}

namespace {

ordered_json outcome_json(const TaskOutcome& o) {
  return {{"pairs", o.pairs},
          {"parsed", o.parsed},
          {"correct", o.correct},
          {"parse_rate", o.parse_rate()},
          {"label_accuracy", o.label_accuracy()}};
}

std::string metrics_csv(const std::vector<AttributionMetrics>& systems) {
  std::ostringstream os;
  os.precision(17);
  os << "system,domain,mrr,recall,queries\n";
  for (const auto& m : systems) {
    os << m.system << ",all," << m.mrr << ',' << m.recall << ',' << m.queries << '\n';
    for (const auto& [topic, d] : m.per_domain) {
      os << m.system << ',' << data::lexicon::topic_name(static_cast<std::size_t>(topic)) << ','
         << d.mrr << ',' << d.recall << ',' << d.queries << '\n';
    }
  }
  return os.str();
}

void write_metrics(const fs::path& out, const std::vector<AttributionMetrics>& systems,
                   ordered_json extra) {
  ordered_json j;
  j["attribution"] = ordered_json::array();
  for (const auto& m : systems) j["attribution"].push_back(metrics_json(m));
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_file_atomic(out / files::kMetrics, j.dump(2) + "\n");
  write_file_atomic(out / files::kMetricsCsv, metrics_csv(systems));
}

std::string finetuned_system(const RunConfig& c) {
  return c.finetune.shared_encoder ? "shared" : "eavae";
}

}  // namespace

std::vector<std::string> cmd_eval_aa(const RunConfig& config, const fs::path& out) {
  const auto t0 = Clock::now();
  std::vector<std::string> warnings;
  const RunConfig c = config.resolved();
  const data::Corpus corpus = load_run_corpus(out);
  const data::CrossTopicSplit split = load_run_split(out);
  if (split.query.empty()) throw ContractError("no query documents to evaluate");
  std::vector<AttributionMetrics> systems;
  std::vector<std::string> inputs = {files::kCorpus, files::kSplit};
  ordered_json extra = ordered_json::object();
  const double chance = 1.0 / static_cast<double>(corpus.topics.size());

  if (fs::exists(out / files::kPretrain)) {
    inputs.push_back(files::kPretrain);
    const StyleEncoder enc = encoder_from_checkpoint(Checkpoint::load(out / files::kPretrain));
    auto m = evaluate_attribution(corpus, split, pretrained_embedder(enc), c.eval.recall_k);
    m.system = "pretrain-only";
    systems.push_back(std::move(m));
  }
  if (fs::exists(out / files::kFinetune)) {
    inputs.push_back(files::kFinetune);
    const EavaeModel model = model_from_checkpoint(Checkpoint::load(out / files::kFinetune), corpus.vocab);
    auto m = evaluate_attribution(corpus, split, style_embedder(model), c.eval.recall_k);
    m.system = finetuned_system(c);
    systems.push_back(std::move(m));
    auto mc = evaluate_attribution(corpus, split, content_embedder(model), c.eval.recall_k);
    mc.system = finetuned_system(c) + "-content";
    systems.push_back(std::move(mc));

    ordered_json probes;
    probes["chance"] = chance;
    probes["style"] = topic_probe(corpus, style_embedder(model), c.eval.probe_train_fraction, c.seed);
    probes["content"] =
        topic_probe(corpus, content_embedder(model), c.eval.probe_train_fraction, c.seed);
    extra["topic_probe"] = probes;

    if (c.eval.explain_pairs > 0) {
      const auto pairs = heldout_pairs(corpus, split.query, c.eval.explain_pairs, c.seed);
      const auto e = evaluate_explanations(model, corpus, pairs, c.eval.explain_max_len);
      ordered_json ej;
      ej["style"] = outcome_json(e.style);
      ej["content"] = outcome_json(e.content);
      ej["samples"] = e.samples;
      extra["explanations"] = ej;
    }
  }
  if (systems.empty()) {
    throw NotFoundError("no checkpoint in " + out.string() + "; run pretrain or finetune first");
  }
  write_config(c, out);
  write_metrics(out, systems, extra);
  record(c, out, "eval-aa", inputs, {files::kMetrics, files::kMetricsCsv}, since(t0), warnings);
  return warnings;
}

std::vector<std::string> cmd_eval_aa_embeddings(const RunConfig& config, const fs::path& embeddings,
                                                const fs::path& out) {
  const auto t0 = Clock::now();
  const RunConfig c = config.resolved();
  if (!fs::exists(embeddings)) throw NotFoundError("missing embeddings file " + embeddings.string());
  const std::string text = read_file(embeddings);
  std::map<int, std::vector<eval::Embedding>> by_author;
  struct Query {
    int id;
    int author;
    eval::Embedding v;
  };
  std::vector<Query> queries;
  try {
    const json j = json::parse(text);
    for (const auto& q : j.at("queries"))
      queries.push_back({q.at("id").get<int>(), q.at("author").get<int>(),
                         q.at("vector").get<eval::Embedding>()});
    for (const auto& d : j.at("candidates"))
      by_author[d.at("author").get<int>()].push_back(d.at("vector").get<eval::Embedding>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad embeddings file: ") + e.what(), text);
  }
  if (queries.empty() || by_author.empty()) throw ContractError("embeddings file has no queries or candidates");
  std::vector<eval::Embedding> profiles;
  std::vector<int> authors;
  for (const auto& [a, docs] : by_author) {
    profiles.push_back(eval::aggregate_author(docs));
    authors.push_back(a);
  }
  std::vector<eval::ScoredRanking> rankings;
  for (const auto& q : queries) rankings.push_back(eval::rank(q.id, q.v, profiles, authors, q.author));
  AttributionMetrics m;
  m.system = "embeddings";
  m.recall_k = std::min(c.eval.recall_k, authors.size());
  m.queries = rankings.size();
  m.mrr = eval::mrr(rankings);
  m.recall = eval::recall_at_k(rankings, m.recall_k);
  fs::create_directories(out);
  write_config(c, out);
  write_metrics(out, {m}, ordered_json::object());
  record(c, out, "eval-aa", {fs::absolute(embeddings).string()}, {files::kMetrics, files::kMetricsCsv},
         since(t0), {});
  return {};
}

std::vector<std::string> cmd_eval_detect(const RunConfig& config, const fs::path& out) {
  const auto t0 = Clock::now();
  std::vector<std::string> warnings;
  const RunConfig c = config.resolved();
  const data::Corpus corpus = load_run_corpus(out);
  const data::CrossTopicSplit split = load_run_split(out);
  std::vector<std::string> inputs = {files::kCorpus, files::kSplit};
  std::optional<EavaeModel> model;
  std::optional<StyleEncoder> encoder;
  Embedder embed;
  std::string system;
  if (fs::exists(out / files::kFinetune)) {
    inputs.push_back(files::kFinetune);
    model = model_from_checkpoint(Checkpoint::load(out / files::kFinetune), corpus.vocab);
    embed = style_embedder(*model);
    system = finetuned_system(c);
  } else {
    require(out / files::kPretrain);
    inputs.push_back(files::kPretrain);
    encoder = encoder_from_checkpoint(Checkpoint::load(out / files::kPretrain));
    embed = pretrained_embedder(*encoder);
    system = "pretrain-only";
    warnings.push_back("no fine-tuned checkpoint; detecting with the pretrained encoder");
  }
  const auto results = evaluate_detection(corpus, split, embed, c.eval, c.seed);
  ordered_json j;
  j["system"] = system;
  j["aggregation"] = c.eval.mean_aggregation ? "mean" : "max";
  j["protocols"] = ordered_json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "protocol,query_id,generator,score,label\n";
  for (const auto& r : results) {
    ordered_json p;
    p["protocol"] = r.protocol;
    p["k"] = r.k;
    for (std::size_t i = 0; i < r.fpr_caps.size(); ++i) {
      std::ostringstream key;
      key << "pauc@" << r.fpr_caps[i];
      p[key.str()] = r.pauc[i];
    }
    j["protocols"].push_back(p);
    for (const auto& s : r.scores)
      csv << r.protocol << ',' << s.query_id << ',' << s.generator << ',' << s.score << ',' << s.label
          << '\n';
  }
  write_config(c, out);
  write_file_atomic(out / files::kDetection, j.dump(2) + "\n");
  write_file_atomic(out / files::kScores, csv.str());
  record(c, out, "eval-detect", inputs, {files::kDetection, files::kScores}, since(t0), warnings);
  return warnings;
}

std::vector<std::string> cmd_report(const RunConfig& config, const fs::path& out) {
  const auto t0 = Clock::now();
  const RunConfig c = config.resolved();
  require(out / files::kMetrics);
  const json metrics = json::parse(read_file(out / files::kMetrics));
  std::vector<std::string> inputs = {files::kMetrics};
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "# Run report\n\n";
  os << "Config hash `" << config_hash(c) << "`, seed " << c.seed << ".\n\n";
  os << "## Cross-topic attribution\n\n";
  os << "| system | MRR | R@k | queries |\n|---|---|---|---|\n";
  for (const auto& m : metrics.at("attribution")) {
    double recall = 0.0;
    for (const auto& [k, v] : m.items())
      if (k.rfind("recall_at_", 0) == 0) recall = v.get<double>();
    os << "| " << m.at("system").get<std::string>() << " | " << m.at("mrr").get<double>() << " | "
       << recall << " | " << m.at("queries").get<std::size_t>() << " |\n";
  }
  if (metrics.contains("topic_probe")) {
    const auto& p = metrics.at("topic_probe");
    os << "\n## Topic probe\n\n";
    os << "| features | accuracy |\n|---|---|\n";
    os << "| style | " << p.at("style").get<double>() << " |\n";
    os << "| content | " << p.at("content").get<double>() << " |\n";
    os << "| chance | " << p.at("chance").get<double>() << " |\n";
  }
  if (metrics.contains("explanations")) {
    const auto& e = metrics.at("explanations");
    os << "\n## Explanations\n\n";
    os << "| task | parse rate | label accuracy |\n|---|---|---|\n";
    for (const char* task : {"style", "content"}) {
      os << "| " << task << " | " << e.at(task).at("parse_rate").get<double>() << " | "
         << e.at(task).at("label_accuracy").get<double>() << " |\n";
    }
  }
  if (fs::exists(out / files::kDetection)) {
    inputs.push_back(files::kDetection);
    const json d = json::parse(read_file(out / files::kDetection));
    os << "\n## Detection (" << d.at("system").get<std::string>() << ")\n\n";
    for (const auto& p : d.at("protocols")) {
      os << "- " << p.at("protocol").get<std::string>();
      for (const auto& [k, v] : p.items())
        if (k.rfind("pauc@", 0) == 0) os << ", " << k << " " << v.get<double>();
      os << '\n';
    }
  }
  write_config(c, out);
  write_file_atomic(out / files::kReport, os.str());
  record(c, out, "report", inputs, {files::kReport}, since(t0), {});
  return {};
}

std::vector<std::string> run_all(const RunConfig& config, const fs::path& out) {
  std::vector<std::string> warnings;
  auto add = [&](std::vector<std::string> w) { warnings.insert(warnings.end(), w.begin(), w.end()); };
  add(cmd_gen_corpus(config, out));
  add(cmd_mine(config, out));
  add(cmd_pretrain(config, out));
  add(cmd_finetune(config, out));
  add(cmd_eval_aa(config, out));
  add(cmd_eval_detect(config, out));
  add(cmd_report(config, out));
  return warnings;
}

}  // namespace stylelab::pipeline
