// Acceptance suite: one PASS/FAIL line per criterion. Every tolerance and
// threshold is pinned below. Exit status is 0 only when every selected
// criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "stylelab/bm25.hpp"
#include "stylelab/contrastive.hpp"
#include "stylelab/corpus.hpp"
#include "stylelab/eval.hpp"
#include "stylelab/generator.hpp"
#include "stylelab/io.hpp"
#include "stylelab/kmeans.hpp"
#include "stylelab/pairs.hpp"
#include "stylelab/pipeline.hpp"
#include "stylelab/rng.hpp"
#include "stylelab/vae.hpp"

namespace fs = std::filesystem;
using namespace stylelab;
using nlohmann::json;

namespace {

// ------------------------------------------------------------ tolerances

constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr std::size_t kKlPairs = 20;
constexpr std::size_t kKlSamples = 1'000'000;
constexpr double kKlTol = 0.01;
constexpr std::size_t kMetricInstances = 200;
constexpr std::size_t kMaxCandidates = 50;
constexpr double kPaucTol = 1e-12;
constexpr std::size_t kMiningSeeds = 20;
constexpr std::size_t kMiningMaxDocs = 200;
constexpr double kMrrMargin = 0.02;
constexpr double kSeedSeconds = 15.0 * 60.0;
constexpr double kStyleProbeSlack = 0.10;
constexpr double kContentProbeMin = 0.80;
constexpr double kParseRateMin = 0.80;
constexpr double kLabelAccuracyMin = 0.90;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ------------------------------------------------------------ criterion 1

EncoderConfig tiny_encoder(std::size_t vocab) {
  EncoderConfig enc = default_encoder_config(vocab, 16);
  enc.net.d_model = 8;
  enc.net.d_ff = 12;
  enc.net.layers = 1;
  enc.out_dim = 4;
  return enc;
}

EavaeModel tiny_model(const data::Vocab& vocab, std::uint64_t seed) {
  const EncoderConfig enc = tiny_encoder(vocab.size());
  ModelConfig cfg = default_model_config(vocab.size(), enc);
  cfg.generator.net.d_model = 8;
  cfg.generator.net.d_ff = 12;
  cfg.generator.net.layers = 1;
  cfg.generator.style_dim = 4;
  cfg.generator.content_dim = 4;
  return EavaeModel::create(cfg, StyleEncoder::create(enc, seed), vocab, seed);
}

// Corpus of two-token documents whose metadata still drives explanations.
data::Corpus two_token_corpus() {
  data::CorpusConfig cc;
  cc.n_authors = 2;
  cc.n_topics = 2;
  cc.docs_per_author = 4;
  cc.min_docs_per_author = 1;
  data::Corpus c = data::generate_corpus(cc);
  for (auto& d : c.documents) d.tokens.resize(2);
  return c;
}

// Central differences of the pair objective over every parameter element.
double pair_objective_grad_error(const EavaeModel& model, const data::Corpus& corpus,
                                 const data::PairRecord& pair, const FinetuneConfig& cfg, double h) {
  GradMap analytic;
  pair_loss_and_grads(model, corpus, pair, cfg, 11, &analytic);
  EavaeModel probe = model;
  double worst = 0.0;
  for (const auto& name : model.params.names()) {
    const auto it = analytic.find(name);
    for (std::size_t i = 0; i < model.params.get(name).size(); ++i) {
      const double orig = probe.params.get(name)[i];
      probe.params.get(name)[i] = orig + h;
      const double up = pair_loss_and_grads(probe, corpus, pair, cfg, 11, nullptr).total;
      probe.params.get(name)[i] = orig - h;
      const double down = pair_loss_and_grads(probe, corpus, pair, cfg, 11, nullptr).total;
      probe.params.get(name)[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      const double err = std::abs(a - numeric) / (std::abs(a) + 1e-8);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const data::Corpus corpus = two_token_corpus();
  const data::Vocab& vocab = corpus.vocab;
  std::vector<std::pair<std::string, double>> errors;

  {  // contrastive objective through the encoder at the default temperature
    const EncoderConfig enc = tiny_encoder(vocab.size());
    const StyleEncoder e = StyleEncoder::create(enc, 3);
    std::vector<int> ids = {corpus.authors.at(0)[0], corpus.authors.at(0)[1],
                            corpus.authors.at(1)[0], corpus.authors.at(1)[1]};
    std::vector<int> authors = {0, 0, 1, 1};
    const auto f = [&](Binding& p) {
      std::vector<ad::Var> rows;
      for (int id : ids) rows.push_back(encode(p, StyleEncoder::kPrefix, enc, corpus.doc(id).tokens));
      return supcon_loss(ad::concat(rows), authors, PretrainConfig{}.temperature);
    };
    errors.emplace_back("contrastive", grad_check(f, e.params, 1e-6));
  }

  const EavaeModel model = tiny_model(vocab, 4);
  Rng rng(5);
  const ad::Tensor ns = ad::Tensor::vector(rng.normals(4));
  const ad::Tensor nc = ad::Tensor::vector(rng.normals(4));
  {  // evidence lower bound of one document
    const auto& doc = corpus.doc(0).tokens;
    const auto f = [&](Binding& p) { return vae_loss(p, model, doc, 0.1, 0.1, ns, nc).total; };
    errors.emplace_back("vae", grad_check(f, model.params, 1e-5));
  }

  data::PairRecord pair{corpus.authors.at(0)[0], corpus.authors.at(1)[1], data::StyleLabel::DifferentAuthor,
                        data::ContentLabel::SameContent, {}, {}};
  const auto& a = corpus.doc(pair.doc_i);
  const auto& b = corpus.doc(pair.doc_j);
  pair.content_label = a.topic_id == b.topic_id ? data::ContentLabel::SameContent
                                                : data::ContentLabel::DifferentContent;
  pair = data::synth_explanations(pair, corpus);
  {  // explainable discriminator, over generator weights and the four latents
    ParamStore store = model.params;
    for (const char* z : {"z.si", "z.sj", "z.ci", "z.cj"}) store.add(z, ad::Tensor::vector(rng.normals(4)));
    const auto& gc = model.config.generator;
    const auto st = style_target(vocab, gc, pair);
    const auto ct = content_target(vocab, gc, pair);
    const auto f = [&](Binding& p) {
      return discriminator_loss(p, gc, model.templates, st, ct, p["z.si"], p["z.sj"], p["z.ci"], p["z.cj"])
          .total;
    };
    errors.emplace_back("discriminator", grad_check(f, store, 1e-5));
  }
  {  // full pair objective on one-token documents: with two tokens some key
     // weights carry gradients near 1e-7, below the rounding noise of a loss
     // in the hundreds; those weights are covered by the checks above
    data::Corpus short_docs = corpus;
    for (auto& d : short_docs.documents) d.tokens.resize(1);
    FinetuneConfig cfg;
    errors.emplace_back("total", pair_objective_grad_error(model, short_docs, pair, cfg, 1e-5));
  }

  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = elapsed < kGradSeconds;
  for (const auto& [name, err] : errors) {
    o.pass = o.pass && err < kGradRelTol;
    o.detail += name + " " + fmt(err * 1e6, 2) + "e-6, ";
  }
  o.detail += "time " + fmt(elapsed, 1) + "s (tol " + "1e-4, " + fmt(kGradSeconds, 0) + "s)";
  return o;
}

// ------------------------------------------------------------ criterion 2

Outcome criterion_kl() {
  Rng rng(2024);
  double worst = 0.0;
  for (std::size_t t = 0; t < kKlPairs; ++t) {
    const std::size_t dim = 1 + rng.index(4);
    LatentGaussian g;
    for (std::size_t d = 0; d < dim; ++d) {
      g.mu.push_back(rng.normal());
      g.log_sigma.push_back(std::log(0.5 + rng.uniform()));
    }
    Rng draw(derive_seed(77, t));
    double acc = 0.0;
    for (std::size_t s = 0; s < kKlSamples; ++s) {
      double log_ratio = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double e = draw.normal();
        const double z = g.mu[d] + std::exp(g.log_sigma[d]) * e;
        // log q(z) - log p(z); the 2 pi terms cancel.
        log_ratio += -0.5 * e * e - g.log_sigma[d] + 0.5 * z * z;
      }
      acc += log_ratio;
    }
    const double mc = acc / static_cast<double>(kKlSamples);
    worst = std::max(worst, std::abs(mc - kl_std_normal(g)));
  }
  return {worst < kKlTol, "max |analytic - MC| " + fmt(worst, 5) + " over " + std::to_string(kKlPairs) +
                              " pairs (tol " + fmt(kKlTol, 2) + ")"};
}

// ------------------------------------------------------------ criterion 3

std::vector<int> brute_order(const eval::Embedding& q, const std::vector<eval::Embedding>& cands,
                             const std::vector<int>& ids) {
  std::vector<std::pair<double, int>> scored;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    double dot = 0, nq = 0, nc = 0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      dot += q[d] * cands[i][d];
      nq += q[d] * q[d];
      nc += cands[i][d] * cands[i][d];
    }
    scored.emplace_back(-(dot / (std::sqrt(nq) * std::sqrt(nc))), ids[i]);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<int> out;
  for (const auto& [_, id] : scored) out.push_back(id);
  return out;
}

double brute_partial_area(const std::vector<double>& s, const std::vector<int>& y, double p) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double neg = static_cast<double>(y.size()) - pos;
  std::vector<std::pair<double, double>> roc = {{0.0, 0.0}};
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] == 1 ? tp : fp) += 1.0;
    roc.emplace_back(fp / neg, tp / pos);
  }
  double area = 0.0;
  for (std::size_t k = 1; k < roc.size(); ++k) {
    auto [x0, y0] = roc[k - 1];
    auto [x1, y1] = roc[k];
    if (x0 >= p) break;
    if (x1 > p) {
      y1 = y0 + (y1 - y0) * (p - x0) / (x1 - x0);
      x1 = p;
    }
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  return area;
}

double brute_pauc(const std::vector<double>& s, const std::vector<int>& y, double p) {
  const double lo = p * p / 2.0;
  return 0.5 * (1.0 + (brute_partial_area(s, y, p) - lo) / (p - lo));
}

Outcome criterion_metrics() {
  std::size_t failures = 0;
  double worst_pauc = 0.0;
  for (std::uint64_t seed = 0; seed < kMetricInstances; ++seed) {
    Rng rng(derive_seed(303, seed));
    const std::size_t n = 2 + rng.index(kMaxCandidates - 1);
    const std::size_t dim = 2 + rng.index(6);
    const std::size_t k = 1 + rng.index(n);
    std::vector<eval::Embedding> cands(n);
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      cands[i] = rng.normals(dim);
      // Quantized coordinates produce exact score ties now and then.
      for (double& v : cands[i]) v = std::round(v * 2.0) / 2.0;
      if (std::all_of(cands[i].begin(), cands[i].end(), [](double v) { return v == 0.0; })) cands[i][0] = 1.0;
      ids[i] = static_cast<int>(1000 - 7 * i);
    }
    std::vector<eval::ScoredRanking> rankings;
    double mrr_sum = 0.0, hits = 0.0;
    const std::size_t queries = 1 + rng.index(5);
    for (std::size_t q = 0; q < queries; ++q) {
      eval::Embedding query = rng.normals(dim);
      const int gold = ids[rng.index(n)];
      const auto r = eval::rank(static_cast<int>(q), query, cands, ids, gold);
      const auto expected = brute_order(query, cands, ids);
      if (r.candidates != expected) ++failures;
      const auto pos = std::find(expected.begin(), expected.end(), gold) - expected.begin() + 1;
      mrr_sum += 1.0 / static_cast<double>(pos);
      hits += static_cast<std::size_t>(pos) <= k ? 1.0 : 0.0;
      rankings.push_back(r);
    }
    if (eval::mrr(rankings) != mrr_sum / static_cast<double>(queries)) ++failures;
    if (eval::recall_at_k(rankings, k) != hits / static_cast<double>(queries)) ++failures;

    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.normal() * 4.0) / 4.0;
      y[i] = i == 0 ? 1 : i == 1 ? 0 : static_cast<int>(rng.index(2));
    }
    for (double cap : {0.01, 0.05, 0.1, 0.5, 1.0}) {
      const double diff = std::abs(eval::pauc(s, y, cap) - brute_pauc(s, y, cap));
      worst_pauc = std::max(worst_pauc, diff);
      if (diff > kPaucTol) ++failures;
    }
  }
  const std::vector<double> hs = {0.9, 0.8, 0.4, 0.7, 0.3, 0.2};
  const std::vector<int> hy = {1, 1, 1, 0, 0, 0};
  const double hand = eval::pauc(hs, hy, 0.5);
  const bool hand_ok = std::abs(eval::partial_area(hs, hy, 0.5) - 7.0 / 18.0) <= 1e-15 &&
                       std::abs(hand - 23.0 / 27.0) <= 1e-15;
  return {failures == 0 && hand_ok,
          std::to_string(failures) + " mismatches over " + std::to_string(kMetricInstances) +
              " instances, max pAUC diff " + fmt(worst_pauc * 1e15, 1) + "e-15, hand case " +
              fmt(hand, 6) + (hand_ok ? " ok" : " wrong")};
}

// ------------------------------------------------------------ criterion 4

data::CorpusConfig mining_corpus(std::uint64_t seed) {
  data::CorpusConfig cc;
  cc.seed = seed;
  cc.n_authors = 4 + seed % 3;
  cc.n_topics = 3;
  cc.docs_per_author = 24 + seed % 9;
  cc.min_docs_per_author = 1;
  return cc;
}

Outcome criterion_mining() {
  std::size_t failures = 0, negatives = 0, pairs = 0, max_docs = 0;
  for (std::uint64_t seed = 0; seed < kMiningSeeds; ++seed) {
    const data::Corpus c = data::generate_corpus(mining_corpus(seed));
    const int n = static_cast<int>(c.documents.size());
    max_docs = std::max<std::size_t>(max_docs, c.documents.size());
    if (c.documents.size() > kMiningMaxDocs) ++failures;

    std::vector<int> ids(c.documents.size());
    for (int i = 0; i < n; ++i) ids[i] = i;
    const data::Bm25Index index(c, ids);
    for (int a = 0; a < n; ++a) {
      const auto& anchor = c.doc(a);
      std::vector<std::pair<double, int>> brute;
      for (int id : ids)
        if (c.doc(id).author_id != anchor.author_id) brute.emplace_back(-index.score(anchor.tokens, id), id);
      std::sort(brute.begin(), brute.end());
      const std::size_t k = std::min<std::size_t>(3, brute.size());
      const auto got = data::mine_hard_negatives(index, anchor, k);
      for (std::size_t r = 0; r < k; ++r) failures += got.at(r) != brute[r].second;
      negatives += k;
    }

    const Eigen::MatrixXd emb = data::tfidf_embeddings(c);
    const auto clusters = data::kmeans(emb, 3, seed).assignments;
    data::HardPairConfig cfg;
    cfg.theta_hi = 0.25;
    cfg.quota = 40;
    cfg.seed = seed;
    const auto r = data::mine_hard_pairs(c, emb, clusters, cfg);
    std::vector<std::tuple<std::uint64_t, int, int>> fam1, fam2;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const auto& a = c.doc(i);
        const auto& b = c.doc(j);
        const double cos = emb.row(i).dot(emb.row(j)) / (emb.row(i).norm() * emb.row(j).norm());
        const auto key = std::make_tuple(data::pair_order_key(cfg.seed, i, j), i, j);
        if (a.author_id == b.author_id && clusters[i] != clusters[j] && a.topic_id != b.topic_id &&
            cos < cfg.theta_lo)
          fam1.push_back(key);
        if (a.author_id != b.author_id && clusters[i] == clusters[j] && a.topic_id == b.topic_id &&
            cos > cfg.theta_hi)
          fam2.push_back(key);
      }
    }
    std::sort(fam1.begin(), fam1.end());
    std::sort(fam2.begin(), fam2.end());
    fam1.resize(std::min<std::size_t>(fam1.size(), cfg.quota));
    fam2.resize(std::min<std::size_t>(fam2.size(), cfg.quota));
    std::vector<data::PairRecord> expected;
    for (const auto& [k, i, j] : fam1)
      expected.push_back({i, j, data::StyleLabel::SameAuthor, data::ContentLabel::DifferentContent, {}, {}});
    for (const auto& [k, i, j] : fam2)
      expected.push_back({i, j, data::StyleLabel::DifferentAuthor, data::ContentLabel::SameContent, {}, {}});
    failures += r.pairs != expected;
    pairs += expected.size();
  }
  return {failures == 0, std::to_string(failures) + " mismatches; " + std::to_string(negatives) +
                             " negatives and " + std::to_string(pairs) + " pairs checked on " +
                             std::to_string(kMiningSeeds) + " corpora of <= " + std::to_string(max_docs) +
                             " docs"};
}

// --------------------------------------------------------- criteria 5 to 7

struct SeedRun {
  std::uint64_t seed = 0;
  double pretrain = 0.0;
  double eavae = 0.0;
  double shared = 0.0;
  double seconds = 0.0;
  json metrics;
};

double system_mrr(const json& metrics, const std::string& system) {
  for (const auto& m : metrics.at("attribution"))
    if (m.at("system") == system) return m.at("mrr").get<double>();
  throw std::runtime_error("system " + system + " missing from metrics");
}

SeedRun run_seed(const fs::path& config_path, std::uint64_t seed, const fs::path& root) {
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::RunConfig c = pipeline::load_config(config_path);
  c.seed = seed;
  c = c.resolved();
  const fs::path dir = root / ("seed" + std::to_string(seed));
  const fs::path shared_dir = root / ("seed" + std::to_string(seed) + "-shared");
  fs::remove_all(dir);
  fs::remove_all(shared_dir);
  pipeline::cmd_gen_corpus(c, dir);
  pipeline::cmd_mine(c, dir);
  pipeline::cmd_pretrain(c, dir);

  // The ablation reuses the corpus, pairs and pretrained encoder.
  fs::create_directories(shared_dir);
  for (const char* f : {pipeline::files::kCorpus, pipeline::files::kSplit, pipeline::files::kPairs,
                        pipeline::files::kPretrain})
    fs::copy_file(dir / f, shared_dir / f);
  pipeline::RunConfig shared = c;
  shared.finetune.shared_encoder = true;
  shared.eval.explain_pairs = 0;

  pipeline::cmd_finetune(c, dir);
  pipeline::cmd_eval_aa(c, dir);
  pipeline::cmd_finetune(shared, shared_dir);
  pipeline::cmd_eval_aa(shared, shared_dir);

  SeedRun r;
  r.seed = seed;
  r.metrics = json::parse(read_file(dir / pipeline::files::kMetrics));
  const json shared_metrics = json::parse(read_file(shared_dir / pipeline::files::kMetrics));
  r.pretrain = system_mrr(r.metrics, "pretrain-only");
  r.eavae = system_mrr(r.metrics, "eavae");
  r.shared = system_mrr(shared_metrics, "shared");
  r.seconds = seconds_since(t0);
  return r;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome criterion_ordering(const std::vector<SeedRun>& runs) {
  std::vector<double> pre, full, shared;
  double slowest = 0.0;
  std::string per_seed;
  for (const auto& r : runs) {
    pre.push_back(r.pretrain);
    full.push_back(r.eavae);
    shared.push_back(r.shared);
    slowest = std::max(slowest, r.seconds);
    per_seed += " seed " + std::to_string(r.seed) + " " + fmt(100 * r.eavae, 1) + "/" +
                fmt(100 * r.shared, 1) + "/" + fmt(100 * r.pretrain, 1) + " in " + fmt(r.seconds, 0) + "s;";
  }
  const double m_full = median(full), m_shared = median(shared), m_pre = median(pre);
  const bool pass = m_full - m_shared >= kMrrMargin && m_shared - m_pre >= kMrrMargin &&
                    slowest < kSeedSeconds;
  return {pass, "median MRR eavae " + fmt(100 * m_full, 1) + " > shared " + fmt(100 * m_shared, 1) +
                    " > pretrain-only " + fmt(100 * m_pre, 1) + " (margin >= 2 points, < 15 min per seed);" +
                    per_seed};
}

Outcome criterion_probe(const SeedRun& run) {
  const auto& p = run.metrics.at("topic_probe");
  const double chance = p.at("chance").get<double>();
  const double style = p.at("style").get<double>();
  const double content = p.at("content").get<double>();
  return {style <= chance + kStyleProbeSlack && content > kContentProbeMin,
          "seed " + std::to_string(run.seed) + ": style probe " + fmt(style, 3) + " (<= " +
              fmt(chance + kStyleProbeSlack, 3) + "), content probe " + fmt(content, 3) + " (> " +
              fmt(kContentProbeMin, 2) + ")"};
}

Outcome criterion_explanations(const SeedRun& run) {
  const auto& e = run.metrics.at("explanations");
  bool pass = true;
  std::string detail = "seed " + std::to_string(run.seed) + ":";
  for (const char* task : {"style", "content"}) {
    const double parse = e.at(task).at("parse_rate").get<double>();
    const double acc = e.at(task).at("label_accuracy").get<double>();
    pass = pass && parse >= kParseRateMin && acc >= kLabelAccuracyMin;
    detail += std::string(" ") + task + " parse " + fmt(parse, 3) + " accuracy " + fmt(acc, 3) + ";";
  }
  return {pass, detail + " (parse >= 0.80, accuracy >= 0.90, over " +
                    std::to_string(e.at("style").at("pairs").get<std::size_t>()) + " held-out pairs)"};
}

// ------------------------------------------------------------ criterion 8

Outcome criterion_defaults(const fs::path& root) {
  const fs::path dir = root / "defaults";
  fs::remove_all(dir);
  const pipeline::RunConfig c;
  pipeline::cmd_gen_corpus(c, dir);
  const json m = json::parse(read_file(dir / pipeline::files::kManifest)).at("config");
  const double tau = m.at("pretrain").at("temperature").get<double>();
  const double bs = m.at("finetune").at("beta_s").get<double>();
  const double bc = m.at("finetune").at("beta_c").get<double>();
  const double lambda = m.at("finetune").at("lambda_dis").get<double>();
  const double lr_pre = m.at("pretrain").at("lr").get<double>();
  const double lr_ft = m.at("finetune").at("lr").get<double>();
  const bool pass = tau == 0.02 && bs == 0.1 && bc == 0.1 && lambda == 0.5 && lr_pre == 2e-4 && lr_ft == 1e-4;
  return {pass, "manifest tau " + m.at("pretrain").at("temperature").dump() + ", beta_s " +
                    m.at("finetune").at("beta_s").dump() + ", beta_c " + m.at("finetune").at("beta_c").dump() +
                    ", lambda_dis " + m.at("finetune").at("lambda_dis").dump() + ", lr " +
                    m.at("pretrain").at("lr").dump() + "/" + m.at("finetune").at("lr").dump()};
}

// ------------------------------------------------------------ criterion 9

Outcome criterion_determinism(const fs::path& config_path, const fs::path& root) {
  const pipeline::RunConfig c = pipeline::load_config(config_path);
  std::vector<std::vector<std::string>> reports;
  for (const char* name : {"rerun-a", "rerun-b"}) {
    const fs::path dir = root / name;
    fs::remove_all(dir);
    pipeline::run_all(c, dir);
    std::vector<std::string> files;
    for (const char* f : {pipeline::files::kMetrics, pipeline::files::kMetricsCsv, pipeline::files::kDetection,
                          pipeline::files::kScores, pipeline::files::kReport})
      files.push_back(read_file(dir / f));
    reports.push_back(files);
  }
  std::size_t differing = 0;
  for (std::size_t i = 0; i < reports[0].size(); ++i) differing += reports[0][i] != reports[1][i];
  return {differing == 0, std::to_string(differing) + " of " + std::to_string(reports[0].size()) +
                              " metric reports differ between two full runs of " +
                              config_path.filename().string()};
}

// ------------------------------------------------------------------ driver

struct Args {
  fs::path out = "acceptance_run";
  fs::path experiment = STYLELAB_EXPERIMENT_CONFIG;
  fs::path demo = STYLELAB_DEMO_CONFIG;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::set<int> only;
};

Args parse_args(int argc, char** argv) {
  Args a;
  for (int i = 1; i < argc; ++i) {
    const std::string flag = argv[i];
    auto value = [&]() -> std::string {
      if (i + 1 >= argc) throw std::runtime_error("missing value for " + flag);
      return argv[++i];
    };
    if (flag == "--out") a.out = value();
    else if (flag == "--experiment-config") a.experiment = value();
    else if (flag == "--demo-config") a.demo = value();
    else if (flag == "--only") {
      std::stringstream ss(value());
      std::string item;
      while (std::getline(ss, item, ',')) a.only.insert(std::stoi(item));
    } else if (flag == "--seeds") {
      a.seeds.clear();
      std::stringstream ss(value());
      std::string item;
      while (std::getline(ss, item, ',')) a.seeds.push_back(std::stoull(item));
    } else {
      throw std::runtime_error("unknown flag " + flag +
                               " (use --out, --experiment-config, --demo-config, --only, --seeds)");
    }
  }
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  Args args;
  try {
    args = parse_args(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  fs::create_directories(args.out);
  auto selected = [&](int n) { return args.only.empty() || args.only.count(n) > 0; };
  bool all_pass = true;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& fn) {
    if (!selected(n)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail
              << std::endl;
  };

  report(1, "gradient checks", criterion_gradients);
  report(2, "KL oracle", criterion_kl);
  report(3, "metric oracles", criterion_metrics);
  report(4, "mining oracles", criterion_mining);

  std::vector<SeedRun> runs;
  std::string run_error;
  if (selected(5) || selected(6) || selected(7)) {
    try {
      for (std::uint64_t seed : args.seeds) runs.push_back(run_seed(args.experiment, seed, args.out));
    } catch (const std::exception& e) {
      run_error = e.what();
    }
  }
  auto with_runs = [&](const std::function<Outcome()>& fn) {
    return [&, fn] {
      if (!run_error.empty()) throw std::runtime_error(run_error);
      if (runs.empty()) throw std::runtime_error("no seeds were run");
      return fn();
    };
  };
  report(5, "cross-topic ordering", with_runs([&] { return criterion_ordering(runs); }));
  report(6, "topic leakage probe", with_runs([&] { return criterion_probe(runs.front()); }));
  report(7, "explanation channel", with_runs([&] { return criterion_explanations(runs.front()); }));
  report(8, "default hyperparameters", [&] { return criterion_defaults(args.out); });
  report(9, "determinism", [&] { return criterion_determinism(args.demo, args.out); });
  return all_pass ? 0 : 1;
}
