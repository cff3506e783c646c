#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylelab/bm25.hpp"
#include "stylelab/contrastive.hpp"
#include "stylelab/corpus.hpp"
#include "stylelab/nn.hpp"
#include "stylelab/rng.hpp"

using namespace stylelab;
using namespace stylelab::ad;

namespace {

EncoderConfig tiny_encoder(std::size_t vocab) {
  EncoderConfig c = default_encoder_config(vocab, 16);
  c.net.d_model = 8;
  c.net.d_ff = 12;
  c.net.layers = 1;
  c.out_dim = 4;
  return c;
}

std::vector<std::vector<double>> unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> r(n, std::vector<double>(d));
  for (auto& row : r) {
    double s = 0.0;
    for (double& v : row) s += (v = rng.normal()) * v;
    for (double& v : row) v /= std::sqrt(s);
  }
  return r;
}

Tensor to_tensor(const std::vector<std::vector<double>>& r) {
  std::vector<double> flat;
  for (const auto& row : r) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor::matrix(r.size(), r[0].size(), flat);
}

// Independent loop-form implementation of the self-excluded loss.
double reference_supcon(const std::vector<std::vector<double>>& r, const std::vector<int>& authors,
                        double tau) {
  const std::size_t n = r.size();
  auto dot = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t d = 0; d < r[i].size(); ++d) s += r[i][d] * r[j][d];
    return s / tau;
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) denom += std::exp(dot(i, k));
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && authors[j] == authors[i]) loss -= std::log(std::exp(dot(i, j)) / denom);
  }
  return loss;
}

data::CorpusConfig four_authors() {
  data::CorpusConfig c;
  c.n_authors = 4;
  c.docs_per_author = 24;
  c.max_tokens = 40;
  return c;
}

PretrainConfig tiny_pretrain() {
  PretrainConfig c;
  c.epochs = 3;
  c.batch_size = 8;
  c.hard_negatives = 1;
  c.temperature = 0.1;
  c.lr = 3e-3;
  c.d_model = 16;
  c.d_ff = 32;
  c.layers = 1;
  c.out_dim = 8;
  c.max_len = 40;
  return c;
}

}  // namespace

TEST(SupCon, TwoSameAuthorDocsGiveZero) {
  Rng rng(1);
  const auto r = unit_rows(2, 5, rng);
  const std::vector<int> authors = {3, 3};
  EXPECT_NEAR(supcon_loss_value(r, authors, 0.02), 0.0, 1e-15);
}

TEST(SupCon, HandEvaluatedThreeDocs) {
  // Authors A, A, B at tau = 1 with r0 = e1, r1 = e2, r2 = -e1:
  //   row 0: log(1 + e^-1), row 1: log 2, row 2 has no positive.
  const std::vector<std::vector<double>> r = {{1, 0}, {0, 1}, {-1, 0}};
  const std::vector<int> authors = {0, 0, 1};
  const double oracle = 1.0064088680781682;
  EXPECT_NEAR(supcon_loss_value(r, authors, 1.0), oracle, 1e-14);
  Graph g;
  EXPECT_NEAR(supcon_loss(g.leaf(to_tensor(r)), authors, 1.0).value().item(), oracle, 1e-14);
}

TEST(SupCon, DuplicateNegativeIncreasesLoss) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto r = unit_rows(5, 4, rng);
    std::vector<int> authors = {0, 0, 1, 1, 2};
    const double before = reference_supcon(r, authors, 0.5);
    EXPECT_NEAR(supcon_loss_value(r, authors, 0.5), before, 1e-12);
    r.push_back(r[4]);
    authors.push_back(2);
    const double after = reference_supcon(r, authors, 0.5);
    EXPECT_NEAR(supcon_loss_value(r, authors, 0.5), after, 1e-12);
    EXPECT_GT(after, before);
  }
}

TEST(SupCon, TemperatureIdentityIsExact) {
  Rng rng(5);
  const auto r = unit_rows(6, 3, rng);
  const std::vector<int> authors = {0, 1, 0, 2, 1, 2};
  Graph g;
  const Var rv = g.leaf(to_tensor(r));
  const Var logits = scale(matmul(rv, transpose(rv)), 1.0 / 0.02);
  EXPECT_EQ(supcon_loss(rv, authors, 0.02).value().item(),
            supcon_loss_with_logits(logits, authors).value().item());
}

TEST(SupCon, PermutationInvariant) {
  Rng rng(8);
  auto r = unit_rows(7, 4, rng);
  std::vector<int> authors = {0, 1, 0, 2, 1, 2, 0};
  const double base = supcon_loss_value(r, authors, 0.3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::vector<double>> rp;
    std::vector<int> ap;
    for (std::size_t i : perm) rp.push_back(r[i]), ap.push_back(authors[i]);
    EXPECT_NEAR(supcon_loss_value(rp, ap, 0.3), base, 1e-12);
  }
}

TEST(SupCon, NonNegativeAndLiteralFormFlag) {
  Rng rng(9);
  const auto r = unit_rows(6, 3, rng);
  const std::vector<int> authors = {0, 0, 1, 1, 2, 2};
  EXPECT_GE(supcon_loss_value(r, authors, 0.1), 0.0);
  // Adding the self term to every denominator can only raise the loss.
  EXPECT_GT(supcon_loss_value(r, authors, 0.1, true), supcon_loss_value(r, authors, 0.1));
}

TEST(SupCon, GradientMatchesFiniteDifferences) {
  const std::vector<int> authors = {0, 1, 0, 1, 2};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Tensor x({5, 3});
    for (double& v : x.data()) v = rng.normal();
    const LossBuilder f = [&](Graph&, std::span<const Var> p) {
      return supcon_loss(l2norm(p[0]), authors, 0.5);
    };
    EXPECT_LT(grad_check(f, {x}, 1e-6), 1e-4);
  }
}

TEST(SupCon, RejectsNonPositiveTemperature) {
  Graph g;
  const Var r = g.leaf(Tensor::matrix(2, 1, {1, 1}));
  const std::vector<int> authors = {0, 0};
  EXPECT_THROW(supcon_loss(r, authors, 0.0), ConfigError);
  EXPECT_THROW(supcon_loss(r, authors, -1.0), ConfigError);
}

TEST(Encoder, UnitNormAndDeterministic) {
  const auto corpus = data::generate_corpus(four_authors());
  const auto enc = StyleEncoder::create(tiny_encoder(corpus.vocab.size()), 3);
  for (int id = 0; id < 10; ++id) {
    const auto r = enc.encode(corpus.doc(id).tokens);
    ASSERT_EQ(r.size(), 4u);
    double s = 0.0;
    for (double v : r) s += v * v;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-9);
    EXPECT_EQ(enc.encode(corpus.doc(id).tokens), r);
  }
}

TEST(Encoder, BatchOrderDoesNotMatter) {
  const auto corpus = data::generate_corpus(four_authors());
  const auto enc = StyleEncoder::create(tiny_encoder(corpus.vocab.size()), 3);
  std::vector<std::vector<double>> forward, backward;
  for (int id = 0; id < 6; ++id) forward.push_back(enc.encode(corpus.doc(id).tokens));
  for (int id = 5; id >= 0; --id) backward.push_back(enc.encode(corpus.doc(id).tokens));
  std::reverse(backward.begin(), backward.end());
  EXPECT_EQ(forward, backward);
}

TEST(Encoder, EmptyDocumentRejected) {
  const auto enc = StyleEncoder::create(tiny_encoder(50), 3);
  EXPECT_THROW(enc.encode({}), ContractError);
}

TEST(Encoder, SuffixChangeReachesPrefixStates) {
  const auto cfg = tiny_encoder(50);
  const auto enc = StyleEncoder::create(cfg, 4);
  const std::vector<int> a = {10, 11, 12, 13, 14, 15};
  std::vector<int> b = a;
  b.back() = 40;
  auto hidden = [&](const std::vector<int>& tokens) {
    Graph g;
    Binding p(g, enc.params, false);
    const std::string net = std::string(StyleEncoder::kPrefix) + ".net";
    const Var h = nn::transformer_blocks(p, net, cfg.net, nn::embed_tokens(p, net, tokens), nullptr);
    return h.value();
  };
  const Tensor ha = hidden(a), hb = hidden(b);
  bool prefix_changed = false;
  for (std::size_t c = 0; c < ha.cols(); ++c) prefix_changed |= ha.at(0, c) != hb.at(0, c);
  EXPECT_TRUE(prefix_changed);
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  const auto cfg = tiny_encoder(20);
  const auto enc = StyleEncoder::create(cfg, 6);
  const std::vector<std::vector<int>> docs = {{6, 7, 8}, {9, 7}, {10, 11, 6, 12}};
  const std::vector<int> authors = {0, 0, 1};
  const auto f = [&](Binding& p) {
    std::vector<Var> rows;
    for (const auto& d : docs) rows.push_back(encode(p, StyleEncoder::kPrefix, cfg, d));
    return supcon_loss(concat(rows), authors, 0.5);
  };
  EXPECT_LT(grad_check(f, enc.params, 1e-6), 1e-4);
}

TEST(Batch, HardNegativesMatchBruteForce) {
  data::CorpusConfig cc = four_authors();
  cc.docs_per_author = 5;
  cc.min_docs_per_author = 2;
  const auto corpus = data::generate_corpus(cc);
  ASSERT_EQ(corpus.documents.size(), 20u);
  std::vector<int> ids(20);
  std::iota(ids.begin(), ids.end(), 0);
  const data::Bm25Index index(corpus, ids);
  for (int anchor = 0; anchor < 20; ++anchor) {
    Rng rng(anchor);
    const std::vector<int> anchors = {anchor};
    const auto batch = build_batch(corpus, index, anchors, 3, 0.02, rng);
    std::vector<std::pair<double, int>> brute;
    for (int id : ids)
      if (corpus.doc(id).author_id != corpus.doc(anchor).author_id)
        brute.emplace_back(-index.score(corpus.doc(anchor).tokens, id), id);
    std::sort(brute.begin(), brute.end());
    ASSERT_EQ(batch.doc_ids.size(), 5u);
    EXPECT_EQ(batch.doc_ids[0], anchor);
    EXPECT_EQ(batch.authors[1], corpus.doc(anchor).author_id);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(batch.doc_ids[2 + r], brute[r].second);
  }
}

TEST(Batch, ZeroNegativesKeepsAnchorsAndPositives) {
  const auto corpus = data::generate_corpus(four_authors());
  std::vector<int> ids(corpus.documents.size());
  std::iota(ids.begin(), ids.end(), 0);
  const data::Bm25Index index(corpus, ids);
  Rng rng(2);
  const std::vector<int> anchors = {0, 30, 60, 90};
  const auto batch = build_batch(corpus, index, anchors, 0, 0.02, rng);
  EXPECT_EQ(batch.doc_ids.size(), 8u);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    EXPECT_EQ(batch.doc_ids[2 * a], anchors[a]);
    EXPECT_EQ(batch.authors[2 * a + 1], batch.authors[2 * a]);
  }
  Rng rng2(2);
  const auto with_negs = build_batch(corpus, index, anchors, 2, 0.02, rng2);
  for (int anchor_pos : with_negs.anchors) {
    const int author = with_negs.authors[static_cast<std::size_t>(anchor_pos)];
    EXPECT_EQ(with_negs.authors[static_cast<std::size_t>(anchor_pos) + 1], author);
  }
}

TEST(Pretrain, ZeroLearningRateLeavesParameters) {
  const auto corpus = data::generate_corpus(four_authors());
  std::vector<int> ids(corpus.documents.size());
  std::iota(ids.begin(), ids.end(), 0);
  const data::Bm25Index index(corpus, ids);
  auto enc = StyleEncoder::create(tiny_encoder(corpus.vocab.size()), 1);
  const ParamStore before = enc.params;
  AdamW opt({.lr = 0.0, .weight_decay = 0.01, .clip_norm = 1.0});
  Rng rng(0);
  const std::vector<int> anchors = {0, 30, 60};
  const double loss = pretrain_step(enc, opt, corpus, build_batch(corpus, index, anchors, 1, 0.02, rng), false);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_EQ(enc.params, before);
}

TEST(Pretrain, LearnsAuthorStructure) {
  data::CorpusConfig cc = four_authors();
  cc.docs_per_author = 40;
  const auto corpus = data::generate_corpus(cc);
  std::vector<int> train, held;
  for (const auto& d : corpus.documents) (d.id % 5 == 0 ? held : train).push_back(d.id);
  const auto result = pretrain(corpus, train, tiny_pretrain());
  ASSERT_EQ(result.epoch_mean_loss.size(), 3u);
  EXPECT_LT(result.epoch_mean_loss.back(), result.epoch_mean_loss.front());

  std::vector<std::vector<double>> r;
  for (int id : held) r.push_back(result.encoder.encode(corpus.doc(id).tokens));
  double same = 0.0, diff = 0.0;
  std::size_t n_same = 0, n_diff = 0;
  for (std::size_t i = 0; i < held.size(); ++i)
    for (std::size_t j = i + 1; j < held.size(); ++j) {
      double c = 0.0;
      for (std::size_t d = 0; d < r[i].size(); ++d) c += r[i][d] * r[j][d];
      if (corpus.doc(held[i]).author_id == corpus.doc(held[j]).author_id) same += c, ++n_same;
      else diff += c, ++n_diff;
    }
  EXPECT_GT(same / static_cast<double>(n_same), diff / static_cast<double>(n_diff));
}

TEST(Pretrain, DeterministicUnderSeed) {
  const auto corpus = data::generate_corpus(four_authors());
  std::vector<int> ids(corpus.documents.size());
  std::iota(ids.begin(), ids.end(), 0);
  PretrainConfig cfg = tiny_pretrain();
  cfg.max_steps = 3;
  const auto a = pretrain(corpus, ids, cfg);
  const auto b = pretrain(corpus, ids, cfg);
  EXPECT_EQ(a.encoder.params, b.encoder.params);
  EXPECT_EQ(log_to_csv(a.log), log_to_csv(b.log));
  EXPECT_EQ(log_to_csv(a.log).substr(0, 17), "step,loss,lr,seed");
}

TEST(Pretrain, CheckpointRoundTripIsBitExact) {
  const auto enc = StyleEncoder::create(tiny_encoder(40), 12);
  const auto back = encoder_from_checkpoint(Checkpoint::deserialize(to_checkpoint(enc).serialize()));
  EXPECT_EQ(back.params, enc.params);
  EXPECT_EQ(back.config, enc.config);
}
