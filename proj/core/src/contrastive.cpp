#include "stylelab/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "stylelab/errors.hpp"
#include "stylelab/parallel.hpp"

namespace stylelab {

using ad::Graph;
using ad::Tensor;
using ad::Var;

EncoderConfig default_encoder_config(std::size_t vocab_size, std::size_t max_len) {
  EncoderConfig c;
  c.net.vocab_size = vocab_size;
  c.net.max_len = max_len;
  return c;
}

void init_encoder(ParamStore& params, const std::string& prefix, const EncoderConfig& config,
                  Rng& rng) {
  nn::init_transformer(params, prefix + ".net", config.net, rng);
  nn::init_linear(params, prefix + ".proj", config.net.d_model, config.out_dim, rng);
}

Var pooled_state(Binding& p, const std::string& prefix, const EncoderConfig& config,
                 std::span<const int> tokens) {
  if (tokens.empty()) throw ContractError("cannot encode an empty document");
  const auto ids = tokens.first(std::min(tokens.size(), config.net.max_len));
  const Var h = nn::embed_tokens(p, prefix + ".net", ids);
  const Var out = nn::transformer_blocks(p, prefix + ".net", config.net, h, nullptr);
  return ad::mean_rows(out);
}

Var encode(Binding& p, const std::string& prefix, const EncoderConfig& config,
           std::span<const int> tokens) {
  return ad::l2norm(nn::linear(p, prefix + ".proj", pooled_state(p, prefix, config, tokens)));
}

StyleEncoder StyleEncoder::create(const EncoderConfig& config, std::uint64_t seed) {
  StyleEncoder e;
  e.config = config;
  Rng rng(seed);
  init_encoder(e.params, kPrefix, config, rng);
  return e;
}

std::vector<double> StyleEncoder::encode(std::span<const int> tokens) const {
  Graph g;
  Binding p(g, params, false);
  return stylelab::encode(p, kPrefix, config, tokens).value().values();
}

namespace {

Tensor self_mask(std::size_t n, bool include_self) {
  Tensor m({n, n});
  if (!include_self)
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = nn::kMaskedLogit;
  return m;
}

Tensor positive_weights(std::span<const int> authors) {
  const std::size_t n = authors.size();
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && authors[i] == authors[j]) w.at(i, j) = 1.0;
  return w;
}

}  // namespace

Var supcon_loss_with_logits(Var logits, std::span<const int> authors, bool include_self) {
  const Tensor& l = logits.value();
  const std::size_t n = authors.size();
  if (l.rank() != 2 || l.rows() != n || l.cols() != n) {
    throw ShapeError("supcon logits must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  Graph& g = *logits.graph;
  Var masked = include_self ? logits : ad::add(logits, g.constant(self_mask(n, false)));
  const Var logp = ad::log_softmax(masked);
  const Var picked = ad::mul(logp, g.constant(positive_weights(authors)));
  return ad::scale(ad::sum(picked), -1.0);
}

Var supcon_loss(Var r, std::span<const int> authors, double tau, bool include_self) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  const Var logits = ad::scale(ad::matmul(r, ad::transpose(r)), 1.0 / tau);
  return supcon_loss_with_logits(logits, authors, include_self);
}

double supcon_loss_value(const std::vector<std::vector<double>>& r, std::span<const int> authors,
                         double tau, bool include_self) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  const std::size_t n = r.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    for (std::size_t k = 0; k < n; ++k) {
      double dot = 0.0;
      for (std::size_t d = 0; d < r[i].size(); ++d) dot += r[i][d] * r[k][d];
      logits[k] = dot / tau;
    }
    double mx = -HUGE_VAL;
    for (std::size_t k = 0; k < n; ++k)
      if (include_self || k != i) mx = std::max(mx, logits[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (include_self || k != i) denom += std::exp(logits[k] - mx);
    const double lse = mx + std::log(denom);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && authors[i] == authors[j]) loss -= logits[j] - lse;
  }
  return loss;
}

ContrastiveBatch build_batch(const data::Corpus& corpus, const data::Bm25Index& index,
                             std::span<const int> anchors, std::size_t k, double tau, Rng& rng) {
  std::map<int, std::vector<int>> by_author;
  for (std::size_t s = 0; s < index.doc_ids().size(); ++s) {
    by_author[index.authors()[s]].push_back(index.doc_ids()[s]);
  }
  ContrastiveBatch batch;
  batch.temperature = tau;
  std::set<int> seen;
  auto push = [&](int id) {
    if (!seen.insert(id).second) return;
    batch.doc_ids.push_back(id);
    batch.authors.push_back(corpus.doc(id).author_id);
  };
  for (int a : anchors) {
    const data::Document& anchor = corpus.doc(a);
    std::vector<int> partners;
    for (int id : by_author[anchor.author_id])
      if (id != a) partners.push_back(id);
    if (partners.empty()) {
      throw MiningError("anchor " + std::to_string(a) + " has no same-author partner");
    }
    const int positive = partners[rng.index(partners.size())];
    if (seen.count(a) == 0) batch.anchors.push_back(static_cast<int>(batch.doc_ids.size()));
    push(a);
    push(positive);
    if (k > 0)
      for (int neg : data::mine_hard_negatives(index, anchor, k)) push(neg);
  }
  return batch;
}

double pretrain_step(StyleEncoder& encoder, AdamW& optimizer, const data::Corpus& corpus,
                     const ContrastiveBatch& batch, bool include_self) {
  const std::size_t n = batch.doc_ids.size();
  std::vector<std::unique_ptr<Graph>> graphs(n);
  std::vector<std::unique_ptr<Binding>> bindings(n);
  std::vector<Var> reps(n);
  parallel_for(n, [&](std::size_t i) {
    graphs[i] = std::make_unique<Graph>();
    bindings[i] = std::make_unique<Binding>(*graphs[i], encoder.params);
    reps[i] = stylelab::encode(*bindings[i], StyleEncoder::kPrefix, encoder.config,
                               corpus.doc(batch.doc_ids[i]).tokens);
  });
  const std::size_t dim = encoder.config.out_dim;
  Tensor r({n, dim});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) r.at(i, d) = reps[i].value()[d];

  Graph lg;
  const Var rv = lg.leaf(r);
  const Var loss = supcon_loss(rv, batch.authors, batch.temperature, include_self);
  const double loss_value = loss.value().item();
  if (!std::isfinite(loss_value)) throw NumericError("contrastive loss is not finite");
  const Tensor dr = lg.backward(loss).of(rv);

  std::vector<GradMap> per_doc(n);
  parallel_for(n, [&](std::size_t i) {
    Graph& g = *graphs[i];
    Tensor seed({dim});
    for (std::size_t d = 0; d < dim; ++d) seed[d] = dr.at(i, d);
    const Var surrogate = ad::sum(ad::mul(reps[i], g.constant(std::move(seed))));
    per_doc[i] = bindings[i]->grads(g.backward(surrogate));
  });
  GradMap total;
  for (const auto& gm : per_doc) accumulate_grads(total, gm);
  optimizer.step(encoder.params, total);
  return loss_value;
}

PretrainResult pretrain(const data::Corpus& corpus, std::span<const int> train_ids,
                        const PretrainConfig& config) {
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(config.temperature > 0.0)) throw ConfigError("temperature must be positive");
  EncoderConfig ec = default_encoder_config(corpus.vocab.size(), config.max_len);
  ec.net.d_model = config.d_model;
  ec.net.d_ff = config.d_ff;
  ec.net.layers = config.layers;
  ec.out_dim = config.out_dim;

  PretrainResult result{StyleEncoder::create(ec, derive_seed(config.seed, 1)), {}, {}};
  const data::Bm25Index index(corpus, train_ids);

  std::map<int, std::size_t> per_author;
  for (int id : train_ids) ++per_author[corpus.doc(id).author_id];
  std::vector<int> eligible;
  for (int id : train_ids)
    if (per_author[corpus.doc(id).author_id] >= 2) eligible.push_back(id);
  if (eligible.empty()) throw MiningError("no author has two training documents");

  AdamW opt({config.lr, 0.9, 0.999, 1e-8, config.weight_decay, config.clip_norm});
  Rng rng(derive_seed(config.seed, 2));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> order = eligible;
    rng.shuffle(order);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
      if (config.max_steps && step >= config.max_steps) break;
      const std::size_t end = std::min(order.size(), at + config.batch_size);
      const std::span<const int> anchors(order.data() + at, end - at);
      const auto batch = build_batch(corpus, index, anchors, config.hard_negatives,
                                     config.temperature, rng);
      const double loss = pretrain_step(result.encoder, opt, corpus, batch, config.include_self);
      result.log.push_back({step, loss, config.lr, config.seed});
      total += loss;
      ++count;
      ++step;
    }
    if (count > 0) result.epoch_mean_loss.push_back(total / static_cast<double>(count));
  }
  return result;
}

std::string log_to_csv(const std::vector<LogRow>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss,lr,seed\n";
  for (const auto& row : log) out << row.step << ',' << row.loss << ',' << row.lr << ',' << row.seed << '\n';
  return out.str();
}

namespace {

nlohmann::json encoder_json(const EncoderConfig& c) {
  return {{"vocab_size", c.net.vocab_size}, {"max_len", c.net.max_len},
          {"d_model", c.net.d_model},       {"d_ff", c.net.d_ff},
          {"layers", c.net.layers},         {"out_dim", c.out_dim}};
}

}  // namespace

Checkpoint to_checkpoint(const StyleEncoder& encoder) {
  nlohmann::json meta = {{"kind", "style_encoder"}, {"encoder", encoder_json(encoder.config)}};
  return Checkpoint{encoder.params, meta.dump()};
}

StyleEncoder encoder_from_checkpoint(const Checkpoint& checkpoint) {
  StyleEncoder e;
  try {
    const auto meta = nlohmann::json::parse(checkpoint.metadata);
    const auto& c = meta.at("encoder");
    e.config.net.vocab_size = c.at("vocab_size").get<std::size_t>();
    e.config.net.max_len = c.at("max_len").get<std::size_t>();
    e.config.net.d_model = c.at("d_model").get<std::size_t>();
    e.config.net.d_ff = c.at("d_ff").get<std::size_t>();
    e.config.net.layers = c.at("layers").get<std::size_t>();
    e.config.out_dim = c.at("out_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("bad encoder checkpoint metadata: ") + ex.what(),
                     checkpoint.metadata);
  }
  for (const auto& [name, t] : checkpoint.params.tensors()) {
    if (name.rfind(std::string(StyleEncoder::kPrefix) + ".", 0) == 0) e.params.add(name, t);
  }
  if (e.params.size() == 0) throw NotFoundError("checkpoint holds no style encoder parameters");
  return e;
}

}  // namespace stylelab
