#include "stylelab/vae.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "stylelab/errors.hpp"
#include "stylelab/parallel.hpp"

namespace stylelab {

using ad::Graph;
using ad::Tensor;
using ad::Var;

std::vector<double> LatentGaussian::sigma() const {
  std::vector<double> s(log_sigma.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(log_sigma[i]);
  return s;
}

LatentGaussian GaussianVars::value() const {
  return {mu.value().values(), log_sigma.value().values()};
}

GaussianVars encode_gaussian(Binding& p, const std::string& prefix, const EncoderConfig& config,
                             std::size_t dim, std::span<const int> tokens) {
  const Var out = nn::linear(p, prefix + ".head", pooled_state(p, prefix, config, tokens));
  if (out.value().size() != 2 * dim) {
    throw ShapeError("head of " + prefix + " yields " + std::to_string(out.value().size()) +
                     " values, expected " + std::to_string(2 * dim));
  }
  return {ad::slice(out, 0, dim), ad::slice(out, dim, 2 * dim)};
}

Var reparameterize(const GaussianVars& g, const Tensor& noise) {
  if (noise.shape() != g.mu.value().shape()) {
    throw ShapeError("noise " + ad::shape_string(noise.shape()) + " does not match latent " +
                     ad::shape_string(g.mu.value().shape()));
  }
  Graph& graph = *g.mu.graph;
  return ad::add(g.mu, ad::mul(ad::exp(g.log_sigma), graph.constant(noise)));
}

std::vector<double> reparameterize(const LatentGaussian& g, std::span<const double> noise) {
  if (noise.size() != g.dim() || g.log_sigma.size() != g.dim()) {
    throw ShapeError("noise dimension does not match the latent");
  }
  std::vector<double> z(g.dim());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = g.mu[i] + std::exp(g.log_sigma[i]) * noise[i];
  return z;
}

Var kl_std_normal(const GaussianVars& g) {
  const Var mu2 = ad::mul(g.mu, g.mu);
  const Var var = ad::exp(ad::scale(g.log_sigma, 2.0));
  const Var inner = ad::sub(ad::add(mu2, var), ad::scale(g.log_sigma, 2.0));
  return ad::scale(ad::sum(ad::add_scalar(inner, -1.0)), 0.5);
}

double kl_std_normal(const LatentGaussian& g) {
  double kl = 0.0;
  for (std::size_t i = 0; i < g.dim(); ++i) {
    const double ls = g.log_sigma[i];
    kl += 0.5 * (g.mu[i] * g.mu[i] + std::exp(2.0 * ls) - 1.0 - 2.0 * ls);
  }
  return kl;
}

VaeLossTerms VaeLossVars::value() const {
  return {recon_nll.value().item(), kl_style.value().item(), kl_content.value().item(),
          beta_s, beta_c, total.value().item()};
}

VaeLossVars assemble_vae_loss(Var recon_nll, Var kl_style, Var kl_content, double beta_s,
                              double beta_c) {
  if (beta_s < 0.0 || beta_c < 0.0) throw ConfigError("KL weights must be non-negative");
  VaeLossVars v{recon_nll, kl_style, kl_content, {}, beta_s, beta_c};
  v.total = ad::add(ad::add(recon_nll, ad::scale(kl_style, beta_s)), ad::scale(kl_content, beta_c));
  return v;
}

ModelConfig default_model_config(std::size_t vocab_size, const EncoderConfig& style) {
  ModelConfig c;
  c.style = style;
  c.content = style;
  c.generator.net.vocab_size = vocab_size;
  c.generator.net.max_len = 128;
  c.generator.net.d_model = style.net.d_model;
  c.generator.net.d_ff = style.net.d_ff;
  c.generator.net.layers = style.net.layers;
  c.generator.style_dim = style.out_dim;
  c.generator.content_dim = style.out_dim;
  return c;
}

namespace {

void init_head(ParamStore& params, const std::string& prefix, std::size_t d_model,
               std::size_t dim, double init_log_sigma, Rng& rng) {
  nn::init_linear(params, prefix + ".head", d_model, 2 * dim, rng);
  Tensor& w = params.get(prefix + ".head.w");
  Tensor& b = params.get(prefix + ".head.b");
  for (std::size_t r = 0; r < d_model; ++r)
    for (std::size_t c = dim; c < 2 * dim; ++c) w.at(r, c) = 0.0;
  for (std::size_t c = dim; c < 2 * dim; ++c) b[c] = init_log_sigma;
}

}  // namespace

EavaeModel EavaeModel::create(const ModelConfig& config, const StyleEncoder& pretrained,
                              const data::Vocab& vocab, std::uint64_t seed,
                              double init_log_sigma) {
  if (!(pretrained.config.net == config.style.net)) {
    throw ConfigError("pretrained encoder does not match the style encoder configuration");
  }
  if (config.shared && config.generator.style_dim != config.generator.content_dim) {
    throw ConfigError("a shared encoder needs equal style and content widths");
  }
  EavaeModel m;
  m.config = config;
  m.templates = Templates::standard(vocab);
  Rng rng(seed);
  const std::string s = kStyle;
  m.params.copy_prefix(pretrained.params, s + ".net.", s + ".net.");
  const std::size_t ds = config.generator.style_dim;
  init_head(m.params, s, config.style.net.d_model, ds, init_log_sigma, rng);
  if (pretrained.config.out_dim == ds) {
    const Tensor& pw = pretrained.params.get(s + ".proj.w");
    const Tensor& pb = pretrained.params.get(s + ".proj.b");
    Tensor& w = m.params.get(s + ".head.w");
    Tensor& b = m.params.get(s + ".head.b");
    for (std::size_t r = 0; r < pw.rows(); ++r)
      for (std::size_t c = 0; c < ds; ++c) w.at(r, c) = pw.at(r, c);
    for (std::size_t c = 0; c < ds; ++c) b[c] = pb[c];
  }
  if (!config.shared) {
    const std::string c = kContent;
    nn::init_transformer(m.params, c + ".net", config.content.net, rng);
    init_head(m.params, c, config.content.net.d_model, config.generator.content_dim,
              init_log_sigma, rng);
  }
  init_generator(m.params, config.generator, rng);
  return m;
}

LatentGaussian EavaeModel::style_latent(std::span<const int> tokens) const {
  Graph g;
  Binding p(g, params, false);
  return encode_gaussian(p, kStyle, config.style, style_dim(), tokens).value();
}

LatentGaussian EavaeModel::content_latent(std::span<const int> tokens) const {
  Graph g;
  Binding p(g, params, false);
  return encode_gaussian(p, content_prefix(), config.shared ? config.style : config.content,
                         content_dim(), tokens)
      .value();
}

namespace {

struct DocLatents {
  GaussianVars style;
  GaussianVars content;
  Var z_s;
  Var z_c;
  Var kl_s;
  Var kl_c;
};

DocLatents doc_latents(Binding& p, const EavaeModel& model, std::span<const int> tokens,
                       const Tensor& noise_s, const Tensor& noise_c) {
  DocLatents d;
  d.style = encode_gaussian(p, EavaeModel::kStyle, model.config.style, model.style_dim(), tokens);
  d.z_s = reparameterize(d.style, noise_s);
  d.kl_s = kl_std_normal(d.style);
  if (model.config.shared) {
    d.content = d.style;
    d.z_c = d.z_s;
    d.kl_c = p.graph().constant(Tensor::scalar(0.0));
  } else {
    d.content = encode_gaussian(p, EavaeModel::kContent, model.config.content,
                                model.content_dim(), tokens);
    d.z_c = reparameterize(d.content, noise_c);
    d.kl_c = kl_std_normal(d.content);
  }
  return d;
}

VaeLossVars doc_vae_loss(Binding& p, const EavaeModel& model, const DocLatents& d,
                         std::span<const int> tokens, double beta_s, double beta_c) {
  const auto prompt = build_prompt(p, model.config.generator, model.templates.reconstruction,
                                   {{SlotRole::Style, d.z_s}, {SlotRole::Content, d.z_c}});
  const auto target = reconstruction_target(model.config.generator, tokens);
  const Var recon = teacher_forced_nll(p, model.config.generator, prompt, target);
  return assemble_vae_loss(recon, d.kl_s, d.kl_c, beta_s, beta_c);
}

Tensor noise_vector(Rng& rng, std::size_t dim) { return Tensor::vector(rng.normals(dim)); }

}  // namespace

VaeLossVars vae_loss(Binding& p, const EavaeModel& model, std::span<const int> tokens,
                     double beta_s, double beta_c, const Tensor& noise_s, const Tensor& noise_c) {
  const auto d = doc_latents(p, model, tokens, noise_s, noise_c);
  return doc_vae_loss(p, model, d, tokens, beta_s, beta_c);
}

StepLoss pair_loss_and_grads(const EavaeModel& model, const data::Corpus& corpus,
                             const data::PairRecord& pair, const FinetuneConfig& config,
                             std::uint64_t noise_seed, GradMap* grads) {
  Graph g;
  Binding p(g, model.params, grads != nullptr);
  Rng rng(noise_seed);
  const auto& ti = corpus.doc(pair.doc_i).tokens;
  const auto& tj = corpus.doc(pair.doc_j).tokens;
  const std::size_t ds = model.style_dim(), dc = model.content_dim();
  const Tensor nsi = noise_vector(rng, ds), nci = noise_vector(rng, dc);
  const Tensor nsj = noise_vector(rng, ds), ncj = noise_vector(rng, dc);
  const auto di = doc_latents(p, model, ti, nsi, nci);
  const auto dj = doc_latents(p, model, tj, nsj, ncj);
  const auto vi = doc_vae_loss(p, model, di, ti, config.beta_s, config.beta_c);
  const auto vj = doc_vae_loss(p, model, dj, tj, config.beta_s, config.beta_c);

  Var zsi = config.discriminator_uses_mean ? di.style.mu : di.z_s;
  Var zsj = config.discriminator_uses_mean ? dj.style.mu : dj.z_s;
  const Var zci = config.discriminator_uses_mean ? di.content.mu : di.z_c;
  const Var zcj = config.discriminator_uses_mean ? dj.content.mu : dj.z_c;
  if (config.style_grad_reverse) {
    zsi = ad::grad_reverse(zsi);
    zsj = ad::grad_reverse(zsj);
  }
  const auto& gc = model.config.generator;
  const auto st = style_target(corpus.vocab, gc, pair);
  const auto ct = content_target(corpus.vocab, gc, pair);
  const auto dis = discriminator_loss(p, gc, model.templates, st, ct, zsi, zsj, zci, zcj);
  const Var total = total_loss(ad::add(vi.total, vj.total), dis.total, config.lambda_dis);

  StepLoss s;
  s.total = total.value().item();
  s.recon = vi.recon_nll.value().item() + vj.recon_nll.value().item();
  s.kl_style = vi.kl_style.value().item() + vj.kl_style.value().item();
  s.kl_content = vi.kl_content.value().item() + vj.kl_content.value().item();
  s.dis_style = dis.style_nll.value().item();
  s.dis_content = dis.content_nll.value().item();
  if (!std::isfinite(s.total)) throw NumericError("fine-tuning loss is not finite");
  if (grads != nullptr) *grads = p.grads(g.backward(total));
  return s;
}

FinetuneResult finetune(const data::Corpus& corpus, const std::vector<data::PairRecord>& pairs,
                        const StyleEncoder& pretrained, const FinetuneConfig& config) {
  if (pairs.empty()) throw ConfigError("fine-tuning needs at least one pair");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  ModelConfig mc = default_model_config(corpus.vocab.size(), pretrained.config);
  mc.generator.net.max_len = config.max_len;
  mc.generator.net.d_model = config.d_model;
  mc.generator.net.d_ff = config.d_ff;
  mc.generator.net.layers = config.layers;
  mc.generator.style_dim = config.style_dim;
  mc.generator.content_dim = config.shared_encoder ? config.style_dim : config.content_dim;
  mc.shared = config.shared_encoder;
  FinetuneResult result{EavaeModel::create(mc, pretrained, corpus.vocab,
                                           derive_seed(config.seed, 11), config.init_log_sigma),
                        {}, {}};
  AdamW opt({config.lr, 0.9, 0.999, 1e-8, config.weight_decay, config.clip_norm});
  Rng rng(derive_seed(config.seed, 12));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_total = 0.0;
    std::size_t count = 0;
    for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
      if (config.max_steps && step >= config.max_steps) break;
      const std::size_t n = std::min(order.size(), at + config.batch_size) - at;
      std::vector<GradMap> grads(n);
      std::vector<StepLoss> losses(n);
      const std::uint64_t step_seed = derive_seed(config.seed, 1000 + step);
      parallel_for(n, [&](std::size_t k) {
        losses[k] = pair_loss_and_grads(result.model, corpus, pairs[order[at + k]], config,
                                        derive_seed(step_seed, k), &grads[k]);
      });
      GradMap total;
      StepLoss mean;
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t k = 0; k < n; ++k) {
        accumulate_grads(total, grads[k], inv);
        mean.total += losses[k].total * inv;
        mean.recon += losses[k].recon * inv;
        mean.kl_style += losses[k].kl_style * inv;
        mean.kl_content += losses[k].kl_content * inv;
        mean.dis_style += losses[k].dis_style * inv;
        mean.dis_content += losses[k].dis_content * inv;
      }
      opt.step(result.model.params, total);
      result.log.push_back({step, mean, config.lr, config.seed});
      epoch_total += mean.total;
      ++count;
      ++step;
    }
    if (count > 0) result.epoch_mean_loss.push_back(epoch_total / static_cast<double>(count));
  }
  return result;
}

std::string finetune_log_to_csv(const std::vector<FinetuneLogRow>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss,recon,kl_style,kl_content,dis_style,dis_content,lr,seed\n";
  for (const auto& r : log) {
    out << r.step << ',' << r.loss.total << ',' << r.loss.recon << ',' << r.loss.kl_style << ','
        << r.loss.kl_content << ',' << r.loss.dis_style << ',' << r.loss.dis_content << ','
        << r.lr << ',' << r.seed << '\n';
  }
  return out.str();
}

namespace {

nlohmann::json net_json(const nn::TransformerConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"max_len", c.max_len}, {"d_model", c.d_model},
          {"d_ff", c.d_ff}, {"layers", c.layers}};
}

nn::TransformerConfig net_from_json(const nlohmann::json& j) {
  nn::TransformerConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  return c;
}

}  // namespace

Checkpoint to_checkpoint(const EavaeModel& model) {
  const auto& c = model.config;
  nlohmann::json meta = {
      {"kind", "eavae"},
      {"style", {{"net", net_json(c.style.net)}, {"out_dim", c.style.out_dim}}},
      {"content", {{"net", net_json(c.content.net)}, {"out_dim", c.content.out_dim}}},
      {"generator",
       {{"net", net_json(c.generator.net)},
        {"style_dim", c.generator.style_dim},
        {"content_dim", c.generator.content_dim},
        {"max_target", c.generator.max_target}}},
      {"shared", c.shared}};
  return Checkpoint{model.params, meta.dump()};
}

EavaeModel model_from_checkpoint(const Checkpoint& checkpoint, const data::Vocab& vocab) {
  EavaeModel m;
  try {
    const auto meta = nlohmann::json::parse(checkpoint.metadata);
    if (meta.at("kind").get<std::string>() != "eavae") {
      throw ConfigError("checkpoint does not hold a fine-tuned model");
    }
    m.config.style.net = net_from_json(meta.at("style").at("net"));
    m.config.style.out_dim = meta.at("style").at("out_dim").get<std::size_t>();
    m.config.content.net = net_from_json(meta.at("content").at("net"));
    m.config.content.out_dim = meta.at("content").at("out_dim").get<std::size_t>();
    const auto& g = meta.at("generator");
    m.config.generator.net = net_from_json(g.at("net"));
    m.config.generator.style_dim = g.at("style_dim").get<std::size_t>();
    m.config.generator.content_dim = g.at("content_dim").get<std::size_t>();
    m.config.generator.max_target = g.at("max_target").get<std::size_t>();
    m.config.shared = meta.at("shared").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model checkpoint metadata: ") + e.what(),
                     checkpoint.metadata);
  }
  m.params = checkpoint.params;
  m.templates = Templates::standard(vocab);
  return m;
}

std::string discriminate(const EavaeModel& model, const data::Corpus& corpus,
                         const data::PairRecord& pair, Task task, std::size_t max_len) {
  if (task == Task::Reconstruction) throw ContractError("discriminate needs a discrimination task");
  const bool style = task == Task::StyleDiscrimination;
  const auto& ti = corpus.doc(pair.doc_i).tokens;
  const auto& tj = corpus.doc(pair.doc_j).tokens;
  const auto li = style ? model.style_latent(ti) : model.content_latent(ti);
  const auto lj = style ? model.style_latent(tj) : model.content_latent(tj);
  Graph g;
  Binding p(g, model.params, false);
  const auto prompt =
      build_prompt(p, model.config.generator, model.templates.get(task),
                   {{SlotRole::Pair1, g.constant(Tensor::vector(li.mu))},
                    {SlotRole::Pair2, g.constant(Tensor::vector(lj.mu))}});
  const auto ids = generate(model.params, model.config.generator, prompt.embedded.value(),
                            {max_len, 0.0, 0});
  return corpus.vocab.decode(ids);
}

}  // namespace stylelab
