#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stylelab/autodiff.hpp"
#include "stylelab/contrastive.hpp"
#include "stylelab/corpus.hpp"
#include "stylelab/generator.hpp"
#include "stylelab/pairs.hpp"
#include "stylelab/params.hpp"

namespace stylelab {

/// Diagonal Gaussian parameterized by its mean and log standard deviation.
struct LatentGaussian {
  std::vector<double> mu;
  std::vector<double> log_sigma;

  std::size_t dim() const noexcept { return mu.size(); }
  std::vector<double> sigma() const;

  friend bool operator==(const LatentGaussian&, const LatentGaussian&) = default;
};

struct GaussianVars {
  ad::Var mu;
  ad::Var log_sigma;

  LatentGaussian value() const;
};

/// Pooled encoder state through `prefix.head` [d_model -> 2 dim], split into
/// mu and log_sigma halves.
GaussianVars encode_gaussian(Binding& p, const std::string& prefix, const EncoderConfig& config,
                             std::size_t dim, std::span<const int> tokens);

/// mu + exp(log_sigma) * noise. ShapeError on a dimension mismatch.
ad::Var reparameterize(const GaussianVars& g, const ad::Tensor& noise);
std::vector<double> reparameterize(const LatentGaussian& g, std::span<const double> noise);

/// KL(N(mu, sigma^2) || N(0, I)) = sum 0.5 (mu^2 + sigma^2 - 1 - 2 log sigma).
ad::Var kl_std_normal(const GaussianVars& g);
double kl_std_normal(const LatentGaussian& g);

struct VaeLossTerms {
  double recon_nll = 0.0;
  double kl_style = 0.0;
  double kl_content = 0.0;
  double beta_s = 0.0;
  double beta_c = 0.0;
  double total = 0.0;
};

struct VaeLossVars {
  ad::Var recon_nll;
  ad::Var kl_style;
  ad::Var kl_content;
  ad::Var total;
  double beta_s = 0.0;
  double beta_c = 0.0;

  VaeLossTerms value() const;
};

/// recon + beta_s kl_s + beta_c kl_c assembled on the graph.
VaeLossVars assemble_vae_loss(ad::Var recon_nll, ad::Var kl_style, ad::Var kl_content,
                              double beta_s, double beta_c);

/// Style and content encoders with Gaussian heads plus the shared generator.
/// With `shared` set there is a single encoder (the style one) whose latent
/// fills both the style and the content slots.
struct ModelConfig {
  EncoderConfig style;
  EncoderConfig content;
  GeneratorConfig generator;
  bool shared = false;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EavaeModel {
  static constexpr const char* kStyle = "style";
  static constexpr const char* kContent = "content";

  ModelConfig config;
  ParamStore params;
  Templates templates;

  /// Style encoder copied from `pretrained`; the mu half of its head starts
  /// from the pretrained projection when the widths agree. Content encoder and
  /// generator start from random weights.
  /// log_sigma halves start at zero weights and bias `init_log_sigma`.
  static EavaeModel create(const ModelConfig& config, const StyleEncoder& pretrained,
                           const data::Vocab& vocab, std::uint64_t seed,
                           double init_log_sigma = -3.0);

  std::size_t style_dim() const noexcept { return config.generator.style_dim; }
  std::size_t content_dim() const noexcept { return config.generator.content_dim; }
  const char* content_prefix() const noexcept { return config.shared ? kStyle : kContent; }

  LatentGaussian style_latent(std::span<const int> tokens) const;
  LatentGaussian content_latent(std::span<const int> tokens) const;
};

ModelConfig default_model_config(std::size_t vocab_size, const EncoderConfig& style);

/// Loss of one document under fixed noise draws.
VaeLossVars vae_loss(Binding& p, const EavaeModel& model, std::span<const int> tokens,
                     double beta_s, double beta_c, const ad::Tensor& noise_s,
                     const ad::Tensor& noise_c);

struct FinetuneConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 8;  ///< pairs per step
  double lr = 1e-4;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double beta_s = 0.1;
  double beta_c = 0.1;
  double lambda_dis = 0.5;
  /// Reverse the discriminator gradient entering the style latents.
  bool style_grad_reverse = false;
  /// Feed posterior means instead of samples to the discriminator.
  bool discriminator_uses_mean = false;
  std::uint64_t seed = 7;
  std::size_t max_steps = 0;
  std::size_t max_len = 128;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t layers = 2;
  std::size_t style_dim = 32;
  std::size_t content_dim = 32;
  double init_log_sigma = -3.0;
  bool shared_encoder = false;
};

struct StepLoss {
  double total = 0.0;
  double recon = 0.0;
  double kl_style = 0.0;
  double kl_content = 0.0;
  double dis_style = 0.0;
  double dis_content = 0.0;
};

struct FinetuneLogRow {
  std::size_t step = 0;
  StepLoss loss;
  double lr = 0.0;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  EavaeModel model;
  std::vector<FinetuneLogRow> log;
  std::vector<double> epoch_mean_loss;
};

/// Per pair (i, j): L_vae(d_i) + L_vae(d_j) + lambda_dis L_dis(i, j), averaged
/// over the pairs of a step, with one noise draw per document and latent.
StepLoss pair_loss_and_grads(const EavaeModel& model, const data::Corpus& corpus,
                             const data::PairRecord& pair, const FinetuneConfig& config,
                             std::uint64_t noise_seed, GradMap* grads);

FinetuneResult finetune(const data::Corpus& corpus, const std::vector<data::PairRecord>& pairs,
                        const StyleEncoder& pretrained, const FinetuneConfig& config);

std::string finetune_log_to_csv(const std::vector<FinetuneLogRow>& log);

Checkpoint to_checkpoint(const EavaeModel& model);
EavaeModel model_from_checkpoint(const Checkpoint& checkpoint, const data::Vocab& vocab);

/// Greedy decision for one pair on the given discrimination task, conditioned
/// on posterior means.
std::string discriminate(const EavaeModel& model, const data::Corpus& corpus,
                         const data::PairRecord& pair, Task task, std::size_t max_len = 80);

}  // namespace stylelab
