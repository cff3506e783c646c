#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stylelab/autodiff.hpp"
#include "stylelab/bm25.hpp"
#include "stylelab/corpus.hpp"
#include "stylelab/nn.hpp"
#include "stylelab/params.hpp"

namespace stylelab {

/// Bidirectional transformer encoder: mean-pooled final states, then a linear
/// projection to out_dim.
struct EncoderConfig {
  nn::TransformerConfig net;
  std::size_t out_dim = 32;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Defaults sized for the synthetic corpora: 2 layers, width 64, 32 outputs.
EncoderConfig default_encoder_config(std::size_t vocab_size, std::size_t max_len = 64);

/// Parameters `prefix.net.*` and `prefix.proj.*`.
void init_encoder(ParamStore& params, const std::string& prefix, const EncoderConfig& config,
                  Rng& rng);

/// Mean of the final hidden states. Documents longer than max_len are cut to
/// their first max_len tokens. ContractError on an empty document.
ad::Var pooled_state(Binding& p, const std::string& prefix, const EncoderConfig& config,
                     std::span<const int> tokens);

/// Unit-norm representation r.
ad::Var encode(Binding& p, const std::string& prefix, const EncoderConfig& config,
               std::span<const int> tokens);

struct StyleEncoder {
  static constexpr const char* kPrefix = "style";

  EncoderConfig config;
  ParamStore params;

  static StyleEncoder create(const EncoderConfig& config, std::uint64_t seed);

  /// Value-only forward pass.
  std::vector<double> encode(std::span<const int> tokens) const;
};

/// Documents of one training step. Representations are filled by the encoder.
struct ContrastiveBatch {
  std::vector<int> doc_ids;
  std::vector<int> authors;
  std::vector<int> anchors;  ///< positions in doc_ids
  double temperature = 0.02;
};

/// Per-row loss over logits with row i's denominator running over k != i
/// (or over every k when include_self is set):
///   L = - sum_i sum_{j in P(i)} log( exp(l_ij) / sum_k exp(l_ik) )
/// with P(i) the other rows sharing i's author. Anchors without positives
/// contribute nothing.
ad::Var supcon_loss_with_logits(ad::Var logits, std::span<const int> authors,
                                bool include_self = false);

/// supcon_loss_with_logits(R R^T / tau). Rows of `r` must be unit vectors.
/// ConfigError when tau <= 0.
ad::Var supcon_loss(ad::Var r, std::span<const int> authors, double tau,
                    bool include_self = false);

/// Plain scalar evaluation of the same loss for test oracles and logging.
double supcon_loss_value(const std::vector<std::vector<double>>& r, std::span<const int> authors,
                         double tau, bool include_self = false);

/// Each anchor comes with one random same-author positive and its top-K BM25
/// other-author negatives. Duplicate documents are kept once. Every other
/// batch member is also a negative through the in-batch denominator.
ContrastiveBatch build_batch(const data::Corpus& corpus, const data::Bm25Index& index,
                             std::span<const int> anchors, std::size_t k, double tau, Rng& rng);

struct PretrainConfig {
  std::size_t epochs = 4;
  std::size_t batch_size = 16;  ///< anchors per step
  std::size_t hard_negatives = 2;
  double temperature = 0.02;
  double lr = 2e-4;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  bool include_self = false;
  std::uint64_t seed = 7;
  std::size_t max_len = 64;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t layers = 2;
  std::size_t out_dim = 32;
  /// Stop after this many steps (0 = no limit).
  std::size_t max_steps = 0;
};

struct LogRow {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  StyleEncoder encoder;
  std::vector<LogRow> log;
  std::vector<double> epoch_mean_loss;
};

/// AdamW on supcon_loss over batches drawn from `train_ids`. NumericError when
/// the loss stops being finite.
PretrainResult pretrain(const data::Corpus& corpus, std::span<const int> train_ids,
                        const PretrainConfig& config);

/// One optimizer step on a fixed batch; returns the loss before the update.
double pretrain_step(StyleEncoder& encoder, AdamW& optimizer, const data::Corpus& corpus,
                     const ContrastiveBatch& batch, bool include_self);

std::string log_to_csv(const std::vector<LogRow>& log);

Checkpoint to_checkpoint(const StyleEncoder& encoder);
StyleEncoder encoder_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace stylelab
