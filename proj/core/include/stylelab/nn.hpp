#pragma once

// Small transformer building blocks shared by the encoders and the decoder.

#include <optional>
#include <span>
#include <string>

#include "stylelab/autodiff.hpp"
#include "stylelab/params.hpp"
#include "stylelab/rng.hpp"

namespace stylelab::nn {

struct TransformerConfig {
  std::size_t vocab_size = 0;
  std::size_t max_len = 0;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t layers = 2;

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

/// Gaussian init with standard deviation `std`.
ad::Tensor random_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng);

void init_linear(ParamStore& params, const std::string& prefix, std::size_t in,
                 std::size_t out, Rng& rng, double gain = 1.0);

/// x W + b, with W = prefix.w [in, out] and b = prefix.b [out].
ad::Var linear(Binding& p, const std::string& prefix, ad::Var x);

/// Token/position tables and `layers` pre-norm residual blocks under `prefix`.
void init_transformer(ParamStore& params, const std::string& prefix,
                      const TransformerConfig& config, Rng& rng);

/// Token embeddings plus learned positions [0, ids.size()).
ad::Var embed_tokens(Binding& p, const std::string& prefix, std::span<const int> ids);

/// Position rows [0, n).
ad::Var positions(Binding& p, const std::string& prefix, std::size_t n);

/// Runs the residual blocks over `h` [T, d]. `mask` is an additive [T, T]
/// attention bias (0 = visible, large negative = blocked); absent means every
/// position sees every other one. Output is RMS-normalized.
ad::Var transformer_blocks(Binding& p, const std::string& prefix,
                           const TransformerConfig& config, ad::Var h,
                           const ad::Tensor* mask);

/// Additive mask for a prefix of `prompt_len` fully visible positions followed
/// by causally ordered positions: row t sees column s iff s < prompt_len, or
/// s <= t.
ad::Tensor prefix_causal_mask(std::size_t prompt_len, std::size_t total_len);

inline constexpr double kMaskedLogit = -1e9;

}  // namespace stylelab::nn
