#include "stylelab/nn.hpp"

#include <cmath>

namespace stylelab::nn {

using ad::Tensor;
using ad::Var;

Tensor random_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng) {
  std::vector<double> data(rows * cols);
  for (double& v : data) v = std * rng.normal();
  return Tensor::matrix(rows, cols, std::move(data));
}

void init_linear(ParamStore& params, const std::string& prefix, std::size_t in,
                 std::size_t out, Rng& rng, double gain) {
  params.add(prefix + ".w", random_matrix(in, out, gain / std::sqrt(static_cast<double>(in)), rng));
  params.add(prefix + ".b", Tensor({out}));
}

Var linear(Binding& p, const std::string& prefix, Var x) {
  return ad::add(ad::matmul(x, p[prefix + ".w"]), p[prefix + ".b"]);
}

void init_transformer(ParamStore& params, const std::string& prefix,
                      const TransformerConfig& c, Rng& rng) {
  params.add(prefix + ".tok", random_matrix(c.vocab_size, c.d_model, 0.1, rng));
  params.add(prefix + ".pos", random_matrix(c.max_len, c.d_model, 0.02, rng));
  const double residual_gain = 1.0 / std::sqrt(2.0 * static_cast<double>(c.layers));
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string b = prefix + ".block" + std::to_string(l);
    init_linear(params, b + ".q", c.d_model, c.d_model, rng);
    // No key bias: it shifts every score in a row equally and cancels in the softmax.
    params.add(b + ".k.w", random_matrix(c.d_model, c.d_model, 1.0 / std::sqrt(static_cast<double>(c.d_model)), rng));
    init_linear(params, b + ".v", c.d_model, c.d_model, rng);
    init_linear(params, b + ".o", c.d_model, c.d_model, rng, residual_gain);
    init_linear(params, b + ".ff1", c.d_model, c.d_ff, rng);
    init_linear(params, b + ".ff2", c.d_ff, c.d_model, rng, residual_gain);
  }
}

Var positions(Binding& p, const std::string& prefix, std::size_t n) {
  const Var table = p[prefix + ".pos"];
  if (n > table.value().rows()) {
    throw ShapeError("sequence of " + std::to_string(n) + " exceeds max_len " +
                     std::to_string(table.value().rows()));
  }
  return ad::slice(table, 0, n);
}

Var embed_tokens(Binding& p, const std::string& prefix, std::span<const int> ids) {
  const Var tok = ad::embedding_lookup(p[prefix + ".tok"], ids);
  return ad::add(tok, positions(p, prefix, ids.size()));
}

Var transformer_blocks(Binding& p, const std::string& prefix,
                       const TransformerConfig& c, Var h, const Tensor* mask) {
  ad::Graph& g = p.graph();
  std::optional<Var> bias;
  if (mask != nullptr) bias = g.constant(*mask);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string b = prefix + ".block" + std::to_string(l);
    const Var x = ad::rmsnorm(h);
    const Var q = linear(p, b + ".q", x);
    const Var k = ad::matmul(x, p[b + ".k.w"]);
    const Var v = linear(p, b + ".v", x);
    Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d);
    if (bias) scores = ad::add(scores, *bias);
    const Var attn = ad::matmul(ad::softmax(scores), v);
    h = ad::add(h, linear(p, b + ".o", attn));
    const Var y = ad::rmsnorm(h);
    h = ad::add(h, linear(p, b + ".ff2", ad::relu(linear(p, b + ".ff1", y))));
  }
  return ad::rmsnorm(h);
}

Tensor prefix_causal_mask(std::size_t prompt_len, std::size_t total_len) {
  Tensor mask({total_len, total_len});
  for (std::size_t t = 0; t < total_len; ++t)
    for (std::size_t s = 0; s < total_len; ++s)
      if (s >= prompt_len && s > t) mask.at(t, s) = kMaskedLogit;
  return mask;
}

}  // namespace stylelab::nn
