#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "stylelab/io.hpp"
#include "stylelab/nn.hpp"
#include "stylelab/parallel.hpp"
#include "stylelab/params.hpp"
#include "stylelab/rng.hpp"

using namespace stylelab;
using namespace stylelab::ad;

TEST(Params, NamesAreSorted) {
  ParamStore p;
  p.add("b", Tensor::scalar(1));
  p.add("a", Tensor::vector({1, 2}));
  EXPECT_EQ(p.names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(p.num_values(), 3u);
  EXPECT_THROW(p.get("missing"), NotFoundError);
}

TEST(Params, CopyAndZeroPrefix) {
  ParamStore src;
  src.add("enc.w", Tensor::vector({1, 2}));
  src.add("other", Tensor::scalar(3));
  ParamStore dst;
  dst.copy_prefix(src, "enc.", "style.");
  EXPECT_EQ(dst.get("style.w"), src.get("enc.w"));
  EXPECT_FALSE(dst.contains("other"));
  dst.zero_prefix("style.");
  EXPECT_EQ(dst.get("style.w"), Tensor::vector({0, 0}));
}

TEST(Params, AdamWFirstStepMovesByLearningRate) {
  ParamStore p;
  p.add("w", Tensor::vector({1.0, -1.0}));
  AdamW opt({.lr = 0.1, .weight_decay = 0.0});
  opt.step(p, {{"w", Tensor::vector({0.5, -2.0})}});
  // The bias-corrected first step is lr * sign(g) up to eps.
  EXPECT_NEAR(p.get("w")[0], 0.9, 1e-7);
  EXPECT_NEAR(p.get("w")[1], -0.9, 1e-7);
}

TEST(Params, ClippingBoundsGradientNorm) {
  GradMap g = {{"a", Tensor::vector({3.0, 4.0})}};
  EXPECT_DOUBLE_EQ(grad_norm(g), 5.0);
  GradMap acc;
  accumulate_grads(acc, g, 0.5);
  accumulate_grads(acc, g, 0.5);
  EXPECT_EQ(acc.at("a"), g.at("a"));
}

TEST(Params, CheckpointRoundTripIsBitExact) {
  Rng rng(3);
  ParamStore p;
  p.add("x", nn::random_matrix(3, 5, 0.7, rng));
  p.add("y", Tensor::vector({1.0 / 3.0, -0.0, 1e-300}));
  Checkpoint c{p, R"({"kind":"test"})"};
  const auto path = std::filesystem::temp_directory_path() / "stylelab_ckpt_test.bin";
  c.save(path);
  const Checkpoint back = Checkpoint::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.params, p);
  EXPECT_EQ(back.metadata, c.metadata);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(std::signbit(back.params.get("y")[i]), std::signbit(p.get("y")[i]));
  EXPECT_THROW(Checkpoint::deserialize("garbage"), ParseError);
  EXPECT_THROW(Checkpoint::load("/nonexistent/ckpt.bin"), NotFoundError);
}

TEST(Params, StoreGradCheckOnLinearLayer) {
  Rng rng(8);
  ParamStore p;
  nn::init_linear(p, "lin", 3, 2, rng);
  const Tensor x = nn::random_matrix(4, 3, 1.0, rng);
  const auto f = [&](Binding& b) {
    const Var y = nn::linear(b, "lin", b.graph().constant(x));
    return sum(mul(ad::tanh(y), ad::tanh(y)));
  };
  EXPECT_LT(grad_check(f, p, 1e-6), 1e-4);
}

TEST(Nn, PrefixCausalMask) {
  const Tensor m = nn::prefix_causal_mask(2, 4);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t s = 0; s < 4; ++s)
      EXPECT_EQ(m.at(t, s) == 0.0, s < 2 || s <= t) << t << "," << s;
}

TEST(Nn, PositionsBeyondMaxLength) {
  Rng rng(1);
  ParamStore p;
  nn::init_transformer(p, "t", {.vocab_size = 10, .max_len = 4, .d_model = 4, .d_ff = 4, .layers = 1}, rng);
  Graph g;
  Binding b(g, p);
  EXPECT_NO_THROW(nn::positions(b, "t", 4));
  EXPECT_THROW(nn::positions(b, "t", 5), ShapeError);
}

TEST(Nn, CausalMaskHidesFuture) {
  Rng rng(2);
  ParamStore p;
  const nn::TransformerConfig cfg{.vocab_size = 10, .max_len = 6, .d_model = 6, .d_ff = 8, .layers = 2};
  nn::init_transformer(p, "t", cfg, rng);
  const Tensor mask = nn::prefix_causal_mask(2, 5);
  auto run = [&](std::vector<int> ids) {
    Graph g;
    Binding b(g, p, false);
    return nn::transformer_blocks(b, "t", cfg, nn::embed_tokens(b, "t", ids), &mask).value();
  };
  const Tensor a = run({1, 2, 3, 4, 5});
  const Tensor c = run({1, 2, 3, 4, 9});
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t d = 0; d < 6; ++d) EXPECT_EQ(a.at(t, d), c.at(t, d));
}

TEST(Parallel, ResultsIndependentOfScheduling) {
  std::vector<double> out(100);
  parallel_for(out.size(), [&](std::size_t i) { out[i] = std::sqrt(static_cast<double>(i)); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], std::sqrt(static_cast<double>(i)));
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 3) throw ConfigError("three");
               }),
               ConfigError);
}

TEST(Io, AtomicWriteAndMissingFile) {
  const auto path = std::filesystem::temp_directory_path() / "stylelab_io_test.txt";
  write_file_atomic(path, "hello");
  EXPECT_EQ(read_file(path), "hello");
  std::filesystem::remove(path);
  EXPECT_THROW(read_file(path), NotFoundError);
}
