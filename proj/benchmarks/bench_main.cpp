#include <benchmark/benchmark.h>

#include <numeric>

#include "stylelab/autodiff.hpp"
#include "stylelab/bm25.hpp"
#include "stylelab/contrastive.hpp"
#include "stylelab/corpus.hpp"
#include "stylelab/eval.hpp"
#include "stylelab/kmeans.hpp"
#include "stylelab/pairs.hpp"
#include "stylelab/rng.hpp"
#include "stylelab/vae.hpp"

using namespace stylelab;

namespace {

ad::Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  return ad::Tensor({rows, cols}, rng.normals(rows * cols));
}

const data::Corpus& bench_corpus() {
  static const data::Corpus corpus = [] {
    data::CorpusConfig c;
    c.n_authors = 8;
    c.docs_per_author = 32;
    return data::generate_corpus(c);
  }();
  return corpus;
}

std::vector<int> all_ids(const data::Corpus& c) {
  std::vector<int> ids(c.documents.size());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

static void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const ad::Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) {
    ad::Graph g;
    const ad::Var x = g.leaf(a), y = g.leaf(b);
    const auto grads = g.backward(ad::sum(ad::matmul(x, y)));
    benchmark::DoNotOptimize(grads.of(x).data().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatmulForwardBackward)->RangeMultiplier(2)->Range(16, 128)->Complexity();

static void BM_EncodeDocument(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  const StyleEncoder enc = StyleEncoder::create(default_encoder_config(corpus.vocab.size()), 1);
  const auto& tokens = corpus.doc(0).tokens;
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(tokens));
}
BENCHMARK(BM_EncodeDocument);

static void BM_SupconLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<std::vector<double>> r(n);
  std::vector<int> authors(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = rng.normals(32);
    double norm = 0.0;
    for (double v : r[i]) norm += v * v;
    for (double& v : r[i]) v /= std::sqrt(norm);
    authors[i] = static_cast<int>(i % 8);
  }
  for (auto _ : state) benchmark::DoNotOptimize(supcon_loss_value(r, authors, 0.02));
}
BENCHMARK(BM_SupconLoss)->Arg(16)->Arg(64);

static void BM_Bm25HardNegatives(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  const auto ids = all_ids(corpus);
  const data::Bm25Index index(corpus, ids);
  std::size_t a = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(data::mine_hard_negatives(index, corpus.doc(static_cast<int>(a)), 2));
    a = (a + 1) % ids.size();
  }
}
BENCHMARK(BM_Bm25HardNegatives);

static void BM_KMeansTfidf(benchmark::State& state) {
  const Eigen::MatrixXd x = data::tfidf_embeddings(bench_corpus());
  for (auto _ : state) benchmark::DoNotOptimize(data::kmeans(x, 8, 3).inertia);
}
BENCHMARK(BM_KMeansTfidf)->Unit(benchmark::kMillisecond);

static void BM_PairObjectiveWithGradients(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  const StyleEncoder pre = StyleEncoder::create(default_encoder_config(corpus.vocab.size()), 1);
  const EavaeModel model =
      EavaeModel::create(default_model_config(corpus.vocab.size(), pre.config), pre, corpus.vocab, 1);
  data::PairRecord pair{0, 1, data::StyleLabel::SameAuthor, data::ContentLabel::SameContent, {}, {}};
  pair = data::synth_explanations(pair, corpus);
  const FinetuneConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    GradMap grads;
    benchmark::DoNotOptimize(pair_loss_and_grads(model, corpus, pair, cfg, ++seed, &grads).total);
  }
}
BENCHMARK(BM_PairObjectiveWithGradients)->Unit(benchmark::kMillisecond);

static void BM_Pauc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<double> s = rng.normals(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
  for (auto _ : state) benchmark::DoNotOptimize(eval::pauc(s, y, 0.01));
}
BENCHMARK(BM_Pauc)->Arg(1000)->Arg(10000);
BENCHMARK_MAIN();
