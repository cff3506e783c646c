#pragma once

// End-to-end orchestration: run configuration, artifact manifest, evaluation
// protocols and the commands behind the CLI.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stylelab/contrastive.hpp"
#include "stylelab/corpus.hpp"
#include "stylelab/eval.hpp"
#include "stylelab/pairs.hpp"
#include "stylelab/vae.hpp"

namespace stylelab::pipeline {

struct MiningConfig {
  double theta_lo = 0.3;
  double theta_hi = 0.7;
  std::size_t quota = 1000;
  std::size_t easy_quota = 0;
  std::size_t kmeans_k = 16;
  std::size_t kmeans_max_iter = 100;
};

struct EvalConfig {
  std::size_t recall_k = 8;
  std::vector<double> fpr_caps = {0.01, 0.05, 0.1};
  /// Authors standing in for machine text generators in detection.
  std::size_t generators = 4;
  /// Few-shot references per generator.
  std::size_t references = 8;
  bool mean_aggregation = false;
  /// Fraction of documents used to fit the topic probes.
  double probe_train_fraction = 0.75;
  /// Held-out pairs decoded by the explanation channel (0 skips it).
  std::size_t explain_pairs = 100;
  std::size_t explain_max_len = 80;
};

struct RunConfig {
  std::uint64_t seed = 7;
  data::CorpusConfig corpus;
  std::size_t heldout_topics = 1;
  MiningConfig mining;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  EvalConfig eval;

  /// Copy with every stage seed set from `seed`.
  RunConfig resolved() const;
};

/// Fully resolved config as pretty JSON.
std::string config_to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Git blob hash: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_sha1(std::string_view content);
std::string config_hash(const RunConfig& config);

std::string split_to_json(const data::CrossTopicSplit& split);
data::CrossTopicSplit split_from_json(const std::string& text);

struct MinedPairs {
  std::vector<data::PairRecord> pairs;
  data::HardPairResult stats;  ///< counts only; pairs live above
};

/// Hard pairs among the training documents, with explanations, in corpus ids.
MinedPairs mine_training_pairs(const data::Corpus& corpus, std::span<const int> train,
                               const MiningConfig& config, std::uint64_t seed);

using Embedder = std::function<std::vector<double>(std::span<const int>)>;

Embedder pretrained_embedder(const StyleEncoder& encoder);
/// Posterior mean of the style latent.
Embedder style_embedder(const EavaeModel& model);
Embedder content_embedder(const EavaeModel& model);

/// Embeddings of the given documents, computed in parallel.
std::vector<eval::Embedding> embed_documents(const data::Corpus& corpus, std::span<const int> ids,
                                             const Embedder& embed);

struct DomainMetrics {
  double mrr = 0.0;
  double recall = 0.0;
  std::size_t queries = 0;
};

struct AttributionMetrics {
  std::string system;
  double mrr = 0.0;
  double recall = 0.0;
  std::size_t recall_k = 8;
  std::size_t queries = 0;
  std::map<int, DomainMetrics> per_domain;  ///< by query topic
};

/// Each query document is ranked against author profiles aggregated from the
/// training documents; the gold candidate is the query's author.
AttributionMetrics evaluate_attribution(const data::Corpus& corpus,
                                        const data::CrossTopicSplit& split, const Embedder& embed,
                                        std::size_t recall_k);

struct ScoreRow {
  int query_id = 0;
  int generator = -1;  ///< -1 for the multi-target pool
  double score = 0.0;
  int label = 0;
};

struct DetectionResult {
  std::string protocol;
  std::size_t k = 0;
  std::vector<double> fpr_caps;
  std::vector<double> pauc;  ///< aligned with fpr_caps
  std::vector<ScoreRow> scores;
};

/// Single-target: each generator against the human queries, pAUC averaged over
/// generators. Multi-target: every query scored by its best generator.
std::vector<DetectionResult> evaluate_detection(const data::Corpus& corpus,
                                                const data::CrossTopicSplit& split,
                                                const Embedder& embed, const EvalConfig& config,
                                                std::uint64_t seed);

/// Topic accuracy of a linear probe on frozen features, fitted on a seeded
/// random subset of all documents and scored on the rest.
double topic_probe(const data::Corpus& corpus, const Embedder& embed, double train_fraction,
                   std::uint64_t seed);

/// Random held-out pairs among `ids`, half same-author, labeled from metadata
/// and explained.
std::vector<data::PairRecord> heldout_pairs(const data::Corpus& corpus, std::span<const int> ids,
                                            std::size_t n, std::uint64_t seed);

struct TaskOutcome {
  std::size_t pairs = 0;
  std::size_t parsed = 0;
  std::size_t correct = 0;  ///< parsed and matching the gold label

  double parse_rate() const;
  /// Accuracy among parsed outputs.
  double label_accuracy() const;
};

struct ExplanationMetrics {
  TaskOutcome style;
  TaskOutcome content;
  std::vector<std::string> samples;  ///< first few decoded outputs
};

ExplanationMetrics evaluate_explanations(const EavaeModel& model, const data::Corpus& corpus,
                                         const std::vector<data::PairRecord>& pairs,
                                         std::size_t max_len);

// ---------------------------------------------------------------- commands

/// File names inside a run directory.
namespace files {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kMining = "mining.json";
inline constexpr const char* kPretrain = "pretrain.ckpt";
inline constexpr const char* kPretrainLog = "pretrain_log.csv";
inline constexpr const char* kFinetune = "finetune.ckpt";
inline constexpr const char* kFinetuneLog = "finetune_log.csv";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kMetricsCsv = "metrics.csv";
inline constexpr const char* kDetection = "detection.json";
inline constexpr const char* kScores = "detection_scores.csv";
inline constexpr const char* kReport = "report.md";
}  // namespace files

/// Writes the corpus and its cross-topic split. Returns warnings.
std::vector<std::string> cmd_gen_corpus(const RunConfig& config, const std::filesystem::path& out);
std::vector<std::string> cmd_mine(const RunConfig& config, const std::filesystem::path& out);
std::vector<std::string> cmd_pretrain(const RunConfig& config, const std::filesystem::path& out);
std::vector<std::string> cmd_finetune(const RunConfig& config, const std::filesystem::path& out);
/// Attribution metrics for every checkpoint present, plus topic probes and the
/// explanation channel for the fine-tuned model.
std::vector<std::string> cmd_eval_aa(const RunConfig& config, const std::filesystem::path& out);
/// Attribution metrics from a JSON file of precomputed embeddings:
/// {"queries": [{"id", "author", "vector"}], "candidates": [{"author", "vector"}]}.
std::vector<std::string> cmd_eval_aa_embeddings(const RunConfig& config,
                                                const std::filesystem::path& embeddings,
                                                const std::filesystem::path& out);
std::vector<std::string> cmd_eval_detect(const RunConfig& config, const std::filesystem::path& out);
std::vector<std::string> cmd_report(const RunConfig& config, const std::filesystem::path& out);

/// Every command above in pipeline order.
std::vector<std::string> run_all(const RunConfig& config, const std::filesystem::path& out);

}  // namespace stylelab::pipeline
