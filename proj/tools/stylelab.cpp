// Command-line front end for the stylelab pipeline.
//
// Exit codes: 0 ok, 2 configuration or missing input, 3 numeric failure,
// 1 anything else.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <functional>
#include <optional>

#include "stylelab/errors.hpp"
#include "stylelab/io.hpp"
#include "stylelab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace stylelab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string embeddings;
  std::vector<double> fpr_caps;
  std::optional<std::size_t> references;
};

// Without --config a run directory keeps using the config it was created with.
pipeline::RunConfig resolve(const Options& o) {
  pipeline::RunConfig c;
  const fs::path saved = fs::path(o.out) / pipeline::files::kConfig;
  if (!o.config.empty()) c = pipeline::load_config(o.config);
  else if (fs::exists(saved)) c = pipeline::load_config(saved);
  if (o.seed) c.seed = *o.seed;
  if (!o.fpr_caps.empty()) c.eval.fpr_caps = o.fpr_caps;
  if (o.references) c.eval.references = *o.references;
  return c.resolved();
}

int run(const std::function<std::vector<std::string>()>& command) {
  try {
    for (const auto& w : command()) spdlog::warn("{}", w);
    return 0;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const NotFoundError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style representation learning on synthetic corpora"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON run config (defaults when omitted)")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Override the config seed");
  app.add_option("--out", o.out, "Run directory")->capture_default_str();

  using Command = std::function<std::vector<std::string>(const pipeline::RunConfig&, const fs::path&)>;
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"gen-corpus", "Generate the corpus and its cross-topic split", pipeline::cmd_gen_corpus},
      {"mine", "Mine hard training pairs", pipeline::cmd_mine},
      {"pretrain", "Contrastive pretraining of the style encoder", pipeline::cmd_pretrain},
      {"finetune", "Fine-tune the disentangling autoencoder", pipeline::cmd_finetune},
      {"report", "Write report.md from the metric files", pipeline::cmd_report},
      {"run", "Every stage in order", pipeline::run_all},
  };
  std::optional<Command> chosen;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, fn = fn] { chosen = fn; });
  }

  auto* aa = app.add_subcommand("eval-aa", "Cross-topic authorship attribution metrics");
  aa->add_option("--embeddings", o.embeddings, "Score precomputed embeddings instead of checkpoints")
      ->check(CLI::ExistingFile);
  aa->callback([&] {
    chosen = [&o](const pipeline::RunConfig& c, const fs::path& out) {
      return o.embeddings.empty() ? pipeline::cmd_eval_aa(c, out)
                                  : pipeline::cmd_eval_aa_embeddings(c, o.embeddings, out);
    };
  });

  auto* detect = app.add_subcommand("eval-detect", "Few-shot machine text detection");
  detect->add_option("--fpr-caps", o.fpr_caps, "False positive rate caps for pAUC");
  detect->add_option("--references", o.references, "Few-shot references per generator");
  detect->callback([&] { chosen = pipeline::cmd_eval_detect; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  return run([&] {
    const pipeline::RunConfig config = resolve(o);
    spdlog::info("config hash {}", pipeline::config_hash(config));
    auto warnings = (*chosen)(config, o.out);
    const fs::path split = fs::path(o.out) / pipeline::files::kSplit;
    if (app.got_subcommand("gen-corpus")) {
      const auto s = pipeline::split_from_json(read_file(split));
      spdlog::info("{} documents: {} train, {} query", s.train.size() + s.query.size(), s.train.size(),
                   s.query.size());
    }
    return warnings;
  });
}
