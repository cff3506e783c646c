#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stylelab/autodiff.hpp"
#include "stylelab/nn.hpp"
#include "stylelab/pairs.hpp"
#include "stylelab/params.hpp"
#include "stylelab/vocab.hpp"

namespace stylelab {

enum class Task { Reconstruction, StyleDiscrimination, ContentDiscrimination };
enum class SlotRole { Style, Content, Pair1, Pair2 };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);
std::string_view role_name(SlotRole role);

inline constexpr std::string_view kPlaceholder = "<placeholder>";

struct Placeholder {
  std::size_t position = 0;
  SlotRole role = SlotRole::Style;

  friend bool operator==(const Placeholder&, const Placeholder&) = default;
};

/// Token ids of a fixed prompt with two latent slots.
struct PromptTemplate {
  Task task = Task::Reconstruction;
  std::vector<int> tokens;
  std::vector<Placeholder> placeholders;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

/// Builds a template from whitespace-separated words in which each
/// "<placeholder>" marks a slot. Slots take roles in order (style, content for
/// reconstruction; pair 1, pair 2 for discrimination). ContractError when the
/// slot count is not two or a slot sits at either end.
PromptTemplate make_template(Task task, std::string_view text, const data::Vocab& vocab);

/// Template texts, at most 64 tokens each.
std::string default_template_text(Task task);

struct Templates {
  PromptTemplate reconstruction;
  PromptTemplate style;
  PromptTemplate content;

  static Templates standard(const data::Vocab& vocab);
  const PromptTemplate& get(Task task) const;
};

/// JSON array of {"task", "text"} objects.
std::string templates_to_json(const std::vector<std::pair<Task, std::string>>& entries);
Templates templates_from_json(const std::string& json, const data::Vocab& vocab);

struct GeneratorConfig {
  nn::TransformerConfig net;
  std::size_t style_dim = 32;
  std::size_t content_dim = 32;
  /// Token budget for reconstruction targets and explanations (EOS excluded).
  std::size_t max_target = 48;

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

inline constexpr const char* kGeneratorPrefix = "generator";

/// Parameters `generator.net.*`, `generator.adapt_style.*`,
/// `generator.adapt_content.*` and `generator.out.*`.
void init_generator(ParamStore& params, const GeneratorConfig& config, Rng& rng);

/// Template embeddings with the placeholder rows replaced by adapted latents.
struct HybridPrompt {
  ad::Var raw;       ///< before position embeddings
  ad::Var embedded;  ///< raw plus position embeddings
  std::vector<Placeholder> provenance;
};

using LatentMap = std::map<SlotRole, ad::Var>;

/// Adapter used for a slot: style latents for the style slot and the style
/// discrimination pair, content latents otherwise.
std::string adapter_for(Task task, SlotRole role);

HybridPrompt build_prompt(Binding& p, const GeneratorConfig& config,
                          const PromptTemplate& prompt, const LatentMap& latents);

/// Next-token logits [T, V] for the input ids following the prompt rows.
ad::Var decoder_logits(Binding& p, const GeneratorConfig& config, ad::Var prompt,
                       std::span<const int> inputs);

/// -sum_k log p(y_k | y_<k, prompt), with BOS feeding the first prediction.
/// ContractError unless the target is non-empty and ends with EOS.
ad::Var teacher_forced_nll(Binding& p, const GeneratorConfig& config, const HybridPrompt& prompt,
                           std::span<const int> target);

/// Document tokens cut to max_target, then EOS.
std::vector<int> reconstruction_target(const GeneratorConfig& config, std::span<const int> tokens);

/// {"determination": "<label>", "explaination": "<explanation>"}
std::string decision_text(std::string_view label, std::string_view explanation);
/// Tokenized decision text with the explanation cut to max_target tokens, then EOS.
std::vector<int> decision_target(const data::Vocab& vocab, const GeneratorConfig& config,
                                 std::string_view label, std::string_view explanation);
std::vector<int> style_target(const data::Vocab& vocab, const GeneratorConfig& config,
                              const data::PairRecord& pair);
std::vector<int> content_target(const data::Vocab& vocab, const GeneratorConfig& config,
                                const data::PairRecord& pair);

struct DiscriminatorLoss {
  ad::Var style_nll;
  ad::Var content_nll;
  ad::Var total;
};

DiscriminatorLoss discriminator_loss(Binding& p, const GeneratorConfig& config,
                                     const Templates& templates, std::span<const int> style_tokens,
                                     std::span<const int> content_tokens, ad::Var z_s_i,
                                     ad::Var z_s_j, ad::Var z_c_i, ad::Var z_c_j);

/// L_vae + lambda_dis * L_dis.
ad::Var total_loss(ad::Var vae, ad::Var dis, double lambda_dis);
double total_loss(double vae, double dis, double lambda_dis);

struct DecodeOptions {
  std::size_t max_len = 64;
  /// Zero selects greedy decoding.
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

/// Autoregressive decoding after the prompt; stops at EOS (kept) or max_len.
std::vector<int> generate(const ParamStore& params, const GeneratorConfig& config,
                          const ad::Tensor& prompt, const DecodeOptions& options);

struct DecisionRecord {
  bool same = false;
  std::string determination;  ///< e.g. "same author"
  std::string explanation;
  std::string raw_text;
};

/// Reads {"determination": ..., "explaination": ...} with either spelling of
/// the explanation key, in either order, with arbitrary whitespace (also inside
/// the quotes). ParseError carrying the raw text otherwise.
DecisionRecord parse_decision(std::string_view text);

std::string decision_to_json(const DecisionRecord& record);

}  // namespace stylelab
