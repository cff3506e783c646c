#include "stylelab/generator.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "stylelab/errors.hpp"

namespace stylelab {

using ad::Graph;
using ad::Tensor;
using ad::Var;

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Reconstruction: return "reconstruction";
    case Task::StyleDiscrimination: return "style-discrimination";
    case Task::ContentDiscrimination: return "content-discrimination";
  }
  return "";
}

Task parse_task(std::string_view name) {
  for (Task t : {Task::Reconstruction, Task::StyleDiscrimination, Task::ContentDiscrimination})
    if (task_name(t) == name) return t;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::string_view role_name(SlotRole role) {
  switch (role) {
    case SlotRole::Style: return "style-slot";
    case SlotRole::Content: return "content-slot";
    case SlotRole::Pair1: return "pair-slot-1";
    case SlotRole::Pair2: return "pair-slot-2";
  }
  return "";
}

PromptTemplate make_template(Task task, std::string_view text, const data::Vocab& vocab) {
  PromptTemplate t;
  t.task = task;
  const std::array<SlotRole, 2> roles = task == Task::Reconstruction
                                            ? std::array{SlotRole::Style, SlotRole::Content}
                                            : std::array{SlotRole::Pair1, SlotRole::Pair2};
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t at = text.find(kPlaceholder, start);
    const std::string_view chunk = text.substr(start, at == std::string_view::npos ? text.npos : at - start);
    for (int id : vocab.encode(chunk)) {
      if (id == data::Vocab::kUnk) throw ConfigError("template word outside the vocabulary in '" + std::string(chunk) + "'");
      t.tokens.push_back(id);
    }
    if (at == std::string_view::npos) break;
    const std::size_t slot = t.placeholders.size();
    if (slot >= roles.size()) throw ContractError("template has more than two placeholders");
    t.placeholders.push_back({t.tokens.size(), roles[slot]});
    t.tokens.push_back(slot == 0 ? data::Vocab::kSlotA : data::Vocab::kSlotB);
    start = at + kPlaceholder.size();
  }
  if (t.placeholders.size() != 2) throw ContractError("template needs exactly two placeholders");
  for (const auto& ph : t.placeholders) {
    if (ph.position == 0 || ph.position + 1 >= t.tokens.size()) {
      throw ContractError("placeholder must sit strictly inside the template");
    }
  }
  return t;
}

std::string default_template_text(Task task) {
  switch (task) {
    case Task::Reconstruction:
      return "reconstruct the original text from the style representation : <placeholder> "
             "and the content representation : <placeholder> .";
    case Task::StyleDiscrimination:
      return "decide if two texts are by the same author . text 1's style representation : "
             "<placeholder> text 2's style representation : <placeholder> answer in json "
             "with determination and explaination";
    case Task::ContentDiscrimination:
      return "decide if two texts express the same core content . text 1's content "
             "representation : <placeholder> text 2's content representation : "
             "<placeholder> answer in json with determination and explaination";
  }
  return {};
}

Templates Templates::standard(const data::Vocab& vocab) {
  return {make_template(Task::Reconstruction, default_template_text(Task::Reconstruction), vocab),
          make_template(Task::StyleDiscrimination,
                        default_template_text(Task::StyleDiscrimination), vocab),
          make_template(Task::ContentDiscrimination,
                        default_template_text(Task::ContentDiscrimination), vocab)};
}

const PromptTemplate& Templates::get(Task task) const {
  switch (task) {
    case Task::Reconstruction: return reconstruction;
    case Task::StyleDiscrimination: return style;
    case Task::ContentDiscrimination: return content;
  }
  return reconstruction;
}

std::string templates_to_json(const std::vector<std::pair<Task, std::string>>& entries) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [task, text] : entries) {
    out.push_back({{"task", task_name(task)}, {"text", text}});
  }
  return out.dump(2) + "\n";
}

Templates templates_from_json(const std::string& json, const data::Vocab& vocab) {
  Templates t = Templates::standard(vocab);
  try {
    for (const auto& entry : nlohmann::json::parse(json)) {
      const Task task = parse_task(entry.at("task").get<std::string>());
      PromptTemplate pt = make_template(task, entry.at("text").get<std::string>(), vocab);
      if (pt.tokens.size() > 64) throw ConfigError("template longer than 64 tokens");
      switch (task) {
        case Task::Reconstruction: t.reconstruction = std::move(pt); break;
        case Task::StyleDiscrimination: t.style = std::move(pt); break;
        case Task::ContentDiscrimination: t.content = std::move(pt); break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad template file: ") + e.what(), json);
  }
  return t;
}

namespace {

std::string net_prefix() { return std::string(kGeneratorPrefix) + ".net"; }

}  // namespace

void init_generator(ParamStore& params, const GeneratorConfig& config, Rng& rng) {
  const std::string g = kGeneratorPrefix;
  nn::init_transformer(params, net_prefix(), config.net, rng);
  nn::init_linear(params, g + ".adapt_style", config.style_dim, config.net.d_model, rng);
  nn::init_linear(params, g + ".adapt_content", config.content_dim, config.net.d_model, rng);
  nn::init_linear(params, g + ".out", config.net.d_model, config.net.vocab_size, rng);
}

std::string adapter_for(Task task, SlotRole role) {
  const std::string g = kGeneratorPrefix;
  const bool style = role == SlotRole::Style ||
                     (task == Task::StyleDiscrimination && role != SlotRole::Content);
  return g + (style ? ".adapt_style" : ".adapt_content");
}

HybridPrompt build_prompt(Binding& p, const GeneratorConfig& config, const PromptTemplate& prompt,
                          const LatentMap& latents) {
  const std::size_t n = prompt.tokens.size();
  if (n == 0) throw ContractError("empty prompt template");
  if (n > config.net.max_len) throw ShapeError("prompt longer than the decoder context");
  const Var table = ad::embedding_lookup(p[net_prefix() + ".tok"], prompt.tokens);
  std::vector<Var> rows;
  std::size_t begin = 0;
  for (const auto& ph : prompt.placeholders) {
    auto it = latents.find(ph.role);
    if (it == latents.end()) {
      throw ContractError("no latent supplied for " + std::string(role_name(ph.role)));
    }
    const std::string adapter = adapter_for(prompt.task, ph.role);
    const std::size_t want = p.params().get(adapter + ".w").rows();
    const Tensor& z = it->second.value();
    if (z.rank() != 1 || z.size() != want) {
      throw ShapeError("latent for " + std::string(role_name(ph.role)) + " has shape " +
                       ad::shape_string(z.shape()) + ", adapter expects [" +
                       std::to_string(want) + "]");
    }
    if (ph.position > begin) rows.push_back(ad::slice(table, begin, ph.position));
    rows.push_back(nn::linear(p, adapter, it->second));
    begin = ph.position + 1;
  }
  if (begin < n) rows.push_back(ad::slice(table, begin, n));
  HybridPrompt h;
  h.raw = rows.size() == 1 ? rows[0] : ad::concat(std::span<const Var>(rows));
  if (h.raw.value().rank() == 1) h.raw = ad::concat({h.raw});
  h.embedded = ad::add(h.raw, nn::positions(p, net_prefix(), n));
  h.provenance = prompt.placeholders;
  return h;
}

Var decoder_logits(Binding& p, const GeneratorConfig& config, Var prompt,
                   std::span<const int> inputs) {
  const std::size_t plen = prompt.value().rows();
  const std::size_t total = plen + inputs.size();
  if (inputs.empty()) throw ContractError("decoder needs at least one input token");
  if (total > config.net.max_len) {
    throw ShapeError("prompt plus target (" + std::to_string(total) +
                     ") exceeds the decoder context of " + std::to_string(config.net.max_len));
  }
  const Var tok = ad::embedding_lookup(p[net_prefix() + ".tok"], inputs);
  const Var pos = ad::slice(nn::positions(p, net_prefix(), total), plen, total);
  const Var h = ad::concat({prompt, ad::add(tok, pos)});
  const Tensor mask = nn::prefix_causal_mask(plen, total);
  const Var out = nn::transformer_blocks(p, net_prefix(), config.net, h, &mask);
  return nn::linear(p, std::string(kGeneratorPrefix) + ".out", ad::slice(out, plen, total));
}

Var teacher_forced_nll(Binding& p, const GeneratorConfig& config, const HybridPrompt& prompt,
                       std::span<const int> target) {
  if (target.empty() || target.back() != data::Vocab::kEos) {
    throw ContractError("target must be non-empty and end with EOS");
  }
  std::vector<int> inputs;
  inputs.reserve(target.size());
  inputs.push_back(data::Vocab::kBos);
  inputs.insert(inputs.end(), target.begin(), target.end() - 1);
  const Var logp = ad::log_softmax(decoder_logits(p, config, prompt.embedded, inputs));
  return ad::scale(ad::sum(ad::pick(logp, target)), -1.0);
}

std::vector<int> reconstruction_target(const GeneratorConfig& config, std::span<const int> tokens) {
  std::vector<int> out(tokens.begin(),
                       tokens.begin() + static_cast<std::ptrdiff_t>(std::min(tokens.size(), config.max_target)));
  out.push_back(data::Vocab::kEos);
  return out;
}

std::string decision_text(std::string_view label, std::string_view explanation) {
  return "{\"determination\": \"" + std::string(label) + "\", \"explaination\": \"" +
         std::string(explanation) + "\"}";
}

std::vector<int> decision_target(const data::Vocab& vocab, const GeneratorConfig& config,
                                 std::string_view label, std::string_view explanation) {
  const auto words = data::split_words(explanation);
  std::string cut;
  for (std::size_t i = 0; i < std::min(words.size(), config.max_target); ++i) {
    if (i) cut += ' ';
    cut += words[i];
  }
  auto ids = vocab.encode(decision_text(label, cut));
  ids.push_back(data::Vocab::kEos);
  return ids;
}

std::vector<int> style_target(const data::Vocab& vocab, const GeneratorConfig& config,
                              const data::PairRecord& pair) {
  return decision_target(vocab, config, data::label_text(pair.style_label), pair.style_explanation);
}

std::vector<int> content_target(const data::Vocab& vocab, const GeneratorConfig& config,
                                const data::PairRecord& pair) {
  return decision_target(vocab, config, data::label_text(pair.content_label),
                         pair.content_explanation);
}

DiscriminatorLoss discriminator_loss(Binding& p, const GeneratorConfig& config,
                                     const Templates& templates, std::span<const int> style_tokens,
                                     std::span<const int> content_tokens, Var z_s_i, Var z_s_j,
                                     Var z_c_i, Var z_c_j) {
  DiscriminatorLoss d;
  const auto sp = build_prompt(p, config, templates.style,
                               {{SlotRole::Pair1, z_s_i}, {SlotRole::Pair2, z_s_j}});
  const auto cp = build_prompt(p, config, templates.content,
                               {{SlotRole::Pair1, z_c_i}, {SlotRole::Pair2, z_c_j}});
  d.style_nll = teacher_forced_nll(p, config, sp, style_tokens);
  d.content_nll = teacher_forced_nll(p, config, cp, content_tokens);
  d.total = ad::add(d.style_nll, d.content_nll);
  return d;
}

Var total_loss(Var vae, Var dis, double lambda_dis) {
  if (lambda_dis < 0.0) throw ConfigError("lambda_dis must be non-negative");
  return ad::add(vae, ad::scale(dis, lambda_dis));
}

double total_loss(double vae, double dis, double lambda_dis) {
  if (lambda_dis < 0.0) throw ConfigError("lambda_dis must be non-negative");
  return vae + dis * lambda_dis;
}

std::vector<int> generate(const ParamStore& params, const GeneratorConfig& config,
                          const Tensor& prompt, const DecodeOptions& options) {
  if (options.max_len == 0) throw ConfigError("max_len must be at least 1");
  Rng rng(options.seed);
  std::vector<int> inputs{data::Vocab::kBos};
  std::vector<int> out;
  while (out.size() < options.max_len && prompt.rows() + inputs.size() <= config.net.max_len) {
    Graph g;
    Binding p(g, params, false);
    const Var logits = decoder_logits(p, config, g.constant(prompt), inputs);
    const Tensor& l = logits.value();
    const std::size_t v = l.cols();
    const std::size_t last = l.rows() - 1;
    int next = 0;
    if (options.temperature <= 0.0) {
      double best = -HUGE_VAL;
      for (std::size_t c = 0; c < v; ++c) {
        if (l.at(last, c) > best) {
          best = l.at(last, c);
          next = static_cast<int>(c);
        }
      }
    } else {
      double mx = -HUGE_VAL;
      for (std::size_t c = 0; c < v; ++c) mx = std::max(mx, l.at(last, c));
      std::vector<double> w(v);
      for (std::size_t c = 0; c < v; ++c) w[c] = std::exp((l.at(last, c) - mx) / options.temperature);
      next = static_cast<int>(rng.categorical(w));
    }
    out.push_back(next);
    if (next == data::Vocab::kEos) break;
    inputs.push_back(next);
  }
  return out;
}

namespace {

std::string squeeze(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
    } else {
      if (space) out += ' ';
      space = false;
      out += c;
    }
  }
  return out;
}

}  // namespace

DecisionRecord parse_decision(std::string_view text) {
  const std::string raw(text);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    throw ParseError("decision is not a JSON object", raw);
  }
  if (!j.is_object()) throw ParseError("decision is not a JSON object", raw);
  std::optional<std::string> determination, explanation;
  for (const auto& [key, value] : j.items()) {
    const std::string k = squeeze(key);
    if (!value.is_string()) continue;
    if (k == "determination") determination = squeeze(value.get<std::string>());
    if (k == "explaination" || k == "explanation") explanation = squeeze(value.get<std::string>());
  }
  if (!determination) throw ParseError("decision lacks a determination", raw);
  if (!explanation) throw ParseError("decision lacks an explanation", raw);
  DecisionRecord r;
  const std::string& d = *determination;
  if (d == "same author" || d == "same content") {
    r.same = true;
  } else if (d == "different author" || d == "different content") {
    r.same = false;
  } else {
    throw ParseError("unknown determination '" + d + "'", raw);
  }
  r.determination = d;
  r.explanation = *explanation;
  r.raw_text = raw;
  return r;
}

std::string decision_to_json(const DecisionRecord& record) {
  nlohmann::ordered_json j;
  j["determination"] = record.determination;
  j["explaination"] = record.explanation;
  j["same"] = record.same;
  j["raw_text"] = record.raw_text;
  return j.dump();
}

}  // namespace stylelab
