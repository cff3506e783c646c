#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stylelab/autodiff.hpp"

namespace stylelab {

/// Named parameter tensors. Iteration order is lexicographic by name, which
/// fixes the order of every reduction that walks the store.
class ParamStore {
 public:
  void add(const std::string& name, ad::Tensor init);
  void set(const std::string& name, ad::Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const ad::Tensor& get(const std::string& name) const;
  ad::Tensor& get(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t num_values() const;
  std::size_t size() const noexcept { return tensors_.size(); }

  /// Copies every tensor whose name starts with `from`, renamed to start with
  /// `to` instead.
  void copy_prefix(const ParamStore& src, const std::string& from,
                   const std::string& to);
  void zero_prefix(const std::string& prefix);

  const std::map<std::string, ad::Tensor>& tensors() const noexcept { return tensors_; }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::map<std::string, ad::Tensor> tensors_;
};

using GradMap = std::map<std::string, ad::Tensor>;

/// Places parameters on a graph on first use.
class Binding {
 public:
  Binding(ad::Graph& graph, const ParamStore& params, bool requires_grad = true)
      : graph_(graph), params_(params), requires_grad_(requires_grad) {}

  ad::Var operator[](const std::string& name);
  ad::Graph& graph() noexcept { return graph_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Gradients of every bound parameter.
  GradMap grads(const ad::Gradients& gradients) const;

 private:
  ad::Graph& graph_;
  const ParamStore& params_;
  bool requires_grad_;
  std::map<std::string, ad::Var> bound_;
};

/// Adds `src` into `dst`, scaled by `factor`.
void accumulate_grads(GradMap& dst, const GradMap& src, double factor = 1.0);
double grad_norm(const GradMap& grads);

/// Same measure as ad::grad_check, taken over every element of a parameter
/// store, optionally restricted to names starting with `prefix`.
double grad_check(const std::function<ad::Var(Binding&)>& f, ParamStore params, double h,
                  const std::string& prefix = "");

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 0.0;  ///< 0 disables clipping
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  void step(ParamStore& params, const GradMap& grads);
  void set_lr(double lr) noexcept { config_.lr = lr; }
  const AdamWConfig& config() const noexcept { return config_; }
  std::int64_t steps() const noexcept { return t_; }

 private:
  AdamWConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

/// Versioned binary checkpoint: named tensors plus a free-form metadata string
/// (JSON by convention). Doubles are stored verbatim, so load(save(x)) == x
/// bit for bit.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ParamStore params;
  std::string metadata;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
};

}  // namespace stylelab
