#include "stylelab/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stylelab/errors.hpp"
#include "stylelab/io.hpp"

namespace stylelab {

void ParamStore::add(const std::string& name, ad::Tensor init) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  tensors_.emplace(name, std::move(init));
}

void ParamStore::set(const std::string& name, ad::Tensor value) {
  tensors_[name] = std::move(value);
}

const ad::Tensor& ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw NotFoundError("no parameter named " + name);
  return it->second;
}

ad::Tensor& ParamStore::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw NotFoundError("no parameter named " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

void ParamStore::copy_prefix(const ParamStore& src, const std::string& from,
                             const std::string& to) {
  for (const auto& [name, t] : src.tensors_) {
    if (name.rfind(from, 0) == 0) set(to + name.substr(from.size()), t);
  }
}

void ParamStore::zero_prefix(const std::string& prefix) {
  for (auto& [name, t] : tensors_) {
    if (name.rfind(prefix, 0) == 0) {
      for (double& v : t.data()) v = 0.0;
    }
  }
}

ad::Var Binding::operator[](const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  ad::Var v = graph_.leaf(params_.get(name), requires_grad_);
  bound_.emplace(name, v);
  return v;
}

GradMap Binding::grads(const ad::Gradients& gradients) const {
  GradMap out;
  for (const auto& [name, v] : bound_) {
    if (gradients.has(v)) out.emplace(name, gradients.of(v));
  }
  return out;
}

void accumulate_grads(GradMap& dst, const GradMap& src, double factor) {
  for (const auto& [name, g] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) {
      ad::Tensor scaled = g;
      for (double& v : scaled.data()) v *= factor;
      dst.emplace(name, std::move(scaled));
      continue;
    }
    auto d = it->second.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  }
}

double grad_check(const std::function<ad::Var(Binding&)>& f, ParamStore params, double h,
                  const std::string& prefix) {
  if (!(h > 0.0)) throw ContractError("grad_check step must be positive");
  auto evaluate = [&](const ParamStore& ps) {
    ad::Graph g;
    Binding b(g, ps, false);
    return f(b).value().item();
  };
  GradMap analytic;
  {
    ad::Graph g;
    Binding b(g, params);
    analytic = b.grads(g.backward(f(b)));
  }
  double worst = 0.0;
  for (const auto& name : params.names()) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto it = analytic.find(name);
    const std::size_t n = params.get(name).size();
    for (std::size_t i = 0; i < n; ++i) {
      ad::Tensor& t = params.get(name);
      const double orig = t[i];
      t[i] = orig + h;
      const double up = evaluate(params);
      params.get(name)[i] = orig - h;
      const double down = evaluate(params);
      params.get(name)[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + 1e-8));
    }
  }
  return worst;
}

double grad_norm(const GradMap& grads) {
  double total = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.data()) total += v * v;
  return std::sqrt(total);
}

void AdamW::step(ParamStore& params, const GradMap& grads) {
  ++t_;
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = grad_norm(grads);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    ad::Tensor& p = params.get(name);
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    auto data = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= config_.lr * config_.weight_decay * data[i];
      data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'T', 'Y', 'L', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("truncated checkpoint", "");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, metadata.size());
  out += metadata;
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params.tensors()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ParseError("not a stylelab checkpoint", "");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), "");
  }
  Checkpoint ckpt;
  ckpt.metadata = in.str(in.get<std::uint64_t>());
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = in.str(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    std::vector<std::size_t> shape;
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(in.get<std::uint64_t>());
      n *= shape.back();
    }
    std::vector<double> data(n);
    const std::string raw = in.str(n * sizeof(double));
    std::memcpy(data.data(), raw.data(), raw.size());
    ckpt.params.add(name, ad::Tensor(std::move(shape), std::move(data)));
  }
  if (!in.done()) throw ParseError("trailing bytes in checkpoint", "");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

}  // namespace stylelab
