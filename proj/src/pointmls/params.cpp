#include <cmath>

#include "occlume/common/error.hpp"
#include "occlume/common/rng.hpp"
#include "occlume/pointmls/model.hpp"

namespace occlume::pointmls {

Tensor& ModelParams::add(const std::string& name, Shape shape, bool trainable) {
  if (contains(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, Tensor::zeros(std::move(shape), trainable), trainable});
  return entries_.back().tensor;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

const Tensor& ModelParams::at(const std::string& name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

std::vector<std::string> ModelParams::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.name);
  return out;
}

std::vector<ag::NamedTensor> ModelParams::all() const {
  std::vector<ag::NamedTensor> out;
  for (const auto& e : entries_) out.push_back({e.name, e.tensor});
  return out;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

ag::BatchNormState ModelParams::bn_state(const std::string& prefix) const {
  ag::BatchNormState st;
  st.running_mean = at(prefix + ".mean");
  st.running_var = at(prefix + ".var");
  return st;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& e : entries_) {
    Tensor& t = out.add(e.name, e.tensor.shape(), e.trainable);
    std::copy(e.tensor.data().begin(), e.tensor.data().end(), t.data().begin());
  }
  return out;
}

void ModelParams::assign(const std::vector<ag::NamedTensor>& values) {
  if (values.size() != entries_.size()) {
    throw InvalidArgument("checkpoint has " + std::to_string(values.size()) + " tensors, model expects " +
                          std::to_string(entries_.size()));
  }
  for (const auto& v : values) {
    Tensor& t = at(v.name);
    if (t.shape() != v.tensor.shape()) {
      throw ShapeError("checkpoint tensor '" + v.name + "' has shape " + ag::shape_str(v.tensor.shape()) +
                       ", model expects " + ag::shape_str(t.shape()));
    }
    std::copy(v.tensor.data().begin(), v.tensor.data().end(), t.data().begin());
  }
}

bool ModelParams::all_finite() const {
  for (const auto& e : entries_)
    for (double v : e.tensor.data())
      if (!std::isfinite(v)) return false;
  return true;
}

namespace {

class Builder {
 public:
  Builder(ModelParams& p, std::uint64_t seed, bool bn) : p_(p), seed_(seed), bn_(bn) {}

  void linear(const std::string& name, std::size_t in, std::size_t out, bool bias) {
    Tensor& w = p_.add(name + ".w", {in, out}, true);
    CounterRng rng(seed_, name + ".w");
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    if (bias) p_.add(name + ".b", {out}, true);
  }

  // Linear without bias followed by normalization, or linear with bias when
  // normalization is off.
  void block(const std::string& name, std::size_t in, std::size_t out) {
    linear(name, in, out, !bn_);
    if (!bn_) return;
    Tensor& g = p_.add(name + ".bn.g", {out}, true);
    for (auto& v : g.data()) v = 1.0;
    p_.add(name + ".bn.b", {out}, true);
    p_.add(name + ".bn.mean", {out}, false);
    Tensor& var = p_.add(name + ".bn.var", {out}, false);
    for (auto& v : var.data()) v = 1.0;
  }

 private:
  ModelParams& p_;
  std::uint64_t seed_;
  bool bn_;
};

}  // namespace

ModelParams init_params(const MultiLevelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  Builder b(p, seed, cfg.batch_norm);
  for (std::size_t s = 0; s < cfg.levels.size(); ++s) {
    const std::string lv = "L" + std::to_string(s);
    if (cfg.sampler == Sampler::Cps) {
      const CpsConfig c = cfg.cps(s);
      const std::size_t d = c.feature_dim();
      std::size_t in = 3;
      for (std::size_t i = 0; i < c.feature_widths.size(); ++i) {
        const std::size_t out = i + 1 == c.feature_widths.size() ? d : c.feature_widths[i];
        b.block(lv + ".cps.f" + std::to_string(i), in, out);
        in = out;
      }
      in = 2 * d;
      for (std::size_t i = 0; i < c.weight_hidden.size(); ++i) {
        b.block(lv + ".cps.w" + std::to_string(i), in, c.weight_hidden[i]);
        in = c.weight_hidden[i];
      }
      // A bias here would be constant along the softmax axis and never learn.
      b.linear(lv + ".cps.out", in, c.m_out, false);
    }
    const FaConfig f = cfg.fa(s);
    b.block(lv + ".fa.embed", 3, f.embed);
    std::size_t ch = f.embed;
    for (std::size_t t = 0; t < f.stages; ++t) {
      const std::string st = lv + ".fa.s" + std::to_string(t);
      b.block(st + ".transfer", ch + 3, 2 * ch);
      b.block(st + ".res", 2 * ch, 2 * ch);
      ch *= 2;
    }
    b.block(lv + ".fa.head", ch, f.head_hidden);
    b.linear(lv + ".fa.out", f.head_hidden, f.classes, true);
  }
  return p;
}

}  // namespace occlume::pointmls
