#include <algorithm>
#include <numeric>

#include "occlume/common/error.hpp"
#include "occlume/pointmls/model.hpp"

namespace occlume::pointmls {

const char* sampler_name(Sampler s) {
  switch (s) {
    case Sampler::Cps: return "cps";
    case Sampler::Fps: return "fps";
    case Sampler::Random: return "rs";
  }
  return "?";
}

Sampler parse_sampler(const std::string& s) {
  if (s == "cps") return Sampler::Cps;
  if (s == "fps") return Sampler::Fps;
  if (s == "rs") return Sampler::Random;
  throw InvalidArgument("unknown sampler '" + s + "' (expected cps, fps or rs)");
}

namespace {
const char* spl_name(SplScope s) {
  switch (s) {
    case SplScope::All: return "all";
    case SplScope::Top: return "top";
    case SplScope::None: return "none";
  }
  return "?";
}

SplScope parse_spl(const std::string& s) {
  if (s == "all") return SplScope::All;
  if (s == "top") return SplScope::Top;
  if (s == "none") return SplScope::None;
  throw InvalidArgument("unknown spl scope '" + s + "' (expected all, top or none)");
}
}  // namespace

std::size_t CpsConfig::feature_dim() const {
  if (half_rule) return std::max<std::size_t>(m_out / 2, 1);
  return feature_widths.empty() ? 3 : feature_widths.back();
}

void CpsConfig::validate() const {
  if (m_out < 1 || m_out > n_in) {
    throw InvalidArgument("cps: need 1 <= M <= N, got M=" + std::to_string(m_out) + " N=" + std::to_string(n_in));
  }
  if (feature_widths.empty()) throw InvalidArgument("cps: feature MLP needs at least one layer");
  for (auto w : feature_widths)
    if (w == 0) throw InvalidArgument("cps: zero-width layer");
  for (auto w : weight_hidden)
    if (w == 0) throw InvalidArgument("cps: zero-width layer");
}

void FaConfig::validate(std::size_t points) const {
  if (stages < 1) throw InvalidArgument("fa: need at least one stage");
  if (k < 1) throw InvalidArgument("fa: k must be >= 1");
  if (embed < 1 || head_hidden < 1 || classes < 1) throw InvalidArgument("fa: zero width");
  if ((points >> stages) < 1) {
    throw InvalidArgument("fa: " + std::to_string(points) + " points cannot be halved " + std::to_string(stages) +
                          " times");
  }
}

std::vector<std::size_t> FaConfig::stage_points(std::size_t points) const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < stages; ++t) out.push_back(points >>= 1);
  return out;
}

CpsConfig MultiLevelConfig::cps(std::size_t level) const {
  CpsConfig c;
  c.n_in = points;
  c.m_out = levels.at(level);
  c.feature_widths = cps_widths;
  c.weight_hidden = cps_weight_hidden;
  c.half_rule = level > 0 && half_rule_lower;
  c.batch_norm = batch_norm;
  return c;
}

FaConfig MultiLevelConfig::fa(std::size_t level) const {
  FaConfig f;
  f.stages = fa_stages;
  f.k = fa_k;
  f.embed = level == 0 ? fa_embed : fa_embed_light;
  f.head_hidden = fa_head_hidden;
  f.classes = classes;
  f.batch_norm = batch_norm;
  return f;
}

std::vector<double> MultiLevelConfig::weights() const {
  std::vector<double> w = alpha.empty() ? std::vector<double>(levels.size(), 1.0) : alpha;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  return w;
}

void MultiLevelConfig::validate() const {
  if (levels.empty()) throw InvalidArgument("model: no levels");
  if (classes < 1) throw InvalidArgument("model: classes must be >= 1");
  if (levels[0] > points) throw InvalidArgument("model: top level exceeds the input size");
  for (std::size_t s = 1; s < levels.size(); ++s) {
    if (levels[s] >= levels[s - 1]) throw InvalidArgument("model: level sizes must strictly decrease");
  }
  if (!alpha.empty()) {
    if (alpha.size() != levels.size()) throw InvalidArgument("model: alpha needs one weight per level");
    double total = 0.0;
    for (double a : alpha) {
      if (!(a >= 0.0)) throw InvalidArgument("model: alpha must be non-negative");
      total += a;
    }
    if (!(total > 0.0)) throw InvalidArgument("model: alpha sums to zero");
  }
  if (!(lambda >= 0.0)) throw InvalidArgument("model: lambda must be >= 0");
  for (std::size_t s = 0; s < levels.size(); ++s) {
    cps(s).validate();
    fa(s).validate(levels[s]);
  }
}

MultiLevelConfig MultiLevelConfig::from_kv(const KvConfig& kv) {
  MultiLevelConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw InvalidArgument(std::string("config: ") + key + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  c.points = size("points", c.points);
  c.classes = size("classes", c.classes);
  c.levels = kv.get_sizes("levels", c.levels);
  c.alpha = kv.get_doubles("alpha", c.alpha);
  c.sampler = parse_sampler(kv.get_string("sampler", sampler_name(c.sampler)));
  c.cps_widths = kv.get_sizes("cps_widths", c.cps_widths);
  c.cps_weight_hidden = kv.get_sizes("cps_weight_hidden", c.cps_weight_hidden);
  c.half_rule_lower = kv.get_bool("half_rule_lower", c.half_rule_lower);
  c.fa_stages = size("fa_stages", c.fa_stages);
  c.fa_k = size("fa_k", c.fa_k);
  c.fa_embed = size("fa_embed", c.fa_embed);
  c.fa_embed_light = size("fa_embed_light", c.fa_embed_light);
  c.fa_head_hidden = size("fa_head_hidden", c.fa_head_hidden);
  c.batch_norm = kv.get_bool("batch_norm", c.batch_norm);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.spl = parse_spl(kv.get_string("spl", spl_name(c.spl)));
  c.validate();
  return c;
}

KvConfig MultiLevelConfig::to_kv() const {
  KvConfig kv;
  kv.set("points", static_cast<std::int64_t>(points));
  kv.set("classes", static_cast<std::int64_t>(classes));
  kv.set("levels", levels);
  if (!alpha.empty()) kv.set("alpha", alpha);
  kv.set("sampler", sampler_name(sampler));
  kv.set("cps_widths", cps_widths);
  kv.set("cps_weight_hidden", cps_weight_hidden);
  kv.set("half_rule_lower", half_rule_lower ? "true" : "false");
  kv.set("fa_stages", static_cast<std::int64_t>(fa_stages));
  kv.set("fa_k", static_cast<std::int64_t>(fa_k));
  kv.set("fa_embed", static_cast<std::int64_t>(fa_embed));
  kv.set("fa_embed_light", static_cast<std::int64_t>(fa_embed_light));
  kv.set("fa_head_hidden", static_cast<std::int64_t>(fa_head_hidden));
  kv.set("batch_norm", batch_norm ? "true" : "false");
  kv.set("lambda", lambda);
  kv.set("spl", spl_name(spl));
  return kv;
}

}  // namespace occlume::pointmls
