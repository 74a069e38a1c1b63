#include <cmath>
#include <numbers>

#include "occlume/common/rng.hpp"
#include "occlume/harness/harness.hpp"

namespace occlume::harness {

namespace {
constexpr double kTauStart = 1.0;
constexpr double kTauEnd = 0.01;

double progress(std::size_t epoch, std::size_t total) {
  if (total == 0) throw InvalidArgument("schedule: total epochs must be >= 1");
  if (epoch > total) throw InvalidArgument("schedule: epoch beyond total");
  return static_cast<double>(epoch) / static_cast<double>(total);
}

double cosine(double start, double end, double t) {
  if (t == 0.0) return start;
  if (t == 1.0) return end;
  return end + 0.5 * (start - end) * (1.0 + std::cos(std::numbers::pi * t));
}
}  // namespace

const char* tau_kind_name(TauKind k) {
  switch (k) {
    case TauKind::Cos: return "cos";
    case TauKind::Lin: return "lin";
    case TauKind::Exp: return "exp";
  }
  return "?";
}

TauKind parse_tau_kind(const std::string& s) {
  if (s == "cos") return TauKind::Cos;
  if (s == "lin") return TauKind::Lin;
  if (s == "exp") return TauKind::Exp;
  throw InvalidArgument("unknown tau schedule '" + s + "' (expected cos, lin or exp)");
}

double tau_schedule(std::size_t epoch, std::size_t total, TauKind kind) {
  const double t = progress(epoch, total);
  switch (kind) {
    case TauKind::Cos: return cosine(kTauStart, kTauEnd, t);
    case TauKind::Lin: return t == 1.0 ? kTauEnd : kTauStart + (kTauEnd - kTauStart) * t;
    case TauKind::Exp: return t == 1.0 ? kTauEnd : kTauStart * std::pow(kTauEnd / kTauStart, t);
  }
  return kTauEnd;
}

double lr_schedule(std::size_t epoch, std::size_t total, double base) {
  return cosine(base, base / 100.0, progress(epoch, total));
}

std::size_t Metrics::total() const {
  std::size_t n = 0;
  for (auto v : confusion) n += v;
  return n;
}

Metrics metrics_from_confusion(std::size_t classes, std::vector<std::size_t> confusion) {
  if (confusion.size() != classes * classes) throw InvalidArgument("metrics: confusion matrix is not C x C");
  Metrics m;
  m.classes = classes;
  m.confusion = std::move(confusion);
  const std::size_t total = m.total();
  if (total == 0) throw InvalidArgument("metrics: no samples");
  std::size_t hits = 0, present = 0;
  double recall = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < classes; ++p) row += m.at(c, p);
    hits += m.at(c, c);
    if (row > 0) {
      ++present;
      recall += static_cast<double>(m.at(c, c)) / static_cast<double>(row);
    }
  }
  m.oa = static_cast<double>(hits) / static_cast<double>(total);
  m.macc = recall / static_cast<double>(present);
  return m;
}

Metrics compute_metrics(std::span<const int> truth, std::span<const int> pred, std::size_t classes) {
  if (truth.size() != pred.size()) throw InvalidArgument("metrics: prediction count mismatch");
  std::vector<std::size_t> conf(classes * classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
        static_cast<std::size_t>(pred[i]) >= classes) {
      throw InvalidArgument("metrics: class id out of range");
    }
    ++conf[static_cast<std::size_t>(truth[i]) * classes + static_cast<std::size_t>(pred[i])];
  }
  return metrics_from_confusion(classes, std::move(conf));
}

void NoiseSpec::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("noise: eta must lie in [0, 1]");
  if (!(scale > 0.0)) throw InvalidArgument("noise: scale must be > 0");
}

geomesh::PointCloud inject_noise(const geomesh::PointCloud& pc, const NoiseSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed, "noise");
  auto draw = [&]() {
    for (;;) {
      geomesh::Vec3 p;
      for (int k = 0; k < 3; ++k) {
        p[k] = spec.dist == NoiseSpec::Dist::Normal ? spec.scale * rng.normal() : rng.uniform(-spec.scale, spec.scale);
      }
      if (!spec.clip_unit_ball || p.squaredNorm() <= 1.0) return p;
    }
  };

  geomesh::PointCloud out = pc;
  if (spec.mode == NoiseSpec::Mode::Add) {
    for (std::size_t i = 0; i < spec.count; ++i) out.points.push_back(draw());
    return out;
  }
  const std::size_t n = pc.size();
  const auto replace = static_cast<std::size_t>(std::floor(spec.eta * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < replace; ++i) {
    std::swap(order[i], order[i + rng.below(n - i)]);
    out.points[order[i]] = draw();
  }
  return out;
}

}  // namespace occlume::harness
