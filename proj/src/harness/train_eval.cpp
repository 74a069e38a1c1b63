#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "occlume/common/parallel.hpp"
#include "occlume/common/rng.hpp"
#include "occlume/geomesh/cloud_io.hpp"
#include "occlume/harness/harness.hpp"

namespace occlume::harness {

using ag::Tensor;
using pointmls::ForwardOptions;
using pointmls::Mode;

Dataset load_dataset(const std::filesystem::path& root) {
  const auto manifest = occlusion::DatasetManifest::load(root / "manifest.tsv");
  Dataset ds;
  ds.classes = manifest.classes;
  std::vector<Sample> all(manifest.records.size());
  parallel_for(all.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& r = manifest.records[i];
      const auto pc = geomesh::read_pcb(root / r.path);
      if (pc.size() != r.count) {
        throw ParseError(r.path + ": holds " + std::to_string(pc.size()) + " points, manifest says " +
                         std::to_string(r.count));
      }
      Sample s;
      s.sample_id = r.sample_id;
      s.view = r.view;
      s.label = r.class_id;
      s.points.reserve(pc.size() * 3);
      for (const auto& p : pc.points) s.points.insert(s.points.end(), {p.x(), p.y(), p.z()});
      all[i] = std::move(s);
    }
  });
  for (std::size_t i = 0; i < all.size(); ++i) {
    (manifest.records[i].split == occlusion::Split::Train ? ds.train : ds.test).push_back(std::move(all[i]));
  }
  return ds;
}

bool is_holdout(const std::string& sample_id) { return mix64(fnv1a(sample_id)) % 10 == 0; }

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("train: batch size must be >= 1");
  if (!(lr >= 0.0)) throw InvalidArgument("train: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("train: momentum must lie in [0, 1)");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) throw InvalidArgument("train: bad scale range");
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  TrainConfig c;
  c.epochs = static_cast<std::size_t>(kv.get_int("epochs", static_cast<std::int64_t>(c.epochs)));
  c.batch_size = static_cast<std::size_t>(kv.get_int("batch_size", static_cast<std::int64_t>(c.batch_size)));
  c.lr = kv.get_double("lr", c.lr);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.tau = parse_tau_kind(kv.get_string("tau", tau_kind_name(c.tau)));
  c.scale_lo = kv.get_double("scale_lo", c.scale_lo);
  c.scale_hi = kv.get_double("scale_hi", c.scale_hi);
  c.scale_per_axis = kv.get_bool("scale_per_axis", c.scale_per_axis);
  c.rotate_up = kv.get_bool("rotate_up", c.rotate_up);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.validate();
  return c;
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  kv.set("epochs", static_cast<std::int64_t>(epochs));
  kv.set("batch_size", static_cast<std::int64_t>(batch_size));
  kv.set("lr", lr);
  kv.set("momentum", momentum);
  kv.set("tau", tau_kind_name(tau));
  kv.set("scale_lo", scale_lo);
  kv.set("scale_hi", scale_hi);
  kv.set("scale_per_axis", scale_per_axis ? "true" : "false");
  kv.set("rotate_up", rotate_up ? "true" : "false");
  kv.set("seed", static_cast<std::int64_t>(seed));
  return kv;
}

namespace {

Tensor make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> idx, std::size_t n,
                  std::vector<int>& labels) {
  std::vector<double> data;
  data.reserve(idx.size() * n * 3);
  labels.clear();
  for (auto i : idx) {
    const auto& s = samples[i];
    if (s.points.size() != n * 3) {
      throw InvalidArgument(s.sample_id + ": cloud has " + std::to_string(s.points.size() / 3) +
                            " points, model expects " + std::to_string(n));
    }
    data.insert(data.end(), s.points.begin(), s.points.end());
    labels.push_back(s.label);
  }
  return Tensor({idx.size(), n, 3}, std::move(data));
}

void random_rotate_up(Tensor& x, const TrainConfig& cfg, std::size_t step) {
  if (!cfg.rotate_up) return;
  const std::size_t bs = x.dim(0), n = x.dim(1);
  auto d = x.data();
  for (std::size_t b = 0; b < bs; ++b) {
    CounterRng rng(cfg.seed, "rotate", step * bs + b);
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double c = std::cos(a), s = std::sin(a);
    for (std::size_t i = 0; i < n; ++i) {
      double* p = &d[(b * n + i) * 3];
      const double px = p[0], py = p[1];
      p[0] = c * px - s * py;
      p[1] = s * px + c * py;
    }
  }
}

void random_scale(Tensor& x, const TrainConfig& cfg, std::size_t step) {
  if (cfg.scale_lo == 1.0 && cfg.scale_hi == 1.0) return;
  const std::size_t bs = x.dim(0), n = x.dim(1);
  auto d = x.data();
  for (std::size_t b = 0; b < bs; ++b) {
    CounterRng rng(cfg.seed, "scale", step * bs + b);
    double s[3];
    s[0] = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    s[1] = cfg.scale_per_axis ? rng.uniform(cfg.scale_lo, cfg.scale_hi) : s[0];
    s[2] = cfg.scale_per_axis ? rng.uniform(cfg.scale_lo, cfg.scale_hi) : s[0];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 3; ++k) d[(b * n + i) * 3 + k] *= s[k];
  }
}

}  // namespace

TrainResult train(const MultiLevelConfig& model, const TrainConfig& cfg, const std::vector<Sample>& samples,
                  const EpochCallback& on_epoch, const ModelParams* init) {
  cfg.validate();
  model.validate();
  std::vector<std::size_t> fit;
  std::vector<Sample> holdout;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (is_holdout(samples[i].sample_id)) {
      holdout.push_back(samples[i]);
    } else {
      fit.push_back(i);
    }
  }
  if (fit.empty()) throw InvalidArgument("train: no training samples");

  TrainResult res{init ? init->clone() : pointmls::init_params(model, derive_seed(cfg.seed, "init")), {}};
  auto params = res.params.trainable();
  ag::SgdState sgd{cfg.lr, cfg.momentum, {}};
  std::vector<int> labels;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog row;
    row.epoch = epoch + 1;
    row.lr = lr_schedule(epoch, cfg.epochs, cfg.lr);
    row.tau = tau_schedule(epoch, cfg.epochs, cfg.tau);
    sgd.lr = row.lr;

    std::vector<std::size_t> order = fit;
    CounterRng shuffle(cfg.seed, "shuffle", epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      // Batch statistics of a single sample are degenerate.
      if (len < 2 && order.size() > 1) continue;
      std::span<const std::size_t> idx(order.data() + start, len);
      Tensor x = make_batch(samples, idx, model.points, labels);
      random_rotate_up(x, cfg, step);
      random_scale(x, cfg, step);
      const ForwardOptions opt{Mode::Train, row.tau, derive_seed(cfg.seed, "step", step++)};
      const auto out = pointmls::multilevel_forward(x, res.params, model, opt);
      const auto loss = pointmls::total_loss(out, labels, x, model);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        std::vector<std::string> ids;
        for (auto i : idx) ids.push_back(samples[i].sample_id + "#v" + std::to_string(samples[i].view));
        throw DivergenceError("non-finite loss at epoch " + std::to_string(row.epoch), std::move(ids));
      }
      for (auto& p : params) p.zero_grad();
      loss.total.backward();
      ag::sgd_step(params, sgd);
      loss_sum += value * static_cast<double>(len);
      seen += len;
    }
    row.loss = seen ? loss_sum / static_cast<double>(seen) : std::numeric_limits<double>::quiet_NaN();

    row.holdout_oa = std::numeric_limits<double>::quiet_NaN();
    if (!holdout.empty()) {
      EvalOptions eo;
      eo.tau = tau_schedule(epoch + 1, cfg.epochs, cfg.tau);
      eo.batch_size = cfg.batch_size;
      row.holdout_oa = evaluate(res.params, model, holdout, eo).metrics.oa;
    }
    res.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return res;
}

Evaluation evaluate(const ModelParams& params, const MultiLevelConfig& model, const std::vector<Sample>& samples,
                    const EvalOptions& opt) {
  if (samples.empty()) throw InvalidArgument("evaluate: empty split");
  if (opt.votes < 1) throw InvalidArgument("evaluate: votes must be >= 1");
  const std::size_t c = model.classes, bs = std::max<std::size_t>(opt.batch_size, 1);
  const std::size_t batches = (samples.size() + bs - 1) / bs;
  std::vector<double> scores(samples.size() * c, 0.0);

  parallel_for(batches, [&](std::size_t b0, std::size_t b1) {
    ag::NoGradGuard no_grad;
    std::vector<int> labels;
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t lo = b * bs, hi = std::min(samples.size(), lo + bs);
      std::vector<std::size_t> idx(hi - lo);
      std::iota(idx.begin(), idx.end(), lo);
      const Tensor clean = make_batch(samples, idx, model.points, labels);
      for (std::size_t v = 0; v < opt.votes; ++v) {
        Tensor x = clean;
        if (opt.votes > 1) {
          std::vector<double> d(clean.data().begin(), clean.data().end());
          const std::size_t per = model.points * 3;
          for (std::size_t i = lo; i < hi; ++i) {
            CounterRng rng(opt.seed, "vote", i * opt.votes + v);
            const double s = rng.uniform(opt.scale_lo, opt.scale_hi);
            for (std::size_t j = 0; j < per; ++j) d[(i - lo) * per + j] *= s;
          }
          x = Tensor(clean.shape(), std::move(d));
        }
        const ForwardOptions fo{Mode::Eval, opt.tau, derive_seed(opt.seed, "eval", b)};
        const auto prob = ag::softmax_rows(pointmls::multilevel_forward(x, params, model, fo).logits, 1.0);
        for (std::size_t i = lo; i < hi; ++i)
          for (std::size_t k = 0; k < c; ++k) scores[i * c + k] += prob.data()[(i - lo) * c + k];
      }
    }
  });

  Evaluation ev;
  std::vector<int> truth;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double* s = scores.data() + i * c;
    ev.predictions.push_back(static_cast<int>(std::max_element(s, s + c) - s));
    truth.push_back(samples[i].label);
  }
  ev.metrics = compute_metrics(truth, ev.predictions, c);
  return ev;
}

std::vector<SweepRow> robustness_sweep(const ModelParams& params, const MultiLevelConfig& model,
                                       const std::vector<Sample>& samples, const std::vector<double>& eta_percent,
                                       const NoiseSpec& base, const EvalOptions& opt) {
  std::vector<SweepRow> rows;
  for (double eta : eta_percent) {
    std::vector<Sample> noisy = samples;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      geomesh::PointCloud pc;
      const auto& pts = samples[i].points;
      for (std::size_t j = 0; j < pts.size(); j += 3) pc.points.emplace_back(pts[j], pts[j + 1], pts[j + 2]);
      NoiseSpec spec = base;
      spec.mode = NoiseSpec::Mode::Replace;
      spec.eta = eta / 100.0;
      spec.seed = derive_seed(base.seed, "sweep", i);
      const auto out = inject_noise(pc, spec);
      auto& dst = noisy[i].points;
      for (std::size_t j = 0; j < out.size(); ++j) {
        dst[3 * j] = out.points[j].x();
        dst[3 * j + 1] = out.points[j].y();
        dst[3 * j + 2] = out.points[j].z();
      }
    }
    rows.push_back({eta, evaluate(params, model, noisy, opt).metrics});
  }
  return rows;
}

namespace {
std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  return format_double(v);
}
}  // namespace

std::string log_csv(const std::vector<EpochLog>& log, const KvConfig& header) {
  std::string out = header.to_comment_block();
  out += "epoch,loss,lr,tau,holdout_oa\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "," + fmt(r.loss) + "," + fmt(r.lr) + "," + fmt(r.tau) + "," +
           fmt(r.holdout_oa) + "\n";
  }
  return out;
}

std::string metrics_csv(const Metrics& m, const std::vector<std::string>& classes, const KvConfig& header) {
  std::string out = header.to_comment_block();
  out += "metric,value\n";
  out += "oa," + fmt(m.oa) + "\n";
  out += "macc," + fmt(m.macc) + "\n";
  out += "samples," + std::to_string(m.total()) + "\n";
  out += "\n# confusion (rows: true class, columns: predicted class)\n";
  out += "class";
  for (std::size_t p = 0; p < m.classes; ++p) out += "," + (p < classes.size() ? classes[p] : std::to_string(p));
  out += "\n";
  for (std::size_t t = 0; t < m.classes; ++t) {
    out += t < classes.size() ? classes[t] : std::to_string(t);
    for (std::size_t p = 0; p < m.classes; ++p) out += "," + std::to_string(m.at(t, p));
    out += "\n";
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const KvConfig& header) {
  std::string out = header.to_comment_block();
  out += "eta_percent,oa,macc\n";
  for (const auto& r : rows) out += fmt(r.eta) + "," + fmt(r.metrics.oa) + "," + fmt(r.metrics.macc) + "\n";
  return out;
}

}  // namespace occlume::harness
