// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [criterion numbers...]
//
// Without numbers every criterion runs. Exit status is 0 only when every
// criterion that ran passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/full_graph.hpp"
#include "../support/oracles.hpp"
#include "occlume/autograd/ops.hpp"
#include "occlume/autograd/optim.hpp"
#include "occlume/cli/cli.hpp"
#include "occlume/common/parallel.hpp"
#include "occlume/common/rng.hpp"
#include "occlume/geomesh/cloud_io.hpp"
#include "occlume/geomesh/geomesh.hpp"
#include "occlume/geomesh/procedural.hpp"
#include "occlume/harness/harness.hpp"
#include "occlume/occlusion/camera.hpp"
#include "occlume/occlusion/generate.hpp"
#include "occlume/sampling/sampling.hpp"

using namespace occlume;
namespace fs = std::filesystem;
using ag::Shape;
using ag::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_work;

// ------------------------------------------------------------ 1: gradients

Tensor randn(Shape shape, CounterRng& rng, bool grad = true) {
  std::vector<double> d(ag::numel(shape));
  for (auto& v : d) v = rng.normal();
  return Tensor(std::move(shape), std::move(d), grad);
}

// Fixed random weighting of every output entry, reduced to a scalar.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  CounterRng rng(seed, "probe");
  const Tensor w = randn({y.numel(), 1}, rng, false);
  return ag::sum(ag::matmul(ag::reshape(y, {1, y.numel()}), w));
}

// Values at least `gap` away from zero.
Tensor away_from_zero(Shape shape, CounterRng& rng, double gap) {
  Tensor t = randn(std::move(shape), rng);
  for (auto& v : t.data()) v = v >= 0 ? std::max(v, gap) : std::min(v, -gap);
  return t;
}

// Every entry at least `gap` away from every other, so no max has a near tie.
Tensor separated(Shape shape, CounterRng& rng, double gap) {
  std::vector<double> d(ag::numel(shape));
  std::vector<std::size_t> rank(d.size());
  for (std::size_t j = 0; j < rank.size(); ++j) rank[j] = j;
  for (std::size_t j = rank.size(); j > 1; --j) std::swap(rank[j - 1], rank[rng.below(j)]);
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = static_cast<double>(rank[j]) * (0.3 + gap) + rng.uniform(0.0, 0.3);
  return Tensor(std::move(shape), std::move(d), true);
}

struct OpCase {
  std::string name;
  std::function<ag::GradCheckResult(std::uint64_t)> run;
};

std::vector<OpCase> op_cases() {
  using namespace ag;
  auto gc = [](std::function<Tensor()> f, std::vector<Tensor> in) { return grad_check(f, in); };
  std::vector<OpCase> ops;
  ops.push_back({"matmul", [=](std::uint64_t s) {
                   CounterRng r(s, "matmul");
                   Tensor a = randn({2, 3, 4}, r), w = randn({4, 5}, r);
                   return gc([=] { return probe(matmul(a, w), s); }, {a, w});
                 }});
  ops.push_back({"bmm", [=](std::uint64_t s) {
                   CounterRng r(s, "bmm");
                   Tensor a = randn({2, 3, 4}, r), b = randn({2, 4, 5}, r);
                   return gc([=] { return probe(bmm(a, b), s); }, {a, b});
                 }});
  ops.push_back({"transpose_last", [=](std::uint64_t s) {
                   CounterRng r(s, "transpose");
                   Tensor a = randn({2, 3, 4}, r);
                   return gc([=] { return probe(transpose_last(a), s); }, {a});
                 }});
  ops.push_back({"add", [=](std::uint64_t s) {
                   CounterRng r(s, "add");
                   Tensor a = randn({3, 4}, r), b = randn({3, 4}, r);
                   return gc([=] { return probe(add(a, b), s); }, {a, b});
                 }});
  ops.push_back({"sub", [=](std::uint64_t s) {
                   CounterRng r(s, "sub");
                   Tensor a = randn({3, 4}, r), b = randn({3, 4}, r);
                   return gc([=] { return probe(sub(a, b), s); }, {a, b});
                 }});
  ops.push_back({"add_bias", [=](std::uint64_t s) {
                   CounterRng r(s, "add_bias");
                   Tensor a = randn({2, 3, 4}, r), b = randn({4}, r);
                   return gc([=] { return probe(add_bias(a, b), s); }, {a, b});
                 }});
  ops.push_back({"mul_scalar", [=](std::uint64_t s) {
                   CounterRng r(s, "mul_scalar");
                   Tensor a = randn({3, 4}, r);
                   const double k = r.uniform(-3.0, 3.0);
                   return gc([=] { return probe(mul_scalar(a, k), s); }, {a});
                 }});
  ops.push_back({"relu", [=](std::uint64_t s) {
                   CounterRng r(s, "relu");
                   Tensor a = away_from_zero({4, 5}, r, 1e-3);
                   return gc([=] { return probe(relu(a), s); }, {a});
                 }});
  ops.push_back({"log", [=](std::uint64_t s) {
                   CounterRng r(s, "log");
                   std::vector<double> d(12);
                   for (auto& v : d) v = r.uniform(0.1, 3.0);
                   Tensor a({12}, d, true);
                   return gc([=] { return probe(log(a), s); }, {a});
                 }});
  ops.push_back({"reshape", [=](std::uint64_t s) {
                   CounterRng r(s, "reshape");
                   Tensor a = randn({2, 3, 4}, r);
                   return gc([=] { return probe(reshape(a, {4, 6}), s); }, {a});
                 }});
  ops.push_back({"concat", [=](std::uint64_t s) {
                   CounterRng r(s, "concat");
                   Tensor a = randn({2, 3, 4}, r), b = randn({2, 3, 2}, r), c = randn({1, 3, 4}, r);
                   return gc([=] { return add(probe(concat({a, b}, 2), s), probe(concat({a, c}, 0), s + 1)); },
                             {a, b, c});
                 }});
  ops.push_back({"expand", [=](std::uint64_t s) {
                   CounterRng r(s, "expand");
                   Tensor a = randn({2, 3, 4}, r);
                   return gc([=] { return probe(expand(a, 2, 3), s); }, {a});
                 }});
  ops.push_back({"gather", [=](std::uint64_t s) {
                   CounterRng r(s, "gather");
                   Tensor a = randn({2, 5, 3}, r);
                   std::vector<std::size_t> idx(2 * 4);
                   for (auto& i : idx) i = r.below(5);
                   return gc([=] { return probe(gather(a, idx, 4), s); }, {a});
                 }});
  ops.push_back({"sum", [=](std::uint64_t s) {
                   CounterRng r(s, "sum");
                   Tensor a = randn({3, 4}, r);
                   return gc([=] { return sum(mul_scalar(a, 1.7)); }, {a});
                 }});
  ops.push_back({"mean", [=](std::uint64_t s) {
                   CounterRng r(s, "mean");
                   Tensor a = randn({3, 4}, r);
                   return gc([=] { return mean(a); }, {a});
                 }});
  ops.push_back({"max_over_axis", [=](std::uint64_t s) {
                   CounterRng r(s, "max");
                   Tensor a = separated({2, 5, 3}, r, 1e-3);
                   return gc([=] { return add(probe(max_over_axis(a, 1), s), probe(max_over_axis(a, 0), s + 1)); },
                             {a});
                 }});
  ops.push_back({"softmax_rows", [=](std::uint64_t s) {
                   CounterRng r(s, "softmax");
                   Tensor a = randn({3, 5}, r);
                   const double tau = r.uniform(0.3, 2.0);
                   return gc([=] { return probe(softmax_rows(a, tau), s); }, {a});
                 }});
  ops.push_back({"batch_norm(train)", [=](std::uint64_t s) {
                   CounterRng r(s, "bn-train");
                   Tensor x = randn({6, 4}, r), g = randn({4}, r), b = randn({4}, r);
                   return gc(
                       [=] {
                         BatchNormState st{Tensor::zeros({4}), Tensor::full({4}, 1.0)};
                         return probe(batch_norm(x, g, b, st, true), s);
                       },
                       {x, g, b});
                 }});
  ops.push_back({"batch_norm(eval)", [=](std::uint64_t s) {
                   CounterRng r(s, "bn-eval");
                   Tensor x = randn({6, 4}, r), g = randn({4}, r), b = randn({4}, r);
                   std::vector<double> var(4);
                   for (auto& v : var) v = r.uniform(0.5, 2.0);
                   const Tensor mu = randn({4}, r, false), vt({4}, var);
                   return gc(
                       [=] {
                         BatchNormState st{mu, vt};
                         return probe(batch_norm(x, g, b, st, false), s);
                       },
                       {x, g, b});
                 }});
  ops.push_back({"cross_entropy", [=](std::uint64_t s) {
                   CounterRng r(s, "ce");
                   Tensor logits = randn({4, 3}, r);
                   std::vector<int> labels(4);
                   for (auto& l : labels) l = static_cast<int>(r.below(3));
                   return gc([=] { return cross_entropy(logits, labels); }, {logits});
                 }});
  ops.push_back({"chamfer_loss", [=](std::uint64_t s) {
                   CounterRng r(s, "chamfer");
                   Tensor p = randn({2, 6, 3}, r);
                   const Tensor t = randn({2, 9, 3}, r, false);
                   Tensor q = randn({5, 3}, r);
                   const Tensor u = randn({7, 3}, r, false);
                   return gc([=] { return add(chamfer_loss(p, t), chamfer_loss(q, u)); }, {p, q});
                 }});
  return ops;
}

pointmls::MultiLevelConfig tiny_model() {
  pointmls::MultiLevelConfig c;
  c.points = 32;
  c.classes = 3;
  c.levels = {32, 16, 8};
  c.cps_widths = {8, 8};
  c.cps_weight_hidden = {8};
  c.half_rule_lower = false;
  c.fa_stages = 2;
  c.fa_k = 4;
  c.fa_embed = 4;
  c.fa_embed_light = 4;
  c.fa_head_hidden = 8;
  return c;
}

Outcome criterion_gradients() {
  constexpr double kTol = 1e-4;
  constexpr std::size_t kInstances = 10;
  bool ok = true;
  double worst_op = 0.0, worst_op_raw = 0.0;
  std::size_t op_ties = 0;
  std::string worst_name;
  const auto ops = op_cases();
  for (const auto& op : ops) {
    for (std::size_t s = 1; s <= kInstances; ++s) {
      const auto r = op.run(s);
      op_ties += r.tie_crossings;
      worst_op_raw = std::max(worst_op_raw, r.max_rel_error);
      if (r.max_rel_error_judged >= worst_op) worst_op = r.max_rel_error_judged, worst_name = op.name;
      ok = ok && r.max_rel_error_judged < kTol && r.checked > 0;
    }
  }
  // The straight-through estimator has a surrogate gradient by definition:
  // its forward pass is piecewise constant, so only the identity backward is checked.
  for (std::size_t s = 1; s <= kInstances; ++s) {
    CounterRng r(s, "st");
    Tensor x = randn({3, 4}, r);
    probe(ag::straight_through_onehot(x), s).backward();
    CounterRng w(s, "probe");
    for (std::size_t i = 0; i < 12; ++i) ok = ok && x.grad()[i] == w.normal();
  }

  double worst_full = 0.0, worst_full_raw = 0.0;
  std::size_t ties = 0, within = 0, checked = 0;
  for (std::uint64_t s = 1; s <= kInstances; ++s) {
    const auto r = oracle::full_graph_grad_check(tiny_model(), s, 4, 0.7, 8);
    worst_full = std::max(worst_full, r.max_rel_error_judged);
    worst_full_raw = std::max(worst_full_raw, r.max_rel_error);
    ties += r.tie_crossings, within += r.within_resolution, checked += r.checked;
    ok = ok && r.max_rel_error_judged < kTol && r.tie_crossings * 10 < r.checked;
  }
  return {ok, fmt("%zu ops x %zu instances: worst %.2e (%s), raw %.2e, tie probes %zu; straight-through backward "
                  "= identity; full graph x %zu: worst %.2e, raw %.2e, tie probes %zu/%zu, within f64 "
                  "resolution %zu/%zu",
                  ops.size(), kInstances, worst_op, worst_name.c_str(), worst_op_raw, op_ties, kInstances,
                  worst_full, worst_full_raw, ties, checked, within, checked)};
}

// ------------------------------------------------------- 2: CPS contracts

Outcome criterion_cps() {
  using namespace pointmls;
  bool ok = true;
  double worst_row = 0.0;
  std::size_t soft_off = 0, soft_total = 0, instances = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const std::size_t n = s % 2 ? 64 : 256, m = n / 2;
    MultiLevelConfig cfg;
    cfg.points = n;
    cfg.classes = 3;
    cfg.levels = {m};
    cfg.cps_widths = {16, 32};
    cfg.cps_weight_hidden = {16};
    const auto params = init_params(cfg, s);
    const Tensor x = oracle::seeded_batch(2, n, s + 100);
    for (Mode mode : {Mode::Train, Mode::Eval, Mode::Hard}) {
      const auto out = cps_forward(x, params, "L0.cps", cfg.cps(0), {mode, 0.5, s});
      const double* w = out.weights.data().data();
      const double* p = out.sampled.data().data();
      const double* in = x.data().data();
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < m; ++i) {
          const double* row = w + (b * m + i) * n;
          double total = 0.0;
          std::size_t ones = 0, zeros = 0;
          for (std::size_t j = 0; j < n; ++j) {
            total += row[j];
            ok = ok && row[j] >= 0.0;
            ones += row[j] == 1.0, zeros += row[j] == 0.0;
          }
          const double* q = p + (b * m + i) * 3;
          bool is_input = false;
          double nearest = std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < n; ++j) {
            const double* r = in + (b * n + j) * 3;
            is_input = is_input || (q[0] == r[0] && q[1] == r[1] && q[2] == r[2]);
            nearest = std::min(nearest, std::hypot(q[0] - r[0], q[1] - r[1], q[2] - r[2]));
          }
          if (mode == Mode::Hard) {
            ok = ok && ones == 1 && zeros == n - 1 && is_input;
          } else {
            worst_row = std::max(worst_row, std::abs(total - 1.0));
            soft_off += nearest > 1e-9;
            ++soft_total;
          }
        }
    }
    ++instances;
  }
  ok = ok && worst_row <= 1e-6 && soft_off > 0;
  return {ok, fmt("%zu instances (N=64/256, M=N/2): soft row-sum error %.1e; hard rows one-hot and equal to input "
                  "points; soft rows off the input set %zu/%zu",
                  instances, worst_row, soft_off, soft_total)};
}

// --------------------------------------------------- 3: occlusion geometry

Outcome criterion_occlusion() {
  using namespace occlusion;
  const GenerationConfig cfg;
  const auto& ins = cfg.intrinsics;
  // Exact unit sphere: normalized Gaussian directions.
  CounterRng rng(3, "sphere");
  PointCloud sphere;
  sphere.points.resize(cfg.density);
  for (auto& p : sphere.points) p = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();

  const auto rig = dodecahedron_rig(cfg.radius);
  bool ok = rig.size() == 20;
  double worst_front = 1.0, worst_excess = -1.0;
  std::size_t total = 0, zbuffer_mismatch = 0;
  for (std::size_t v = 0; v < rig.size(); ++v) {
    const auto& ex = rig.views[v];
    const auto dm = project_zbuffer(sphere, ex, ins);
    const auto rec = reconstruct(dm, ex, ins);

    // Oracle: every input point's pixel computed from the definition; the
    // nearest one per pixel is what the camera sees along that pixel's rays.
    std::map<std::pair<int, int>, std::pair<double, std::size_t>> seen;
    for (std::size_t i = 0; i < sphere.size(); ++i) {
      const Vec3 c = ex.R * sphere.points[i] + ex.t;
      if (!(c.z() > 0.0)) continue;
      const double fu = std::floor(ins.fx * c.x() / c.z() + ins.u0), fv = std::floor(ins.fy * c.y() / c.z() + ins.v0);
      if (fu < 0 || fv < 0 || fu >= ins.width || fv >= ins.height) continue;
      const auto key = std::make_pair(static_cast<int>(fv), static_cast<int>(fu));
      auto it = seen.find(key);
      if (it == seen.end() || c.z() < it->second.first - 1e-12) seen[key] = {c.z(), i};
    }
    zbuffer_mismatch += seen.size() != rec.size();

    const Vec3 dir = rig.centers[v].normalized();
    std::size_t front = 0, k = 0;
    for (const auto& [pix, hit] : seen) {  // row-major, the same order as reconstruct
      if (k >= rec.size()) break;
      const Vec3& p = rec.points[k++];
      const Vec3& src = sphere.points[hit.second];
      worst_excess = std::max(worst_excess, (p - src).norm() - quantization_bound(hit.first, ins));
      zbuffer_mismatch += dm.at(pix.second, pix.first) != hit.first;
      front += p.dot(dir) >= 0.0;
    }
    total += rec.size();
    worst_front = std::min(worst_front, static_cast<double>(front) / static_cast<double>(rec.size()));
  }
  ok = ok && zbuffer_mismatch == 0 && worst_excess <= 1e-12 && worst_front >= 0.99;
  return {ok, fmt("20 views, %zu-point unit sphere, %zu reconstructed points: worst camera-facing fraction %.4f; "
                  "max distance to source point minus bound %.2e; oracle z-buffer mismatches %zu",
                  cfg.density, total, worst_front, worst_excess, zbuffer_mismatch)};
}

// ------------------------------------------------------ 4: FPS and kNN

Outcome criterion_fps_knn() {
  bool ok = true;
  std::size_t fps_ok = 0, knn_queries = 0, knn_bad = 0;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    CounterRng rng(s, "fps-instance");
    const std::size_t n = 2 + rng.below(255);
    const std::size_t m = 1 + rng.below(n);
    auto pts = oracle::random_cloud(n, s);
    if (s % 10 == 0) pts[n - 1] = pts[0];  // duplicates
    const std::size_t start = s % 3 == 0 ? sampling::farthest_from_centroid(pts) : rng.below(n);
    const auto sel = sampling::farthest_point_sample(pts, m, start);
    const bool cert = sel.size() == m && sel[0] == start && !oracle::fps_certificate(pts, sel.indices);
    fps_ok += cert;

    const std::size_t k = 1 + rng.below(std::min<std::size_t>(n, 16));
    const auto queries = oracle::random_cloud(8, s + 1000, -1.2, 1.2);
    for (auto backend : {sampling::KnnBackend::BruteForce, sampling::KnnBackend::Grid, sampling::KnnBackend::Auto}) {
      const auto got = sampling::knn(pts, queries, k, backend);
      for (std::size_t q = 0; q < queries.size(); ++q) {
        ++knn_queries;
        knn_bad += got[q].indices != oracle::knn(pts, queries[q], k);
      }
    }
  }
  ok = fps_ok == 100 && knn_bad == 0;
  return {ok, fmt("FPS certificate %zu/100 (N<=256); kNN %zu/%zu queries identical to brute force over 3 backends",
                  fps_ok, knn_queries - knn_bad, knn_queries)};
}

// ------------------------------------------------- toy dataset and models

fs::path toy_root() { return g_work / "toy"; }

const harness::Dataset& toy_dataset() {
  static std::optional<harness::Dataset> ds;
  if (!ds) {
    geomesh::write_toy_meshes(g_work / "toy_meshes", 30, 0);
    occlusion::GenerationConfig g;
    g.points = 256;
    occlusion::build_dataset(g_work / "toy_meshes", toy_root(), g);
    ds = harness::load_dataset(toy_root());
  }
  return *ds;
}

pointmls::MultiLevelConfig toy_model(pointmls::Sampler sampler) {
  pointmls::MultiLevelConfig c;
  c.points = 256;
  c.classes = 3;
  c.levels = {256, 128, 64};
  c.cps_widths = {16, 32, 32};
  c.cps_weight_hidden = {16};
  c.half_rule_lower = false;
  c.fa_stages = 3;
  c.fa_k = 8;
  c.fa_embed = 8;
  c.fa_embed_light = 8;
  c.fa_head_hidden = 32;
  c.sampler = sampler;
  return c;
}

harness::TrainConfig toy_training(std::uint64_t seed) {
  harness::TrainConfig t;
  t.epochs = 20;
  t.batch_size = 16;
  t.lr = 0.1;
  t.scale_lo = 0.8;
  t.scale_hi = 1.25;
  t.scale_per_axis = false;
  t.rotate_up = true;
  t.seed = seed;
  return t;
}

struct ToyRun {
  double oa = 0.0, noisy_oa = 0.0;
  std::size_t epochs = 0;
  // Worst CPS level on a test batch: mean |off-diagonal| and mean diagonal of W W^T.
  double off_diag = 0.0, diag = 0.0;
};

void measure_diversity(ToyRun& r, const pointmls::ModelParams& params, const pointmls::MultiLevelConfig& model,
                       const std::vector<harness::Sample>& test) {
  std::vector<std::vector<double>> clouds;
  for (std::size_t i = 0; i < test.size() && clouds.size() < 32; i += 7) clouds.push_back(test[i].points);
  const auto out = pointmls::multilevel_forward(pointmls::batch_points(clouds, model.points), params, model,
                                                {pointmls::Mode::Eval, 0.01, 0});
  bool first = true;
  for (const auto& level : out.levels) {
    if (!level.weights.defined()) continue;
    const auto d = pointmls::selection_diversity(level.weights);
    if (first || d.mean_off_diagonal / d.mean_diagonal > r.off_diag / r.diag) {
      r.off_diag = d.mean_off_diagonal;
      r.diag = d.mean_diagonal;
    }
    first = false;
  }
}

const ToyRun& toy_run(pointmls::Sampler sampler, std::uint64_t seed) {
  static std::map<std::pair<int, std::uint64_t>, ToyRun> cache;
  const auto key = std::make_pair(static_cast<int>(sampler), seed);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const auto& ds = toy_dataset();
  const auto model = toy_model(sampler);
  const auto tc = toy_training(seed);
  const auto res = harness::train(model, tc, ds.train);
  harness::EvalOptions eo;
  eo.seed = seed;
  harness::NoiseSpec noise;
  noise.seed = seed;
  const auto sweep = harness::robustness_sweep(res.params, model, ds.test, {0.0, 10.0}, noise, eo);
  ToyRun r{sweep[0].metrics.oa, sweep[1].metrics.oa, res.log.size()};
  if (sampler == pointmls::Sampler::Cps) measure_diversity(r, res.params, model, ds.test);
  std::printf("  [toy %s seed %llu] epochs %zu, test OA %.4f, OA at 10%% noise %.4f\n",
              pointmls::sampler_name(sampler), static_cast<unsigned long long>(seed), r.epochs, r.oa, r.noisy_oa);
  std::fflush(stdout);
  return cache[key] = r;
}

// ------------------------------------------------------- 5: view split

Outcome criterion_split() {
  using namespace occlusion;
  const auto rig = dodecahedron_rig(2.2);
  const auto split = cross_view_split(rig);
  std::set<std::size_t> train(split.train.begin(), split.train.end()), test(split.test.begin(), split.test.end());
  std::set<std::size_t> odd, even, all;
  for (std::size_t j = 1; j <= 20; ++j) (j % 2 ? odd : even).insert(j), all.insert(j);
  std::set<std::size_t> both;
  std::set_union(train.begin(), train.end(), test.begin(), test.end(), std::inserter(both, both.end()));
  bool ok = train == odd && test == even && both == all && split.train.size() == 10 && split.test.size() == 10;

  // Every generated toy sample follows the same rule, whatever folder its mesh came from.
  toy_dataset();
  const auto manifest = DatasetManifest::load(toy_root() / "manifest.tsv");
  std::size_t wrong = 0;
  for (const auto& r : manifest.records) wrong += r.split != (r.view % 2 ? Split::Train : Split::Test);
  ok = ok && wrong == 0 && !manifest.records.empty();
  return {ok, fmt("train views {1,3,...,19}, test views {2,4,...,20}, disjoint and exhaustive; toy manifest %zu "
                  "records, %zu with a split other than the view parity",
                  manifest.records.size(), wrong)};
}

// ----------------------------------------------------- 6: toy accuracy

Outcome criterion_toy() {
  toy_dataset();
  const auto& r = toy_run(pointmls::Sampler::Cps, 1);
  return {r.oa >= 0.90 && r.epochs <= 200 && r.off_diag < r.diag,
          fmt("sphere/box/torus, 30 meshes per class, 20 views, N=256, levels 256/128/64: test OA %.4f after %zu "
              "epochs (threshold 0.90); selection W W^T mean |off-diagonal| %.4g < mean diagonal %.4g",
              r.oa, r.epochs, r.off_diag, r.diag)};
}

// ------------------------------------------------- 7: noise robustness

Outcome criterion_robustness() {
  toy_dataset();
  bool any = false;
  std::string rows;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto& c = toy_run(pointmls::Sampler::Cps, seed);
    const auto& f = toy_run(pointmls::Sampler::Fps, seed);
    const double dc = 100.0 * (c.oa - c.noisy_oa), df = 100.0 * (f.oa - f.noisy_oa);
    any = any || dc <= df + 5.0;
    rows += fmt("%sseed %llu: CPS %.1f -> %.1f (drop %.1f), FPS %.1f -> %.1f (drop %.1f)", rows.empty() ? "" : "; ",
                static_cast<unsigned long long>(seed), 100 * c.oa, 100 * c.noisy_oa, dc, 100 * f.oa,
                100 * f.noisy_oa, df);
  }
  return {any, "eta=10%, best of 3 seeds, CPS drop <= FPS drop + 5 points: " + rows};
}

// --------------------------------------------------------- 8: schedules

Outcome criterion_schedules() {
  using namespace harness;
  bool ok = true;
  const std::size_t e = 200;
  for (TauKind k : {TauKind::Cos, TauKind::Lin, TauKind::Exp}) {
    ok = ok && tau_schedule(0, e, k) == 1.0 && tau_schedule(e, e, k) == 0.01;
  }
  ok = ok && lr_schedule(0, e, 0.1) == 0.1 && lr_schedule(e, e, 0.1) == 0.001;
  // Cosine midpoint from the formula end + (start - end) * (1 + cos(pi t)) / 2.
  const double pi = std::acos(-1.0);
  const double tau_mid = 0.01 + 0.5 * (1.0 - 0.01) * (1.0 + std::cos(pi * 0.5));
  const double lr_mid = 0.001 + 0.5 * (0.1 - 0.001) * (1.0 + std::cos(pi * 0.5));
  const double got_tau = tau_schedule(e / 2, e, TauKind::Cos), got_lr = lr_schedule(e / 2, e, 0.1);
  ok = ok && got_tau == tau_mid && got_lr == lr_mid && std::abs(got_tau - 0.505) < 1e-15 &&
       std::abs(got_lr - 0.0505) < 1e-16;
  const double lin_mid = tau_schedule(e / 2, e, TauKind::Lin), exp_mid = tau_schedule(e / 2, e, TauKind::Exp);
  ok = ok && std::abs(lin_mid - 0.505) < 1e-15 && std::abs(exp_mid - 0.1) < 1e-15;
  return {ok, fmt("tau(0)=1, tau(E)=0.01 for cos/lin/exp; lr(0)=0.1, lr(E)=0.001; cosine midpoints %.17g and %.17g; "
                  "linear midpoint %.17g; exponential midpoint %.17g",
                  got_tau, got_lr, lin_mid, exp_mid)};
}

// ---------------------------------------------- 9: full-scale structure

Outcome criterion_full_scale() {
  using namespace occlusion;
  // A ModelNet40-shaped tree (class/split/*.off) goes through the same builder.
  const fs::path root = g_work / "modelnet_layout";
  fs::remove_all(root);
  const std::vector<std::pair<std::string, std::string>> meshes{
      {"airplane", "train"}, {"airplane", "test"}, {"bathtub", "train"}, {"bed", "test"}};
  for (const auto& [cls, split] : meshes) {
    fs::create_directories(root / cls / split);
    geomesh::write_file(root / cls / split / (cls + "_0001.off"),
                        geomesh::write_off(geomesh::make_box(1.0, 0.5 + 0.1 * static_cast<double>(cls.size()), 0.7)));
  }
  GenerationConfig cfg;
  cfg.density = 16384;
  cfg.points = 128;
  const auto rep = build_dataset(root, g_work / "modelnet_layout_out", cfg);
  const auto& m = rep.manifest;
  m.verify(g_work / "modelnet_layout_out");
  bool ok = m.classes.size() == 3 && m.records.size() + m.skipped == meshes.size() * 20;

  std::string count = "no ModelNet40 root given (set OCCLUME_MODELNET40 to run the +-5% count check)";
  if (const char* full = std::getenv("OCCLUME_MODELNET40")) {
    GenerationConfig g;
    const auto big = build_dataset(full, g_work / "modelnet_o", g);
    const double n = static_cast<double>(big.manifest.records.size());
    const bool in_band = std::abs(n - 123041.0) <= 0.05 * 123041.0;
    ok = ok && in_band;
    count = fmt("full build: %zu samples, %s the +-5%% band around 123041", big.manifest.records.size(),
                in_band ? "inside" : "outside");
  }
  return {ok, fmt("full-scale accuracy figures are not reproducible here; structural check: class/split/*.off "
                  "tree -> %zu samples + %zu skipped of %zu pairs, manifest verified; %s",
                  m.records.size(), m.skipped, meshes.size() * 20, count.c_str())};
}

// ------------------------------------------------------ 10: determinism

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = geomesh::read_file(e.path());
  return out;
}

Outcome criterion_determinism() {
  const fs::path root = g_work / "determinism";
  fs::remove_all(root);
  geomesh::write_toy_meshes(root / "meshes", 2, 5);
  const std::vector<std::string> common{
      "occlume", "--seed", "7", "--set", "gen.points=64", "--set", "gen.density=16384", "--set", "model.points=64",
      "--set", "model.classes=3", "--set", "model.levels=64,32", "--set", "model.cps_widths=8", "--set",
      "model.cps_weight_hidden=8", "--set", "model.fa_stages=1", "--set", "model.fa_k=4", "--set",
      "model.fa_embed=4", "--set", "model.fa_embed_light=4", "--set", "model.fa_head_hidden=8", "--set",
      "model.half_rule_lower=false", "--set", "train.batch_size=8", "--set", "train.epochs=2", "--set",
      "eval.votes=2"};
  std::vector<std::map<std::string, std::string>> trees;
  std::vector<std::string> logs;
  bool ok = true;
  for (const auto& [run, threads] : std::vector<std::pair<std::string, std::string>>{{"a", "1"}, {"b", "1"}, {"c", "3"}}) {
    const std::string out = (root / run).string();
    std::string log;
    for (std::vector<std::string> tail :
         {std::vector<std::string>{"gen", "--meshes", (root / "meshes").string()}, {"train"}, {"eval"}}) {
      std::vector<std::string> args = common;
      args.insert(args.end(), {"--threads", threads, "--out", out});
      args.insert(args.end(), tail.begin(), tail.end());
      std::ostringstream o, e;
      const int code = cli::run_cli(args, o, e);
      ok = ok && code == 0;
      std::string text = o.str();
      for (auto pos = text.find(out); pos != std::string::npos; pos = text.find(out)) text.replace(pos, out.size(), "OUT");
      log += text;
    }
    trees.push_back(tree_bytes(root / run));
    logs.push_back(log);
  }
  const bool same_runs = trees[0] == trees[1] && logs[0] == logs[1];
  const bool same_threads = trees[0] == trees[2] && logs[0] == logs[2];
  ok = ok && same_runs && same_threads && trees[0].count("ckpt/model.mls") && trees[0].count("manifest.tsv");
  return {ok, fmt("gen/train/eval through the CLI: %zu output files; two runs with 1 thread %s; 1 vs 3 threads %s",
                  trees[0].size(), same_runs ? "bitwise identical" : "DIFFER",
                  same_threads ? "bitwise identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::temp_directory_path() / "occlume_acceptance";
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else {
      wanted.insert(std::stoi(a));
    }
  }
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"CPS contracts", criterion_cps},
      {"occlusion geometry oracle", criterion_occlusion},
      {"FPS and kNN oracles", criterion_fps_knn},
      {"cross-view split", criterion_split},
      {"toy end-to-end accuracy", criterion_toy},
      {"noise robustness direction", criterion_robustness},
      {"schedule endpoints", criterion_schedules},
      {"full-scale figures (structural)", criterion_full_scale},
      {"determinism", criterion_determinism},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::printf("criterion %2d %-32s %s  %s [%.1fs]\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
