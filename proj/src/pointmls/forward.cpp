#include <algorithm>

#include "occlume/common/error.hpp"
#include "occlume/common/parallel.hpp"
#include "occlume/common/rng.hpp"
#include "occlume/pointmls/model.hpp"
#include "occlume/sampling/sampling.hpp"

namespace occlume::pointmls {

using namespace ag;

namespace {

Tensor block(const Tensor& x, const ModelParams& p, const std::string& name, bool bn, bool train,
             bool activate = true) {
  Tensor y = matmul(x, p.at(name + ".w"));
  if (bn) {
    auto st = p.bn_state(name + ".bn");
    y = batch_norm(y, p.at(name + ".bn.g"), p.at(name + ".bn.b"), st, train);
  } else {
    y = add_bias(y, p.at(name + ".b"));
  }
  return activate ? relu(y) : y;
}

std::vector<geomesh::Vec3> cloud_of(const Tensor& pts, std::size_t b) {
  const std::size_t n = pts.dim(1);
  const double* d = pts.data().data() + b * n * 3;
  std::vector<geomesh::Vec3> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {d[3 * i], d[3 * i + 1], d[3 * i + 2]};
  return out;
}

void check_cloud_batch(const Tensor& pts, const char* who) {
  if (pts.rank() != 3 || pts.dim(2) != 3) {
    throw ShapeError(std::string(who) + ": expected [B, N, 3], got " + shape_str(pts.shape()));
  }
}

}  // namespace

CpsOutput cps_forward(const Tensor& points, const ModelParams& params, const std::string& prefix,
                      const CpsConfig& cfg, const ForwardOptions& opt) {
  check_cloud_batch(points, "cps_forward");
  cfg.validate();
  if (points.dim(1) != cfg.n_in) {
    throw ShapeError("cps_forward: expected " + std::to_string(cfg.n_in) + " points, got " +
                     std::to_string(points.dim(1)));
  }
  if (!(opt.tau > 0.0)) throw InvalidArgument("cps_forward: temperature must be > 0");
  const bool train = opt.mode == Mode::Train;
  const std::size_t n = cfg.n_in;

  Tensor f = points;
  for (std::size_t i = 0; i < cfg.feature_widths.size(); ++i) {
    f = block(f, params, prefix + ".f" + std::to_string(i), cfg.batch_norm, train);
  }
  Tensor global = expand(max_over_axis(f, 1), 1, n);
  Tensor h = concat({f, global}, 2);
  for (std::size_t i = 0; i < cfg.weight_hidden.size(); ++i) {
    h = block(h, params, prefix + ".w" + std::to_string(i), cfg.batch_norm, train);
  }
  Tensor logits = transpose_last(matmul(h, params.at(prefix + ".out.w")));  // [B, M, N]
  if (train) logits = add(logits, gumbel_noise(logits.shape(), derive_seed(opt.seed, prefix)));

  Tensor w = softmax_rows(logits, opt.tau);
  if (opt.mode == Mode::Hard) w = straight_through_onehot(w);
  return {bmm(w, points), w};
}

Tensor fa_forward(const Tensor& points, const ModelParams& params, const std::string& prefix,
                  const FaConfig& cfg, Mode mode) {
  check_cloud_batch(points, "fa_forward");
  cfg.validate(points.dim(1));
  const bool train = mode == Mode::Train;
  const std::size_t bs = points.dim(0);

  Tensor xyz = points;
  Tensor feat = block(points, params, prefix + ".embed", cfg.batch_norm, train);
  for (std::size_t t = 0; t < cfg.stages; ++t) {
    const std::string st = prefix + ".s" + std::to_string(t);
    const std::size_t n = xyz.dim(1), q = n / 2, k = std::min(cfg.k, n), ch = feat.dim(2);

    std::vector<std::size_t> centers(bs * q), neighbors(bs * q * k);
    parallel_for(bs, [&](std::size_t b0, std::size_t b1) {
      for (std::size_t b = b0; b < b1; ++b) {
        const auto cloud = cloud_of(xyz, b);
        const auto sel = sampling::farthest_point_sample(cloud, q, sampling::farthest_from_centroid(cloud));
        std::vector<geomesh::Vec3> queries = sampling::gather(cloud, sel);
        const auto nn = sampling::knn(cloud, queries, k, sampling::KnnBackend::BruteForce);
        for (std::size_t j = 0; j < q; ++j) {
          centers[b * q + j] = sel[j];
          std::copy(nn[j].indices.begin(), nn[j].indices.end(), neighbors.begin() + (b * q + j) * k);
        }
      }
    });
    ag::BranchTrace::record(centers);
    ag::BranchTrace::record(neighbors);

    Tensor center_xyz = gather(xyz, centers, q);                                // [B, q, 3]
    Tensor group_xyz = reshape(gather(xyz, neighbors, q * k), {bs, q, k, 3});
    Tensor rel = sub(group_xyz, expand(center_xyz, 2, k));
    Tensor group_feat = reshape(gather(feat, neighbors, q * k), {bs, q, k, ch});
    Tensor x = block(concat({group_feat, rel}, 3), params, st + ".transfer", cfg.batch_norm, train);
    x = relu(add(block(x, params, st + ".res", cfg.batch_norm, train, false), x));
    feat = max_over_axis(x, 2);  // [B, q, 2ch]
    xyz = center_xyz;
  }
  Tensor g = max_over_axis(feat, 1);
  g = block(g, params, prefix + ".head", cfg.batch_norm, train);
  return add_bias(matmul(g, params.at(prefix + ".out.w")), params.at(prefix + ".out.b"));
}

MultiLevelOutput multilevel_forward(const Tensor& points, const ModelParams& params,
                                    const MultiLevelConfig& cfg, const ForwardOptions& opt) {
  check_cloud_batch(points, "multilevel_forward");
  if (points.dim(1) != cfg.points) {
    throw ShapeError("multilevel_forward: expected " + std::to_string(cfg.points) + " points, got " +
                     std::to_string(points.dim(1)));
  }
  const std::size_t bs = points.dim(0);
  const auto alpha = cfg.weights();
  MultiLevelOutput out;
  for (std::size_t s = 0; s < cfg.levels.size(); ++s) {
    const std::string lv = "L" + std::to_string(s);
    const std::size_t m = cfg.levels[s];
    LevelOutput level;
    if (cfg.sampler == Sampler::Cps) {
      ForwardOptions o = opt;
      o.seed = derive_seed(opt.seed, "level", s);
      auto c = cps_forward(points, params, lv + ".cps", cfg.cps(s), o);
      level.sampled = c.sampled;
      level.weights = c.weights;
    } else {
      std::vector<std::size_t> idx(bs * m);
      for (std::size_t b = 0; b < bs; ++b) {
        const auto cloud = cloud_of(points, b);
        const auto sel = cfg.sampler == Sampler::Fps
                             ? sampling::farthest_point_sample(cloud, m, sampling::farthest_from_centroid(cloud))
                             : sampling::random_sample(cloud, m, derive_seed(opt.seed, "rs", s * bs + b));
        std::copy(sel.indices.begin(), sel.indices.end(), idx.begin() + b * m);
      }
      ag::BranchTrace::record(idx);
      level.sampled = gather(points, idx, m);
    }
    level.logits = fa_forward(level.sampled, params, lv + ".fa", cfg.fa(s), opt.mode);
    Tensor weighted = mul_scalar(level.logits, alpha[s]);
    out.logits = out.logits.defined() ? add(out.logits, weighted) : weighted;
    out.levels.push_back(std::move(level));
  }
  return out;
}

LossTerms total_loss(const MultiLevelOutput& out, std::span<const int> labels, const Tensor& points,
                     const MultiLevelConfig& cfg) {
  LossTerms terms;
  Tensor cls = cross_entropy(out.logits, labels);
  terms.cls = cls.item();
  terms.total = cls;
  if (cfg.sampler != Sampler::Cps || cfg.spl == SplScope::None || cfg.lambda == 0.0) return terms;
  const Tensor target = points.detach();
  Tensor spl;
  for (std::size_t s = 0; s < out.levels.size(); ++s) {
    if (cfg.spl == SplScope::Top && s > 0) break;
    Tensor c = chamfer_loss(out.levels[s].sampled, target);
    spl = spl.defined() ? add(spl, c) : c;
  }
  terms.spl = spl.item();
  terms.total = add(cls, mul_scalar(spl, cfg.lambda));
  return terms;
}

SelectionDiversity selection_diversity(const Tensor& weights) {
  if (weights.rank() != 3) throw ShapeError("selection_diversity: expected [B, M, N]");
  const std::size_t bs = weights.dim(0), m = weights.dim(1), n = weights.dim(2);
  SelectionDiversity d;
  const double* w = weights.data().data();
  for (std::size_t b = 0; b < bs; ++b) {
    const double* wb = w + b * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < n; ++t) dot += wb[i * n + t] * wb[j * n + t];
        (i == j ? d.mean_diagonal : d.mean_off_diagonal) += std::abs(dot);
      }
  }
  d.mean_diagonal /= static_cast<double>(bs * m);
  if (m > 1) d.mean_off_diagonal /= static_cast<double>(bs * m * (m - 1));
  return d;
}

Tensor batch_points(const std::vector<std::vector<double>>& clouds, std::size_t n) {
  std::vector<double> data;
  data.reserve(clouds.size() * n * 3);
  for (const auto& c : clouds) {
    if (c.size() != n * 3) throw ShapeError("batch_points: cloud size mismatch");
    data.insert(data.end(), c.begin(), c.end());
  }
  return Tensor({clouds.size(), n, 3}, std::move(data));
}

}  // namespace occlume::pointmls
