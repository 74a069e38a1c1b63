#include "occlume/autograd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "occlume/common/error.hpp"
#include "occlume/common/rng.hpp"

namespace occlume::ag {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                                      shape_str(b.shape()) + " differ");
}

// Split a shape around `axis` into (outer, len, inner).
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};
AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Accumulate into a parent's gradient only when it participates in backward.
template <class F>
void accumulate(const std::shared_ptr<Node>& p, F&& f) {
  if (p->requires_grad) f(p->grad_buffer());
}

thread_local BranchTrace* active_trace = nullptr;

void record_mask(const double* x, std::size_t n) {
  if (!BranchTrace::active()) return;
  std::vector<std::size_t> words((n + 63) / 64, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0) words[i / 64] |= std::size_t{1} << (i % 64);
  BranchTrace::record(words);
}

}  // namespace

BranchTrace::BranchTrace() : outer_(active_trace) { active_trace = this; }
BranchTrace::~BranchTrace() { active_trace = outer_; }

bool BranchTrace::active() { return active_trace != nullptr; }

void BranchTrace::fold(std::uint64_t v) {
  digest_ = mix64(digest_ ^ mix64(v + 0x9e3779b97f4a7c15ULL));
  if (outer_) outer_->fold(v);
}

void BranchTrace::record(std::span<const std::size_t> choices) {
  if (!active_trace) return;
  active_trace->fold(choices.size());
  for (std::size_t c : choices) active_trace->fold(c);
}

Tensor matmul(const Tensor& a, const Tensor& w) {
  require(a.rank() >= 1 && w.rank() == 2, "matmul: expected [..., K] x [K, N]");
  const std::size_t k = a.dim(-1);
  require(w.dim(0) == k, "matmul: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(w.shape()));
  const std::size_t n = w.dim(1);
  const std::size_t m = a.numel() / std::max<std::size_t>(k, 1);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(a.data().data(), w.data().data(), out.data(), m, k, n);
  auto an = a.node(), wn = w.node();
  return make_result(std::move(out_shape), std::move(out), {a, w},
                     [an, wn, m, k, n](const std::vector<double>& g) {
                       accumulate(an, [&](auto& ga) { kernels::gemm_nt(g.data(), wn->data.data(), ga.data(), m, k, n); });
                       accumulate(wn, [&](auto& gw) { kernels::gemm_tn(an->data.data(), g.data(), gw.data(), m, k, n); });
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
          "bmm: expected [B,M,K] x [B,K,N], got " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(bs * m * n, 0.0);
  for (std::size_t i = 0; i < bs; ++i) {
    kernels::gemm_nn(a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n, m, k, n);
  }
  auto an = a.node(), bn = b.node();
  return make_result({bs, m, n}, std::move(out), {a, b}, [an, bn, bs, m, k, n](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) {
      for (std::size_t i = 0; i < bs; ++i)
        kernels::gemm_nt(g.data() + i * m * n, bn->data.data() + i * k * n, ga.data() + i * m * k, m, k, n);
    });
    accumulate(bn, [&](auto& gb) {
      for (std::size_t i = 0; i < bs; ++i)
        kernels::gemm_tn(an->data.data() + i * m * k, g.data() + i * m * n, gb.data() + i * k * n, m, k, n);
    });
  });
}

Tensor transpose_last(const Tensor& a) {
  require(a.rank() >= 2, "transpose_last: rank < 2");
  const std::size_t m = a.dim(-2), n = a.dim(-1);
  const std::size_t batches = a.numel() / std::max<std::size_t>(m * n, 1);
  Shape s = a.shape();
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  std::vector<double> out(a.numel());
  const auto src = a.data();
  for (std::size_t b = 0; b < batches; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = src[b * m * n + i * n + j];
  auto an = a.node();
  return make_result(std::move(s), std::move(out), {a}, [an, batches, m, n](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) {
      for (std::size_t b = 0; b < batches; ++b)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[b * m * n + i * n + j] += g[b * m * n + j * m + i];
    });
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [an, bn](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(bn, [&](auto& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i]; });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [an, bn](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(bn, [&](auto& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i]; });
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require(a.rank() >= 1 && bias.rank() == 1 && bias.dim(0) == a.dim(-1),
          "add_bias: " + shape_str(a.shape()) + " + " + shape_str(bias.shape()));
  const std::size_t c = bias.dim(0);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + bias.data()[i % c];
  auto an = a.node(), bn = bias.node();
  return make_result(a.shape(), std::move(out), {a, bias}, [an, bn, c](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(bn, [&](auto& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i]; });
  });
}

Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {a}, [an, s](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i]; });
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  record_mask(a.data().data(), a.numel());
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {a}, [an](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (an->data[i] > 0.0) ga[i] += g[i];
    });
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {a}, [an](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / an->data[i]; });
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel(shape) == a.numel(), "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  auto an = a.node();
  return make_result(std::move(shape), std::move(out), {a}, [an](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  require(axis < s0.size(), "concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    require(p.rank() == s0.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      require(i == axis || p.shape()[i] == s0[i], "concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(s0));
    lens.push_back(p.shape()[axis]);
    out_shape[axis] += p.shape()[axis];
  }
  const auto sp = split_at(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto src = parts[q].data();
    const std::size_t block = lens[q] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(src.data() + o * block, block, out.data() + o * sp.len * sp.inner + offset * sp.inner);
    offset += lens[q];
  }
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result(std::move(out_shape), std::move(out), parts,
                     [nodes, lens, sp](const std::vector<double>& g) {
                       std::size_t offset = 0;
                       for (std::size_t q = 0; q < nodes.size(); ++q) {
                         const std::size_t block = lens[q] * sp.inner;
                         accumulate(nodes[q], [&](auto& gp) {
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                             const double* src = g.data() + o * sp.len * sp.inner + offset * sp.inner;
                             double* dst = gp.data() + o * block;
                             for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                           }
                         });
                         offset += lens[q];
                       }
                     });
}

Tensor expand(const Tensor& a, std::size_t axis, std::size_t n) {
  require(axis <= a.rank(), "expand: axis out of range");
  Shape out_shape = a.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis; i < a.rank(); ++i) inner *= a.shape()[i];
  std::vector<double> out(outer * n * inner);
  const auto src = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j) std::copy_n(src.data() + o * inner, inner, out.data() + (o * n + j) * inner);
  auto an = a.node();
  return make_result(std::move(out_shape), std::move(out), {a}, [an, outer, n, inner](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < inner; ++i) ga[o * inner + i] += g[(o * n + j) * inner + i];
    });
  });
}

Tensor gather(const Tensor& a, std::span<const std::size_t> index, std::size_t per_batch) {
  require(a.rank() == 3, "gather: expected [B, N, C], got " + shape_str(a.shape()));
  const std::size_t bs = a.dim(0), n = a.dim(1), c = a.dim(2);
  require(index.size() == bs * per_batch, "gather: index count does not match batch");
  std::vector<double> out(bs * per_batch * c);
  const auto src = a.data();
  for (std::size_t b = 0; b < bs; ++b) {
    for (std::size_t q = 0; q < per_batch; ++q) {
      const std::size_t r = index[b * per_batch + q];
      if (r >= n) throw InvalidArgument("gather: index " + std::to_string(r) + " out of range");
      std::copy_n(src.data() + (b * n + r) * c, c, out.data() + (b * per_batch + q) * c);
    }
  }
  auto an = a.node();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({bs, per_batch, c}, std::move(out), {a},
                     [an, idx = std::move(idx), bs, n, c, per_batch](const std::vector<double>& g) {
                       accumulate(an, [&](auto& ga) {
                         for (std::size_t b = 0; b < bs; ++b)
                           for (std::size_t q = 0; q < per_batch; ++q) {
                             double* dst = ga.data() + (b * n + idx[b * per_batch + q]) * c;
                             const double* s = g.data() + (b * per_batch + q) * c;
                             for (std::size_t i = 0; i < c; ++i) dst[i] += s[i];
                           }
                       });
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto an = a.node();
  return make_result({}, {s}, {a}, [an](const std::vector<double>& g) {
    accumulate(an, [&](auto& ga) { for (auto& v : ga) v += g[0]; });
  });
}

Tensor mean(const Tensor& a) {
  require(a.numel() > 0, "mean: empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor max_over_axis(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), "max_over_axis: axis out of range");
  const auto sp = split_at(a.shape(), axis);
  require(sp.len > 0, "max_over_axis: empty axis");
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(sp.outer * sp.inner);
  std::vector<std::size_t> arg(out.size(), 0);
  const auto src = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const double* base = src.data() + o * sp.len * sp.inner;
    double* best = out.data() + o * sp.inner;
    std::size_t* which = arg.data() + o * sp.inner;
    std::copy_n(base, sp.inner, best);
    for (std::size_t j = 1; j < sp.len; ++j) {
      const double* row = base + j * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) {
        if (row[i] > best[i]) {
          best[i] = row[i];
          which[i] = j;
        }
      }
    }
  }
  BranchTrace::record(arg);
  auto an = a.node();
  return make_result(std::move(out_shape), std::move(out), {a},
                     [an, arg = std::move(arg), sp](const std::vector<double>& g) {
                       accumulate(an, [&](auto& ga) {
                         for (std::size_t o = 0; o < sp.outer; ++o)
                           for (std::size_t i = 0; i < sp.inner; ++i) {
                             const std::size_t j = arg[o * sp.inner + i];
                             ga[(o * sp.len + j) * sp.inner + i] += g[o * sp.inner + i];
                           }
                       });
                     });
}

Tensor softmax_rows(const Tensor& a, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("softmax_rows: temperature must be > 0");
  require(a.rank() >= 1 && a.dim(-1) > 0, "softmax_rows: empty rows");
  const std::size_t n = a.dim(-1), rows = a.numel() / n;
  std::vector<double> out(a.numel());
  const auto src = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = src.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp((x[j] - mx) / tau));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  auto an = a.node();
  Tensor result = make_result(a.shape(), std::move(out), {a}, nullptr);
  if (result.requires_grad()) {
    std::weak_ptr<Node> self = result.node();
    result.node()->backward_fn = [an, self, rows, n, tau](const std::vector<double>& g) {
      const auto& y = self.lock()->data;
      accumulate(an, [&](auto& ga) {
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
          for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot) / tau;
        }
      });
    };
  }
  return result;
}

Tensor straight_through_onehot(const Tensor& soft) {
  require(soft.rank() >= 1 && soft.dim(-1) > 0, "straight_through_onehot: empty rows");
  const std::size_t n = soft.dim(-1), rows = soft.numel() / n;
  std::vector<double> out(soft.numel(), 0.0);
  std::vector<std::size_t> arg(rows);
  const auto src = soft.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = src.data() + r * n;
    arg[r] = static_cast<std::size_t>(std::max_element(x, x + n) - x);
    out[r * n + arg[r]] = 1.0;
  }
  BranchTrace::record(arg);
  auto sn = soft.node();
  return make_result(soft.shape(), std::move(out), {soft}, [sn](const std::vector<double>& g) {
    accumulate(sn, [&](auto& gs) { for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i]; });
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool train) {
  require(x.rank() >= 1, "batch_norm: scalar input");
  const std::size_t c = x.dim(-1), rows = x.numel() / std::max<std::size_t>(c, 1);
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c}, "batch_norm: affine shape mismatch");
  require(state.running_mean.defined() && state.running_mean.numel() == c && state.running_var.numel() == c,
          "batch_norm: running buffers missing");
  require(rows > 0, "batch_norm: empty input");
  const auto src = x.data();

  std::vector<double> mu(c, 0.0), var(c, 0.0);
  if (train) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mu[j] += src[r * c + j];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = src[r * c + j] - mu[j];
        var[j] += d * d;
      }
    auto rm = state.running_mean.data(), rv = state.running_var.data();
    const double unbiased = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      var[j] /= static_cast<double>(rows);
      rm[j] = (1.0 - state.momentum) * rm[j] + state.momentum * mu[j];
      rv[j] = (1.0 - state.momentum) * rv[j] + state.momentum * var[j] * unbiased;
    }
  } else {
    std::copy(state.running_mean.data().begin(), state.running_mean.data().end(), mu.begin());
    std::copy(state.running_var.data().begin(), state.running_var.data().end(), var.begin());
  }

  std::vector<double> inv_std(c), xhat(x.numel()), out(x.numel());
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
  const auto gm = gamma.data(), bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = r * c + j;
      xhat[i] = (src[i] - mu[j]) * inv_std[j];
      out[i] = gm[j] * xhat[i] + bt[j];
    }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [xn, gn, bn, xhat = std::move(xhat), inv_std, rows, c, train](const std::vector<double>& g) {
                       std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < c; ++j) {
                           sum_g[j] += g[r * c + j];
                           sum_gx[j] += g[r * c + j] * xhat[r * c + j];
                         }
                       accumulate(gn, [&](auto& gg) { for (std::size_t j = 0; j < c; ++j) gg[j] += sum_gx[j]; });
                       accumulate(bn, [&](auto& gb) { for (std::size_t j = 0; j < c; ++j) gb[j] += sum_g[j]; });
                       accumulate(xn, [&](auto& gx) {
                         const double inv_rows = 1.0 / static_cast<double>(rows);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < c; ++j) {
                             const std::size_t i = r * c + j;
                             const double scale = gn->data[j] * inv_std[j];
                             gx[i] += train ? scale * (g[i] - inv_rows * sum_g[j] - xhat[i] * inv_rows * sum_gx[j])
                                            : scale * g[i];
                           }
                       });
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2, "cross_entropy: expected [B, C]");
  const std::size_t bs = logits.dim(0), c = logits.dim(1);
  require(labels.size() == bs, "cross_entropy: label count does not match batch");
  const auto src = logits.data();
  std::vector<double> prob(bs * c);
  double loss = 0.0;
  for (std::size_t b = 0; b < bs; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= c)
      throw InvalidArgument("cross_entropy: label " + std::to_string(labels[b]) + " out of range");
    const double* x = src.data() + b * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (prob[b * c + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) prob[b * c + j] /= z;
    loss += mx + std::log(z) - x[labels[b]];
  }
  loss /= static_cast<double>(bs);
  auto ln = logits.node();
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result({}, {loss}, {logits},
                     [ln, prob = std::move(prob), lab = std::move(lab), bs, c](const std::vector<double>& g) {
                       accumulate(ln, [&](auto& gl) {
                         const double s = g[0] / static_cast<double>(bs);
                         for (std::size_t b = 0; b < bs; ++b)
                           for (std::size_t j = 0; j < c; ++j)
                             gl[b * c + j] += s * (prob[b * c + j] - (static_cast<int>(j) == lab[b] ? 1.0 : 0.0));
                       });
                     });
}

namespace {
std::size_t nearest(const double* q, const double* pts, std::size_t n, double& best) {
  std::size_t arg = 0;
  best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = q[0] - pts[3 * j], dy = q[1] - pts[3 * j + 1], dz = q[2] - pts[3 * j + 2];
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < best) {
      best = d;
      arg = j;
    }
  }
  return arg;
}
}  // namespace

Tensor chamfer_loss(const Tensor& pred, const Tensor& target) {
  const bool batched = pred.rank() == 3;
  require((pred.rank() == 2 || batched) && target.rank() == pred.rank() && pred.dim(-1) == 3 &&
              target.dim(-1) == 3 && (!batched || pred.dim(0) == target.dim(0)),
          "chamfer_loss: expected [M,3]/[N,3] or [B,M,3]/[B,N,3], got " + shape_str(pred.shape()) + " and " +
              shape_str(target.shape()));
  const std::size_t bs = batched ? pred.dim(0) : 1;
  const std::size_t m = pred.dim(-2), n = target.dim(-2);
  if (m == 0 || n == 0) throw InvalidArgument("chamfer_loss: empty operand");
  const double* p = pred.data().data();
  const double* t = target.data().data();
  std::vector<std::size_t> p2t(bs * m), t2p(bs * n);
  double total = 0.0;
  for (std::size_t b = 0; b < bs; ++b) {
    double forward = 0.0, reverse = 0.0, d = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      p2t[b * m + i] = nearest(p + (b * m + i) * 3, t + b * n * 3, n, d);
      forward += d;
    }
    for (std::size_t j = 0; j < n; ++j) {
      t2p[b * n + j] = nearest(t + (b * n + j) * 3, p + b * m * 3, m, d);
      reverse += d;
    }
    total += forward / static_cast<double>(m) + reverse / static_cast<double>(n);
  }
  total /= static_cast<double>(bs);
  BranchTrace::record(p2t);
  BranchTrace::record(t2p);
  auto pn = pred.node(), tn = target.node();
  return make_result({}, {total}, {pred},
                     [pn, tn, p2t = std::move(p2t), t2p = std::move(t2p), bs, m, n](const std::vector<double>& g) {
                       accumulate(pn, [&](auto& gp) {
                         const double* pp = pn->data.data();
                         const double* tt = tn->data.data();
                         const double sf = 2.0 * g[0] / static_cast<double>(bs * m);
                         const double sr = 2.0 * g[0] / static_cast<double>(bs * n);
                         for (std::size_t b = 0; b < bs; ++b) {
                           for (std::size_t i = 0; i < m; ++i) {
                             const std::size_t pi = b * m + i, tj = b * n + p2t[pi];
                             for (int k = 0; k < 3; ++k) gp[pi * 3 + k] += sf * (pp[pi * 3 + k] - tt[tj * 3 + k]);
                           }
                           for (std::size_t j = 0; j < n; ++j) {
                             const std::size_t tj = b * n + j, pi = b * m + t2p[tj];
                             for (int k = 0; k < 3; ++k) gp[pi * 3 + k] += sr * (pp[pi * 3 + k] - tt[tj * 3 + k]);
                           }
                         }
                       });
                     });
}

Tensor gumbel_noise(Shape shape, std::uint64_t seed) {
  CounterRng rng(seed, "gumbel");
  std::vector<double> out(numel(shape));
  for (auto& v : out) {
    const double u = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
    v = -std::log(-std::log(u));
  }
  return Tensor(std::move(shape), std::move(out), false);
}

}  // namespace occlume::ag
