#include "occlume/autograd/tensor.hpp"

#include <atomic>
#include <cmath>
#include <unordered_set>

#include "occlume/common/error.hpp"

namespace occlume::ag {

namespace {
std::atomic<bool> g_debug_checks{false};
thread_local bool t_no_grad = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_no_grad) { t_no_grad = true; }
NoGradGuard::~NoGradGuard() { t_no_grad = previous_; }

void set_debug_checks(bool on) { g_debug_checks = on; }
bool debug_checks() { return g_debug_checks; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (ag::numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  n_ = std::make_shared<Node>();
  n_->shape = std::move(shape);
  n_->data = std::move(data);
  n_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ag::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

std::size_t Tensor::dim(int i) const {
  const int r = static_cast<int>(rank());
  const int k = i < 0 ? r + i : i;
  if (k < 0 || k >= r) throw ShapeError("dim " + std::to_string(i) + " out of range for " + shape_str(shape()));
  return n_->shape[static_cast<std::size_t>(k)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return n_->data[0];
}

void Tensor::zero_grad() { n_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(n_->shape, n_->data, false); }

void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward() needs a scalar root, got " + shape_str(shape()));

  // Post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{n_.get(), 0}};
  seen.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->backward_fn) node->grad.assign(node->data.size(), 0.0);
  }
  n_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) node->backward_fn(node->grad);
  }
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(const std::vector<double>&)> backward_fn) {
  Tensor out(std::move(shape), std::move(data), false);
  if (g_debug_checks) {
    for (double v : out.data()) {
      if (!std::isfinite(v)) throw Error("non-finite value produced by tensor op");
    }
  }
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  needs = needs && !t_no_grad;
  if (needs) {
    auto& n = *out.node();
    n.requires_grad = true;
    for (auto& p : parents) n.parents.push_back(p.node());
    n.backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace occlume::ag
