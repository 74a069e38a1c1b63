#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace occlume::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Graph node shared by tensor handles. `backward_fn` receives this node's
/// gradient and accumulates into the parents.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first written
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const std::vector<double>&)> backward_fn;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

/// Dense row-major f64 tensor handle. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t rank() const { return n_->shape.size(); }
  /// Size of dimension `i`; negative values count from the back.
  std::size_t dim(int i) const;
  std::size_t numel() const { return n_->data.size(); }

  std::span<double> data() { return n_->data; }
  std::span<const double> data() const { return n_->data; }
  double item() const;

  bool has_grad() const { return !n_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<double> grad() { return n_->grad_buffer(); }
  std::span<const double> grad() const { return n_->grad_buffer(); }
  void zero_grad();

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool on) { n_->requires_grad = on; }
  bool is_leaf() const { return !n_->backward_fn; }

  /// Reverse-mode sweep from this scalar. Intermediate gradients are reset on
  /// every call; leaf gradients accumulate.
  void backward() const;

  /// Value copy without graph history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return n_; }
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node> n_;
};

/// Build an op result. The closure is recorded only when a parent needs grad.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(const std::vector<double>&)> backward_fn);

/// While alive, ops on this thread record no graph (inference only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// When enabled, every op result is scanned for NaN/Inf.
void set_debug_checks(bool on);
bool debug_checks();

}  // namespace occlume::ag
