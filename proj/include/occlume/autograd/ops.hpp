#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "occlume/autograd/tensor.hpp"

namespace occlume::ag {

// Linear algebra. `matmul` treats all leading axes of `a` as rows, so a shared
// weight applies to every point of every batch element.
Tensor matmul(const Tensor& a, const Tensor& w);          // [..., K] x [K, N] -> [..., N]
Tensor bmm(const Tensor& a, const Tensor& b);             // [B, M, K] x [B, K, N] -> [B, M, N]
Tensor transpose_last(const Tensor& a);                   // [..., M, N] -> [..., N, M]

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& a, const Tensor& bias);     // [..., C] + [C]
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);

// Structure.
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Insert a new axis of size `n` at `axis`, repeating the input along it.
Tensor expand(const Tensor& a, std::size_t axis, std::size_t n);
/// rows[b, q, :] = a[b, index[b*Q + q], :] for a of shape [B, N, C].
Tensor gather(const Tensor& a, std::span<const std::size_t> index, std::size_t per_batch);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Max along `axis` (removed from the shape). Gradient goes to the argmax,
/// lowest index on ties.
Tensor max_over_axis(const Tensor& a, std::size_t axis);

/// Softmax over the last axis of a / tau, with max subtraction.
Tensor softmax_rows(const Tensor& a, double tau);
/// Forward: one-hot of each last-axis row's argmax. Backward: identity.
Tensor straight_through_onehot(const Tensor& soft);

/// Per-channel normalization over all leading axes of x = [..., C].
/// Train mode uses batch statistics and updates the running buffers in place;
/// eval mode is the affine map defined by the running buffers.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool train);

/// Mean over the batch of -log softmax(logits)[label]; logits = [B, C].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Symmetric mean squared nearest-neighbor distance between pred and a constant
/// target. Rank 2 ([M,3] vs [N,3]) or rank 3 (batched, averaged over B).
Tensor chamfer_loss(const Tensor& pred, const Tensor& target);

/// I.i.d. Gumbel(0,1) draws, no gradient.
Tensor gumbel_noise(Shape shape, std::uint64_t seed);

/// While alive, folds the branch taken by every piecewise op on this thread
/// (relu signs, max and argmax winners, Chamfer nearest neighbors, plus any
/// discrete choice passed to record) into a digest. Two evaluations with the
/// same digest ran on the same smooth piece. Traces nest.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return digest_; }

  /// No-op unless a trace is active on this thread.
  static void record(std::span<const std::size_t> choices);
  static bool active();

 private:
  void fold(std::uint64_t v);
  std::uint64_t digest_ = 0;
  BranchTrace* outer_ = nullptr;
};

}  // namespace occlume::ag
