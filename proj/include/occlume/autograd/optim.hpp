#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "occlume/autograd/tensor.hpp"

namespace occlume::ag {

struct SgdState {
  double lr = 0.1;
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;  // one per parameter, lazily sized
};

/// v <- momentum * v + g; p <- p - lr * v. Parameters without a gradient are
/// treated as having a zero gradient.
void sgd_step(std::span<Tensor> params, SgdState& state);

struct GradCheckResult {
  double max_rel_error = 0.0;  // over every checked component
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;

  // A probe that changes a BranchTrace digest straddles a relu/max/selection
  // tie, where no central difference can match the derivative.
  std::size_t tie_crossings = 0;
  // |analytic - numeric| within kGradCheckUlps ulps of f, divided by 2*eps:
  // the central difference carries no information beyond that.
  std::size_t within_resolution = 0;
  // Max relative error over the remaining components.
  double max_rel_error_judged = 0.0;
};

inline constexpr double kGradCheckUlps = 4.0;

/// Compare backward gradients of the scalar f() with respect to `inputs`
/// against central differences. f must read the inputs' current data.
/// `max_per_input` > 0 checks a seeded subset of components per input.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                           double eps = 1e-5, std::size_t max_per_input = 0,
                           std::uint64_t subset_seed = 0);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace occlume::ag
