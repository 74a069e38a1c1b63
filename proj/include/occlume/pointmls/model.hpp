#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "occlume/autograd/ops.hpp"
#include "occlume/autograd/optim.hpp"
#include "occlume/common/kv_config.hpp"

namespace occlume::pointmls {

using ag::Shape;
using ag::Tensor;

enum class Mode {
  Train,  // batch statistics, Gumbel noise
  Eval,   // running statistics, no noise
  Hard    // eval plus straight-through one-hot selection
};

enum class Sampler { Cps, Fps, Random };
const char* sampler_name(Sampler s);
Sampler parse_sampler(const std::string& s);

/// Which CPS levels contribute a Chamfer term to the loss.
enum class SplScope { All, Top, None };

struct CpsConfig {
  std::size_t n_in = 1024;
  std::size_t m_out = 512;
  std::vector<std::size_t> feature_widths{64, 128, 256, 512, 512};
  std::vector<std::size_t> weight_hidden{256};
  /// Replace the last feature width by M/2.
  bool half_rule = false;
  bool batch_norm = true;

  /// Feature dimension D after the M/2 rule is applied.
  std::size_t feature_dim() const;
  void validate() const;
};

struct FaConfig {
  std::size_t stages = 4;
  std::size_t k = 24;
  std::size_t embed = 64;
  std::size_t head_hidden = 256;
  std::size_t classes = 40;
  bool batch_norm = true;

  void validate(std::size_t points) const;
  /// Point count after each stage for an input of `points`.
  std::vector<std::size_t> stage_points(std::size_t points) const;
};

struct MultiLevelConfig {
  std::size_t points = 1024;
  std::size_t classes = 40;
  std::vector<std::size_t> levels{1024, 512, 256, 128};
  std::vector<double> alpha;  // empty = uniform
  Sampler sampler = Sampler::Cps;

  std::vector<std::size_t> cps_widths{64, 128, 256, 512, 512};
  std::vector<std::size_t> cps_weight_hidden{256};
  /// Apply D = M/2 below the top level.
  bool half_rule_lower = true;

  std::size_t fa_stages = 4;
  std::size_t fa_k = 24;
  std::size_t fa_embed = 64;
  std::size_t fa_embed_light = 32;
  std::size_t fa_head_hidden = 256;

  bool batch_norm = true;
  double lambda = 1.0;
  SplScope spl = SplScope::All;

  CpsConfig cps(std::size_t level) const;
  FaConfig fa(std::size_t level) const;
  /// Fusion weights normalized to sum 1.
  std::vector<double> weights() const;
  void validate() const;

  static MultiLevelConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
};

/// Named tensors: trainable parameters plus normalization buffers.
class ModelParams {
 public:
  Tensor& add(const std::string& name, Shape shape, bool trainable);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  /// Trainable tensors in creation order.
  std::vector<Tensor> trainable() const;
  std::vector<std::string> trainable_names() const;
  std::vector<ag::NamedTensor> all() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  /// Normalization state bound to the "<prefix>.mean" / "<prefix>.var" buffers.
  ag::BatchNormState bn_state(const std::string& prefix) const;

  /// Deep copy with independent storage.
  ModelParams clone() const;
  /// Copy values from a checkpoint; names and shapes must match exactly.
  void assign(const std::vector<ag::NamedTensor>& values);
  bool all_finite() const;

 private:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Fan-in scaled uniform init (bound sqrt(6/fan_in)); norms start at scale 1,
/// shift 0, running mean 0, running variance 1.
ModelParams init_params(const MultiLevelConfig& cfg, std::uint64_t seed);

struct ForwardOptions {
  Mode mode = Mode::Eval;
  double tau = 1.0;
  std::uint64_t seed = 0;
};

struct CpsOutput {
  Tensor sampled;  // [B, M, 3]
  Tensor weights;  // [B, M, N]
};

/// Critical point sampling over a batch of clouds [B, N, 3].
CpsOutput cps_forward(const Tensor& points, const ModelParams& params, const std::string& prefix,
                      const CpsConfig& cfg, const ForwardOptions& opt);

/// Feature aggregation over sampled clouds [B, M, 3]; returns logits [B, C].
Tensor fa_forward(const Tensor& points, const ModelParams& params, const std::string& prefix,
                  const FaConfig& cfg, Mode mode);

struct LevelOutput {
  Tensor logits;   // [B, C]
  Tensor sampled;  // [B, M_s, 3]
  Tensor weights;  // [B, M_s, N]; undefined for index samplers
};

struct MultiLevelOutput {
  Tensor logits;  // [B, C] fused scores
  std::vector<LevelOutput> levels;
};

MultiLevelOutput multilevel_forward(const Tensor& points, const ModelParams& params,
                                    const MultiLevelConfig& cfg, const ForwardOptions& opt);

struct LossTerms {
  Tensor total;
  double cls = 0.0;
  double spl = 0.0;
};

/// Cross-entropy of the fused scores plus lambda times the Chamfer terms.
LossTerms total_loss(const MultiLevelOutput& out, std::span<const int> labels, const Tensor& points,
                     const MultiLevelConfig& cfg);

/// Mean |off-diagonal| and mean diagonal of W W^T, averaged over the batch.
struct SelectionDiversity {
  double mean_diagonal = 0.0;
  double mean_off_diagonal = 0.0;
};
SelectionDiversity selection_diversity(const Tensor& weights);

/// Pack clouds of equal size into a [B, N, 3] tensor.
Tensor batch_points(const std::vector<std::vector<double>>& clouds, std::size_t n);

}  // namespace occlume::pointmls
