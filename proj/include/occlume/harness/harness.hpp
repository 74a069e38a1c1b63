#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "occlume/common/error.hpp"
#include "occlume/common/kv_config.hpp"
#include "occlume/geomesh/types.hpp"
#include "occlume/occlusion/generate.hpp"
#include "occlume/pointmls/model.hpp"

namespace occlume::harness {

using pointmls::ModelParams;
using pointmls::MultiLevelConfig;

// ---------------------------------------------------------------- schedules

enum class TauKind { Cos, Lin, Exp };
const char* tau_kind_name(TauKind k);
TauKind parse_tau_kind(const std::string& s);

/// Temperature from 1.0 at epoch 0 down to 0.01 at epoch == total.
double tau_schedule(std::size_t epoch, std::size_t total, TauKind kind);
/// Cosine decay from base at epoch 0 to base/100 at epoch == total.
double lr_schedule(std::size_t epoch, std::size_t total, double base);

// ------------------------------------------------------------------ metrics

struct Metrics {
  std::size_t classes = 0;
  std::vector<std::size_t> confusion;  // row = true class, column = predicted
  double oa = 0.0;
  double macc = 0.0;

  std::size_t at(std::size_t truth, std::size_t pred) const { return confusion[truth * classes + pred]; }
  std::size_t total() const;
};

Metrics metrics_from_confusion(std::size_t classes, std::vector<std::size_t> confusion);
Metrics compute_metrics(std::span<const int> truth, std::span<const int> pred, std::size_t classes);

// -------------------------------------------------------------------- noise

struct NoiseSpec {
  enum class Mode { Replace, Add } mode = Mode::Replace;
  enum class Dist { Normal, UniformCube } dist = Dist::Normal;
  double eta = 0.0;         // replace mode: fraction in [0, 1]
  std::size_t count = 0;    // add mode
  double scale = 0.5;       // sigma, or cube half-width
  bool clip_unit_ball = true;
  std::uint64_t seed = 0;

  void validate() const;
};

geomesh::PointCloud inject_noise(const geomesh::PointCloud& pc, const NoiseSpec& spec);

// ------------------------------------------------------------------ dataset

struct Sample {
  std::string sample_id;  // shared by all views of one mesh
  std::size_t view = 0;
  int label = 0;
  std::vector<double> points;  // N x 3, row-major
};

struct Dataset {
  std::vector<std::string> classes;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Read every cloud listed in `<root>/manifest.tsv`.
Dataset load_dataset(const std::filesystem::path& root);

/// Held-out monitoring subset: about 10% of samples, chosen by a hash of the
/// sample id so every view of a mesh lands on the same side.
bool is_holdout(const std::string& sample_id);

// ----------------------------------------------------------------- training

struct TrainConfig {
  std::size_t epochs = 65;
  std::size_t batch_size = 32;
  double lr = 0.1;
  double momentum = 0.9;
  TauKind tau = TauKind::Cos;
  /// Per-sample random scaling of training clouds; lo = hi = 1 disables it.
  double scale_lo = 2.0 / 3.0;
  double scale_hi = 1.5;
  bool scale_per_axis = true;
  /// Random rotation of training clouds about the +z (up) axis.
  bool rotate_up = false;
  std::uint64_t seed = 0;

  void validate() const;
  static TrainConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double lr = 0.0;
  double tau = 0.0;
  double holdout_oa = 0.0;  // NaN without a holdout set
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

/// Thrown when the loss turns non-finite; carries the offending batch.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<std::string> batch_ids)
      : Error(what), batch_ids_(std::move(batch_ids)) {}
  const std::vector<std::string>& batch_ids() const { return batch_ids_; }

 private:
  std::vector<std::string> batch_ids_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Train on `train` minus the holdout subset, starting from `init` when given.
TrainResult train(const MultiLevelConfig& model, const TrainConfig& cfg, const std::vector<Sample>& train,
                  const EpochCallback& on_epoch = {}, const ModelParams* init = nullptr);

// --------------------------------------------------------------- evaluation

struct EvalOptions {
  std::size_t votes = 1;
  double scale_lo = 0.8;
  double scale_hi = 1.25;
  double tau = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct Evaluation {
  Metrics metrics;
  std::vector<int> predictions;
};

/// Eval-mode scores averaged over `votes` isotropic rescalings (votes == 1
/// uses the cloud as is), then argmax.
Evaluation evaluate(const ModelParams& params, const MultiLevelConfig& model, const std::vector<Sample>& samples,
                    const EvalOptions& opt);

struct SweepRow {
  double eta = 0.0;  // percent of points replaced
  Metrics metrics;
};

/// Evaluate under each replace ratio (given in percent) with fixed noise seeds.
std::vector<SweepRow> robustness_sweep(const ModelParams& params, const MultiLevelConfig& model,
                                       const std::vector<Sample>& samples, const std::vector<double>& eta_percent,
                                       const NoiseSpec& base, const EvalOptions& opt);

// ---------------------------------------------------------------------- CSV

std::string log_csv(const std::vector<EpochLog>& log, const KvConfig& header);
std::string metrics_csv(const Metrics& m, const std::vector<std::string>& classes, const KvConfig& header);
std::string sweep_csv(const std::vector<SweepRow>& rows, const KvConfig& header);

}  // namespace occlume::harness
