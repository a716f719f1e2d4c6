#pragma once

#include "mdet/dataset.hpp"
#include "mdet/model.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>

namespace mdet {

/// Divergence, non-finite gradients or other numerical failure during training.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 5e-4;  // peak
  double initial_lr = 1e-6;
  double min_lr = 5e-8;
  Index warmup_steps = 250;
  Index total_steps = 5000;
  /// Systems per step after augmentation; with augmentation on, half as many sources.
  Index batch_size = 16;
  double weight_decay = 1e-7;
  double grad_clip = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool augment = true;
  /// Validation interval in steps; 0 means once per epoch over the training sources.
  Index eval_every = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  int precision = 64;

  void validate() const;
  static TrainConfig toy() { return {}; }
  /// Large-scale schedule: 880k steps, batch 1024, warmup 5000.
  static TrainConfig paper();
  static const std::set<std::string>& keys();
  static TrainConfig from_kv(const KeyValueConfig& kv, TrainConfig base);
  KeyValueConfig to_kv() const;
};

/// Linear warmup from initial_lr to the peak, then cosine decay to min_lr.
/// Valid for 0 ≤ step ≤ total_steps.
double cosine_warmup_lr(Index step, const TrainConfig& cfg);

struct AugmentedSample {
  MolecularSystem system;
  Eigen::Matrix3d transform;  // Q ∈ O(3) applied to positions and forces
  std::size_t source;
};

/// x → Q x and f* → Q f* on every row.
MolecularSystem apply_orthogonal(const MolecularSystem& system, const Eigen::Matrix3d& q);

/// Two copies of every source, each under its own uniform O(3) draw.
std::vector<AugmentedSample> augment(const std::vector<MolecularSystem>& batch, std::mt19937_64& rng);

struct AdamState {
  std::vector<Tensor<double>> m;
  std::vector<Tensor<double>> v;
  Index step = 0;
  explicit AdamState(const ParameterStore& store);
};

struct OptimizerReport {
  double grad_norm = 0;   // before clipping
  double clip_scale = 1;  // factor applied to the gradient
};

/// AdamW with global-norm clipping applied to `grads` before the moments.
/// Throws TrainingAborted naming the first parameter with a non-finite gradient.
OptimizerReport optimizer_step(ParameterStore& params, GradientBuffer& grads, AdamState& state,
                               const TrainConfig& cfg, double lr);

/// Component-wise mean absolute force error over a dataset, eV/Å.
double force_mae(const ModelConfig& model_cfg, const ParameterStore& params, const Dataset& data, int precision,
                 int threads);

struct MetricsRow {
  Index step;
  double lr;
  double loss;
  std::optional<double> val_mae;
};

struct TrainResult {
  ParameterStore params;
  std::vector<MetricsRow> metrics;
  double initial_val_mae = 0;
  double final_val_mae = 0;
};

/// Trains from `init` (or fresh parameters seeded by cfg.seed) on `train`,
/// validating on `validation`. `progress` sees every metrics row.
TrainResult train(const Dataset& train, const Dataset& validation, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, std::optional<ParameterStore> init = std::nullopt,
                  const std::function<void(const MetricsRow&)>& progress = {});

/// CSV with header `step,lr,loss,val_mae`; val_mae is empty between evaluations.
void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows);

}  // namespace mdet
