#include "mdet/training.hpp"

#include "mdet/parallel.hpp"
#include "mdet/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mdet {
namespace {

template <typename S>
double sample_gradient(const MdEt<S>& model, const MolecularSystem& system, GradientBuffer& out) {
  auto fw = model.forward(system, {true, false});
  Tensor<S> target(Shape{system.size(), 3});
  target.matrix() = system.reference_forces->template cast<S>();
  auto loss = force_loss(fw->forces, fw->tape.constant(std::move(target)));
  fw->tape.backward(loss);
  model.accumulate_gradients(*fw, out);
  return static_cast<double>(loss.value().item());
}

// Mean loss over `batch`; `grads` receives the mean gradient. Per-sample
// buffers are reduced in index order so the result does not depend on threads.
double batch_gradient(const ModelConfig& model_cfg, const ParameterStore& params,
                      const std::vector<AugmentedSample>& batch, int precision, int threads, GradientBuffer& grads) {
  std::vector<GradientBuffer> partial(batch.size(), GradientBuffer(params));
  std::vector<double> losses(batch.size());
  if (precision == 32) {
    MdEt<float> model(model_cfg, params);
    parallel_for(static_cast<long>(batch.size()), threads, [&](long k) {
      losses[static_cast<std::size_t>(k)] = sample_gradient(model, batch[static_cast<std::size_t>(k)].system,
                                                            partial[static_cast<std::size_t>(k)]);
    });
  } else {
    MdEt<double> model(model_cfg, params);
    parallel_for(static_cast<long>(batch.size()), threads, [&](long k) {
      losses[static_cast<std::size_t>(k)] = sample_gradient(model, batch[static_cast<std::size_t>(k)].system,
                                                            partial[static_cast<std::size_t>(k)]);
    });
  }
  grads.zero();
  double loss = 0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    grads += partial[k];
    loss += losses[k];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grads.grads) g.array() *= inv;
  return loss * inv;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (!(learning_rate > 0) || !(initial_lr > 0) || !(min_lr > 0)) fail("learning rates must be positive");
  if (total_steps < 1) fail("total_steps must be positive");
  if (warmup_steps < 0 || warmup_steps >= total_steps) fail("warmup_steps must be in [0, total_steps)");
  if (batch_size < 1) fail("batch_size must be positive");
  if (augment && batch_size % 2 != 0) fail("batch_size must be even when augmentation is on");
  if (weight_decay < 0 || !(grad_clip > 0)) fail("weight_decay must be >= 0 and grad_clip > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0)) fail("invalid Adam constants");
  if (precision != 32 && precision != 64) fail("precision must be 32 or 64");
  if (threads < 1) fail("threads must be positive");
  if (eval_every < 0) fail("eval_every must be >= 0");
}

TrainConfig TrainConfig::paper() {
  TrainConfig cfg;
  cfg.learning_rate = 5e-4;
  cfg.initial_lr = 1e-6;
  cfg.min_lr = 5e-8;
  cfg.warmup_steps = 5000;
  cfg.total_steps = 880000;
  cfg.batch_size = 1024;
  cfg.weight_decay = 1e-7;
  cfg.grad_clip = 1.0;
  return cfg;
}

const std::set<std::string>& TrainConfig::keys() {
  static const std::set<std::string> k{"learning_rate", "initial_lr",   "min_lr", "warmup_steps", "total_steps",
                                       "batch_size",    "weight_decay", "grad_clip", "beta1",     "beta2",
                                       "adam_eps",      "augment",      "eval_every"};
  return k;
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv, TrainConfig cfg) {
  cfg.learning_rate = kv.get_double("learning_rate", cfg.learning_rate);
  cfg.initial_lr = kv.get_double("initial_lr", cfg.initial_lr);
  cfg.min_lr = kv.get_double("min_lr", cfg.min_lr);
  cfg.warmup_steps = kv.get_int("warmup_steps", cfg.warmup_steps);
  cfg.total_steps = kv.get_int("total_steps", cfg.total_steps);
  cfg.batch_size = kv.get_int("batch_size", cfg.batch_size);
  cfg.weight_decay = kv.get_double("weight_decay", cfg.weight_decay);
  cfg.grad_clip = kv.get_double("grad_clip", cfg.grad_clip);
  cfg.beta1 = kv.get_double("beta1", cfg.beta1);
  cfg.beta2 = kv.get_double("beta2", cfg.beta2);
  cfg.adam_eps = kv.get_double("adam_eps", cfg.adam_eps);
  cfg.augment = kv.get_bool("augment", cfg.augment);
  cfg.eval_every = kv.get_int("eval_every", cfg.eval_every);
  return cfg;
}

KeyValueConfig TrainConfig::to_kv() const {
  KeyValueConfig kv;
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  kv.set("learning_rate", num(learning_rate));
  kv.set("initial_lr", num(initial_lr));
  kv.set("min_lr", num(min_lr));
  kv.set("warmup_steps", std::to_string(warmup_steps));
  kv.set("total_steps", std::to_string(total_steps));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("weight_decay", num(weight_decay));
  kv.set("grad_clip", num(grad_clip));
  kv.set("beta1", num(beta1));
  kv.set("beta2", num(beta2));
  kv.set("adam_eps", num(adam_eps));
  kv.set("augment", augment ? "true" : "false");
  kv.set("eval_every", std::to_string(eval_every));
  return kv;
}

double cosine_warmup_lr(Index step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw std::out_of_range("cosine_warmup_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(cfg.total_steps) + "]");
  }
  if (step < cfg.warmup_steps) {
    return cfg.initial_lr +
           (cfg.learning_rate - cfg.initial_lr) * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double p =
      static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  const double c = 0.5 * (1 + std::cos(std::numbers::pi * p));
  const double span = cfg.learning_rate - cfg.min_lr;
  // Anchor each half on its own endpoint so both are hit exactly.
  return p <= 0.5 ? cfg.learning_rate - span * (1 - c) : cfg.min_lr + span * c;
}

MolecularSystem apply_orthogonal(const MolecularSystem& system, const Eigen::Matrix3d& q) {
  MolecularSystem out = system;
  out.positions = rotate_rows(system.positions, q);
  if (system.reference_forces) out.reference_forces = rotate_rows(*system.reference_forces, q);
  return out;
}

std::vector<AugmentedSample> augment(const std::vector<MolecularSystem>& batch, std::mt19937_64& rng) {
  std::vector<AugmentedSample> out;
  out.reserve(2 * batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    for (int copy = 0; copy < 2; ++copy) {
      const Eigen::Matrix3d q = random_orthogonal(rng);
      out.push_back({apply_orthogonal(batch[k], q), q, k});
    }
  }
  return out;
}

AdamState::AdamState(const ParameterStore& store) {
  for (const auto& e : store.entries()) {
    m.emplace_back(e.value.shape());
    v.emplace_back(e.value.shape());
  }
}

OptimizerReport optimizer_step(ParameterStore& params, GradientBuffer& grads, AdamState& state,
                               const TrainConfig& cfg, double lr) {
  auto& entries = params.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (!grads.grads[k].all_finite()) {
      throw TrainingAborted("non-finite gradient for parameter " + entries[k].path);
    }
  }
  OptimizerReport report;
  report.grad_norm = grads.global_norm();
  if (report.grad_norm > cfg.grad_clip) report.clip_scale = cfg.grad_clip / report.grad_norm;
  ++state.step;
  const double bc1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& g = grads.grads[k].array();
    g *= report.clip_scale;
    auto& m = state.m[k].array();
    auto& v = state.v[k].array();
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g.square();
    auto& theta = entries[k].value.array();
    theta *= 1 - lr * cfg.weight_decay;
    theta -= lr * (m / bc1) / ((v / bc2).sqrt() + cfg.adam_eps);
  }
  return report;
}

double force_mae(const ModelConfig& model_cfg, const ParameterStore& params, const Dataset& data, int precision,
                 int threads) {
  if (data.empty()) throw std::invalid_argument("force_mae: empty dataset");
  std::vector<double> abs_sum(data.size());
  auto run = [&](const auto& model) {
    parallel_for(static_cast<long>(data.size()), threads, [&](long k) {
      const auto& s = data.systems[static_cast<std::size_t>(k)];
      abs_sum[static_cast<std::size_t>(k)] = (model.predict_forces(s) - *s.reference_forces).cwiseAbs().sum();
    });
  };
  if (precision == 32) {
    run(MdEt<float>(model_cfg, params));
  } else {
    run(MdEt<double>(model_cfg, params));
  }
  double total = 0;
  Index components = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    total += abs_sum[k];
    components += 3 * data.systems[k].size();
  }
  return total / static_cast<double>(components);
}

TrainResult train(const Dataset& train_set, const Dataset& validation, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, std::optional<ParameterStore> init,
                  const std::function<void(const MetricsRow&)>& progress) {
  cfg.validate();
  model_cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: training set is empty");
  if (validation.empty()) throw std::invalid_argument("train: validation set is empty");

  TrainResult result{init ? std::move(*init) : init_parameters(model_cfg, cfg.seed), {}, 0, 0};
  ParameterStore& params = result.params;
  AdamState adam(params);
  GradientBuffer grads(params);
  std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);

  const Index sources = cfg.augment ? cfg.batch_size / 2 : cfg.batch_size;
  const auto n_train = static_cast<Index>(train_set.size());
  const Index epoch_steps = std::max<Index>(1, (n_train + sources - 1) / sources);
  const Index eval_every = cfg.eval_every > 0 ? cfg.eval_every : epoch_steps;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  result.initial_val_mae = force_mae(model_cfg, params, validation, cfg.precision, cfg.threads);
  for (Index step = 1; step <= cfg.total_steps; ++step) {
    std::vector<MolecularSystem> batch;
    for (Index b = 0; b < sources; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(train_set.systems[order[cursor++]]);
    }
    std::vector<AugmentedSample> samples;
    if (cfg.augment) {
      samples = augment(batch, rng);
    } else {
      for (std::size_t k = 0; k < batch.size(); ++k) samples.push_back({batch[k], Eigen::Matrix3d::Identity(), k});
    }

    const double loss = batch_gradient(model_cfg, params, samples, cfg.precision, cfg.threads, grads);
    if (!std::isfinite(loss)) throw TrainingAborted("loss diverged at step " + std::to_string(step));
    const double lr = cosine_warmup_lr(step, cfg);
    try {
      optimizer_step(params, grads, adam, cfg, lr);
    } catch (const TrainingAborted& e) {
      throw TrainingAborted(std::string(e.what()) + " at step " + std::to_string(step));
    }

    MetricsRow row{step, lr, loss, std::nullopt};
    if (step % eval_every == 0 || step == cfg.total_steps) {
      row.val_mae = force_mae(model_cfg, params, validation, cfg.precision, cfg.threads);
      result.final_val_mae = *row.val_mae;
    }
    result.metrics.push_back(row);
    if (progress) progress(row);
  }
  return result;
}

void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "step,lr,loss,val_mae\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.step << ',' << r.lr << ',' << r.loss << ',';
    if (r.val_mae) out << *r.val_mae;
    out << '\n';
  }
}

}  // namespace mdet
