#include "mdet/training.hpp"
#include "mdet/provider.hpp"
#include "mdet/rotation.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace mdet;
using namespace mdet::testing;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.n_rbf = 4;
  cfg.n_fourier = 4;
  return cfg;
}

TrainConfig short_run(Index steps) {
  TrainConfig cfg;
  cfg.total_steps = steps;
  cfg.warmup_steps = steps / 10;
  cfg.batch_size = 8;
  cfg.learning_rate = 5e-3;
  cfg.seed = 3;
  return cfg;
}

Dataset morse_corpus(Index structures, Index conformers, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_structures = structures;
  cfg.conformers_per_structure = conformers;
  cfg.spread = 0.05;
  cfg.max_atoms = 4;
  std::mt19937_64 rng(seed);
  return generate_synthetic(MorsePotential{}, cfg, rng);
}

ParameterStore fill(ParameterStore store, double value) {
  for (auto& e : store.entries()) e.value.array().setConstant(value);
  return store;
}

}  // namespace

TEST(Schedule, AnchoredValues) {
  TrainConfig cfg;
  cfg.warmup_steps = 5000;
  cfg.total_steps = 880000;
  EXPECT_EQ(cosine_warmup_lr(0, cfg), 1e-6);
  EXPECT_EQ(cosine_warmup_lr(5000, cfg), 5e-4);
  EXPECT_EQ(cosine_warmup_lr(880000, cfg), 5e-8);
  EXPECT_NEAR(cosine_warmup_lr(5000 + 875000 / 2, cfg), (5e-4 + 5e-8) / 2, 1e-18);
  EXPECT_NEAR(cosine_warmup_lr(2500, cfg), (1e-6 + 5e-4) / 2, 1e-18);
  EXPECT_THROW(cosine_warmup_lr(-1, cfg), std::out_of_range);
  EXPECT_THROW(cosine_warmup_lr(880001, cfg), std::out_of_range);
}

TEST(Schedule, MonotoneSegments) {
  const TrainConfig cfg = TrainConfig::toy();
  for (Index s = 1; s <= cfg.total_steps; ++s) {
    if (s <= cfg.warmup_steps) {
      EXPECT_GT(cosine_warmup_lr(s, cfg), cosine_warmup_lr(s - 1, cfg));
    } else {
      EXPECT_LE(cosine_warmup_lr(s, cfg), cosine_warmup_lr(s - 1, cfg));
    }
  }
}

TEST(TrainConfigTest, ValidationAndPresets) {
  TrainConfig bad;
  bad.warmup_steps = bad.total_steps;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.learning_rate = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  const auto paper = TrainConfig::paper();
  EXPECT_EQ(paper.total_steps, 880000);
  EXPECT_EQ(paper.warmup_steps, 5000);
  EXPECT_EQ(paper.batch_size, 1024);
  EXPECT_EQ(paper.weight_decay, 1e-7);
  EXPECT_EQ(paper.grad_clip, 1.0);
  const auto back = TrainConfig::from_kv(paper.to_kv(), TrainConfig{});
  EXPECT_EQ(back.to_kv().entries(), paper.to_kv().entries());
}

TEST(Augment, IdentityDrawCopiesSource) {
  const auto s = morse_corpus(1, 1, 1).systems[0];
  const auto copy = apply_orthogonal(s, Eigen::Matrix3d::Identity());
  EXPECT_EQ(copy.positions, s.positions);
  EXPECT_EQ(*copy.reference_forces, *s.reference_forces);
  EXPECT_EQ(copy.atomic_numbers, s.atomic_numbers);
}

TEST(Augment, DoublesBatchAndPreservesGeometry) {
  const auto data = morse_corpus(6, 1, 2);
  std::mt19937_64 rng(3);
  const auto out = augment(data.systems, rng);
  ASSERT_EQ(out.size(), 2 * data.size());
  std::set<std::size_t> sources;
  for (const auto& a : out) {
    sources.insert(a.source);
    const auto& src = data.systems[a.source];
    EXPECT_LE((a.transform.transpose() * a.transform - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((a.system.positions - src.positions * a.transform.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((*a.system.reference_forces - *src.reference_forces * a.transform.transpose()).cwiseAbs().maxCoeff(),
              1e-12);
    for (Index i = 0; i < src.size(); ++i)
      for (Index j = 0; j < src.size(); ++j)
        EXPECT_NEAR((a.system.positions.row(i) - a.system.positions.row(j)).norm(),
                    (src.positions.row(i) - src.positions.row(j)).norm(), 1e-12);
  }
  EXPECT_EQ(sources.size(), data.size());
}

TEST(Augment, ReflectionFrequencyIsHalf) {
  const auto data = morse_corpus(1, 1, 4);
  std::mt19937_64 rng(5);
  int flips = 0, draws = 0;
  for (int k = 0; k < 500; ++k) {
    for (const auto& a : augment(data.systems, rng)) {
      const double det = a.transform.determinant();
      EXPECT_NEAR(std::abs(det), 1.0, 1e-12);
      flips += det < 0;
      ++draws;
    }
  }
  EXPECT_EQ(draws, 1000);
  EXPECT_NEAR(flips / 1000.0, 0.5, 0.05);
}

TEST(Augment, LossUsesTransformedLabels) {
  const auto cfg = tiny_config();
  const auto params = init_parameters(cfg, 6);
  ModelProvider<double> model(cfg, params);
  const auto s = morse_corpus(1, 1, 7).systems[0];
  std::mt19937_64 rng(8);
  const Eigen::Matrix3d q = random_orthogonal(rng).matrix();
  MolecularSystem manual = s;
  manual.positions = s.positions * q.transpose();
  manual.reference_forces = Forces(*s.reference_forces * q.transpose());
  const auto augmented = apply_orthogonal(s, q);
  EXPECT_EQ(force_loss(model.forces(augmented), *augmented.reference_forces),
            force_loss(model.forces(manual), *manual.reference_forces));
}

TEST(Optimizer, ZeroGradientZeroDecayLeavesParameters) {
  auto params = init_parameters(tiny_config(), 9);
  const auto before = params;
  GradientBuffer grads(params);
  AdamState state(params);
  TrainConfig cfg;
  cfg.weight_decay = 0;
  for (int k = 0; k < 5; ++k) optimizer_step(params, grads, state, cfg, 1e-3);
  for (std::size_t k = 0; k < params.size(); ++k)
    EXPECT_EQ(params.entries()[k].value.array().matrix(), before.entries()[k].value.array().matrix());
}

TEST(Optimizer, ConstantGradientStepApproachesLearningRate) {
  auto params = fill(init_parameters(tiny_config(), 10), 0.0);
  GradientBuffer grads(params);
  AdamState state(params);
  TrainConfig cfg;
  cfg.weight_decay = 0;
  cfg.grad_clip = 1e9;
  const double lr = 1e-3;
  for (int step = 0; step < 200; ++step) {
    for (auto& g : grads.grads) g.array().setConstant(0.25);
    const auto before = params.entries()[0].value[0];
    optimizer_step(params, grads, state, cfg, lr);
    const double delta = before - params.entries()[0].value[0];
    // Bias correction makes every step lr·g/(|g| + eps).
    EXPECT_NEAR(delta, lr * 0.25 / (0.25 + cfg.adam_eps), 1e-12);
  }
}

TEST(Optimizer, GlobalNormClipping) {
  auto params = init_parameters(tiny_config(), 11);
  GradientBuffer grads(params);
  for (auto& g : grads.grads) g.array().setConstant(1.0);
  const double norm = grads.global_norm();
  for (auto& g : grads.grads) g.array() *= 10.0 / norm;
  const GradientBuffer raw = grads;
  AdamState state(params);
  TrainConfig cfg;
  const auto report = optimizer_step(params, grads, state, cfg, 1e-3);
  EXPECT_NEAR(report.grad_norm, 10.0, 1e-12);
  EXPECT_NEAR(report.clip_scale, 0.1, 1e-15);
  EXPECT_NEAR(grads.global_norm(), 1.0, 1e-12);
  for (std::size_t k = 0; k < raw.grads.size(); ++k)
    for (Index i = 0; i < raw.grads[k].size(); ++i) {
      EXPECT_NEAR(grads.grads[k][i], 0.1 * raw.grads[k][i], 1e-15);
      EXPECT_NEAR(state.m[k][i], (1 - cfg.beta1) * 0.1 * raw.grads[k][i], 1e-15);
    }
}

TEST(Optimizer, DecoupledWeightDecay) {
  auto params = fill(init_parameters(tiny_config(), 12), 2.0);
  GradientBuffer grads(params);
  AdamState state(params);
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  optimizer_step(params, grads, state, cfg, 0.5);
  EXPECT_NEAR(params.entries()[0].value[0], 2.0 * (1 - 0.5 * 0.1), 1e-15);
}

TEST(Optimizer, NonFiniteGradientNamesParameter) {
  auto params = init_parameters(tiny_config(), 13);
  GradientBuffer grads(params);
  const std::string path = params.entries()[3].path;
  grads.grads[3][0] = std::numeric_limits<double>::quiet_NaN();
  AdamState state(params);
  const auto before = params;
  try {
    optimizer_step(params, grads, state, TrainConfig{}, 1e-3);
    FAIL();
  } catch (const TrainingAborted& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos) << e.what();
  }
  EXPECT_EQ(params.entries()[0].value.array().matrix(), before.entries()[0].value.array().matrix());
}

TEST(Train, EmptyDatasetRejected) {
  EXPECT_THROW(train(Dataset{}, morse_corpus(2, 1, 1), tiny_config(), short_run(10)), std::invalid_argument);
}

TEST(Train, SameSeedSameCurve) {
  const auto data = morse_corpus(8, 2, 14);
  const auto split = split_dataset(data, {0.75, 0.25, 0.0}, 1);
  const auto a = train(split.train, split.validation, tiny_config(), short_run(20));
  const auto b = train(split.train, split.validation, tiny_config(), short_run(20));
  ASSERT_EQ(a.metrics.size(), 20u);
  for (std::size_t k = 0; k < a.metrics.size(); ++k) {
    EXPECT_EQ(a.metrics[k].loss, b.metrics[k].loss);
    EXPECT_EQ(a.metrics[k].step, static_cast<Index>(k + 1));
  }
  EXPECT_EQ(a.final_val_mae, b.final_val_mae);
}

TEST(Train, ThreadCountDoesNotChangeResult) {
  const auto data = morse_corpus(8, 2, 15);
  const auto split = split_dataset(data, {0.75, 0.25, 0.0}, 1);
  auto cfg = short_run(5);
  const auto one = train(split.train, split.validation, tiny_config(), cfg);
  cfg.threads = 3;
  const auto three = train(split.train, split.validation, tiny_config(), cfg);
  for (std::size_t k = 0; k < one.metrics.size(); ++k) EXPECT_EQ(one.metrics[k].loss, three.metrics[k].loss);
}

TEST(Train, RealizableTargetsReachNearZeroLoss) {
  // Teacher and student share every weight except the force head's last
  // linear map, so the labels are a fixed linear function of the student's
  // initial features.
  const auto cfg = tiny_config();
  auto teacher = init_parameters(cfg, 16);
  auto student = teacher;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0, 0.5);
  for (Index k = 0; k < teacher.value("head/psi3/w1").size(); ++k) teacher.value("head/psi3/w1")[k] = g(rng);
  student.value("head/psi3/w1").array().setZero();

  ModelProvider<double> oracle(cfg, teacher);
  Dataset data;
  for (int k = 0; k < 12; ++k) {
    auto s = random_cluster(2 + k % 3, 200 + static_cast<std::uint64_t>(k), 1.5);
    s.reference_forces = oracle.forces(s);
    data.add(s, k);
  }
  auto tc = short_run(400);
  tc.augment = false;
  tc.learning_rate = 1e-2;
  tc.weight_decay = 0;
  const auto result = train(data, data, cfg, tc, student);
  EXPECT_LT(result.final_val_mae, 0.05 * result.initial_val_mae)
      << result.initial_val_mae << " -> " << result.final_val_mae;
}

TEST(Train, ValidationErrorHalvesOnSyntheticCorpus) {
  const auto data = morse_corpus(60, 5, 18);
  const auto split = split_dataset(data, {0.8, 0.2, 0.0}, 2);
  auto cfg = short_run(1000);
  cfg.batch_size = 16;
  cfg.learning_rate = 2e-3;
  const auto result = train(split.train, split.validation, ModelConfig::toy(), cfg);
  EXPECT_LT(result.final_val_mae, 0.5 * result.initial_val_mae)
      << result.initial_val_mae << " -> " << result.final_val_mae;
}

TEST(Train, AugmentationHalvesSourcesPerStep) {
  // Eight augmented samples per step come from four sources, so one epoch
  // over sixteen sources is four steps.
  const auto data = morse_corpus(16, 1, 19);
  auto cfg = short_run(8);
  std::vector<Index> eval_steps;
  const auto result = train(data, data, tiny_config(), cfg, std::nullopt, [&](const MetricsRow& row) {
    if (row.val_mae) eval_steps.push_back(row.step);
  });
  EXPECT_EQ(eval_steps, (std::vector<Index>{4, 8}));
  cfg.augment = false;
  eval_steps.clear();
  train(data, data, tiny_config(), cfg, std::nullopt, [&](const MetricsRow& row) {
    if (row.val_mae) eval_steps.push_back(row.step);
  });
  EXPECT_EQ(eval_steps, (std::vector<Index>{2, 4, 6, 8}));
}

TEST(Train, MetricsCsv) {
  std::ostringstream out;
  write_metrics(out, {{1, 1e-3, 0.5, std::nullopt}, {2, 2e-3, 0.4, 0.3}});
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,lr,loss,val_mae");
  EXPECT_NE(text.find("\n1,"), std::string::npos);
  EXPECT_EQ(text.back(), '\n');
}
