#include "cli.hpp"

#include "mdet/dataset.hpp"
#include "mdet/diagnostics.hpp"
#include "mdet/kv_config.hpp"
#include "mdet/md.hpp"
#include "mdet/parallel.hpp"
#include "mdet/potentials.hpp"
#include "mdet/provider.hpp"
#include "mdet/spectra.hpp"
#include "mdet/training.hpp"
#include "mdet/xyz.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace mdet::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::set<std::string> kGlobalKeys{"seed", "precision", "threads", "out", "preset"};
const std::set<std::string> kProviderKeys{"provider", "checkpoint"};
const std::set<std::string> kTrainDataKeys{"data",      "potential",    "n_structures",  "conformers", "spread",
                                           "min_atoms", "max_atoms",    "val_fraction",  "test_fraction", "init"};
const std::set<std::string> kSimulateKeys{"structure",      "atoms",       "dt",          "steps",
                                          "stride",         "thermostat",  "temperature", "tau",
                                          "initial_temperature", "project", "offset_rotations", "blowup_distance",
                                          "min_distance"};
const std::set<std::string> kAuditKeys{"structures", "n_systems",   "min_atoms",  "max_atoms",   "n_inner",
                                       "n_outer",    "grid",        "grid_reference", "lambda_mode", "fd_step",
                                       "lambda_draws", "lambda_size"};
const std::set<std::string> kSpectrumKeys{"trajectory", "window", "max_lag"};
const std::set<std::string> kBenchKeys{"sizes", "batch_sizes", "repeats", "warmup"};

std::set<std::string> allowed_keys(const std::string& command) {
  std::set<std::string> keys = kGlobalKeys;
  auto add = [&](const std::set<std::string>& more) { keys.insert(more.begin(), more.end()); };
  if (command == "train") {
    add(ModelConfig::keys());
    add(TrainConfig::keys());
    add(kTrainDataKeys);
  } else if (command == "simulate") {
    add(ModelConfig::keys());
    add(kProviderKeys);
    add(kSimulateKeys);
  } else if (command == "audit") {
    add(ModelConfig::keys());
    add(kProviderKeys);
    add(kAuditKeys);
  } else if (command == "spectrum") {
    add(kSpectrumKeys);
  } else if (command == "bench") {
    add(ModelConfig::keys());
    add(kBenchKeys);
  }
  return keys;
}

std::vector<Index> parse_list(const std::string& key, const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(static_cast<Index>(v));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + item + "' is not a positive integer");
    }
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' is empty");
  return out;
}

std::string join(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

std::string format(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

struct Context {
  std::string command;
  KeyValueConfig kv;
  KeyValueConfig resolved;
  fs::path out_dir = "out";
  std::uint64_t seed = 0;
  int precision = 64;
  int threads = 1;
  std::string preset = "toy";
  bool dry_run = false;
  json results = json::object();
  std::vector<std::string> artifacts;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  fs::path artifact(const std::string& name) {
    artifacts.push_back(name);
    return out_dir / name;
  }
  void note(const std::string& line) const { *out << line << '\n'; }
};

void resolve_globals(Context& ctx) {
  const auto unknown = ctx.kv.unknown_keys(allowed_keys(ctx.command));
  if (!unknown.empty()) {
    std::string msg = "unknown config keys for '" + ctx.command + "':";
    for (const auto& k : unknown) msg += " " + k;
    throw UsageError(msg);
  }
  const long long seed = ctx.kv.get_int("seed", 0);
  if (seed < 0) throw ConfigError("config key 'seed' must be non-negative");
  ctx.seed = static_cast<std::uint64_t>(seed);
  ctx.precision = static_cast<int>(ctx.kv.get_int("precision", 64));
  if (ctx.precision != 32 && ctx.precision != 64) throw ConfigError("config key 'precision' must be 32 or 64");
  ctx.threads = static_cast<int>(ctx.kv.get_int("threads", 1));
  if (ctx.threads < 1) throw ConfigError("config key 'threads' must be at least 1");
  ctx.preset = ctx.kv.get_string("preset", "toy");
  if (ctx.preset != "toy" && ctx.preset != "paper") throw ConfigError("preset must be 'toy' or 'paper'");
  ctx.resolved.set("seed", std::to_string(ctx.seed));
  ctx.resolved.set("precision", std::to_string(ctx.precision));
  ctx.resolved.set("threads", std::to_string(ctx.threads));
  ctx.resolved.set("out", ctx.out_dir.string());
  ctx.resolved.set("preset", ctx.preset);
}

void merge_into(KeyValueConfig& dst, const KeyValueConfig& src) {
  for (const auto& [k, v] : src.entries()) dst.set(k, v);
}

ModelConfig resolve_model(Context& ctx) {
  ModelConfig base = ctx.preset == "paper" ? ModelConfig::paper() : ModelConfig::toy();
  if (ctx.kv.has("checkpoint")) {
    const fs::path sidecar = fs::path(ctx.kv.get_string("checkpoint", "")).parent_path() / "model.cfg";
    if (fs::exists(sidecar)) base = ModelConfig::from_kv(KeyValueConfig::load(sidecar), base);
  }
  ModelConfig cfg = ModelConfig::from_kv(ctx.kv, base);
  cfg.validate();
  merge_into(ctx.resolved, cfg.to_kv());
  return cfg;
}

std::vector<MolecularSystem> random_molecules(Index count, Index min_atoms, Index max_atoms, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.min_atoms = min_atoms;
  cfg.max_atoms = max_atoms;
  std::mt19937_64 rng(seed);
  MorsePotential morse;
  std::vector<MolecularSystem> out;
  for (Index k = 0; k < count; ++k) out.push_back(random_structure(morse, cfg, rng));
  return out;
}

struct ProviderHandle {
  std::unique_ptr<ParameterStore> params;
  std::unique_ptr<ForceProvider> provider;
  int precision = 64;
};

ProviderHandle make_provider(Context& ctx, const Positions& reference) {
  const std::string kind = ctx.kv.get_string("provider", ctx.kv.has("checkpoint") ? "model" : "morse");
  ctx.resolved.set("provider", kind);
  ProviderHandle h;
  if (kind == "model") {
    if (!ctx.kv.has("checkpoint")) throw UsageError("provider 'model' needs a checkpoint");
    const ModelConfig cfg = resolve_model(ctx);
    const std::string path = ctx.kv.get_string("checkpoint", "");
    ctx.resolved.set("checkpoint", path);
    h.params = std::make_unique<ParameterStore>(init_parameters(cfg, 0));
    h.params->load(path);
    if (ctx.precision == 32) {
      h.provider = std::make_unique<ModelProvider<float>>(cfg, *h.params);
    } else {
      h.provider = std::make_unique<ModelProvider<double>>(cfg, *h.params);
    }
    h.precision = ctx.precision;
    return h;
  }
  try {
    h.provider = make_potential(kind, reference);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (ctx.precision == 32) *ctx.err << "note: analytic provider '" << kind << "' evaluates at 64-bit\n";
  return h;
}

// ---------------------------------------------------------------- train

int cmd_train(Context& ctx) {
  const ModelConfig model_cfg = resolve_model(ctx);
  TrainConfig cfg = TrainConfig::from_kv(ctx.kv, ctx.preset == "paper" ? TrainConfig::paper() : TrainConfig::toy());
  cfg.seed = ctx.seed;
  cfg.threads = ctx.threads;
  cfg.precision = ctx.precision;
  cfg.validate();
  merge_into(ctx.resolved, cfg.to_kv());

  SyntheticConfig data_cfg;
  data_cfg.n_structures = ctx.kv.get_int("n_structures", data_cfg.n_structures);
  data_cfg.conformers_per_structure = ctx.kv.get_int("conformers", data_cfg.conformers_per_structure);
  data_cfg.spread = ctx.kv.get_double("spread", data_cfg.spread);
  data_cfg.min_atoms = ctx.kv.get_int("min_atoms", data_cfg.min_atoms);
  data_cfg.max_atoms = ctx.kv.get_int("max_atoms", data_cfg.max_atoms);
  const std::string potential = ctx.kv.get_string("potential", "morse");
  const double val_fraction = ctx.kv.get_double("val_fraction", 0.05);
  const double test_fraction = ctx.kv.get_double("test_fraction", 0.05);
  if (data_cfg.n_structures < 1 || data_cfg.conformers_per_structure < 1) {
    throw ConfigError("n_structures and conformers must be positive");
  }
  if (data_cfg.min_atoms < 1 || data_cfg.max_atoms < data_cfg.min_atoms) {
    throw ConfigError("need 1 <= min_atoms <= max_atoms");
  }
  if (potential != "morse" && potential != "lennard_jones") {
    throw ConfigError("potential must be 'morse' or 'lennard_jones' for synthetic training data");
  }
  if (ctx.kv.has("data")) {
    ctx.resolved.set("data", ctx.kv.get_string("data", ""));
  } else {
    ctx.resolved.set("potential", potential);
    ctx.resolved.set("n_structures", std::to_string(data_cfg.n_structures));
    ctx.resolved.set("conformers", std::to_string(data_cfg.conformers_per_structure));
    ctx.resolved.set("spread", format(data_cfg.spread));
    ctx.resolved.set("min_atoms", std::to_string(data_cfg.min_atoms));
    ctx.resolved.set("max_atoms", std::to_string(data_cfg.max_atoms));
  }
  ctx.resolved.set("val_fraction", format(val_fraction));
  ctx.resolved.set("test_fraction", format(test_fraction));
  if (ctx.kv.has("init")) ctx.resolved.set("init", ctx.kv.get_string("init", ""));
  if (ctx.dry_run) return kExitOk;

  Dataset data;
  if (ctx.kv.has("data")) {
    const auto frames = read_xyz_file(ctx.kv.get_string("data", ""));
    for (std::size_t k = 0; k < frames.size(); ++k) data.add(frames[k].system, static_cast<int>(k));
  } else {
    std::mt19937_64 rng(ctx.seed);
    data = generate_synthetic(*make_potential(potential), data_cfg, rng);
  }
  const auto split = split_dataset(data, {1.0 - val_fraction - test_fraction, val_fraction, test_fraction}, ctx.seed);
  ctx.note("train: " + std::to_string(split.train.size()) + " train / " + std::to_string(split.validation.size()) +
           " validation / " + std::to_string(split.test.size()) + " test systems");

  std::optional<ParameterStore> init;
  if (ctx.kv.has("init")) {
    init = init_parameters(model_cfg, 0);
    init->load(ctx.kv.get_string("init", ""));
  }
  TrainResult result;
  try {
    result = train(split.train, split.validation, model_cfg, cfg, std::move(init), [&](const MetricsRow& row) {
      if (row.val_mae) {
        std::ostringstream line;
        line << "step " << row.step << "  lr " << row.lr << "  loss " << row.loss << "  val_mae " << *row.val_mae;
        ctx.note(line.str());
      }
    });
  } catch (const TrainingAborted& e) {
    throw NumericalAbort(e.what());
  }

  result.params.save(ctx.artifact("checkpoint.bin"));
  {
    std::ofstream f(ctx.artifact("model.cfg"));
    model_cfg.to_kv().write(f);
  }
  {
    std::ofstream f(ctx.artifact("metrics.csv"));
    write_metrics(f, result.metrics);
  }
  ctx.results["mean_label_force_norm"] = data.mean_force_norm();
  ctx.results["initial_val_mae"] = result.initial_val_mae;
  ctx.results["final_val_mae"] = result.final_val_mae;
  if (!split.test.empty()) {
    ctx.results["test_mae"] = force_mae(model_cfg, result.params, split.test, ctx.precision, ctx.threads);
  }
  ctx.results["parameters"] = result.params.element_count();
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(Context& ctx) {
  MolecularSystem system;
  std::optional<Velocities> given;
  if (ctx.kv.has("structure")) {
    const std::string path = ctx.kv.get_string("structure", "");
    auto frames = read_xyz_file(path);
    if (frames.empty()) throw UsageError("structure file " + path + " holds no frames");
    system = frames.front().system;
    given = frames.front().velocities;
    ctx.resolved.set("structure", path);
  } else {
    const Index atoms = ctx.kv.get_int("atoms", 4);
    if (atoms < 1) throw ConfigError("config key 'atoms' must be positive");
    system = random_molecules(1, atoms, atoms, ctx.seed).front();
    ctx.resolved.set("atoms", std::to_string(atoms));
  }

  MdConfig md;
  md.dt = ctx.kv.get_double("dt", md.dt);
  md.steps = ctx.kv.get_int("steps", md.steps);
  md.stride = ctx.kv.get_int("stride", md.stride);
  md.project = ctx.kv.get_bool("project", md.project);
  md.offset_rotations = ctx.kv.get_bool("offset_rotations", md.offset_rotations);
  md.blowup_distance = ctx.kv.get_double("blowup_distance", md.blowup_distance);
  md.min_distance = ctx.kv.get_double("min_distance", md.min_distance);
  md.seed = ctx.seed;
  try {
    md.thermostat.kind = parse_thermostat(ctx.kv.get_string("thermostat", "none"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  md.thermostat.target_temperature = ctx.kv.get_double("temperature", md.thermostat.target_temperature);
  md.thermostat.time_constant = ctx.kv.get_double("tau", md.thermostat.time_constant);
  const double initial_t = ctx.kv.get_double("initial_temperature", md.thermostat.target_temperature);
  if (!(md.dt > 0) || md.steps < 0 || md.stride < 1) throw ConfigError("need dt > 0, steps >= 0, stride >= 1");
  if (!(md.thermostat.time_constant > 0) || !(md.thermostat.target_temperature > 0) || initial_t < 0) {
    throw ConfigError("temperatures and tau must be positive");
  }

  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"dt", format(md.dt)},
           {"steps", std::to_string(md.steps)},
           {"stride", std::to_string(md.stride)},
           {"thermostat", to_string(md.thermostat.kind)},
           {"temperature", format(md.thermostat.target_temperature)},
           {"tau", format(md.thermostat.time_constant)},
           {"initial_temperature", format(initial_t)},
           {"project", md.project ? "true" : "false"},
           {"offset_rotations", md.offset_rotations ? "true" : "false"},
           {"blowup_distance", format(md.blowup_distance)},
           {"min_distance", format(md.min_distance)}}) {
    ctx.resolved.set(k, v);
  }
  ProviderHandle handle = make_provider(ctx, system.positions);
  ctx.results["provider"] = handle.provider->name();
  if (ctx.dry_run) return kExitOk;

  const Eigen::VectorXd masses = atomic_masses(system.atomic_numbers);
  Velocities v;
  if (given) {
    v = *given;
  } else {
    std::mt19937_64 rng(ctx.seed ^ 0x5DEECE66DULL);
    v = maxwell_boltzmann(system.positions, masses, initial_t, rng);
  }
  const MdResult result = run_md(system, v, *handle.provider, md);

  {
    std::ofstream f(ctx.artifact("trajectory.xyz"));
    for (const auto& frame : result.frames) write_trajectory_frame(f, system, frame);
  }
  {
    std::ofstream f(ctx.artifact("energy.csv"));
    write_energy_log(f, result.frames);
  }
  double mean_t = 0;
  for (const auto& f : result.frames) mean_t += f.temperature;
  ctx.results["frames"] = result.frames.size();
  ctx.results["mean_temperature"] = mean_t / static_cast<double>(result.frames.size());
  ctx.results["last_stable_step"] = result.last_stable_step;
  if (result.frames.size() >= 10 && result.frames.front().potential_energy &&
      md.thermostat.kind == ThermostatKind::none) {
    const Estimate drift = energy_drift(result.frames);
    ctx.results["energy_drift_ev_per_ps_atom"] = drift.value;
    ctx.results["energy_drift_std_error"] = drift.std_error;
  }
  if (result.abort_reason) {
    const std::size_t frame_index = result.frames.empty() ? 0 : result.frames.size() - 1;
    ctx.results["abort_reason"] = *result.abort_reason;
    ctx.results["last_stable_frame"] = frame_index;
    throw NumericalAbort("simulation aborted: " + *result.abort_reason + "; last stable step " +
                         std::to_string(result.last_stable_step) + " (frame " + std::to_string(frame_index) + ")");
  }
  ctx.note("simulate: " + std::to_string(result.frames.size()) + " frames written");
  return kExitOk;
}

// ---------------------------------------------------------------- audit

int cmd_audit(Context& ctx) {
  std::vector<MolecularSystem> systems;
  if (ctx.kv.has("structures")) {
    const std::string path = ctx.kv.get_string("structures", "");
    for (auto& f : read_xyz_file(path)) systems.push_back(std::move(f.system));
    if (systems.empty()) throw UsageError("structures file " + path + " holds no frames");
    ctx.resolved.set("structures", path);
  } else {
    const Index n = ctx.kv.get_int("n_systems", 4);
    const Index lo = ctx.kv.get_int("min_atoms", 3);
    const Index hi = ctx.kv.get_int("max_atoms", 5);
    if (n < 1 || lo < 1 || hi < lo) throw ConfigError("need n_systems >= 1 and 1 <= min_atoms <= max_atoms");
    systems = random_molecules(n, lo, hi, ctx.seed);
    ctx.resolved.set("n_systems", std::to_string(n));
    ctx.resolved.set("min_atoms", std::to_string(lo));
    ctx.resolved.set("max_atoms", std::to_string(hi));
  }
  const Index n_inner = ctx.kv.get_int("n_inner", 64);
  const Index n_outer = ctx.kv.get_int("n_outer", 16);
  const Index grid = ctx.kv.get_int("grid", 60);
  const bool grid_reference = ctx.kv.get_bool("grid_reference", false);
  const std::string mode_name = ctx.kv.get_string("lambda_mode", "autodiff");
  const double fd_step = ctx.kv.get_double("fd_step", 1e-4);
  const Index draws = ctx.kv.get_int("lambda_draws", 100);
  const Index size = ctx.kv.get_int("lambda_size", 60);
  if (n_inner < 2 || n_outer < 1) throw ConfigError("need n_inner >= 2 and n_outer >= 1");
  if (grid != 60 && grid != 360) throw ConfigError("config key 'grid' must be 60 or 360");
  if (mode_name != "autodiff" && mode_name != "finite_difference") {
    throw ConfigError("lambda_mode must be 'autodiff' or 'finite_difference'");
  }
  if (!(fd_step > 0) || draws < 0 || size < 1) throw ConfigError("need fd_step > 0, lambda_draws >= 0, lambda_size >= 1");
  const JacobianMode mode = mode_name == "autodiff" ? JacobianMode::autodiff : JacobianMode::finite_difference;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"n_inner", std::to_string(n_inner)},
           {"n_outer", std::to_string(n_outer)},
           {"grid", std::to_string(grid)},
           {"grid_reference", grid_reference ? "true" : "false"},
           {"lambda_mode", mode_name},
           {"fd_step", format(fd_step)},
           {"lambda_draws", std::to_string(draws)},
           {"lambda_size", std::to_string(size)}}) {
    ctx.resolved.set(k, v);
  }
  ProviderHandle handle = make_provider(ctx, systems.front().positions);
  const ForceProvider& provider = *handle.provider;
  ctx.results["provider"] = provider.name();
  if (ctx.dry_run) return kExitOk;

  std::ofstream report(ctx.artifact("report.jsonl"));
  auto emit = [&](const json& record) { report << record.dump() << '\n'; };

  std::mt19937_64 rng(ctx.seed);
  const Estimate eeq = equivariance_error(provider, systems, n_inner, n_outer, rng);
  emit({{"metric", "equivariance_error"},
        {"value", eeq.value},
        {"std_error", eeq.std_error},
        {"unit", "eV/A"},
        {"n_inner", n_inner},
        {"n_outer", n_outer},
        {"systems", systems.size()}});
  ctx.results["equivariance_error"] = eeq.value;
  ctx.results["equivariance_error_std"] = eeq.std_error;

  const auto rotations = sample_rotations_600cell(grid);
  std::ofstream csv(ctx.artifact("rotation_grid.csv"));
  csv << "mode,system,atom,w,x,y,z,fx,fy,fz,back_x,back_y,back_z,magnitude,relative_magnitude\n";
  csv << std::setprecision(12);
  auto write_records = [&](const char* kind, std::size_t k, Index atom, const std::vector<RotationRecord>& records) {
    for (const auto& r : records) {
      const auto q = r.rotation.wxyz();
      csv << kind << ',' << k << ',' << atom << ',' << q[0] << ',' << q[1] << ',' << q[2] << ',' << q[3] << ','
          << r.raw.x() << ',' << r.raw.y() << ',' << r.raw.z() << ',' << r.back_rotated.x() << ','
          << r.back_rotated.y() << ',' << r.back_rotated.z() << ',' << r.magnitude << ',' << r.relative_magnitude
          << '\n';
    }
  };
  std::size_t grid_rows = 0;
  double max_lambda = 0;
  for (std::size_t k = 0; k < systems.size(); ++k) {
    const Forces f0 = provider.forces(systems[k]);
    for (Index atom = 0; atom < systems[k].size(); ++atom) {
      const auto records = rotation_grid_forces(provider, systems[k], atom, rotations);
      write_records("model", k, atom, records);
      grid_rows += records.size();
      std::vector<double> mags;
      for (const auto& r : records) mags.push_back(r.magnitude);
      const DensityEstimate kde = kernel_density(mags);
      emit({{"metric", "rotation_grid"},
            {"system", k},
            {"atom", atom},
            {"records", records.size()},
            {"kde_bandwidth", kde.bandwidth},
            {"point_mass", kde.point_mass}});
      if (grid_reference) {
        write_records("reference", k, atom, rotation_grid_reference(f0.row(atom).transpose(), rotations));
      }
    }
    if (systems[k].size() >= 2) {
      const double lambda = antisymmetric_ratio(position_jacobian(provider, systems[k], mode, fd_step));
      max_lambda = std::max(max_lambda, lambda);
      emit({{"metric", "lambda"}, {"system", k}, {"mode", mode_name}, {"value", lambda}});
    }
  }
  ctx.results["rotation_grid_records"] = grid_rows;
  ctx.results["max_lambda"] = max_lambda;

  if (draws > 0) {
    std::normal_distribution<double> g(0.0, 1.0);
    double sum = 0, sq = 0;
    for (Index d = 0; d < draws; ++d) {
      const double l = antisymmetric_ratio(Eigen::MatrixXd::NullaryExpr(size, size, [&] { return g(rng); }));
      sum += l;
      sq += l * l;
    }
    const double mean = sum / static_cast<double>(draws);
    const double sd = draws > 1 ? std::sqrt(std::max(0.0, (sq - draws * mean * mean) / (draws - 1))) : 0.0;
    emit({{"metric", "lambda_random"}, {"draws", draws}, {"size", size}, {"mean", mean}, {"std", sd}});
    ctx.results["lambda_random_mean"] = mean;
  }
  ctx.note("audit: E_eq = " + format(eeq.value) + " eV/A, max lambda = " + format(max_lambda));
  return kExitOk;
}

// ---------------------------------------------------------------- spectrum

int cmd_spectrum(Context& ctx) {
  if (!ctx.kv.has("trajectory")) throw UsageError("spectrum needs a trajectory (--trajectory or trajectory=)");
  const std::string path = ctx.kv.get_string("trajectory", "");
  const std::string window_name = ctx.kv.get_string("window", "hann");
  const Index max_lag = ctx.kv.get_int("max_lag", 0);
  SpectrumWindow window;
  try {
    window = parse_window(window_name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (max_lag < 0) throw ConfigError("config key 'max_lag' must be non-negative");
  ctx.resolved.set("trajectory", path);
  ctx.resolved.set("window", window_name);
  ctx.resolved.set("max_lag", std::to_string(max_lag));
  if (ctx.dry_run) return kExitOk;

  const auto frames = read_xyz_file(path);
  if (frames.size() < 2) throw UsageError("trajectory " + path + " needs at least two frames");
  std::vector<Velocities> v;
  std::vector<double> t;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (!frames[k].velocities || !frames[k].time) {
      throw UsageError(path + ": frame " + std::to_string(k) + " lacks velocities or time=");
    }
    v.push_back(*frames[k].velocities);
    t.push_back(*frames[k].time);
  }
  const Spectrum s = vacf_spectrum(v, t, atomic_masses(frames.front().system.atomic_numbers), window, max_lag);
  {
    std::ofstream f(ctx.artifact("spectrum.csv"));
    f << "wavenumber_cm,power\n" << std::setprecision(12);
    for (std::size_t k = 0; k < s.wavenumber.size(); ++k) f << s.wavenumber[k] << ',' << s.power[k] << '\n';
  }
  {
    std::ofstream f(ctx.artifact("vacf.csv"));
    f << "lag_fs,vacf\n" << std::setprecision(12);
    const double dt = t[1] - t[0];
    for (std::size_t k = 0; k < s.autocorrelation.size(); ++k) f << dt * k << ',' << s.autocorrelation[k] << '\n';
  }
  const auto peak = std::max_element(s.power.begin(), s.power.end()) - s.power.begin();
  ctx.results["bin_width_cm"] = s.bin_width;
  ctx.results["peak_wavenumber_cm"] = s.wavenumber[static_cast<std::size_t>(peak)];
  ctx.note("spectrum: peak at " + format(s.wavenumber[static_cast<std::size_t>(peak)]) + " cm^-1, bin " +
           format(s.bin_width) + " cm^-1");
  return kExitOk;
}

// ---------------------------------------------------------------- bench

MolecularSystem bench_system(Index n, std::mt19937_64& rng) {
  const double side = 1.6 * std::cbrt(static_cast<double>(n));
  std::uniform_real_distribution<double> u(-side / 2, side / 2);
  std::uniform_int_distribution<int> z(1, 8);
  MolecularSystem s;
  s.positions.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    s.atomic_numbers.push_back(z(rng));
    s.positions.row(i) = Eigen::RowVector3d(u(rng), u(rng), u(rng));
  }
  return s;
}

template <typename S>
void bench_model(Context& ctx, const ModelConfig& cfg, const ParameterStore& params, const std::vector<Index>& sizes,
                 const std::vector<Index>& batches, Index repeats, Index warmup, std::ostream& csv) {
  const MdEt<S> model(cfg, params);
  std::mt19937_64 rng(ctx.seed);
  std::map<Index, double> single;
  for (Index n : sizes) {
    const MolecularSystem system = bench_system(n, rng);
    const std::size_t tape_bytes = model.forward(system)->tape.memory_bytes();
    for (Index b : batches) {
      auto pass = [&] {
        parallel_for(static_cast<long>(b), ctx.threads, [&](long) { (void)model.forward(system); });
      };
      for (Index w = 0; w < warmup; ++w) pass();
      std::vector<double> times;
      for (Index r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        pass();
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
      std::sort(times.begin(), times.end());
      const double median = times.size() % 2 ? times[times.size() / 2]
                                             : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
      if (b == batches.front()) single[n] = median / static_cast<double>(b);
      csv << n << ',' << b << ',' << median << ',' << median / static_cast<double>(b) << ','
          << tape_bytes * static_cast<std::size_t>(b) << '\n';
      ctx.note("bench: N=" + std::to_string(n) + " batch=" + std::to_string(b) + " median " + format(median) + " s");
    }
  }
  if (single.count(32) && single.count(64)) ctx.results["time_ratio_64_over_32"] = single[64] / single[32];
}

int cmd_bench(Context& ctx) {
  const ModelConfig cfg = resolve_model(ctx);
  const auto sizes = parse_list("sizes", ctx.kv.get_string("sizes", "8,16,32,64"));
  const auto batches = parse_list("batch_sizes", ctx.kv.get_string("batch_sizes", "1,8,64"));
  const Index repeats = ctx.kv.get_int("repeats", 5);
  const Index warmup = ctx.kv.get_int("warmup", 1);
  if (repeats < 1 || warmup < 0) throw ConfigError("need repeats >= 1 and warmup >= 0");
  ctx.resolved.set("sizes", join(sizes));
  ctx.resolved.set("batch_sizes", join(batches));
  ctx.resolved.set("repeats", std::to_string(repeats));
  ctx.resolved.set("warmup", std::to_string(warmup));
  if (ctx.dry_run) return kExitOk;

  const ParameterStore params = init_parameters(cfg, ctx.seed);
  std::ofstream csv(ctx.artifact("bench.csv"));
  csv << "n_atoms,batch_size,median_seconds,seconds_per_system,tape_bytes\n" << std::setprecision(9);
  if (ctx.precision == 32) {
    bench_model<float>(ctx, cfg, params, sizes, batches, repeats, warmup, csv);
  } else {
    bench_model<double>(ctx, cfg, params, sizes, batches, repeats, warmup, csv);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- driver

void write_manifest(const Context& ctx, const std::vector<std::string>& args, const std::string& status, int code,
                    const std::string& message, const std::string& started, double seconds) {
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  std::ofstream f(ctx.out_dir / "manifest.json");
  if (!f) return;
  json config = json::object();
  for (const auto& [k, v] : ctx.resolved.entries()) config[k] = v;
  json given = json::object();
  for (const auto& [k, v] : ctx.kv.entries()) given[k] = v;
  const json manifest{{"program", "mdet"},
                      {"version", kVersion},
                      {"checkpoint_format", ParameterStore::kCheckpointVersion},
                      {"command", ctx.command},
                      {"arguments", args},
                      {"dry_run", ctx.dry_run},
                      {"started", started},
                      {"wall_seconds", seconds},
                      {"status", status},
                      {"exit_code", code},
                      {"message", message},
                      {"config", config},
                      {"given", given},
                      {"results", ctx.results},
                      {"artifacts", ctx.artifacts}};
  f << manifest.dump(2) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Edge-transformer force fields: training, dynamics and physics audits", "mdet"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  KeyValueConfig flags;
  std::string config_file;
  std::vector<std::string> sets;

  auto option = [&flags](CLI::App* a, const std::string& name, const std::string& key, const std::string& help) {
    return a->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags.set(key, v); }, help);
  };
  auto flag = [&flags](CLI::App* a, const std::string& name, const std::string& key, const std::string& value,
                       const std::string& help) {
    return a->add_flag_function(name, [&flags, key, value](std::int64_t) { flags.set(key, value); }, help);
  };

  app.add_option("--config", config_file, "key = value settings file")->check(CLI::ExistingFile);
  option(&app, "--seed", "seed", "random seed");
  option(&app, "--precision", "precision", "floating-point width")->check(CLI::IsMember({"32", "64"}));
  option(&app, "--threads", "threads", "worker threads");
  option(&app, "--out", "out", "output directory");
  option(&app, "--preset", "preset", "toy or paper")->check(CLI::IsMember({"toy", "paper"}));
  app.add_flag("--dry-run", ctx.dry_run, "resolve the configuration and write the manifest only");
  app.add_option("--set", sets, "extra key=value setting (repeatable)");

  auto* train = app.add_subcommand("train", "fit a model to a labelled dataset");
  option(train, "--steps", "total_steps", "optimizer steps");
  option(train, "--batch-size", "batch_size", "augmented systems per step");
  option(train, "--lr", "learning_rate", "peak learning rate");
  option(train, "--warmup", "warmup_steps", "linear warmup steps");
  option(train, "--data", "data", "labelled extended-XYZ file instead of synthetic data");
  option(train, "--init", "init", "checkpoint to start from");
  option(train, "--n-structures", "n_structures", "synthetic structures");
  option(train, "--conformers", "conformers", "conformers per structure");
  flag(train, "--no-augment", "augment", "false", "disable rotation/reflection augmentation");

  auto* simulate = app.add_subcommand("simulate", "run molecular dynamics");
  option(simulate, "--provider", "provider", "model, morse, lennard_jones or harmonic_network");
  option(simulate, "--checkpoint", "checkpoint", "model checkpoint");
  option(simulate, "--structure", "structure", "initial structure (extended XYZ)");
  option(simulate, "--atoms", "atoms", "atoms in a random Morse molecule when no structure is given");
  option(simulate, "--dt", "dt", "time step, fs");
  option(simulate, "--steps", "steps", "integration steps");
  option(simulate, "--stride", "stride", "steps between written frames");
  option(simulate, "--thermostat", "thermostat", "none, svr or nose_hoover")
      ->check(CLI::IsMember({"none", "svr", "nose_hoover"}));
  option(simulate, "--temperature", "temperature", "target temperature, K");
  option(simulate, "--tau", "tau", "thermostat time constant, fs");
  flag(simulate, "--nve", "thermostat", "none", "microcanonical run, no thermostat");
  flag(simulate, "--project", "project", "true", "remove net force and torque");
  flag(simulate, "--offset-rotations", "offset_rotations", "true", "evaluate forces in a fresh random frame each step");

  auto* audit = app.add_subcommand("audit", "equivariance, rotation-grid and Jacobian diagnostics");
  option(audit, "--provider", "provider", "model, morse, lennard_jones or harmonic_network");
  option(audit, "--checkpoint", "checkpoint", "model checkpoint");
  option(audit, "--structures", "structures", "systems to audit (extended XYZ)");
  option(audit, "--n-systems", "n_systems", "random Morse molecules when no structures are given");
  option(audit, "--n-inner", "n_inner", "rotations for the mean prediction");
  option(audit, "--n-outer", "n_outer", "fresh rotations per system");
  option(audit, "--grid", "grid", "600-cell rotation set, 60 or 360")->check(CLI::IsMember({"60", "360"}));
  option(audit, "--lambda-mode", "lambda_mode", "autodiff or finite_difference");
  option(audit, "--fd-step", "fd_step", "finite-difference step, A");
  option(audit, "--lambda-draws", "lambda_draws", "random-matrix calibration draws");
  flag(audit, "--grid-reference", "grid_reference", "true", "also rotate the unrotated force vector");

  auto* spectrum = app.add_subcommand("spectrum", "velocity autocorrelation spectrum of a trajectory");
  option(spectrum, "--trajectory", "trajectory", "trajectory with velocities and time=");
  option(spectrum, "--window", "window", "hann or none");
  option(spectrum, "--max-lag", "max_lag", "autocorrelation lags kept (0: half the frames)");

  auto* bench = app.add_subcommand("bench", "forward-pass timing and tape memory");
  option(bench, "--sizes", "sizes", "comma-separated atom counts");
  option(bench, "--batch-sizes", "batch_sizes", "comma-separated batch sizes");
  option(bench, "--repeats", "repeats", "timed repetitions per cell");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  const std::string started = timestamp();
  const auto t0 = std::chrono::steady_clock::now();
  bool parsed = false;
  int code = kExitOk;
  std::string status = "ok", message;
  try {
    app.parse(reversed);
    parsed = true;
    ctx.command = app.get_subcommands().front()->get_name();
    if (!config_file.empty()) ctx.kv = KeyValueConfig::load(config_file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
      ctx.kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    merge_into(ctx.kv, flags);
    ctx.out_dir = ctx.kv.get_string("out", "out");
    resolve_globals(ctx);
    fs::create_directories(ctx.out_dir);
    if (ctx.command == "train") code = cmd_train(ctx);
    if (ctx.command == "simulate") code = cmd_simulate(ctx);
    if (ctx.command == "audit") code = cmd_audit(ctx);
    if (ctx.command == "spectrum") code = cmd_spectrum(ctx);
    if (ctx.command == "bench") code = cmd_bench(ctx);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  } catch (const NumericalAbort& e) {
    code = kExitNumerical, status = "numerical_abort", message = e.what();
  } catch (const FiniteValueError& e) {
    code = kExitNumerical, status = "numerical_abort", message = e.what();
  } catch (const std::exception& e) {
    code = kExitUsage, status = "usage_error", message = e.what();
  }
  if (!message.empty()) err << "mdet " << ctx.command << ": " << message << '\n';
  if (parsed) {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(ctx, args, status, code, message, started, seconds);
  }
  return code;
}

}  // namespace mdet::cli
