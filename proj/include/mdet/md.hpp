#pragma once

#include "mdet/provider.hpp"
#include "mdet/rotation.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mdet {

using Velocities = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// One MD snapshot. Velocities in Å/fs, energies in eV, temperature in K.
struct TrajectoryFrame {
  Index step = 0;
  double time = 0;  // fs
  Positions positions;
  Velocities velocities;
  Forces forces;
  double kinetic_energy = 0;
  std::optional<double> potential_energy;
  double temperature = 0;
  /// Total energy plus thermostat bookkeeping; NaN without a potential.
  double conserved = 0;

  std::optional<double> total_energy() const {
    if (!potential_energy) return std::nullopt;
    return kinetic_energy + *potential_energy;
  }
};

enum class ThermostatKind { none, nose_hoover, svr };

ThermostatKind parse_thermostat(const std::string& name);
std::string to_string(ThermostatKind kind);

struct ThermostatConfig {
  ThermostatKind kind = ThermostatKind::none;
  double target_temperature = 300.0;  // K
  double time_constant = 100.0;       // fs; infinity disables coupling
};

/// Extended-system variables of a single Nosé–Hoover thermostat.
struct NoseHooverState {
  double zeta = 0;  // friction, 1/fs
  double eta = 0;   // integrated friction
};

/// Removes the net force and the centre-of-mass torque. The rotational part
/// solves I·ω = τ with a pseudo-inverse over non-degenerate inertia axes, so
/// collinear and single-atom systems are handled.
Forces project_forces(const Forces& forces, const Positions& positions, const Eigen::VectorXd& masses);

/// Σ ½ m v² in eV.
double kinetic_energy(const Velocities& velocities, const Eigen::VectorXd& masses);

/// 3N − 3 − 3 (nonlinear), − 2 (linear) or 0 for a single atom.
int degrees_of_freedom(const Positions& positions);

double temperature(double kinetic, int dof);

/// Maxwell–Boltzmann draw with centre-of-mass velocity and angular momentum
/// removed, rescaled to exactly `temperature` over `degrees_of_freedom`.
Velocities maxwell_boltzmann(const Positions& positions, const Eigen::VectorXd& masses, double temperature,
                             std::mt19937_64& rng);

/// Evaluates a provider with optional net force/torque removal and per-call
/// random offset rotations (forces are Rᵀ f̂(R x)).
class ForceEvaluator {
 public:
  ForceEvaluator(const ForceProvider& provider, MolecularSystem system, bool project, bool offset_rotations,
                 std::uint64_t rotation_seed);

  Evaluation operator()(const Positions& positions);
  const Eigen::VectorXd& masses() const { return masses_; }
  const MolecularSystem& system() const { return system_; }

 private:
  const ForceProvider* provider_;
  MolecularSystem system_;
  Eigen::VectorXd masses_;
  bool project_;
  bool offset_rotations_;
  std::mt19937_64 rng_;
};

/// Half kick, drift, force evaluation, half kick. `frame` must hold the forces
/// at its current positions; they are replaced by the new ones.
void velocity_verlet_step(TrajectoryFrame& frame, double dt, ForceEvaluator& evaluate);

/// Bussi stochastic velocity rescaling over an interval dt. Returns the
/// change in kinetic energy (subtract its running sum for the conserved quantity).
double svr_rescale(TrajectoryFrame& frame, const ThermostatConfig& cfg, int dof, double dt, std::mt19937_64& rng);

/// Scaling factor applied by svr_rescale for the given kinetic energy and draws.
double svr_factor(double kinetic, double target_kinetic, int dof, double dt, double tau, double r1, double chi2);

/// Thermostat half-step of length dt/2 (Trotter splitting), updating ζ, η and velocities.
void nose_hoover_half_step(TrajectoryFrame& frame, const ThermostatConfig& cfg, NoseHooverState& state, int dof,
                           const Eigen::VectorXd& masses, double dt);

/// Full Nosé–Hoover step: thermostat half-step, Verlet step, thermostat half-step.
void nose_hoover_step(TrajectoryFrame& frame, const ThermostatConfig& cfg, NoseHooverState& state, int dof,
                      double dt, ForceEvaluator& evaluate);

/// Mass of the Nosé–Hoover thermostat, Q = N_f k_B T τ², in eV·fs².
double nose_hoover_mass(const ThermostatConfig& cfg, int dof);

struct MdConfig {
  double dt = 0.5;  // fs
  Index steps = 1000;
  Index stride = 1;
  ThermostatConfig thermostat;
  bool project = false;
  bool offset_rotations = false;
  double blowup_distance = 100.0;  // Å
  double min_distance = 0.1;       // Å
  std::uint64_t seed = 0;
};

struct MdResult {
  std::vector<TrajectoryFrame> frames;  // every `stride` steps, starting with step 0
  std::optional<std::string> abort_reason;
  Index last_stable_step = 0;
};

/// Integrates from `system.positions` with `velocities`. `observer`, when set,
/// sees every step. Instabilities end the run early with `abort_reason` set.
MdResult run_md(const MolecularSystem& system, const Velocities& velocities, const ForceProvider& provider,
                const MdConfig& cfg, const std::function<void(const TrajectoryFrame&)>& observer = {});

/// CSV header `time,E_kin,E_pot,E_total,T,conserved`, then one row per frame.
void write_energy_log(std::ostream& out, const std::vector<TrajectoryFrame>& frames);

}  // namespace mdet
