#include "mdet/md.hpp"

#include "mdet/units.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace mdet {
namespace {

Eigen::RowVector3d centre_of_mass(const Positions& x, const Eigen::VectorXd& m) {
  return (m.transpose() * x) / m.sum();
}

Eigen::Matrix3d inertia_tensor(const Positions& rel, const Eigen::VectorXd& m) {
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();
  for (Index i = 0; i < rel.rows(); ++i) {
    const Eigen::Vector3d r = rel.row(i).transpose();
    inertia += m[i] * (r.squaredNorm() * Eigen::Matrix3d::Identity() - r * r.transpose());
  }
  return inertia;
}

// ω = I⁺ v, dropping axes whose principal moment is negligible.
Eigen::Vector3d solve_inertia(const Eigen::Matrix3d& inertia, const Eigen::Vector3d& v) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(inertia);
  const Eigen::Vector3d lambda = eig.eigenvalues();
  const double cutoff = 1e-10 * std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) {
    if (lambda[k] > cutoff) {
      const Eigen::Vector3d axis = eig.eigenvectors().col(k);
      out += axis * (axis.dot(v) / lambda[k]);
    }
  }
  return out;
}

bool is_linear(const Positions& x) {
  if (x.rows() < 3) return true;
  const Positions rel = x.rowwise() - x.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rel);
  const auto s = svd.singularValues();
  return s[1] <= 1e-8 * std::max(s[0], 1e-300);
}

double chi_squared(int dof, std::mt19937_64& rng) {
  if (dof <= 0) return 0.0;
  std::gamma_distribution<double> gamma(0.5 * dof, 2.0);
  return gamma(rng);
}

void refresh(TrajectoryFrame& frame, const Eigen::VectorXd& masses, int dof) {
  frame.kinetic_energy = kinetic_energy(frame.velocities, masses);
  frame.temperature = temperature(frame.kinetic_energy, dof);
}

}  // namespace

ThermostatKind parse_thermostat(const std::string& name) {
  if (name == "none" || name == "nve") return ThermostatKind::none;
  if (name == "nose_hoover" || name == "nh") return ThermostatKind::nose_hoover;
  if (name == "svr" || name == "bussi") return ThermostatKind::svr;
  throw std::invalid_argument("unknown thermostat '" + name + "' (none, nose_hoover, svr)");
}

std::string to_string(ThermostatKind kind) {
  switch (kind) {
    case ThermostatKind::none: return "none";
    case ThermostatKind::nose_hoover: return "nose_hoover";
    case ThermostatKind::svr: return "svr";
  }
  return "none";
}

Forces project_forces(const Forces& forces, const Positions& positions, const Eigen::VectorXd& masses) {
  Forces out = forces.rowwise() - forces.colwise().mean();
  const Positions rel = positions.rowwise() - centre_of_mass(positions, masses);
  Eigen::Vector3d torque = Eigen::Vector3d::Zero();
  for (Index i = 0; i < rel.rows(); ++i) torque += rel.row(i).transpose().cross(out.row(i).transpose());
  const Eigen::Vector3d omega = solve_inertia(inertia_tensor(rel, masses), torque);
  for (Index i = 0; i < rel.rows(); ++i) {
    out.row(i) -= masses[i] * omega.cross(rel.row(i).transpose()).transpose();
  }
  return out;
}

double kinetic_energy(const Velocities& velocities, const Eigen::VectorXd& masses) {
  return 0.5 * units::kMassVelocitySqToEv * (velocities.rowwise().squaredNorm().transpose() * masses).value();
}

int degrees_of_freedom(const Positions& positions) {
  const auto n = static_cast<int>(positions.rows());
  if (n <= 1) return 0;
  return 3 * n - 3 - (is_linear(positions) ? 2 : 3);
}

double temperature(double kinetic, int dof) {
  return dof > 0 ? 2.0 * kinetic / (dof * units::kBoltzmann) : 0.0;
}

Velocities maxwell_boltzmann(const Positions& positions, const Eigen::VectorXd& masses, double target,
                             std::mt19937_64& rng) {
  const Index n = positions.rows();
  std::normal_distribution<double> normal(0.0, 1.0);
  Velocities v(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double sd = std::sqrt(units::kBoltzmann * target / (masses[i] * units::kMassVelocitySqToEv));
    for (Index c = 0; c < 3; ++c) v(i, c) = sd * normal(rng);
  }
  const Eigen::RowVector3d vcom = (masses.transpose() * v) / masses.sum();
  v.rowwise() -= vcom;
  const Positions rel = positions.rowwise() - centre_of_mass(positions, masses);
  Eigen::Vector3d momentum = Eigen::Vector3d::Zero();
  for (Index i = 0; i < n; ++i) momentum += masses[i] * rel.row(i).transpose().cross(v.row(i).transpose());
  const Eigen::Vector3d omega = solve_inertia(inertia_tensor(rel, masses), momentum);
  for (Index i = 0; i < n; ++i) v.row(i) -= omega.cross(rel.row(i).transpose()).transpose();

  const int dof = degrees_of_freedom(positions);
  const double current = temperature(kinetic_energy(v, masses), dof);
  if (dof > 0 && current > 0) v *= std::sqrt(target / current);
  return v;
}

ForceEvaluator::ForceEvaluator(const ForceProvider& provider, MolecularSystem system, bool project,
                               bool offset_rotations, std::uint64_t rotation_seed)
    : provider_(&provider),
      system_(std::move(system)),
      masses_(atomic_masses(system_.atomic_numbers)),
      project_(project),
      offset_rotations_(offset_rotations),
      rng_(rotation_seed) {}

Evaluation ForceEvaluator::operator()(const Positions& positions) {
  Evaluation out;
  if (offset_rotations_) {
    const Eigen::Matrix3d r = random_rotation(rng_).matrix();
    system_.positions = rotate_rows(positions, r);
    out = provider_->evaluate(system_);
    out.forces = rotate_rows(out.forces, r.transpose());
  } else {
    system_.positions = positions;
    out = provider_->evaluate(system_);
  }
  if (project_) out.forces = project_forces(out.forces, positions, masses_);
  return out;
}

void velocity_verlet_step(TrajectoryFrame& frame, double dt, ForceEvaluator& evaluate) {
  const Eigen::VectorXd inv_m = evaluate.masses().cwiseInverse() / units::kMassVelocitySqToEv;
  frame.velocities += 0.5 * dt * (frame.forces.array().colwise() * inv_m.array()).matrix();
  frame.positions += dt * frame.velocities;
  Evaluation e = evaluate(frame.positions);
  frame.forces = std::move(e.forces);
  frame.potential_energy = e.energy;
  frame.velocities += 0.5 * dt * (frame.forces.array().colwise() * inv_m.array()).matrix();
  frame.time += dt;
  ++frame.step;
}

double svr_factor(double kinetic, double target_kinetic, int dof, double dt, double tau, double r1, double chi2) {
  if (!std::isfinite(tau) || kinetic <= 0 || dof <= 0) return 1.0;
  const double c = std::exp(-dt / tau);
  const double ratio = target_kinetic / (dof * kinetic);
  const double alpha2 = c + (1 - c) * ratio * (r1 * r1 + chi2) + 2 * r1 * std::sqrt(c * (1 - c) * ratio);
  const double sign = (r1 + std::sqrt(c / ((1 - c) * ratio))) < 0 ? -1.0 : 1.0;
  return sign * std::sqrt(std::max(alpha2, 0.0));
}

double svr_rescale(TrajectoryFrame& frame, const ThermostatConfig& cfg, int dof, double dt, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double r1 = normal(rng);
  const double chi2 = chi_squared(dof - 1, rng);
  const double target = 0.5 * dof * units::kBoltzmann * cfg.target_temperature;
  const double before = frame.kinetic_energy;
  const double alpha = svr_factor(before, target, dof, dt, cfg.time_constant, r1, chi2);
  frame.velocities *= alpha;
  frame.kinetic_energy = before * alpha * alpha;
  frame.temperature = temperature(frame.kinetic_energy, dof);
  return frame.kinetic_energy - before;
}

double nose_hoover_mass(const ThermostatConfig& cfg, int dof) {
  return dof * units::kBoltzmann * cfg.target_temperature * cfg.time_constant * cfg.time_constant;
}

void nose_hoover_half_step(TrajectoryFrame& frame, const ThermostatConfig& cfg, NoseHooverState& state, int dof,
                           const Eigen::VectorXd& masses, double dt) {
  if (dof <= 0) return;
  const double h = 0.5 * dt;
  const double kt = units::kBoltzmann * cfg.target_temperature;
  const double q = nose_hoover_mass(cfg, dof);
  double kin = kinetic_energy(frame.velocities, masses);
  state.zeta += 0.5 * h * (2 * kin - dof * kt) / q;
  state.eta += h * state.zeta;
  const double scale = std::exp(-state.zeta * h);
  frame.velocities *= scale;
  kin *= scale * scale;
  state.zeta += 0.5 * h * (2 * kin - dof * kt) / q;
  frame.kinetic_energy = kin;
  frame.temperature = temperature(kin, dof);
}

void nose_hoover_step(TrajectoryFrame& frame, const ThermostatConfig& cfg, NoseHooverState& state, int dof,
                      double dt, ForceEvaluator& evaluate) {
  nose_hoover_half_step(frame, cfg, state, dof, evaluate.masses(), dt);
  velocity_verlet_step(frame, dt, evaluate);
  nose_hoover_half_step(frame, cfg, state, dof, evaluate.masses(), dt);
}

MdResult run_md(const MolecularSystem& system, const Velocities& velocities, const ForceProvider& provider,
                const MdConfig& cfg, const std::function<void(const TrajectoryFrame&)>& observer) {
  system.validate();
  if (!(cfg.dt > 0)) throw std::invalid_argument("run_md: dt must be positive");
  if (cfg.stride < 1) throw std::invalid_argument("run_md: stride must be at least 1");
  if (velocities.rows() != system.size()) throw std::invalid_argument("run_md: velocity/atom count mismatch");
  const auto& th = cfg.thermostat;
  if (th.kind != ThermostatKind::none && !(th.time_constant > 0)) {
    throw std::invalid_argument("run_md: thermostat time constant must be positive");
  }

  // Offset rotations draw from their own stream so the thermostat stream is
  // the same whether or not they are enabled.
  std::mt19937_64 thermostat_rng(cfg.seed);
  ForceEvaluator evaluate(provider, system, cfg.project, cfg.offset_rotations, cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  const Eigen::VectorXd& masses = evaluate.masses();
  const int dof = degrees_of_freedom(system.positions);

  TrajectoryFrame frame;
  frame.positions = system.positions;
  frame.velocities = velocities;
  Evaluation first = evaluate(frame.positions);
  frame.forces = std::move(first.forces);
  frame.potential_energy = first.energy;
  refresh(frame, masses, dof);

  NoseHooverState nh;
  double svr_work = 0;  // Σ ΔK injected by the SVR thermostat
  const double q = th.kind == ThermostatKind::nose_hoover ? nose_hoover_mass(th, dof) : 0.0;
  const double kt = units::kBoltzmann * th.target_temperature;
  auto bookkeep = [&] {
    const auto total = frame.total_energy();
    double c = total ? *total : std::numeric_limits<double>::quiet_NaN();
    if (th.kind == ThermostatKind::svr) c -= svr_work;
    if (th.kind == ThermostatKind::nose_hoover) c += 0.5 * q * nh.zeta * nh.zeta + dof * kt * nh.eta;
    frame.conserved = c;
  };
  bookkeep();

  MdResult result;
  result.frames.push_back(frame);
  if (observer) observer(frame);

  for (Index s = 0; s < cfg.steps; ++s) {
    switch (th.kind) {
      case ThermostatKind::none:
        velocity_verlet_step(frame, cfg.dt, evaluate);
        refresh(frame, masses, dof);
        break;
      case ThermostatKind::svr:
        velocity_verlet_step(frame, cfg.dt, evaluate);
        refresh(frame, masses, dof);
        svr_work += svr_rescale(frame, th, dof, cfg.dt, thermostat_rng);
        break;
      case ThermostatKind::nose_hoover:
        nose_hoover_step(frame, th, nh, dof, cfg.dt, evaluate);
        refresh(frame, masses, dof);
        break;
    }
    bookkeep();

    std::string problem;
    if (!frame.forces.allFinite() || !frame.positions.allFinite()) problem = "non-finite forces or positions";
    for (Index i = 0; problem.empty() && i < system.size(); ++i)
      for (Index j = i + 1; j < system.size(); ++j) {
        const double r = (frame.positions.row(i) - frame.positions.row(j)).norm();
        if (r > cfg.blowup_distance || r < cfg.min_distance) {
          problem = "distance " + std::to_string(r) + " A between atoms " + std::to_string(i) + " and " +
                    std::to_string(j);
          break;
        }
      }
    if (!problem.empty()) {
      result.abort_reason = "step " + std::to_string(frame.step) + ": " + problem;
      return result;
    }
    result.last_stable_step = frame.step;
    if (observer) observer(frame);
    if (frame.step % cfg.stride == 0) result.frames.push_back(frame);
  }
  return result;
}

void write_energy_log(std::ostream& out, const std::vector<TrajectoryFrame>& frames) {
  out << "time,E_kin,E_pot,E_total,T,conserved\n";
  out.precision(12);
  for (const auto& f : frames) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out << f.time << ',' << f.kinetic_energy << ',' << f.potential_energy.value_or(nan) << ','
        << f.total_energy().value_or(nan) << ',' << f.temperature << ',' << f.conserved << '\n';
  }
}

}  // namespace mdet
