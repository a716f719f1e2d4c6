#include "mdet/potentials.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace mdet {
namespace {

constexpr std::array<double, 54> kCovalentRadius{
    0.31, 0.28, 1.28, 0.96, 0.84, 0.76, 0.71, 0.66, 0.57, 0.58, 1.66, 1.41, 1.21, 1.11, 1.07, 1.05, 1.02, 1.06,
    2.03, 1.76, 1.70, 1.60, 1.53, 1.39, 1.39, 1.32, 1.26, 1.24, 1.32, 1.22, 1.22, 1.20, 1.19, 1.20, 1.20, 1.16,
    2.20, 1.95, 1.90, 1.75, 1.64, 1.54, 1.47, 1.46, 1.42, 1.39, 1.45, 1.44, 1.42, 1.39, 1.39, 1.38, 1.39, 1.40};

constexpr double kMorseDepth = 2.0;  // eV

}  // namespace

double covalent_radius(int z) {
  if (z < 1 || z > static_cast<int>(kCovalentRadius.size())) {
    throw std::invalid_argument("no covalent radius for Z=" + std::to_string(z));
  }
  return kCovalentRadius[static_cast<std::size_t>(z - 1)];
}

double PairPotential::energy(const MolecularSystem& system) const {
  double e = 0;
  for (Index i = 0; i < system.size(); ++i)
    for (Index j = i + 1; j < system.size(); ++j) {
      e += pair(system, i, j, (system.positions.row(j) - system.positions.row(i)).norm()).energy;
    }
  return e;
}

Evaluation PairPotential::evaluate(const MolecularSystem& system) const {
  const Index n = system.size();
  Evaluation out{Forces::Zero(n, 3), 0.0};
  double e = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const Eigen::RowVector3d rij = system.positions.row(j) - system.positions.row(i);
      const double r = rij.norm();
      const PairTerm t = pair(system, i, j, r);
      e += t.energy;
      // ∂E/∂x_j = E'(r) r̂, ∂E/∂x_i = −E'(r) r̂.
      const Eigen::RowVector3d g = t.d1 / r * rij;
      out.forces.row(j) -= g;
      out.forces.row(i) += g;
    }
  out.energy = e;
  return out;
}

std::optional<Eigen::MatrixXd> PairPotential::exact_jacobian(const MolecularSystem& system) const {
  const Index n = system.size();
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const Eigen::Vector3d rij = (system.positions.row(j) - system.positions.row(i)).transpose();
      const double r = rij.norm();
      const PairTerm t = pair(system, i, j, r);
      const Eigen::Vector3d u = rij / r;
      const Eigen::Matrix3d uu = u * u.transpose();
      const Eigen::Matrix3d k = t.d2 * uu + t.d1 / r * (Eigen::Matrix3d::Identity() - uu);
      hess.block<3, 3>(3 * i, 3 * i) += k;
      hess.block<3, 3>(3 * j, 3 * j) += k;
      hess.block<3, 3>(3 * i, 3 * j) -= k;
      hess.block<3, 3>(3 * j, 3 * i) -= k;
    }
  return Eigen::MatrixXd(-hess);
}

MorseParameters MorsePotential::parameters(int zi, int zj) const {
  return {kMorseDepth * depth_scale_, width_, covalent_radius(zi) + covalent_radius(zj)};
}

PairTerm MorsePotential::pair(const MolecularSystem& system, Index i, Index j, double r) const {
  const auto p = parameters(system.atomic_numbers[static_cast<std::size_t>(i)],
                            system.atomic_numbers[static_cast<std::size_t>(j)]);
  const double x = std::exp(-p.width * (r - p.equilibrium));
  return {p.depth * ((1 - x) * (1 - x) - 1), 2 * p.depth * p.width * x * (1 - x),
          2 * p.depth * p.width * p.width * x * (2 * x - 1)};
}

PairTerm LennardJonesPotential::pair(const MolecularSystem&, Index, Index, double r) const {
  const double s6 = std::pow(sigma_ / r, 6);
  const double s12 = s6 * s6;
  return {4 * epsilon_ * (s12 - s6), 4 * epsilon_ * (-12 * s12 + 6 * s6) / r,
          4 * epsilon_ * (156 * s12 - 42 * s6) / (r * r)};
}

HarmonicNetwork::HarmonicNetwork(const Positions& reference, double stiffness)
    : rest_(reference.rows(), reference.rows()), stiffness_(stiffness) {
  for (Index i = 0; i < reference.rows(); ++i)
    for (Index j = 0; j < reference.rows(); ++j) rest_(i, j) = (reference.row(j) - reference.row(i)).norm();
}

PairTerm HarmonicNetwork::pair(const MolecularSystem& system, Index i, Index j, double r) const {
  if (system.size() != rest_.rows()) {
    throw std::invalid_argument("harmonic network built for " + std::to_string(rest_.rows()) + " atoms, got " +
                                std::to_string(system.size()));
  }
  const double dr = r - rest_(i, j);
  return {0.5 * stiffness_ * dr * dr, stiffness_ * dr, stiffness_};
}

std::unique_ptr<PairPotential> make_potential(const std::string& kind, const Positions& reference) {
  if (kind == "morse") return std::make_unique<MorsePotential>();
  if (kind == "lennard_jones") return std::make_unique<LennardJonesPotential>(0.0104, 3.4);
  if (kind == "harmonic_network") {
    if (reference.rows() == 0) throw std::invalid_argument("harmonic_network needs a reference geometry");
    return std::make_unique<HarmonicNetwork>(reference, 10.0);
  }
  throw std::invalid_argument("unknown potential kind '" + kind + "' (morse, lennard_jones, harmonic_network)");
}

}  // namespace mdet
