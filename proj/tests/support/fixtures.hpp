#pragma once

// Analytic systems and providers with known answers.

#include "mdet/dataset.hpp"
#include "mdet/md.hpp"
#include "mdet/potentials.hpp"
#include "mdet/units.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mdet::testing {

/// Two carbon atoms joined by one spring of stiffness k along x.
struct HarmonicDimer {
  MolecularSystem system;
  HarmonicNetwork potential;
  double k;
  double reduced_mass;  // amu

  explicit HarmonicDimer(double stiffness = 10.0, double bond = 1.5)
      : system{{6, 6}, Positions::Zero(2, 3)},
        potential(rest(bond), stiffness),
        k(stiffness),
        reduced_mass(0.5 * atomic_mass(6)) {
    system.positions = rest(bond);
  }
  /// Angular frequency, rad/fs.
  double omega() const { return std::sqrt(k / (reduced_mass * units::kMassVelocitySqToEv)); }
  double frequency_hz_fs() const { return omega() / (2 * std::numbers::pi); }
  double wavenumber() const { return frequency_hz_fs() / units::kSpeedOfLightCmPerFs; }

  static Positions rest(double bond) {
    Positions x = Positions::Zero(2, 3);
    x(1, 0) = bond;
    return x;
  }
};

/// Random cluster with every pair joined by a spring at its initial length.
inline MolecularSystem random_cluster(Index n, std::uint64_t seed, double box = 4.0, int z = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-box, box);
  MolecularSystem s;
  s.atomic_numbers.assign(static_cast<std::size_t>(n), z);
  s.positions.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      s.positions.row(i) = Eigen::RowVector3d(u(rng), u(rng), u(rng));
      bool clear = true;
      for (Index j = 0; j < i; ++j) clear = clear && (s.positions.row(i) - s.positions.row(j)).norm() > 1.2;
      if (clear) break;
    }
  }
  return s;
}

/// Relaxed small Morse molecule.
inline MolecularSystem morse_molecule(std::uint64_t seed, Index atoms = 4) {
  MorsePotential morse;
  SyntheticConfig cfg;
  cfg.min_atoms = atoms;
  cfg.max_atoms = atoms;
  std::mt19937_64 rng(seed);
  return random_structure(morse, cfg, rng);
}

/// f = A·x on flattened coordinates; neither equivariant nor conservative in general.
class LinearProvider final : public ForceProvider {
 public:
  explicit LinearProvider(Eigen::MatrixXd a) : a_(std::move(a)) {}
  Evaluation evaluate(const MolecularSystem& s) const override {
    Eigen::VectorXd x(3 * s.size());
    for (Index i = 0; i < s.size(); ++i)
      for (Index c = 0; c < 3; ++c) x[3 * i + c] = s.positions(i, c);
    const Eigen::VectorXd f = a_ * x;
    Forces out(s.size(), 3);
    for (Index i = 0; i < s.size(); ++i)
      for (Index c = 0; c < 3; ++c) out(i, c) = f[3 * i + c];
    return {out, {}};
  }
  std::string name() const override { return "linear"; }

 private:
  Eigen::MatrixXd a_;
};

/// The same world-frame vector on every atom, whatever the orientation.
class ConstantProvider final : public ForceProvider {
 public:
  explicit ConstantProvider(Eigen::Vector3d f) : f_(f) {}
  Evaluation evaluate(const MolecularSystem& s) const override {
    return {Forces(f_.transpose().replicate(s.size(), 1)), {}};
  }
  std::string name() const override { return "constant"; }

 private:
  Eigen::Vector3d f_;
};

}  // namespace mdet::testing
