#pragma once

#include "mdet/provider.hpp"

#include <memory>
#include <string>

namespace mdet {

/// Value and first two radial derivatives of one pair term.
struct PairTerm {
  double energy = 0;
  double d1 = 0;  // dE/dr
  double d2 = 0;  // d²E/dr²
};

/// Sum of radial pair terms over all atom pairs. Forces are −∇E and the
/// Jacobian is the negated analytic Hessian, so these providers are exactly
/// conservative and rotation/translation equivariant.
class PairPotential : public ForceProvider {
 public:
  Evaluation evaluate(const MolecularSystem& system) const override;
  std::optional<Eigen::MatrixXd> exact_jacobian(const MolecularSystem& system) const override;
  double energy(const MolecularSystem& system) const;

  virtual PairTerm pair(const MolecularSystem& system, Index i, Index j, double r) const = 0;
};

struct MorseParameters {
  double depth;      // D_e, eV
  double width;      // a, 1/Å
  double equilibrium;  // r_e, Å
};

/// E = D_e[(1 − e^{−a(r − r_e)})² − 1], per element pair.
class MorsePotential final : public PairPotential {
 public:
  /// Element-pair defaults: r_e is the sum of covalent radii, D_e and a are
  /// fixed bond-order-free values. Covers Z = 1..54.
  MorsePotential() = default;
  MorsePotential(double depth_scale, double width) : depth_scale_(depth_scale), width_(width) {}

  MorseParameters parameters(int zi, int zj) const;
  PairTerm pair(const MolecularSystem& system, Index i, Index j, double r) const override;
  std::string name() const override { return "morse"; }

 private:
  double depth_scale_ = 1.0;
  double width_ = 1.8;
};

/// E = 4ε[(σ/r)¹² − (σ/r)⁶] for every pair.
class LennardJonesPotential final : public PairPotential {
 public:
  LennardJonesPotential(double epsilon, double sigma) : epsilon_(epsilon), sigma_(sigma) {}
  PairTerm pair(const MolecularSystem& system, Index i, Index j, double r) const override;
  std::string name() const override { return "lennard_jones"; }

 private:
  double epsilon_;
  double sigma_;
};

/// E = Σ ½ k (r_ij − r⁰_ij)² over all pairs, rest lengths taken from a
/// reference geometry. Atom identities, not species, select the springs.
class HarmonicNetwork final : public PairPotential {
 public:
  HarmonicNetwork(const Positions& reference, double stiffness);
  PairTerm pair(const MolecularSystem& system, Index i, Index j, double r) const override;
  std::string name() const override { return "harmonic_network"; }

 private:
  Eigen::MatrixXd rest_;
  double stiffness_;
};

/// Covalent radius in Å for Z = 1..54.
double covalent_radius(int z);

/// "morse", "lennard_jones" or "harmonic_network" (the last built on `reference`).
std::unique_ptr<PairPotential> make_potential(const std::string& kind, const Positions& reference = {});

}  // namespace mdet
