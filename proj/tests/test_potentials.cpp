#include "mdet/potentials.hpp"
#include "mdet/rotation.hpp"
#include "support/model_oracles.hpp"

#include <gtest/gtest.h>

using namespace mdet;

namespace {

MolecularSystem chain(std::mt19937_64& rng, Index n) {
  auto s = mdet::testing::random_system(n, rng, 1.5);
  // Keep atoms apart so LJ and Morse stay well conditioned.
  for (Index i = 0; i < n; ++i) s.positions.row(i) += Eigen::RowVector3d(1.2 * static_cast<double>(i), 0, 0);
  return s;
}

Forces numeric_forces(const PairPotential& p, const MolecularSystem& s, double h = 1e-5) {
  Forces f(s.size(), 3);
  MolecularSystem probe = s;
  for (Index i = 0; i < s.size(); ++i)
    for (Index c = 0; c < 3; ++c) {
      probe.positions(i, c) = s.positions(i, c) + h;
      const double up = p.energy(probe);
      probe.positions(i, c) = s.positions(i, c) - h;
      const double down = p.energy(probe);
      probe.positions(i, c) = s.positions(i, c);
      f(i, c) = -(up - down) / (2 * h);
    }
  return f;
}

std::vector<std::unique_ptr<PairPotential>> all_potentials(const MolecularSystem& s) {
  std::vector<std::unique_ptr<PairPotential>> out;
  out.push_back(make_potential("morse"));
  out.push_back(make_potential("lennard_jones"));
  out.push_back(make_potential("harmonic_network", s.positions * 1.05));
  return out;
}

}  // namespace

TEST(PairPotential, ForcesAreNegativeGradient) {
  std::mt19937_64 rng(1);
  const auto s = chain(rng, 5);
  for (const auto& p : all_potentials(s)) {
    const Forces f = p->forces(s);
    const Forces fd = numeric_forces(*p, s);
    EXPECT_LE((f - fd).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, f.cwiseAbs().maxCoeff())) << p->name();
  }
}

TEST(PairPotential, NetForceVanishes) {
  std::mt19937_64 rng(2);
  const auto s = chain(rng, 5);
  for (const auto& p : all_potentials(s)) {
    EXPECT_LE(p->forces(s).colwise().sum().norm(), 1e-10) << p->name();
  }
}

TEST(PairPotential, AnalyticJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const auto s = chain(rng, 4);
  for (const auto& p : all_potentials(s)) {
    const Eigen::MatrixXd j = *p->exact_jacobian(s);
    Eigen::MatrixXd fd(12, 12);
    const double h = 1e-5;
    for (Index b = 0; b < 12; ++b) {
      MolecularSystem up = s, down = s;
      up.positions(b / 3, b % 3) += h;
      down.positions(b / 3, b % 3) -= h;
      const Forces d = (p->forces(up) - p->forces(down)) / (2 * h);
      for (Index a = 0; a < 12; ++a) fd(a, b) = d(a / 3, a % 3);
    }
    EXPECT_LE((j - fd).norm() / j.norm(), 1e-7) << p->name();
    EXPECT_LE((j - j.transpose()).norm(), 1e-12 * j.norm()) << p->name();
  }
}

TEST(PairPotential, RotationEquivariant) {
  std::mt19937_64 rng(4);
  const auto s = chain(rng, 5);
  for (const auto& p : all_potentials(s)) {
    const Eigen::Matrix3d r = random_rotation(rng).matrix();
    MolecularSystem rotated = s;
    rotated.positions = rotate_rows(s.positions, r);
    const Forces back = rotate_rows(p->forces(rotated), r.transpose());
    const Forces f = p->forces(s);
    EXPECT_LE((back - f).cwiseAbs().maxCoeff(), 1e-13 * std::max(1.0, f.cwiseAbs().maxCoeff())) << p->name();
  }
}

TEST(Morse, MinimumAtCovalentBondLength) {
  MorsePotential morse;
  MolecularSystem s{{6, 8}, Positions::Zero(2, 3)};
  const double re = covalent_radius(6) + covalent_radius(8);
  s.positions(1, 2) = re;
  const auto e = morse.evaluate(s);
  EXPECT_NEAR(*e.energy, -morse.parameters(6, 8).depth, 1e-14);
  EXPECT_LE(e.forces.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(HarmonicNetwork, ReferenceGeometryIsForceFree) {
  std::mt19937_64 rng(5);
  const auto s = chain(rng, 4);
  HarmonicNetwork net(s.positions, 3.0);
  EXPECT_LE(net.forces(s).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(net.energy(s), 0.0, 1e-20);
}

TEST(Potentials, UnknownKindIsRejected) {
  EXPECT_THROW(make_potential("buckingham"), std::invalid_argument);
  EXPECT_THROW(make_potential("harmonic_network"), std::invalid_argument);
}
