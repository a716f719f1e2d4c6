#include "mdet/dataset.hpp"

#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <set>

using namespace mdet;

namespace {

Dataset synthetic(Index structures, Index conformers, double spread, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_structures = structures;
  cfg.conformers_per_structure = conformers;
  cfg.spread = spread;
  std::mt19937_64 rng(seed);
  return generate_synthetic(MorsePotential{}, cfg, rng);
}

std::set<int> groups(const Dataset& d) { return {d.group.begin(), d.group.end()}; }

}  // namespace

TEST(Synthetic, ZeroSpreadReproducesParent) {
  const auto d = synthetic(4, 5, 0.0, 1);
  ASSERT_EQ(d.size(), 20u);
  for (std::size_t k = 0; k < d.size(); ++k) {
    const auto& parent = d.systems[k - k % 5];
    EXPECT_EQ(d.group[k], d.group[k - k % 5]);
    EXPECT_EQ((d.systems[k].positions - parent.positions).norm(), 0.0);
  }
}

TEST(Synthetic, LabelsHaveZeroNetForce) {
  const auto d = synthetic(20, 5, 0.1, 2);
  for (const auto& s : d.systems) EXPECT_LE(s.reference_forces->colwise().sum().norm(), 1e-10);
}

TEST(Synthetic, LabelsAreNegativeEnergyGradient) {
  const auto d = synthetic(10, 3, 0.1, 3);
  MorsePotential morse;
  const double h = 1e-5;
  for (const auto& s : d.systems) {
    ASSERT_TRUE(s.reference_energy);
    EXPECT_NEAR(*s.reference_energy, morse.energy(s), 1e-12);
    for (Index i = 0; i < s.size(); ++i) {
      for (Index c = 0; c < 3; ++c) {
        MolecularSystem p = s, m = s;
        p.positions(i, c) += h;
        m.positions(i, c) -= h;
        const double fd = -(morse.energy(p) - morse.energy(m)) / (2 * h);
        EXPECT_NEAR((*s.reference_forces)(i, c), fd, 1e-8);
      }
    }
  }
}

TEST(Synthetic, StructuresAreRelaxedAndSized) {
  const auto d = synthetic(30, 1, 0.0, 4);
  for (const auto& s : d.systems) {
    EXPECT_GE(s.size(), 2);
    EXPECT_LE(s.size(), 5);
    EXPECT_LE(s.reference_forces->rowwise().norm().maxCoeff(), 1e-3);
    for (int z : s.atomic_numbers) EXPECT_TRUE(z == 1 || z == 6 || z == 7 || z == 8);
  }
  EXPECT_LT(d.mean_force_norm(), 1e-3);
}

TEST(Split, NinetyFiveFiveByGroup) {
  const auto d = synthetic(100, 2, 0.05, 5);
  const auto split = split_dataset(d, {0.9, 0.05, 0.05}, 7);
  EXPECT_EQ(groups(split.train).size(), 90u);
  EXPECT_EQ(groups(split.validation).size(), 5u);
  EXPECT_EQ(groups(split.test).size(), 5u);
  EXPECT_EQ(split.train.size() + split.validation.size() + split.test.size(), d.size());
}

TEST(Split, GroupsNeverStraddle) {
  const auto d = synthetic(40, 4, 0.05, 6);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto split = split_dataset(d, {0.8, 0.1, 0.1}, seed);
    const auto a = groups(split.train), b = groups(split.validation), c = groups(split.test);
    for (int g : b) EXPECT_FALSE(a.count(g));
    for (int g : c) EXPECT_FALSE(a.count(g) || b.count(g));
    std::map<int, int> count;
    for (const auto* part : {&split.train, &split.validation, &split.test})
      for (int g : part->group) ++count[g];
    for (const auto& [g, n] : count) EXPECT_EQ(n, 4);
  }
}

TEST(Split, DeterministicUnderSeed) {
  const auto d = synthetic(30, 2, 0.05, 8);
  const auto a = split_dataset(d, {0.9, 0.05, 0.05}, 11);
  const auto b = split_dataset(d, {0.9, 0.05, 0.05}, 11);
  const auto c = split_dataset(d, {0.9, 0.05, 0.05}, 12);
  EXPECT_EQ(a.train.group, b.train.group);
  EXPECT_EQ(a.test.group, b.test.group);
  EXPECT_NE(a.train.group, c.train.group);
}

TEST(Split, RejectsTooFewGroupsAndBadFractions) {
  const auto d = synthetic(2, 3, 0.05, 9);
  EXPECT_THROW(split_dataset(d, {0.9, 0.05, 0.05}, 1), std::invalid_argument);
  const auto e = synthetic(10, 1, 0.05, 9);
  EXPECT_THROW(split_dataset(e, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
}

TEST(DatasetType, RejectsUnlabelledSystems) {
  Dataset d;
  EXPECT_THROW(d.add(MolecularSystem{{1}, Positions::Zero(1, 3)}, 0), std::invalid_argument);
}
