#pragma once

#include "mdet/potentials.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace mdet {

/// Labelled systems; `group[k]` is the structure identity of `systems[k]`.
struct Dataset {
  std::vector<MolecularSystem> systems;
  std::vector<int> group;

  std::size_t size() const { return systems.size(); }
  bool empty() const { return systems.empty(); }
  void add(MolecularSystem system, int group_id);
  /// Mean per-atom label force norm, eV/Å.
  double mean_force_norm() const;
};

struct SyntheticConfig {
  Index n_structures = 100;
  Index conformers_per_structure = 10;
  double spread = 0.05;  // Å, std. dev. of Gaussian displacement per coordinate
  Index min_atoms = 2;
  Index max_atoms = 5;
  std::vector<int> elements{1, 6, 7, 8};
};

/// Random chain of bonded atoms relaxed to a local minimum of `potential`.
MolecularSystem random_structure(const PairPotential& potential, const SyntheticConfig& cfg, std::mt19937_64& rng);

/// Structures with Gaussian-displaced conformers labelled by `potential`.
Dataset generate_synthetic(const PairPotential& potential, const SyntheticConfig& cfg, std::mt19937_64& rng);

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Assigns whole structure groups to train/validation/test. Group counts for
/// validation and test are the rounded fractions; train takes the rest.
DatasetSplit split_dataset(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace mdet
