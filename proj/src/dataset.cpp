#include "mdet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace mdet {

void Dataset::add(MolecularSystem system, int group_id) {
  if (!system.reference_forces || system.reference_forces->rows() != system.size()) {
    throw std::invalid_argument("dataset: every system needs N x 3 reference forces");
  }
  systems.push_back(std::move(system));
  group.push_back(group_id);
}

double Dataset::mean_force_norm() const {
  double sum = 0;
  Index atoms = 0;
  for (const auto& s : systems) {
    sum += s.reference_forces->rowwise().norm().sum();
    atoms += s.size();
  }
  return atoms ? sum / static_cast<double>(atoms) : 0.0;
}

MolecularSystem random_structure(const PairPotential& potential, const SyntheticConfig& cfg, std::mt19937_64& rng) {
  if (cfg.min_atoms < 1 || cfg.max_atoms < cfg.min_atoms || cfg.elements.empty()) {
    throw std::invalid_argument("synthetic: invalid atom-count range or empty element list");
  }
  std::uniform_int_distribution<Index> count(cfg.min_atoms, cfg.max_atoms);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.elements.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = count(rng);

  MolecularSystem s;
  s.positions = Positions::Zero(n, 3);
  for (Index i = 0; i < n; ++i) s.atomic_numbers.push_back(cfg.elements[pick(rng)]);
  // Grow a chain: each atom bonds to its predecessor at the covalent length
  // and keeps clear of every earlier atom.
  for (Index i = 1; i < n; ++i) {
    const double bond = covalent_radius(s.atomic_numbers[static_cast<std::size_t>(i)]) +
                        covalent_radius(s.atomic_numbers[static_cast<std::size_t>(i - 1)]);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Eigen::RowVector3d dir(normal(rng), normal(rng), normal(rng));
      const Eigen::RowVector3d trial = s.positions.row(i - 1) + bond * dir.normalized();
      bool clear = true;
      for (Index j = 0; j + 1 < i; ++j) clear = clear && (trial - s.positions.row(j)).norm() > 1.2 * bond;
      s.positions.row(i) = trial;
      if (clear) break;
    }
  }
  // Steepest descent with a capped step.
  for (int iter = 0; iter < 5000; ++iter) {
    const Forces f = potential.forces(s);
    const double fmax = f.rowwise().norm().maxCoeff();
    if (fmax < 1e-6) break;
    const double step = std::min(0.01, 0.05 / fmax);
    s.positions += step * f;
  }
  s.positions.rowwise() -= s.positions.colwise().mean();
  return s;
}

Dataset generate_synthetic(const PairPotential& potential, const SyntheticConfig& cfg, std::mt19937_64& rng) {
  if (cfg.n_structures < 1 || cfg.conformers_per_structure < 1) {
    throw std::invalid_argument("synthetic: structure and conformer counts must be positive");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  for (Index g = 0; g < cfg.n_structures; ++g) {
    const MolecularSystem parent = random_structure(potential, cfg, rng);
    for (Index c = 0; c < cfg.conformers_per_structure; ++c) {
      MolecularSystem conf = parent;
      for (Index i = 0; i < conf.size(); ++i)
        for (Index d = 0; d < 3; ++d) conf.positions(i, d) += cfg.spread * normal(rng);
      Evaluation e = potential.evaluate(conf);
      conf.reference_forces = std::move(e.forces);
      conf.reference_energy = e.energy;
      data.add(std::move(conf), static_cast<int>(g));
    }
  }
  return data;
}

DatasetSplit split_dataset(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9 ||
      std::any_of(fractions.begin(), fractions.end(), [](double f) { return f < 0; })) {
    throw std::invalid_argument("split: fractions must be non-negative and sum to 1");
  }
  std::vector<int> ids(data.group.begin(), data.group.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const auto needed = std::count_if(fractions.begin(), fractions.end(), [](double f) { return f > 0; });
  if (static_cast<long>(ids.size()) < needed) {
    throw std::invalid_argument("split: " + std::to_string(ids.size()) + " structure groups for " +
                                std::to_string(needed) + " non-empty splits");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const auto groups = static_cast<double>(ids.size());
  auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * groups));
  auto n_test = static_cast<std::size_t>(std::llround(fractions[2] * groups));
  if (fractions[1] > 0) n_val = std::max<std::size_t>(n_val, 1);
  if (fractions[2] > 0) n_test = std::max<std::size_t>(n_test, 1);
  if (n_val + n_test > ids.size() || (fractions[0] > 0 && n_val + n_test == ids.size())) {
    throw std::invalid_argument("split: too few structure groups for the requested fractions");
  }
  std::map<int, int> where;  // group id -> 0 train, 1 val, 2 test
  for (std::size_t k = 0; k < ids.size(); ++k) where[ids[k]] = k < n_val ? 1 : (k < n_val + n_test ? 2 : 0);

  DatasetSplit out;
  for (std::size_t k = 0; k < data.size(); ++k) {
    Dataset* target[] = {&out.train, &out.validation, &out.test};
    target[where[data.group[k]]]->add(data.systems[k], data.group[k]);
  }
  return out;
}

}  // namespace mdet
