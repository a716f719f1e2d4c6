#pragma once

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mdet {

using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Forces = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Atoms in Å with total spin (unpaired electrons) and net charge.
struct MolecularSystem {
  std::vector<int> atomic_numbers;
  Positions positions;
  int spin = 0;
  int charge = 0;
  std::optional<Forces> reference_forces;  // eV/Å
  std::optional<double> reference_energy;  // eV

  Eigen::Index size() const { return static_cast<Eigen::Index>(atomic_numbers.size()); }

  /// Throws std::invalid_argument unless N ≥ 1, shapes agree and all coordinates are finite.
  void validate() const;
};

/// Element data for Z = 1..54.
int atomic_number(std::string_view symbol);  // throws std::invalid_argument
std::string element_symbol(int z);
double atomic_mass(int z);  // amu
Eigen::VectorXd atomic_masses(const std::vector<int>& atomic_numbers);

}  // namespace mdet
