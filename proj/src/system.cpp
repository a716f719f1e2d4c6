#include "mdet/system.hpp"

#include <array>

namespace mdet {
namespace {

struct Element {
  const char* symbol;
  double mass;
};

constexpr std::array<Element, 54> kElements{{
    {"H", 1.008},    {"He", 4.0026},  {"Li", 6.94},    {"Be", 9.0122},  {"B", 10.81},    {"C", 12.011},
    {"N", 14.007},   {"O", 15.999},   {"F", 18.998},   {"Ne", 20.180},  {"Na", 22.990},  {"Mg", 24.305},
    {"Al", 26.982},  {"Si", 28.085},  {"P", 30.974},   {"S", 32.06},    {"Cl", 35.45},   {"Ar", 39.948},
    {"K", 39.098},   {"Ca", 40.078},  {"Sc", 44.956},  {"Ti", 47.867},  {"V", 50.942},   {"Cr", 51.996},
    {"Mn", 54.938},  {"Fe", 55.845},  {"Co", 58.933},  {"Ni", 58.693},  {"Cu", 63.546},  {"Zn", 65.38},
    {"Ga", 69.723},  {"Ge", 72.630},  {"As", 74.922},  {"Se", 78.971},  {"Br", 79.904},  {"Kr", 83.798},
    {"Rb", 85.468},  {"Sr", 87.62},   {"Y", 88.906},   {"Zr", 91.224},  {"Nb", 92.906},  {"Mo", 95.95},
    {"Tc", 98.0},    {"Ru", 101.07},  {"Rh", 102.91},  {"Pd", 106.42},  {"Ag", 107.87},  {"Cd", 112.41},
    {"In", 114.82},  {"Sn", 118.71},  {"Sb", 121.76},  {"Te", 127.60},  {"I", 126.90},   {"Xe", 131.29},
}};

const Element& element(int z) {
  if (z < 1 || z > static_cast<int>(kElements.size())) {
    throw std::invalid_argument("unsupported atomic number " + std::to_string(z));
  }
  return kElements[static_cast<std::size_t>(z - 1)];
}

}  // namespace

void MolecularSystem::validate() const {
  if (atomic_numbers.empty()) throw std::invalid_argument("system: no atoms");
  if (positions.rows() != size()) {
    throw std::invalid_argument("system: " + std::to_string(positions.rows()) + " positions for " +
                                std::to_string(size()) + " atoms");
  }
  if (!positions.allFinite()) throw std::invalid_argument("system: non-finite positions");
  if (reference_forces && reference_forces->rows() != size()) {
    throw std::invalid_argument("system: reference forces do not match atom count");
  }
}

int atomic_number(std::string_view symbol) {
  for (std::size_t k = 0; k < kElements.size(); ++k) {
    if (symbol == kElements[k].symbol) return static_cast<int>(k) + 1;
  }
  throw std::invalid_argument("unknown element symbol '" + std::string(symbol) + "'");
}

std::string element_symbol(int z) { return element(z).symbol; }

double atomic_mass(int z) { return element(z).mass; }

Eigen::VectorXd atomic_masses(const std::vector<int>& atomic_numbers) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(atomic_numbers.size()));
  for (std::size_t i = 0; i < atomic_numbers.size(); ++i) m[static_cast<Eigen::Index>(i)] = atomic_mass(atomic_numbers[i]);
  return m;
}

}  // namespace mdet
