#pragma once

#include "mdet/md.hpp"
#include "mdet/system.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdet {

/// Malformed extended-XYZ input. `line` is 1-based.
class XyzError : public std::runtime_error {
 public:
  XyzError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line;
};

struct XyzFrame {
  MolecularSystem system;
  std::optional<Velocities> velocities;
  std::optional<double> time;
};

/// Reads every block. Columns follow the `Properties=` spec (species, pos,
/// forces, vel; others skipped); without one, `species x y z` is assumed.
/// `charge=`, `spin=`, `energy=` and `time=` are read from the comment line.
std::vector<XyzFrame> read_xyz(std::istream& in, const std::string& source = "<xyz>");
std::vector<XyzFrame> read_xyz_file(const std::filesystem::path& file);
std::vector<MolecularSystem> parse_extended_xyz(const std::string& text);

void write_xyz_frame(std::ostream& out, const XyzFrame& frame);
void write_xyz(std::ostream& out, const std::vector<MolecularSystem>& systems);
/// Trajectory frame with positions, velocities and forces.
void write_trajectory_frame(std::ostream& out, const MolecularSystem& species, const TrajectoryFrame& frame);

}  // namespace mdet
