#include "mdet/xyz.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace mdet {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

// key=value pairs; values may be double-quoted.
std::map<std::string, std::string> comment_pairs(const std::string& line) {
  std::map<std::string, std::string> out;
  std::size_t k = 0;
  while (k < line.size()) {
    while (k < line.size() && std::isspace(static_cast<unsigned char>(line[k]))) ++k;
    const std::size_t start = k;
    while (k < line.size() && line[k] != '=' && !std::isspace(static_cast<unsigned char>(line[k]))) ++k;
    if (k >= line.size() || line[k] != '=') continue;
    std::string key = line.substr(start, k - start);
    ++k;
    std::string value;
    if (k < line.size() && line[k] == '"') {
      const std::size_t close = line.find('"', k + 1);
      value = line.substr(k + 1, close == std::string::npos ? std::string::npos : close - k - 1);
      k = close == std::string::npos ? line.size() : close + 1;
    } else {
      const std::size_t vstart = k;
      while (k < line.size() && !std::isspace(static_cast<unsigned char>(line[k]))) ++k;
      value = line.substr(vstart, k - vstart);
    }
    for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out[key] = value;
  }
  return out;
}

struct Column {
  std::string name;
  char type;
  int count;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

XyzError::XyzError(const std::string& source, std::size_t line_no, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line_no) + ": " + what), line(line_no) {}

std::vector<XyzFrame> read_xyz(std::istream& in, const std::string& source) {
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    lines.push_back(std::move(l));
  }
  auto fail = [&](std::size_t line, const std::string& msg) { throw XyzError(source, line, msg); };
  auto parse_double = [&](const std::string& tok, std::size_t line) {
    double v = 0;
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size() || !std::isfinite(v)) {
      fail(line, "malformed number '" + tok + "'");
    }
    return v;
  };
  auto parse_int = [&](const std::string& tok, std::size_t line, const std::string& what) {
    long long v = 0;
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size()) fail(line, "malformed " + what + " '" + tok + "'");
    return v;
  };

  std::vector<XyzFrame> frames;
  std::size_t k = 0;
  while (k < lines.size()) {
    if (split_ws(lines[k]).empty()) {
      ++k;
      continue;
    }
    const std::size_t count_line = k + 1;
    const auto count_tokens = split_ws(lines[k]);
    if (count_tokens.size() != 1) fail(count_line, "expected an atom count, got '" + lines[k] + "'");
    const long long n = parse_int(count_tokens[0], count_line, "atom count");
    if (n < 1) fail(count_line, "atom count must be positive");
    if (k + 1 >= lines.size()) fail(count_line + 1, "missing comment line");
    const auto meta = comment_pairs(lines[k + 1]);

    std::vector<Column> columns;
    if (auto it = meta.find("properties"); it != meta.end()) {
      std::vector<std::string> parts;
      std::stringstream ss(it->second);
      for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
      if (parts.size() % 3 != 0) fail(count_line + 1, "Properties must be name:type:count triplets");
      for (std::size_t p = 0; p < parts.size(); p += 3) {
        const auto c = parse_int(parts[p + 2], count_line + 1, "column count");
        if (parts[p + 1].size() != 1 || c < 1) fail(count_line + 1, "bad Properties entry " + parts[p]);
        std::string name = parts[p];
        for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        columns.push_back({name, static_cast<char>(std::toupper(static_cast<unsigned char>(parts[p + 1][0]))),
                           static_cast<int>(c)});
      }
    } else {
      columns = {{"species", 'S', 1}, {"pos", 'R', 3}};
    }
    int width = 0;
    bool has_species = false, has_pos = false;
    for (const auto& c : columns) {
      width += c.count;
      if (c.name == "species") has_species = true;
      if (c.name == "pos" || c.name == "positions") has_pos = true;
    }
    if (!has_species || !has_pos) fail(count_line + 1, "Properties must declare species and pos");

    XyzFrame frame;
    auto& sys = frame.system;
    sys.positions.resize(n, 3);
    Forces forces(n, 3);
    Velocities vel(n, 3);
    bool has_forces = false, has_vel = false;
    for (long long a = 0; a < n; ++a) {
      const std::size_t idx = k + 2 + static_cast<std::size_t>(a);
      if (idx >= lines.size()) {
        fail(idx + 1, "count mismatch: block at line " + std::to_string(count_line) + " declares " +
                          std::to_string(n) + " atoms but input ends after " + std::to_string(a));
      }
      const auto tok = split_ws(lines[idx]);
      if (tok.size() != static_cast<std::size_t>(width)) {
        if (tok.size() <= 1) {
          fail(idx + 1, "count mismatch: block at line " + std::to_string(count_line) + " declares " +
                            std::to_string(n) + " atoms but only " + std::to_string(a) + " atom lines follow");
        }
        fail(idx + 1, "expected " + std::to_string(width) + " fields, got " + std::to_string(tok.size()));
      }
      std::size_t t = 0;
      for (const auto& c : columns) {
        if (c.name == "species") {
          try {
            sys.atomic_numbers.push_back(atomic_number(tok[t]));
          } catch (const std::invalid_argument&) {
            fail(idx + 1, "unknown element symbol '" + tok[t] + "'");
          }
        } else if (c.count == 3 && (c.name == "pos" || c.name == "positions")) {
          for (int d = 0; d < 3; ++d) sys.positions(a, d) = parse_double(tok[t + d], idx + 1);
        } else if (c.count == 3 && (c.name == "forces" || c.name == "force")) {
          has_forces = true;
          for (int d = 0; d < 3; ++d) forces(a, d) = parse_double(tok[t + d], idx + 1);
        } else if (c.count == 3 && (c.name == "vel" || c.name == "velo" || c.name == "velocities")) {
          has_vel = true;
          for (int d = 0; d < 3; ++d) vel(a, d) = parse_double(tok[t + d], idx + 1);
        }
        t += static_cast<std::size_t>(c.count);
      }
    }
    if (has_forces) sys.reference_forces = forces;
    if (has_vel) frame.velocities = vel;
    if (auto it = meta.find("charge"); it != meta.end()) sys.charge = static_cast<int>(parse_int(it->second, count_line + 1, "charge"));
    if (auto it = meta.find("spin"); it != meta.end()) {
      const auto s = parse_int(it->second, count_line + 1, "spin");
      if (s < 0) fail(count_line + 1, "spin must be non-negative");
      sys.spin = static_cast<int>(s);
    }
    if (auto it = meta.find("energy"); it != meta.end()) sys.reference_energy = parse_double(it->second, count_line + 1);
    if (auto it = meta.find("time"); it != meta.end()) frame.time = parse_double(it->second, count_line + 1);

    k += 2 + static_cast<std::size_t>(n);
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<XyzFrame> read_xyz_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return read_xyz(in, file.string());
}

std::vector<MolecularSystem> parse_extended_xyz(const std::string& text) {
  std::istringstream in(text);
  std::vector<MolecularSystem> out;
  for (auto& f : read_xyz(in)) out.push_back(std::move(f.system));
  return out;
}

void write_xyz_frame(std::ostream& out, const XyzFrame& frame) {
  const auto& s = frame.system;
  out << s.size() << "\nProperties=species:S:1:pos:R:3";
  if (frame.velocities) out << ":vel:R:3";
  if (s.reference_forces) out << ":forces:R:3";
  out << " charge=" << s.charge << " spin=" << s.spin;
  if (s.reference_energy) out << " energy=" << format_double(*s.reference_energy);
  if (frame.time) out << " time=" << format_double(*frame.time);
  out << '\n';
  for (Index i = 0; i < s.size(); ++i) {
    out << element_symbol(s.atomic_numbers[static_cast<std::size_t>(i)]);
    for (int d = 0; d < 3; ++d) out << ' ' << format_double(s.positions(i, d));
    if (frame.velocities)
      for (int d = 0; d < 3; ++d) out << ' ' << format_double((*frame.velocities)(i, d));
    if (s.reference_forces)
      for (int d = 0; d < 3; ++d) out << ' ' << format_double((*s.reference_forces)(i, d));
    out << '\n';
  }
}

void write_xyz(std::ostream& out, const std::vector<MolecularSystem>& systems) {
  for (const auto& s : systems) write_xyz_frame(out, XyzFrame{s, std::nullopt, std::nullopt});
}

void write_trajectory_frame(std::ostream& out, const MolecularSystem& species, const TrajectoryFrame& frame) {
  XyzFrame f{species, frame.velocities, frame.time};
  f.system.positions = frame.positions;
  f.system.reference_forces = frame.forces;
  f.system.reference_energy = frame.potential_energy;
  write_xyz_frame(out, f);
}

}  // namespace mdet
