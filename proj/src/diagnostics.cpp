#include "mdet/diagnostics.hpp"

#include "mdet/units.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mdet {
namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<long>(n / 2), v.end());
  const double upper = v[n / 2];
  if (n % 2) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<long>(n / 2)));
}

void fill_ratios(std::vector<RotationRecord>& records) {
  if (records.empty()) return;
  std::vector<double> mags;
  for (const auto& r : records) mags.push_back(r.magnitude);
  const double med = median(mags);
  for (auto& r : records) r.relative_magnitude = med > 0 ? r.magnitude / med : 1.0;
}

Forces back_rotated_forces(const ForceProvider& provider, MolecularSystem rotated, const Positions& original,
                           const Eigen::Matrix3d& r) {
  rotated.positions = rotate_rows(original, r);
  return rotate_rows(provider.forces(rotated), r.transpose());
}

}  // namespace

Estimate equivariance_error(const ForceProvider& provider, const std::vector<MolecularSystem>& systems,
                            Index n_inner, Index n_outer, std::mt19937_64& rng) {
  if (n_inner < 2) throw std::invalid_argument("equivariance_error: need at least 2 inner rotations");
  if (n_outer < 1) throw std::invalid_argument("equivariance_error: need at least 1 outer rotation");
  if (systems.empty()) throw std::invalid_argument("equivariance_error: no systems");
  std::vector<double> samples;
  for (std::size_t k = 0; k < systems.size(); ++k) {
    const auto& system = systems[k];
    try {
      Forces mean = Forces::Zero(system.size(), 3);
      for (Index r = 0; r < n_inner; ++r) {
        mean += back_rotated_forces(provider, system, system.positions, random_rotation(rng).matrix());
      }
      mean /= static_cast<double>(n_inner);
      for (Index s = 0; s < n_outer; ++s) {
        const Forces f = back_rotated_forces(provider, system, system.positions, random_rotation(rng).matrix());
        samples.push_back((f - mean).rowwise().norm().mean());
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("equivariance_error: system " + std::to_string(k) + ": " + e.what());
    }
  }
  const auto n = static_cast<double>(samples.size());
  double mean = 0;
  for (double v : samples) mean += v;
  mean /= n;
  double var = 0;
  for (double v : samples) var += (v - mean) * (v - mean);
  const double se = samples.size() > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
  return {mean, se};
}

std::vector<RotationRecord> rotation_grid_forces(const ForceProvider& provider, const MolecularSystem& system,
                                                 Index atom, const std::vector<Rotation>& rotations) {
  if (atom < 0 || atom >= system.size()) {
    throw std::out_of_range("rotation_grid_forces: atom " + std::to_string(atom) + " outside system of " +
                            std::to_string(system.size()));
  }
  std::vector<RotationRecord> out;
  MolecularSystem rotated = system;
  for (const auto& rot : rotations) {
    const Eigen::Matrix3d r = rot.matrix();
    rotated.positions = rotate_rows(system.positions, r);
    const Eigen::Vector3d raw = provider.forces(rotated).row(atom).transpose();
    RotationRecord rec{rot, raw, r.transpose() * raw, raw.norm(), 0};
    out.push_back(rec);
  }
  fill_ratios(out);
  return out;
}

std::vector<RotationRecord> rotation_grid_reference(const Eigen::Vector3d& force,
                                                    const std::vector<Rotation>& rotations) {
  std::vector<RotationRecord> out;
  for (const auto& rot : rotations) {
    const Eigen::Vector3d raw = rot.matrix() * force;
    out.push_back({rot, raw, force, raw.norm(), 0});
  }
  fill_ratios(out);
  return out;
}

DensityEstimate kernel_density(const std::vector<double>& samples, Index grid_points) {
  if (samples.empty()) throw std::invalid_argument("kernel_density: no samples");
  const auto n = static_cast<double>(samples.size());
  double mean = 0;
  for (double v : samples) mean += v;
  mean /= n;
  double var = 0;
  for (double v : samples) var += (v - mean) * (v - mean);
  const double sd = samples.size() > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    const double pos = p * (n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = sd;
  if (iqr > 0) spread = std::min(sd, iqr / 1.34);

  DensityEstimate out;
  out.bandwidth = 0.9 * spread * std::pow(n, -0.2);
  const double range = sorted.back() - sorted.front();
  if (!(out.bandwidth > 1e-12 * std::max(1.0, std::abs(mean))) || range == 0) {
    out.bandwidth = 0;
    out.point_mass = true;
    out.location = mean;
    return out;
  }
  const double lo = sorted.front() - 3 * out.bandwidth;
  const double hi = sorted.back() + 3 * out.bandwidth;
  const double norm = 1.0 / (n * out.bandwidth * std::sqrt(2 * std::numbers::pi));
  for (Index g = 0; g < grid_points; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1);
    double d = 0;
    for (double s : samples) {
      const double z = (x - s) / out.bandwidth;
      d += std::exp(-0.5 * z * z);
    }
    out.grid.push_back(x);
    out.density.push_back(d * norm);
  }
  return out;
}

Eigen::MatrixXd position_jacobian(const ForceProvider& provider, const MolecularSystem& system, JacobianMode mode,
                                  double h) {
  Eigen::MatrixXd jac;
  if (mode == JacobianMode::autodiff) {
    auto exact = provider.exact_jacobian(system);
    if (!exact) throw std::invalid_argument("position_jacobian: provider " + provider.name() + " has no exact Jacobian");
    jac = std::move(*exact);
  } else {
    if (!(h > 0)) throw std::invalid_argument("position_jacobian: step must be positive");
    const Index dim = 3 * system.size();
    jac.resize(dim, dim);
    MolecularSystem probe = system;
    for (Index b = 0; b < dim; ++b) {
      probe.positions(b / 3, b % 3) = system.positions(b / 3, b % 3) + h;
      const Forces up = provider.forces(probe);
      probe.positions(b / 3, b % 3) = system.positions(b / 3, b % 3) - h;
      const Forces down = provider.forces(probe);
      probe.positions(b / 3, b % 3) = system.positions(b / 3, b % 3);
      for (Index a = 0; a < dim; ++a) jac(a, b) = (up(a / 3, a % 3) - down(a / 3, a % 3)) / (2 * h);
    }
  }
  if (!jac.allFinite()) throw FiniteValueError("position_jacobian: non-finite entries");
  return jac;
}

double antisymmetric_ratio(const Eigen::MatrixXd& jac) {
  if (jac.rows() != jac.cols()) {
    throw DimensionError("antisymmetric_ratio: Jacobian must be square, got " + std::to_string(jac.rows()) + "x" +
                         std::to_string(jac.cols()));
  }
  const double total = jac.norm();
  if (total == 0) throw std::domain_error("antisymmetric_ratio: undefined for the zero matrix");
  return (0.5 * (jac - jac.transpose())).norm() / total;
}

Estimate energy_drift(const std::vector<double>& t, const std::vector<double>& e, Index n_atoms) {
  if (t.size() != e.size()) throw std::invalid_argument("energy_drift: time/energy length mismatch");
  if (t.size() < 10) {
    throw std::invalid_argument("energy_drift: need at least 10 frames, got " + std::to_string(t.size()));
  }
  if (n_atoms < 1) throw std::invalid_argument("energy_drift: atom count must be positive");
  const auto n = static_cast<double>(t.size());
  double tm = 0, em = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    tm += t[k];
    em += e[k];
  }
  tm /= n;
  em /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    sxx += (t[k] - tm) * (t[k] - tm);
    sxy += (t[k] - tm) * (e[k] - em);
  }
  if (sxx == 0) throw std::invalid_argument("energy_drift: all frames share one time");
  const double slope = sxy / sxx;  // eV/fs
  double ssr = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double r = e[k] - em - slope * (t[k] - tm);
    ssr += r * r;
  }
  const double se = std::sqrt(ssr / (n - 2) / sxx);
  const double scale = units::kFsPerPs / static_cast<double>(n_atoms);
  return {slope * scale, se * scale};
}

Estimate energy_drift(const std::vector<TrajectoryFrame>& frames) {
  std::vector<double> t, e;
  for (const auto& f : frames) {
    const auto total = f.total_energy();
    if (!total) throw std::invalid_argument("energy_drift: frame without potential energy");
    t.push_back(f.time);
    e.push_back(*total);
  }
  return energy_drift(t, e, frames.empty() ? 0 : frames.front().positions.rows());
}

DistanceHistogram distance_histogram(const std::vector<Positions>& frames, double bin_width) {
  if (!(bin_width > 0)) throw std::invalid_argument("distance_histogram: bin width must be positive");
  DistanceHistogram out;
  out.bin_width = bin_width;
  double total = 0;
  for (const auto& x : frames)
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = i + 1; j < x.rows(); ++j) {
        const auto bin = static_cast<std::size_t>((x.row(i) - x.row(j)).norm() / bin_width);
        if (bin >= out.mass.size()) out.mass.resize(bin + 1, 0.0);
        out.mass[bin] += 1;
        total += 1;
      }
  if (total == 0) throw std::invalid_argument("distance_histogram: no atom pairs in input");
  for (auto& m : out.mass) m /= total;
  return out;
}

double histogram_score(const DistanceHistogram& a, const DistanceHistogram& b) {
  if (a.bin_width != b.bin_width) throw std::invalid_argument("histogram_score: bin widths differ");
  const std::size_t n = std::max(a.mass.size(), b.mass.size());
  double sum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = k < a.mass.size() ? a.mass[k] : 0.0;
    const double y = k < b.mass.size() ? b.mass[k] : 0.0;
    sum += std::abs(x - y);
  }
  return sum / static_cast<double>(n);
}

}  // namespace mdet
