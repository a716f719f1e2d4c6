#pragma once

#include "mdet/md.hpp"
#include "mdet/provider.hpp"
#include "mdet/rotation.hpp"

#include <random>
#include <vector>

namespace mdet {

struct Estimate {
  double value = 0;
  double std_error = 0;
};

/// Monte-Carlo equivariance error in eV/Å. For each system the rotational mean
/// m = E_R[Rᵀ f̂(R x)] is estimated from `n_inner` rotations, then
/// mean_atoms ‖Sᵀ f̂(S x) − m‖ is averaged over `n_outer` fresh rotations S and
/// all systems. The standard error is taken over those samples.
Estimate equivariance_error(const ForceProvider& provider, const std::vector<MolecularSystem>& systems,
                            Index n_inner, Index n_outer, std::mt19937_64& rng);

struct RotationRecord {
  Rotation rotation;
  Eigen::Vector3d raw;           // f̂(R x)_atom, or R f_ref in reference mode
  Eigen::Vector3d back_rotated;  // Rᵀ f̂(R x)_atom
  double magnitude = 0;
  double relative_magnitude = 0;  // magnitude / median magnitude
};

std::vector<RotationRecord> rotation_grid_forces(const ForceProvider& provider, const MolecularSystem& system,
                                                 Index atom, const std::vector<Rotation>& rotations);
/// Reference mode: rotates a fixed force vector by every rotation.
std::vector<RotationRecord> rotation_grid_reference(const Eigen::Vector3d& force,
                                                    const std::vector<Rotation>& rotations);

/// Gaussian kernel density with Silverman's bandwidth. A zero bandwidth
/// (all samples equal) is reported as a point mass at `location`.
struct DensityEstimate {
  double bandwidth = 0;
  bool point_mass = false;
  double location = 0;
  std::vector<double> grid;
  std::vector<double> density;
};
DensityEstimate kernel_density(const std::vector<double>& samples, Index grid_points = 200);

enum class JacobianMode { autodiff, finite_difference };

/// J[a, b] = ∂f_a/∂x_b with a, b = 3·atom + axis. Autodiff mode requires a
/// provider with an exact Jacobian; finite differences are central with step h (Å).
Eigen::MatrixXd position_jacobian(const ForceProvider& provider, const MolecularSystem& system, JacobianMode mode,
                                  double h = 1e-4);

/// ‖(J − Jᵀ)/2‖_F / ‖J‖_F. Throws for non-square or zero matrices.
double antisymmetric_ratio(const Eigen::MatrixXd& jacobian);

/// Least-squares slope of total energy per atom against time, eV/ps/atom.
Estimate energy_drift(const std::vector<double>& time_fs, const std::vector<double>& energy, Index n_atoms);
Estimate energy_drift(const std::vector<TrajectoryFrame>& frames);

/// Pairwise-distance histogram over frames, normalised to unit mass.
struct DistanceHistogram {
  double bin_width = 0;
  std::vector<double> mass;  // bin k covers [k·w, (k+1)·w)
};
DistanceHistogram distance_histogram(const std::vector<Positions>& frames, double bin_width);
/// Mean absolute difference over bins (the shorter histogram is zero-padded).
double histogram_score(const DistanceHistogram& a, const DistanceHistogram& b);

}  // namespace mdet
