#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <random>
#include <vector>

namespace mdet {

/// A proper rotation stored as a unit quaternion (w, x, y, z).
struct Rotation {
  Eigen::Quaterniond quaternion = Eigen::Quaterniond::Identity();

  Rotation() = default;
  explicit Rotation(const Eigen::Quaterniond& q) : quaternion(q.normalized()) {}
  Rotation(double w, double x, double y, double z) : Rotation(Eigen::Quaterniond(w, x, y, z)) {}

  Eigen::Matrix3d matrix() const { return quaternion.toRotationMatrix(); }
  Eigen::Vector4d wxyz() const { return {quaternion.w(), quaternion.x(), quaternion.y(), quaternion.z()}; }
  Rotation operator*(const Rotation& other) const { return Rotation(quaternion * other.quaternion); }
  Rotation inverse() const { return Rotation(quaternion.conjugate()); }
};

/// Angle of R₁ᵀR₂, 2·acos|⟨q₁, q₂⟩|, in [0, π].
double geodesic_distance(const Rotation& a, const Rotation& b);

/// Haar-uniform rotation (Shoemake's subgroup algorithm).
Rotation random_rotation(std::mt19937_64& rng);

/// Uniform element of O(3): a uniform rotation, negated with probability 1/2.
Eigen::Matrix3d random_orthogonal(std::mt19937_64& rng);

/// The 120 vertices of the 600-cell as unit quaternions (w, x, y, z).
std::vector<Eigen::Vector4d> cell600_vertices();

/// 60 rotations (one representative per antipodal vertex pair) or 360
/// (those plus the normalised centroids of the 300 antipodal cell pairs).
/// Throws std::invalid_argument for any other level.
std::vector<Rotation> sample_rotations_600cell(int level);

/// Applies R to every row vector: out_i = R · v_i.
template <typename Derived>
Eigen::Matrix<double, Eigen::Dynamic, 3> rotate_rows(const Eigen::MatrixBase<Derived>& rows, const Eigen::Matrix3d& r) {
  return rows * r.transpose();
}

}  // namespace mdet
