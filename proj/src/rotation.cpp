#include "mdet/rotation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mdet {
namespace {

// Sign pattern indices for the even permutations of four slots.
std::vector<std::array<int, 4>> even_permutations() {
  std::array<int, 4> p{0, 1, 2, 3};
  std::vector<std::array<int, 4>> out;
  do {
    int inversions = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) inversions += p[i] > p[j];
    if (inversions % 2 == 0) out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

bool canonical(const Eigen::Vector4d& v) {
  for (int k = 0; k < 4; ++k) {
    if (std::abs(v[k]) > 1e-12) return v[k] > 0;
  }
  return false;
}

}  // namespace

double geodesic_distance(const Rotation& a, const Rotation& b) {
  const double dot = std::min(1.0, std::abs(a.quaternion.coeffs().dot(b.quaternion.coeffs())));
  return 2.0 * std::acos(dot);
}

Rotation random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return Rotation(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
}

Eigen::Matrix3d random_orthogonal(std::mt19937_64& rng) {
  Eigen::Matrix3d r = random_rotation(rng).matrix();
  std::bernoulli_distribution flip(0.5);
  if (flip(rng)) r = -r;
  return r;
}

std::vector<Eigen::Vector4d> cell600_vertices() {
  std::vector<Eigen::Vector4d> out;
  for (int axis = 0; axis < 4; ++axis)
    for (double s : {1.0, -1.0}) {
      Eigen::Vector4d v = Eigen::Vector4d::Zero();
      v[axis] = s;
      out.push_back(v);
    }
  for (int mask = 0; mask < 16; ++mask) {
    Eigen::Vector4d v;
    for (int k = 0; k < 4; ++k) v[k] = (mask >> k) & 1 ? -0.5 : 0.5;
    out.push_back(v);
  }
  const double phi = std::numbers::phi;
  const std::array<double, 4> base{phi / 2, 0.5, 1.0 / (2 * phi), 0.0};
  for (const auto& perm : even_permutations()) {
    for (int mask = 0; mask < 8; ++mask) {
      Eigen::Vector4d v;
      for (int k = 0; k < 3; ++k) v[perm[k]] = (mask >> k) & 1 ? -base[k] : base[k];
      v[perm[3]] = 0.0;
      out.push_back(v);
    }
  }
  return out;
}

std::vector<Rotation> sample_rotations_600cell(int level) {
  if (level != 60 && level != 360) {
    throw std::invalid_argument("600-cell sampling: level must be 60 or 360, got " + std::to_string(level));
  }
  const auto vertices = cell600_vertices();
  std::vector<Rotation> out;
  for (const auto& v : vertices) {
    if (canonical(v)) out.emplace_back(v[0], v[1], v[2], v[3]);
  }
  if (level == 60) return out;

  // Edge-adjacent vertices subtend 36° on S³. Each cell is a 4-clique of the
  // vertex graph; keep one of each antipodal pair of cells.
  const double neighbour_dot = std::numbers::phi / 2;
  const std::size_t n = vertices.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      if (std::abs(vertices[a].dot(vertices[b]) - neighbour_dot) < 1e-9) {
        adj[a].push_back(b);
        adj[b].push_back(a);
      }
    }
  auto linked = [&](std::size_t a, std::size_t b) {
    return std::find(adj[a].begin(), adj[a].end(), b) != adj[a].end();
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b : adj[a]) {
      if (b <= a) continue;
      for (std::size_t c : adj[b]) {
        if (c <= b || !linked(a, c)) continue;
        for (std::size_t d : adj[c]) {
          if (d <= c || !linked(a, d) || !linked(b, d)) continue;
          const Eigen::Vector4d centroid = (vertices[a] + vertices[b] + vertices[c] + vertices[d]).normalized();
          if (canonical(centroid)) out.emplace_back(centroid[0], centroid[1], centroid[2], centroid[3]);
        }
      }
    }
  return out;
}

}  // namespace mdet
