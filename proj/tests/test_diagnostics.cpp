#include "mdet/diagnostics.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace mdet;
using namespace mdet::testing;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.n_rbf = 4;
  cfg.n_fourier = 4;
  return cfg;
}

double lambda_of_random(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0, 1);
  return antisymmetric_ratio(Eigen::MatrixXd::NullaryExpr(n, n, [&] { return g(rng); }));
}

}  // namespace

TEST(EquivarianceError, ZeroForEquivariantOracle) {
  MorsePotential morse;
  std::vector<MolecularSystem> systems{morse_molecule(1, 3), morse_molecule(2, 5)};
  std::mt19937_64 rng(3);
  const auto e = equivariance_error(morse, systems, 64, 16, rng);
  EXPECT_GE(e.value, 0.0);
  EXPECT_LE(e.value, 1e-10);
}

TEST(EquivarianceError, ConstantWorldFrameVectorGivesItsNorm) {
  const Eigen::Vector3d f0(0.3, -1.2, 0.4);
  ConstantProvider c(f0);
  std::mt19937_64 rng(4);
  const Index inner = 4096;
  const auto e = equivariance_error(c, {morse_molecule(5, 3)}, inner, 2000, rng);
  // E‖u − m‖ = ‖f0‖ + ‖m‖²/(3‖f0‖) with E‖m‖² = ‖f0‖²/inner.
  const double expected = f0.norm() * (1 + 1.0 / (3.0 * inner));
  EXPECT_NEAR(e.value, expected, 4 * e.std_error + 1e-3);
  EXPECT_LT(e.std_error, 0.02);
}

TEST(EquivarianceError, InvariantToGlobalRotation) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0, 1);
  const auto s = morse_molecule(7, 3);
  LinearProvider lin(Eigen::MatrixXd::NullaryExpr(9, 9, [&] { return g(rng); }));
  MolecularSystem turned = s;
  turned.positions = rotate_rows(s.positions, random_rotation(rng).matrix());
  std::mt19937_64 r1(8), r2(9);
  const auto a = equivariance_error(lin, {s}, 256, 400, r1);
  const auto b = equivariance_error(lin, {turned}, 256, 400, r2);
  EXPECT_GT(a.value, 0.1);
  EXPECT_NEAR(a.value, b.value, 4 * std::hypot(a.std_error, b.std_error));
}

TEST(EquivarianceError, ProviderFailureNamesSystem) {
  class Failing final : public ForceProvider {
   public:
    Evaluation evaluate(const MolecularSystem& s) const override {
      if (s.size() == 4) throw std::runtime_error("boom");
      return {Forces::Zero(s.size(), 3), {}};
    }
    std::string name() const override { return "failing"; }
  } failing;
  std::mt19937_64 rng(10);
  try {
    equivariance_error(failing, {morse_molecule(1, 3), morse_molecule(1, 4)}, 4, 2, rng);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("system 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(equivariance_error(failing, {morse_molecule(1, 3)}, 1, 2, rng), std::invalid_argument);
}

TEST(RotationGrid, EquivariantOracleIsConstantAfterBackRotation) {
  MorsePotential morse;
  auto s = morse_molecule(11, 4);
  s.positions(1, 0) += 0.1;
  const auto records = rotation_grid_forces(morse, s, 1, sample_rotations_600cell(60));
  ASSERT_EQ(records.size(), 60u);
  const Eigen::Vector3d f = morse.forces(s).row(1).transpose();
  for (const auto& r : records) {
    EXPECT_LE((r.back_rotated - f).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(r.relative_magnitude, 1.0, 1e-12);
    EXPECT_NEAR(r.magnitude, f.norm(), 1e-10);
  }
  std::vector<double> mags;
  for (const auto& r : records) mags.push_back(r.magnitude);
  const auto density = kernel_density(mags);
  EXPECT_TRUE(density.point_mass);
  EXPECT_NEAR(density.location, f.norm(), 1e-10);
}

TEST(RotationGrid, MedianRatioIsOne) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0, 1);
  LinearProvider lin(Eigen::MatrixXd::NullaryExpr(9, 9, [&] { return g(rng); }));
  const auto records = rotation_grid_forces(lin, morse_molecule(13, 3), 0, sample_rotations_600cell(360));
  std::vector<double> ratios;
  for (const auto& r : records) ratios.push_back(r.relative_magnitude);
  std::nth_element(ratios.begin(), ratios.begin() + 180, ratios.end());
  const double upper = ratios[180];
  std::nth_element(ratios.begin(), ratios.begin() + 179, ratios.end());
  EXPECT_NEAR(0.5 * (ratios[179] + upper), 1.0, 1e-12);
  const auto density = kernel_density([&] {
    std::vector<double> m;
    for (const auto& r : records) m.push_back(r.magnitude);
    return m;
  }());
  EXPECT_FALSE(density.point_mass);
  EXPECT_GT(density.bandwidth, 0.0);
}

TEST(RotationGrid, ReferencePatternIsPointSymmetricInProjection) {
  // The 60-set contains the half-turns about the coordinate axes, so the
  // polar-hemisphere projection of the orbit is symmetric through its centre.
  const Eigen::Vector3d f(0.7, -0.2, 0.5);
  for (Index level : {60, 360}) {
    const auto records = rotation_grid_reference(f, sample_rotations_600cell(level));
    for (const auto& r : records) {
      EXPECT_NEAR(r.magnitude, f.norm(), 1e-12);
      EXPECT_LE((r.back_rotated - f).norm(), 1e-12);
      const Eigen::Vector3d mirror(-r.raw.x(), -r.raw.y(), r.raw.z());
      double best = 1e9;
      for (const auto& q : records) best = std::min(best, (q.raw - mirror).norm());
      EXPECT_LE(best, 1e-9);
    }
  }
}

TEST(RotationGrid, RejectsAtomOutOfRange) {
  MorsePotential morse;
  EXPECT_THROW(rotation_grid_forces(morse, morse_molecule(1, 3), 3, sample_rotations_600cell(60)), std::out_of_range);
}

TEST(KernelDensity, IntegratesToOneAndUsesSilverman) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g(2, 0.5);
  std::vector<double> x(500);
  for (auto& v : x) v = g(rng);
  const auto d = kernel_density(x, 400);
  double area = 0;
  for (std::size_t k = 1; k < d.grid.size(); ++k) area += 0.5 * (d.density[k] + d.density[k - 1]) * (d.grid[k] - d.grid[k - 1]);
  EXPECT_NEAR(area, 1.0, 1e-2);
  EXPECT_NEAR(d.bandwidth, 0.9 * 0.5 * std::pow(500.0, -0.2), 0.03);
}

TEST(AntisymmetricRatio, SymmetricAndAntisymmetric) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g(0, 1);
  const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(12, 12, [&] { return g(rng); });
  EXPECT_LE(antisymmetric_ratio(a + a.transpose()), 1e-12);
  EXPECT_NEAR(antisymmetric_ratio(a - a.transpose()), 1.0, 1e-12);
}

TEST(AntisymmetricRatio, RandomMatricesAverageInverseSqrtTwo) {
  std::mt19937_64 rng(16);
  double sum = 0;
  for (int k = 0; k < 100; ++k) sum += lambda_of_random(60, rng);
  EXPECT_NEAR(sum / 100, 0.70, 0.03);
  EXPECT_NEAR(sum / 100, 1 / std::sqrt(2.0), 0.01);
}

TEST(AntisymmetricRatio, ScaleAndOrthogonalInvariance) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0, 1);
  const Eigen::MatrixXd j = Eigen::MatrixXd::NullaryExpr(9, 9, [&] { return g(rng); });
  const double base = antisymmetric_ratio(j);
  EXPECT_GE(base, 0.0);
  EXPECT_LE(base, 1.0);
  EXPECT_NEAR(antisymmetric_ratio(-3.7 * j), base, 1e-12);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::NullaryExpr(9, 9, [&] { return g(rng); }));
  const Eigen::MatrixXd q = qr.householderQ();
  EXPECT_NEAR(antisymmetric_ratio(q.transpose() * j * q), base, 1e-12);
}

TEST(AntisymmetricRatio, Errors) {
  EXPECT_THROW(antisymmetric_ratio(Eigen::MatrixXd::Zero(3, 3)), std::domain_error);
  EXPECT_THROW(antisymmetric_ratio(Eigen::MatrixXd::Ones(3, 4)), DimensionError);
}

TEST(PositionJacobian, LinearProviderRecoversMatrix) {
  std::mt19937_64 rng(18);
  std::normal_distribution<double> g(0, 1);
  const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(12, 12, [&] { return g(rng); });
  LinearProvider lin(a);
  const auto j = position_jacobian(lin, morse_molecule(19, 4), JacobianMode::finite_difference);
  EXPECT_LE((j - a).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(position_jacobian(lin, morse_molecule(19, 4), JacobianMode::autodiff), std::invalid_argument);
  EXPECT_THROW(position_jacobian(lin, morse_molecule(19, 4), JacobianMode::finite_difference, 0.0),
               std::invalid_argument);
}

TEST(PositionJacobian, ConservativeOracleIsSymmetric) {
  MorsePotential morse;
  const auto s = morse_molecule(20, 5);
  // The O(h²) truncation term is not symmetric; h = 1e-5 keeps it and round-off below 1e-8.
  const auto fd = position_jacobian(morse, s, JacobianMode::finite_difference, 1e-5);
  EXPECT_LE((fd - fd.transpose()).cwiseAbs().maxCoeff(), 1e-8);
  const auto exact = position_jacobian(morse, s, JacobianMode::autodiff);
  EXPECT_LE((fd - exact).norm() / exact.norm(), 1e-7);
  EXPECT_LE(antisymmetric_ratio(fd), 1e-8);
}

TEST(PositionJacobian, ModesAgreeOnTinyModel) {
  const auto cfg = tiny_config();
  const auto params = init_parameters(cfg, 21);
  ModelProvider<double> model(cfg, params);
  std::mt19937_64 rng(22);
  const auto s = random_cluster(4, 23, 1.5);
  const auto ad = position_jacobian(model, s, JacobianMode::autodiff);
  const auto fd = position_jacobian(model, s, JacobianMode::finite_difference);
  EXPECT_LE((ad - fd).norm() / ad.norm(), 1e-5);
  const double lambda = antisymmetric_ratio(ad);
  EXPECT_GT(lambda, 0.0);
  EXPECT_LT(lambda, 1.0);
}

TEST(EnergyDrift, ConstantAndLinearSeries) {
  std::vector<double> t(50), flat(50, -3.0), line(50);
  for (int k = 0; k < 50; ++k) {
    t[k] = 0.5 * k;
    line[k] = 1.0 + 4e-3 * t[k];
  }
  EXPECT_EQ(energy_drift(t, flat, 4).value, 0.0);
  // 4e-3 eV/fs over 4 atoms → 1 eV/ps/atom.
  EXPECT_NEAR(energy_drift(t, line, 4).value, 1.0, 1e-12);
  EXPECT_NEAR(energy_drift(t, line, 4).std_error, 0.0, 1e-12);
  EXPECT_THROW(energy_drift(std::vector<double>(9, 0.0), std::vector<double>(9, 0.0), 1), std::invalid_argument);
}

TEST(EnergyDrift, NveOnMorseOracleIsFlat) {
  const auto s = morse_molecule(24, 5);
  MorsePotential morse;
  std::mt19937_64 rng(25);
  MdConfig cfg;
  cfg.steps = 20000;
  cfg.stride = 10;
  const auto result = run_md(s, maxwell_boltzmann(s.positions, atomic_masses(s.atomic_numbers), 300, rng), morse, cfg);
  ASSERT_FALSE(result.abort_reason);
  EXPECT_LE(std::abs(energy_drift(result.frames).value), 1e-4);
}

TEST(DistanceHistogram, RigidDimerFillsOneBin) {
  Positions x = HarmonicDimer::rest(1.234);
  const auto h = distance_histogram({x, x, x}, 0.1);
  ASSERT_GT(h.mass.size(), 12u);
  EXPECT_DOUBLE_EQ(h.mass[12], 1.0);
  EXPECT_DOUBLE_EQ(std::accumulate(h.mass.begin(), h.mass.end(), 0.0), 1.0);
}

TEST(DistanceHistogram, IdenticalAndRotatedTrajectories) {
  std::mt19937_64 rng(26);
  std::vector<Positions> frames, turned;
  for (int k = 0; k < 20; ++k) {
    frames.push_back(random_cluster(6, 100 + k).positions);
    turned.push_back(rotate_rows(frames.back(), random_rotation(rng).matrix()));
  }
  const auto a = distance_histogram(frames, 0.05);
  EXPECT_EQ(histogram_score(a, a), 0.0);
  const auto b = distance_histogram(turned, 0.05);
  ASSERT_EQ(a.mass.size(), b.mass.size());
  for (std::size_t k = 0; k < a.mass.size(); ++k) EXPECT_NEAR(a.mass[k], b.mass[k], 1e-12);
  EXPECT_THROW(distance_histogram({Positions::Zero(1, 3)}, 0.1), std::invalid_argument);
  EXPECT_THROW(distance_histogram(frames, 0.0), std::invalid_argument);
}
