#include "mdet/spectra.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace mdet;
using namespace mdet::testing;

namespace {

std::vector<TrajectoryFrame> oscillate(const HarmonicDimer& d, Index steps, double dt) {
  MolecularSystem s = d.system;
  s.positions(1, 0) += 0.05;
  MdConfig cfg;
  cfg.steps = steps;
  cfg.dt = dt;
  return run_md(s, Velocities::Zero(2, 3), d.potential, cfg).frames;
}

std::size_t peak(const Spectrum& s) {
  return static_cast<std::size_t>(std::max_element(s.power.begin(), s.power.end()) - s.power.begin());
}

}  // namespace

TEST(VacfSpectrum, HarmonicPeakWithinOneBin) {
  HarmonicDimer d;
  const auto frames = oscillate(d, 8000, 1.0);
  const auto spectrum = vacf_spectrum(frames, atomic_masses(d.system.atomic_numbers));
  const double nu = d.wavenumber();
  EXPECT_LE(std::abs(spectrum.wavenumber[peak(spectrum)] - nu), spectrum.bin_width) << "analytic " << nu;
}

TEST(VacfSpectrum, StaticTrajectoryHasZeroPower) {
  HarmonicDimer d;
  MdConfig cfg;
  cfg.steps = 200;
  const auto frames = run_md(d.system, Velocities::Zero(2, 3), d.potential, cfg).frames;
  const auto spectrum = vacf_spectrum(frames, atomic_masses(d.system.atomic_numbers));
  for (double p : spectrum.power) EXPECT_EQ(p, 0.0);
}

TEST(VacfSpectrum, DoublingLengthHalvesBinWidth) {
  HarmonicDimer d;
  const Eigen::VectorXd m = atomic_masses(d.system.atomic_numbers);
  const auto a = vacf_spectrum(oscillate(d, 1999, 1.0), m);
  const auto b = vacf_spectrum(oscillate(d, 3999, 1.0), m);
  EXPECT_NEAR(b.bin_width, 0.5 * a.bin_width, 1e-12 * a.bin_width);
}

TEST(VacfSpectrum, ZeroLagIsMassWeightedMeanSquare) {
  std::vector<Velocities> v(4, Velocities::Zero(2, 3));
  for (auto& f : v) f << 1, 0, 0, 0, 2, 0;
  const Eigen::Vector2d m(3.0, 1.0);
  const auto s = vacf_spectrum(v, {0, 1, 2, 3}, m, SpectrumWindow::none, 2);
  EXPECT_NEAR(s.autocorrelation[0], (3.0 * 1 + 1.0 * 4) / 2, 1e-12);
}

TEST(VacfSpectrum, RejectsNonUniformStrideAndUnknownWindow) {
  std::vector<Velocities> v(4, Velocities::Zero(1, 3));
  EXPECT_THROW(vacf_spectrum(v, {0, 1, 2, 3.5}, Eigen::VectorXd::Ones(1)), std::invalid_argument);
  EXPECT_EQ(parse_window("hann"), SpectrumWindow::hann);
  EXPECT_EQ(parse_window("none"), SpectrumWindow::none);
  EXPECT_THROW(parse_window("kaiser"), std::invalid_argument);
}
