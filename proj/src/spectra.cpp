#include "mdet/spectra.hpp"

#include "mdet/units.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace mdet {

SpectrumWindow parse_window(const std::string& name) {
  if (name == "hann") return SpectrumWindow::hann;
  if (name == "none") return SpectrumWindow::none;
  throw std::invalid_argument("unknown window '" + name + "' (hann, none)");
}

Spectrum vacf_spectrum(const std::vector<Velocities>& v, const std::vector<double>& t, const Eigen::VectorXd& masses,
                       SpectrumWindow window, Index max_lag) {
  const auto frames = static_cast<Index>(v.size());
  if (frames < 4 || t.size() != v.size()) throw std::invalid_argument("vacf_spectrum: need at least 4 timed frames");
  const double dt = t[1] - t[0];
  if (!(dt > 0)) throw std::invalid_argument("vacf_spectrum: times must increase");
  for (std::size_t k = 2; k < t.size(); ++k) {
    if (std::abs((t[k] - t[k - 1]) - dt) > 1e-6 * dt) {
      throw std::invalid_argument("vacf_spectrum: non-uniform frame stride at frame " + std::to_string(k));
    }
  }
  if (max_lag <= 0) max_lag = frames / 2;
  if (max_lag > frames) throw std::invalid_argument("vacf_spectrum: max_lag exceeds trajectory length");
  const Index atoms = masses.size();

  // Autocorrelation sums through zero-padded FFTs, one series per atom axis.
  Eigen::FFT<double> fft;
  const Index padded = 2 * frames;
  std::vector<double> series(static_cast<std::size_t>(padded));
  std::vector<std::complex<double>> spectrum;
  std::vector<double> corr;
  Eigen::VectorXd acf = Eigen::VectorXd::Zero(max_lag);
  for (Index i = 0; i < atoms; ++i)
    for (Index c = 0; c < 3; ++c) {
      std::fill(series.begin(), series.end(), 0.0);
      for (Index f = 0; f < frames; ++f) series[static_cast<std::size_t>(f)] = v[static_cast<std::size_t>(f)](i, c);
      fft.fwd(spectrum, series);
      for (auto& z : spectrum) z = std::norm(z);
      fft.inv(corr, spectrum);
      for (Index lag = 0; lag < max_lag; ++lag) acf[lag] += masses[i] * corr[static_cast<std::size_t>(lag)];
    }
  for (Index lag = 0; lag < max_lag; ++lag) acf[lag] /= static_cast<double>(atoms * (frames - lag));

  // Even extension of the windowed correlation, transformed on 2·max_lag points.
  const Index m = 2 * max_lag;
  std::vector<double> even(static_cast<std::size_t>(m), 0.0);
  for (Index lag = 0; lag < max_lag; ++lag) {
    const double w = window == SpectrumWindow::hann
                         ? 0.5 * (1 + std::cos(std::numbers::pi * static_cast<double>(lag) / static_cast<double>(max_lag)))
                         : 1.0;
    even[static_cast<std::size_t>(lag)] = acf[lag] * w;
    if (lag > 0) even[static_cast<std::size_t>(m - lag)] = acf[lag] * w;
  }
  fft.fwd(spectrum, even);

  Spectrum out;
  out.bin_width = 1.0 / (static_cast<double>(m) * dt * units::kSpeedOfLightCmPerFs);
  for (Index k = 0; k <= max_lag; ++k) {
    out.wavenumber.push_back(static_cast<double>(k) * out.bin_width);
    out.power.push_back(spectrum[static_cast<std::size_t>(k)].real() * dt);
  }
  out.autocorrelation.assign(acf.data(), acf.data() + acf.size());
  return out;
}

Spectrum vacf_spectrum(const std::vector<TrajectoryFrame>& frames, const Eigen::VectorXd& masses,
                       SpectrumWindow window, Index max_lag) {
  std::vector<Velocities> v;
  std::vector<double> t;
  for (const auto& f : frames) {
    v.push_back(f.velocities);
    t.push_back(f.time);
  }
  return vacf_spectrum(v, t, masses, window, max_lag);
}

}  // namespace mdet
