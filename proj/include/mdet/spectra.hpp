#pragma once

#include "mdet/md.hpp"

#include <string>
#include <vector>

namespace mdet {

enum class SpectrumWindow { none, hann };

SpectrumWindow parse_window(const std::string& name);

struct Spectrum {
  std::vector<double> wavenumber;  // cm⁻¹
  std::vector<double> power;
  std::vector<double> autocorrelation;  // mass-weighted, per atom, amu·Å²/fs²
  double bin_width = 0;  // cm⁻¹
};

/// Mass-weighted velocity autocorrelation averaged over atoms and time
/// origins, windowed over lags [0, max_lag) and cosine-transformed. max_lag = 0
/// selects half the number of frames. Frames must be equally spaced in time.
Spectrum vacf_spectrum(const std::vector<Velocities>& velocities, const std::vector<double>& time_fs,
                       const Eigen::VectorXd& masses, SpectrumWindow window = SpectrumWindow::hann,
                       Index max_lag = 0);
Spectrum vacf_spectrum(const std::vector<TrajectoryFrame>& frames, const Eigen::VectorXd& masses,
                       SpectrumWindow window = SpectrumWindow::hann, Index max_lag = 0);

}  // namespace mdet
