#pragma once

/// Internal units: Å, fs, eV, amu, K.
namespace mdet::units {

inline constexpr double kBoltzmann = 8.617333262e-5;  // eV/K
/// 1 amu·Å²/fs² expressed in eV.
inline constexpr double kMassVelocitySqToEv = 103.642696562;
inline constexpr double kSpeedOfLightCmPerFs = 2.99792458e-5;
inline constexpr double kFsPerPs = 1000.0;

}  // namespace mdet::units
