#pragma once

#include <numbers>

// Internal convention: every rate and frequency is angular (rad/s), every
// field is in tesla. Conversions to the reporting units (MHz "/2pi", gauss,
// Hz, mm) happen only at I/O boundaries.
namespace cavspin::units {

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double gauss = 1e-4;  // T per G
inline constexpr double mm = 1e-3;     // m per mm

constexpr double mhz_to_rad(double f_mhz) { return two_pi * (f_mhz * 1e6); }
constexpr double rad_to_mhz(double w) { return w / two_pi / 1e6; }
constexpr double hz_to_rad(double f_hz) { return two_pi * f_hz; }
constexpr double rad_to_hz(double w) { return w / two_pi; }
constexpr double gauss_to_tesla(double b_g) { return b_g * gauss; }
constexpr double tesla_to_gauss(double b_t) { return b_t / gauss; }

// Free-electron (g ~ 2) conversion of 2.8 MHz per gauss, in rad/(s T).
inline constexpr double default_m0_over_hbar = two_pi * 2.8e6 / gauss;

} // namespace cavspin::units
