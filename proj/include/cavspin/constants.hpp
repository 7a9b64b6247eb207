#pragma once

#include <numbers>

namespace cavspin {

// SI values from the 2018 CODATA adjustment. h, k_B are exact by definition
// of the SI; mu0 and mu_B are the recommended measured values.
struct PhysicalConstants
{
    double planck_h = 6.62607015e-34;              // J s
    double hbar = 6.62607015e-34 / (2.0 * std::numbers::pi); // J s
    double boltzmann_kB = 1.380649e-23;            // J/K
    double vacuum_permeability_mu0 = 1.25663706212e-6; // T m/A
    double bohr_magneton_muB = 9.2740100783e-24;   // J/T
};

inline constexpr PhysicalConstants codata2018{};

} // namespace cavspin
