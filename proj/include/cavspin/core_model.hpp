#pragma once

// Forward models for a reflection-geometry cavity coupled to a spin ensemble.
//
// All rates are half-widths in rad/s. The detuning Delta is the spin
// resonance offset from the bare cavity, set by the static field:
// Delta = (m0/hbar)(B - B_r). The spin resonance therefore sits at
// omega_c + Delta and the probe sees it through the detuning
// (omega - omega_c - Delta).

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cavspin/constants.hpp"
#include "cavspin/error.hpp"
#include "cavspin/units.hpp"

namespace cavspin {

struct CavityParams
{
    double omega_c = 0.0;  // rad/s
    double kappa_c = 0.0;  // cavity half-width, rad/s
    double kappa_e = 0.0;  // external loss rate, rad/s
    std::optional<double> mode_volume;  // m^3

    void validate() const
    {
        require(omega_c > 0.0 && std::isfinite(omega_c), "cavity: omega_c must be positive");
        require(kappa_c > 0.0 && std::isfinite(kappa_c), "cavity: kappa_c must be positive");
        require(kappa_e >= 0.0 && std::isfinite(kappa_e), "cavity: kappa_e must be non-negative");
        if (mode_volume)
            require(*mode_volume > 0.0, "cavity: mode volume must be positive");
    }

    // Critically coupled cavity (kappa_e = kappa_c) unless a ratio is given.
    static CavityParams critically_coupled(double omega_c, double kappa_c, double kappa_e_ratio = 1.0)
    {
        return CavityParams{omega_c, kappa_c, kappa_e_ratio * kappa_c, std::nullopt};
    }
};

struct SpinEnsembleParams
{
    double gamma_s = 0.0;  // spin half-width, rad/s
    double B_r = 0.0;      // resonance field, T
    double m0_over_hbar = units::default_m0_over_hbar;  // rad/(s T)
    double g_s = 0.0;      // single-spin coupling, rad/s
    double N_polarized = 0.0;

    void validate() const
    {
        require(gamma_s > 0.0 && std::isfinite(gamma_s), "spins: gamma_s must be positive");
        require(N_polarized >= 0.0, "spins: polarized spin count must be non-negative");
        require(m0_over_hbar > 0.0, "spins: m0/hbar must be positive");
        require(g_s >= 0.0, "spins: g_s must be non-negative");
    }

    // Ensemble described directly by its collective coupling (g_s = g_c, N = 1).
    static SpinEnsembleParams from_collective(double g_c, double gamma_s, double B_r,
                                              double m0_over_hbar = units::default_m0_over_hbar)
    {
        return SpinEnsembleParams{gamma_s, B_r, m0_over_hbar, g_c, 1.0};
    }
};

enum class PowerScale
{
    linear,
    dB,
};

inline const char* to_string(PowerScale s) { return s == PowerScale::dB ? "dB" : "linear"; }

// Reflected power over (field, frequency). Row i is field_axis[i], column j
// is frequency_axis[j]; storage is row-major.
struct SpectrumMap
{
    std::vector<double> field_axis;      // T, strictly increasing
    std::vector<double> frequency_axis;  // rad/s, strictly increasing
    std::vector<double> power;
    PowerScale scale = PowerScale::linear;

    std::size_t rows() const { return field_axis.size(); }
    std::size_t cols() const { return frequency_axis.size(); }

    double& at(std::size_t i, std::size_t j) { return power[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return power[i * cols() + j]; }

    std::span<const double> row(std::size_t i) const
    {
        return std::span<const double>(power).subspan(i * cols(), cols());
    }
};

enum class Regime
{
    weak,
    intermediate,
    strong,
};

inline const char* to_string(Regime r)
{
    switch (r) {
    case Regime::strong: return "strong";
    case Regime::intermediate: return "intermediate";
    case Regime::weak: return "weak";
    }
    return "?";
}

struct DerivedQuantities
{
    double g_c = 0.0;
    double cooperativity_C = 0.0;
    Regime regime = Regime::weak;
};

namespace detail {

inline bool strictly_increasing(std::span<const double> v)
{
    for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] > v[k - 1]))
            return false;
    return true;
}

} // namespace detail

inline double field_to_detuning(double B, const SpinEnsembleParams& spins)
{
    return spins.m0_over_hbar * (B - spins.B_r);
}

inline double detuning_to_field(double delta, const SpinEnsembleParams& spins)
{
    return spins.B_r + delta / spins.m0_over_hbar;
}

// Complex reflection amplitude S11 at probe offset (omega - omega_c).
// Numerator and denominator share the cavity and spin terms, so
// S11 = (den + kappa_e)/den; this form keeps full relative precision near a
// critically coupled dip.
inline std::complex<double> reflection_amplitude_at_offset(double probe, double delta, const CavityParams& cav,
                                                           double g_c, double gamma_s)
{
    const std::complex<double> spin = (g_c * g_c) / std::complex<double>(-gamma_s, probe - delta);
    const std::complex<double> den = std::complex<double>(-cav.kappa_c, probe) + spin;
    const std::complex<double> num = std::complex<double>(cav.kappa_e - cav.kappa_c, probe) + spin;
    return num / den;
}

inline std::complex<double> reflection_amplitude(double omega, double delta, const CavityParams& cav,
                                                 double g_c, double gamma_s)
{
    return reflection_amplitude_at_offset(omega - cav.omega_c, delta, cav, g_c, gamma_s);
}

// |S11|^2 in linear power units.
inline double reflection_power(double omega, double delta, const CavityParams& cav, double g_c,
                               double gamma_s)
{
    return std::norm(reflection_amplitude(omega, delta, cav, g_c, gamma_s));
}

inline double reflection_power_at_offset(double probe, double delta, const CavityParams& cav, double g_c,
                                         double gamma_s)
{
    return std::norm(reflection_amplitude_at_offset(probe, delta, cav, g_c, gamma_s));
}

inline double dispersive_shift(double delta, double omega_c, double g_c, double gamma_s)
{
    return omega_c - g_c * g_c * delta / (delta * delta + gamma_s * gamma_s);
}

inline double kappa_broadening(double delta, double kappa_c, double g_c, double gamma_s)
{
    return kappa_c + g_c * g_c * gamma_s / (delta * delta + gamma_s * gamma_s);
}

struct RabiBranches
{
    double upper = 0.0;
    double lower = 0.0;

    double gap() const { return upper - lower; }
};

inline RabiBranches rabi_branches(double delta, double omega_c, double g_c)
{
    const double half_gap = 0.5 * std::hypot(delta, 2.0 * g_c);
    const double centre = omega_c + 0.5 * delta;
    return {centre + half_gap, centre - half_gap};
}

inline double collective_coupling(double g_s, double N)
{
    require(N >= 0.0, "collective_coupling: N must be non-negative");
    return g_s * std::sqrt(N);
}

// g_s ~ m0 sqrt(mu0 omega_c / (2 hbar V_c)), in rad/s.
inline double single_spin_coupling_estimate(double m0, const CavityParams& cav,
                                            const PhysicalConstants& k = codata2018)
{
    if (!cav.mode_volume)
        fail(ErrorKind::invalid_argument, "single_spin_coupling_estimate: cavity mode volume is required");
    require(*cav.mode_volume > 0.0, "single_spin_coupling_estimate: mode volume must be positive");
    require(cav.omega_c > 0.0, "single_spin_coupling_estimate: omega_c must be positive");
    return m0 * std::sqrt(k.vacuum_permeability_mu0 * cav.omega_c / (2.0 * k.hbar * *cav.mode_volume));
}

// High-temperature polarization: N = N_tot h f / (2 k_B T).
inline double polarized_spin_count(double N_tot, double f_hz, double T_kelvin,
                                   const PhysicalConstants& k = codata2018)
{
    require(T_kelvin > 0.0, "polarized_spin_count: temperature must be positive");
    require(f_hz > 0.0, "polarized_spin_count: frequency must be positive");
    return N_tot * k.planck_h * f_hz / (2.0 * k.boltzmann_kB * T_kelvin);
}

inline double cooperativity(double g_c, double kappa_c, double gamma_s)
{
    require(kappa_c > 0.0 && gamma_s > 0.0, "cooperativity: rates must be positive");
    return g_c * g_c / (2.0 * kappa_c * gamma_s);
}

inline Regime classify_regime(double g_c, double kappa_c, double gamma_s)
{
    if (g_c > kappa_c && g_c > gamma_s)
        return Regime::strong;
    if (g_c < kappa_c && g_c < gamma_s)
        return Regime::weak;
    return Regime::intermediate;
}

inline DerivedQuantities derive_quantities(const CavityParams& cav, const SpinEnsembleParams& spins)
{
    const double g_c = collective_coupling(spins.g_s, spins.N_polarized);
    return {g_c, cooperativity(g_c, cav.kappa_c, spins.gamma_s),
            classify_regime(g_c, cav.kappa_c, spins.gamma_s)};
}

inline void validate_axis(std::span<const double> axis, const std::string& name)
{
    require(!axis.empty(), name + " axis is empty");
    for (double v : axis)
        require(std::isfinite(v), name + " axis has a non-finite entry");
    require(detail::strictly_increasing(axis), name + " axis is not strictly increasing");
}

inline SpectrumMap simulate_map(const CavityParams& cav, const SpinEnsembleParams& spins,
                                std::span<const double> field_axis, std::span<const double> frequency_axis)
{
    cav.validate();
    spins.validate();
    validate_axis(field_axis, "field");
    validate_axis(frequency_axis, "frequency");

    SpectrumMap map;
    map.field_axis.assign(field_axis.begin(), field_axis.end());
    map.frequency_axis.assign(frequency_axis.begin(), frequency_axis.end());
    map.power.resize(map.rows() * map.cols());
    const double g_c = collective_coupling(spins.g_s, spins.N_polarized);
    for (std::size_t i = 0; i < map.rows(); ++i) {
        const double delta = field_to_detuning(map.field_axis[i], spins);
        for (std::size_t j = 0; j < map.cols(); ++j)
            map.at(i, j) = reflection_power(map.frequency_axis[j], delta, cav, g_c, spins.gamma_s);
    }
    return map;
}

// Evenly spaced axis of `count` points over [lo, hi].
inline std::vector<double> linspace(double lo, double hi, std::size_t count)
{
    require(count >= 1, "linspace: count must be at least 1");
    std::vector<double> v(count);
    if (count == 1) {
        v[0] = lo;
        return v;
    }
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k)
        v[k] = lo + step * static_cast<double>(k);
    v.back() = hi;
    return v;
}

} // namespace cavspin
