#pragma once

// Synthetic reflection maps from a run configuration: the noiseless model on
// the configured grid plus optional seeded noise, and a truth sidecar that
// lists everything needed to regenerate the map.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <random>

#include "cavspin/core_model.hpp"
#include "cavspin/io/spectrum_csv.hpp"
#include "cavspin/units.hpp"
#include "cavspin/workbench/config.hpp"

namespace cavspin::workbench {

struct SyntheticMap
{
    SpectrumMap map;
    nlohmann::ordered_json truth;
};

inline SpinEnsembleParams spins_of(const RunConfig& c)
{
    auto s = SpinEnsembleParams::from_collective(c.need(c.g_c, "[spins] g_c_MHz"),
                                                 c.need(c.gamma_s, "[spins] gamma_s_MHz"),
                                                 c.need(c.B_r, "[spins] B_r_G"), c.m0_over_hbar);
    if (!(s.gamma_s > 0.0) || s.g_s < 0.0)
        fail(ErrorKind::config, "config: [spins] gamma_s_MHz must be positive and g_c_MHz non-negative");
    return s;
}

// Adds noise in place. Additive noise is Gaussian in linear power with the
// result clipped at zero; multiplicative noise scales each pixel by 1 + e.
inline void add_noise(SpectrumMap& map, const NoiseConfig& noise)
{
    if (noise.model == NoiseModel::none || noise.sigma == 0.0)
        return;
    require(noise.seed.has_value(), "config: [noise] seed is required when noise is enabled", ErrorKind::config);
    std::mt19937_64 rng(*noise.seed);
    std::normal_distribution<double> eps(0.0, noise.sigma);
    for (double& v : map.power) {
        if (noise.model == NoiseModel::additive)
            v = std::max(v + eps(rng), 0.0);
        else
            v *= 1.0 + eps(rng);
    }
}

namespace detail {

// Axis spaced in reporting units, each point rounded to 15 significant digits
// before conversion, so the written CSV shows the decimals of the config.
template <class ToInternal>
std::vector<double> decimal_axis(double lo, double hi, std::size_t count, ToInternal to_internal)
{
    auto axis = linspace(lo, hi, count);
    for (double& v : axis)
        v = to_internal(io::parse_double(fmt::format("{:.15g}", v), "grid"));
    return axis;
}

} // namespace detail

inline SyntheticMap generate_synthetic(const RunConfig& c)
{
    if (!c.grid.present())
        fail(ErrorKind::config, std::string("config: a [grid] section is required for ") + to_string(c.command));
    if (c.noise.model != NoiseModel::none && c.noise.sigma > 0.0 && !c.noise.seed)
        fail(ErrorKind::config, "config: [noise] seed is required when noise is enabled");
    const auto cav = c.cavity();
    const auto spins = spins_of(c);
    const auto fields = detail::decimal_axis(units::tesla_to_gauss(c.grid.field_min),
                                             units::tesla_to_gauss(c.grid.field_max), c.grid.field_count,
                                             units::gauss_to_tesla);
    const auto freqs = detail::decimal_axis(units::rad_to_mhz(c.grid.freq_min), units::rad_to_mhz(c.grid.freq_max),
                                            c.grid.freq_count, units::mhz_to_rad);

    SyntheticMap out;
    out.map = simulate_map(cav, spins, fields, freqs);
    add_noise(out.map, c.noise);

    auto& t = out.truth;
    t["omega_c_MHz"] = units::rad_to_mhz(cav.omega_c);
    t["kappa_c_MHz"] = units::rad_to_mhz(cav.kappa_c);
    t["kappa_e_MHz"] = units::rad_to_mhz(cav.kappa_e);
    t["g_c_MHz"] = units::rad_to_mhz(spins.g_s);
    t["gamma_s_MHz"] = units::rad_to_mhz(spins.gamma_s);
    t["B_r_G"] = units::tesla_to_gauss(spins.B_r);
    t["m0_MHz_per_G"] = units::rad_to_mhz(spins.m0_over_hbar * units::gauss);
    t["grid"] = {{"field_min_G", units::tesla_to_gauss(c.grid.field_min)},
                 {"field_max_G", units::tesla_to_gauss(c.grid.field_max)},
                 {"field_count", c.grid.field_count},
                 {"freq_min_MHz", units::rad_to_mhz(c.grid.freq_min)},
                 {"freq_max_MHz", units::rad_to_mhz(c.grid.freq_max)},
                 {"freq_count", c.grid.freq_count}};
    nlohmann::ordered_json noise;
    noise["model"] = to_string(c.noise.model);
    noise["sigma"] = c.noise.sigma;
    noise["seed"] = c.noise.seed ? nlohmann::ordered_json(*c.noise.seed) : nlohmann::ordered_json(nullptr);
    noise["generator"] = "std::mt19937_64 with std::normal_distribution";
    t["noise"] = noise;
    t["power_scale"] = "linear";
    return out;
}

} // namespace cavspin::workbench
