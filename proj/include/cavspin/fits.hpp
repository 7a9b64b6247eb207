#pragma once

// Fits of the coupled-oscillator models to digitised spectra: dispersive dip
// track, linewidth broadening, two-branch anticrossing and the full |S11|^2
// map. Rates are positive (log-parameterised); omega_c and B_r are free.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cavspin/core_model.hpp"
#include "cavspin/dip_track.hpp"
#include "cavspin/error.hpp"
#include "cavspin/nlls.hpp"

namespace cavspin {

// Detuning conversion used by every field-domain fit. May be negative to
// describe a reversed field axis.
struct FieldConversion
{
    double m0_over_hbar = units::default_m0_over_hbar;
};

struct FieldSample
{
    double field = 0.0;  // T
    double value = 0.0;
    double weight = 1.0;
};

namespace models {

// omega(B) = omega_c - g^2 Delta / (Delta^2 + gamma^2); p = {g_c, gamma_s, omega_c, B_r}.
inline CurveModel dispersive(double m)
{
    CurveModel c;
    c.value = [m](double b, std::span<const double> p) {
        return dispersive_shift(m * (b - p[3]), p[2], p[0], p[1]);
    };
    c.gradient = [m](double b, std::span<const double> p, std::span<double> grad) {
        const double g = p[0], gs = p[1], d = m * (b - p[3]);
        const double den = d * d + gs * gs;
        grad[0] = -2.0 * g * d / den;
        grad[1] = 2.0 * g * g * d * gs / (den * den);
        grad[2] = 1.0;
        grad[3] = -m * (-g * g * (gs * gs - d * d) / (den * den));
    };
    return c;
}

// kappa(B) = kappa_c + g^2 gamma / (Delta^2 + gamma^2); p = {g_c, gamma_s, kappa_c, B_r}.
inline CurveModel linewidth(double m)
{
    CurveModel c;
    c.value = [m](double b, std::span<const double> p) {
        return kappa_broadening(m * (b - p[3]), p[2], p[0], p[1]);
    };
    c.gradient = [m](double b, std::span<const double> p, std::span<double> grad) {
        const double g = p[0], gs = p[1], d = m * (b - p[3]);
        const double den = d * d + gs * gs;
        grad[0] = 2.0 * g * gs / den;
        grad[1] = g * g * (d * d - gs * gs) / (den * den);
        grad[2] = 1.0;
        grad[3] = -m * (-2.0 * g * g * gs * d / (den * den));
    };
    return c;
}

// Bare-cavity reflection dip |1 + ke/(i(w - wc) - k)|^2; p = {omega_c, kappa, kappa_e}.
inline CurveModel bare_cavity()
{
    CurveModel c;
    c.value = [](double w, std::span<const double> p) {
        const CavityParams cav{p[0], p[1], p[2], std::nullopt};
        return reflection_power(w, 0.0, cav, 0.0, 1.0);
    };
    c.gradient = [](double w, std::span<const double> p, std::span<double> grad) {
        // f = (x^2 + a^2)/(x^2 + k^2), x = w - wc, a = k - ke.
        const double x = w - p[0], k = p[1], a = p[1] - p[2];
        const double den = x * x + k * k;
        const double num = x * x + a * a;
        const double dfdx = (2.0 * x * den - 2.0 * x * num) / (den * den);
        grad[0] = -dfdx;
        grad[1] = (2.0 * a * den - num * 2.0 * k) / (den * den);
        grad[2] = -2.0 * a / den;
    };
    return c;
}

} // namespace models

namespace detail {

inline double median(std::vector<double> v)
{
    require(!v.empty(), "median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<DataPoint> to_points(std::span<const FieldSample> s)
{
    std::vector<DataPoint> out;
    out.reserve(s.size());
    for (const auto& x : s)
        out.push_back({x.field, x.value, x.weight});
    return out;
}

inline void require_increasing_fields(std::span<const FieldSample> s, const char* who)
{
    for (std::size_t k = 1; k < s.size(); ++k)
        require(s[k].field > s[k - 1].field, std::string(who) + ": fields must be strictly increasing",
                ErrorKind::data);
}

} // namespace detail

// Seeds for the dispersive-track fit: extrema of omega(B) sit at Delta = -/+ gamma.
inline std::array<double, 4> seed_dispersive(std::span<const FieldSample> track, double m)
{
    const auto [lo, hi] = std::minmax_element(track.begin(), track.end(),
                                              [](const auto& a, const auto& b) { return a.value < b.value; });
    const double b_r = 0.5 * (lo->field + hi->field);
    const double span = track.back().field - track.front().field;
    double gamma = 0.5 * std::abs(m * (lo->field - hi->field));
    if (!(gamma > 0.0))
        gamma = 0.1 * std::abs(m) * span;
    std::vector<double> tails;
    const std::size_t edge = std::max<std::size_t>(1, track.size() / 10);
    for (std::size_t k = 0; k < edge; ++k) {
        tails.push_back(track[k].value);
        tails.push_back(track[track.size() - 1 - k].value);
    }
    const double omega_c = detail::median(tails);
    double g = std::sqrt(gamma * (hi->value - lo->value));
    if (!(g > 0.0))
        g = 1e-3 * gamma;
    return {g, gamma, omega_c, b_r};
}

inline FitResult fit_dispersive_track(std::span<const FieldSample> track, FieldConversion conv = {},
                                      std::optional<std::array<double, 4>> initial = std::nullopt,
                                      const NllsOptions& opt = {})
{
    require(conv.m0_over_hbar != 0.0, "fit_dispersive_track: conversion must be non-zero");
    require(track.size() >= 4, "fit_dispersive_track: need at least four points", ErrorKind::data);
    detail::require_increasing_fields(track, "fit_dispersive_track");
    const double m = conv.m0_over_hbar;
    const auto s = initial.value_or(seed_dispersive(track, m));
    const auto pts = detail::to_points(track);
    return nlls_solve(models::dispersive(m), pts,
                      {{"g_c", s[0], Bound::positive},
                       {"gamma_s", s[1], Bound::positive},
                       {"omega_c", s[2], Bound::free},
                       {"B_r", s[3], Bound::free}},
                      opt);
}

// Single-branch entries of a dip track as field samples.
inline std::vector<FieldSample> single_branch_samples(const DipTrack& track)
{
    track.validate();
    std::vector<FieldSample> out;
    for (std::size_t k = 0; k < track.size(); ++k) {
        require(k == 0 || track.field[k] != track.field[k - 1],
                "dispersive fit needs a single-branch track", ErrorKind::data);
        out.push_back({track.field[k], track.dip_frequency[k], 1.0});
    }
    return out;
}

inline FitResult fit_dispersive_track(const DipTrack& track, FieldConversion conv = {},
                                      const NllsOptions& opt = {})
{
    const auto samples = single_branch_samples(track);
    return fit_dispersive_track(samples, conv, std::nullopt, opt);
}

inline std::array<double, 4> seed_linewidth(std::span<const FieldSample> data, double m)
{
    std::vector<double> values;
    for (const auto& s : data)
        values.push_back(s.value);
    const auto peak = std::max_element(data.begin(), data.end(),
                                       [](const auto& a, const auto& b) { return a.value < b.value; });
    const double floor = *std::min_element(values.begin(), values.end());
    const double height = peak->value - floor;
    const double span = data.back().field - data.front().field;
    double lo = peak->field, hi = peak->field;
    for (const auto& s : data)
        if (s.value - floor >= 0.5 * height) {
            lo = std::min(lo, s.field);
            hi = std::max(hi, s.field);
        }
    double gamma = 0.5 * std::abs(m) * (hi - lo);
    if (!(gamma > 0.0))
        gamma = 0.1 * std::abs(m) * span;
    double kappa_c = floor;
    if (!(kappa_c > 0.0))
        kappa_c = std::max(1e-3 * peak->value, std::numeric_limits<double>::min());
    double g = std::sqrt(height * gamma);
    if (!(g > 0.0))
        g = 1e-3 * std::min(kappa_c, gamma);
    return {g, gamma, kappa_c, peak->field};
}

inline FitResult fit_kappa_lorentzian(std::span<const FieldSample> kappa_vs_field, FieldConversion conv = {},
                                      std::optional<std::array<double, 4>> initial = std::nullopt,
                                      const NllsOptions& opt = {})
{
    require(conv.m0_over_hbar != 0.0, "fit_kappa_lorentzian: conversion must be non-zero");
    require(kappa_vs_field.size() >= 4, "fit_kappa_lorentzian: need at least four points", ErrorKind::data);
    detail::require_increasing_fields(kappa_vs_field, "fit_kappa_lorentzian");
    const double m = conv.m0_over_hbar;
    const auto s = initial.value_or(seed_linewidth(kappa_vs_field, m));
    const auto pts = detail::to_points(kappa_vs_field);
    return nlls_solve(models::linewidth(m), pts,
                      {{"g_c", s[0], Bound::positive},
                       {"gamma_s", s[1], Bound::positive},
                       {"kappa_c", s[2], Bound::positive},
                       {"B_r", s[3], Bound::free}},
                      opt);
}

// Fit of the bare reflection Lorentzian to one frequency cut.
inline FitResult fit_row_lorentzian(std::span<const double> frequency, std::span<const double> power,
                                    const NllsOptions& opt = {})
{
    require(frequency.size() == power.size() && frequency.size() >= 5, "fit_row_lorentzian: need >= 5 samples",
            ErrorKind::data);
    const auto k_min = static_cast<std::size_t>(std::min_element(power.begin(), power.end()) - power.begin());
    const double p_min = std::max(power[k_min], 0.0);
    const double baseline = std::max(power.front(), power.back());
    const double half = 0.5 * (baseline + p_min);
    std::size_t lo = k_min, hi = k_min;
    while (lo > 0 && power[lo] < half)
        --lo;
    while (hi + 1 < power.size() && power[hi] < half)
        ++hi;
    double kappa = 0.5 * (frequency[hi] - frequency[lo]);
    if (!(kappa > 0.0))
        kappa = frequency[1] - frequency[0];
    const double kappa_e = std::max(kappa * (1.0 - std::sqrt(p_min)), 1e-3 * kappa);

    std::vector<DataPoint> pts;
    pts.reserve(frequency.size());
    for (std::size_t j = 0; j < frequency.size(); ++j)
        pts.push_back({frequency[j], power[j], 1.0});
    return nlls_solve(models::bare_cavity(), pts,
                      {{"omega_c", frequency[k_min], Bound::free},
                       {"kappa", kappa, Bound::positive},
                       {"kappa_e", kappa_e, Bound::positive}},
                      opt);
}

// Cavity half-width per field row, from a bare-Lorentzian fit of each
// frequency cut. Valid where each row shows a single dip.
inline std::vector<FieldSample> extract_linewidth_track(const SpectrumMap& map, const NllsOptions& opt = {})
{
    require(map.scale == PowerScale::linear, "extract_linewidth_track: map must be linear", ErrorKind::data);
    std::vector<FieldSample> out;
    for (std::size_t i = 0; i < map.rows(); ++i) {
        const auto fit = fit_row_lorentzian(map.frequency_axis, map.row(i), opt);
        out.push_back({map.field_axis[i], fit.value("kappa"), 1.0});
    }
    return out;
}

namespace detail {

struct BranchData
{
    std::vector<double> field;
    std::vector<double> sign;  // +1 upper, -1 lower
    std::vector<double> omega;
};

inline BranchData branch_data(const DipTrack& track)
{
    BranchData d;
    for (std::size_t k = 0; k < track.size(); ++k) {
        if (track.branch[k] == BranchTag::single)
            continue;
        d.field.push_back(track.field[k]);
        d.sign.push_back(track.branch[k] == BranchTag::upper ? 1.0 : -1.0);
        d.omega.push_back(track.dip_frequency[k]);
    }
    return d;
}

} // namespace detail

// Seeds for the two-branch fit from the row with the narrowest gap.
inline std::array<double, 3> seed_branches(const DipTrack& track)
{
    double best_gap = INFINITY, best_field = 0.0, best_mid = 0.0;
    for (std::size_t k = 0; k + 1 < track.size(); ++k) {
        if (track.field[k] != track.field[k + 1])
            continue;
        const double gap = track.dip_frequency[k + 1] - track.dip_frequency[k];
        if (gap < best_gap) {
            best_gap = gap;
            best_field = track.field[k];
            best_mid = 0.5 * (track.dip_frequency[k + 1] + track.dip_frequency[k]);
        }
    }
    require(std::isfinite(best_gap), "seed_branches: no row with two branches", ErrorKind::data);
    return {0.5 * best_gap, best_mid, best_field};
}

// Joint fit of omega_+- = omega_c + Delta/2 +- sqrt(Delta^2 + 4 g^2)/2;
// parameters {g_c, omega_c, B_r}. Single-branch entries are ignored.
inline FitResult fit_rabi_branches(const DipTrack& track, FieldConversion conv = {},
                                   std::optional<std::array<double, 3>> initial = std::nullopt,
                                   const NllsOptions& opt = {})
{
    track.validate();
    require(conv.m0_over_hbar != 0.0, "fit_rabi_branches: conversion must be non-zero");
    require(track.count(BranchTag::upper) >= 5 && track.count(BranchTag::lower) >= 5,
            "fit_rabi_branches: each branch needs at least five points", ErrorKind::data);
    const double m = conv.m0_over_hbar;
    const auto d = detail::branch_data(track);
    const auto s = initial.value_or(seed_branches(track));

    LeastSquaresProblem problem;
    problem.observed = d.omega;
    problem.predict = [d, m](std::span<const double> p, std::span<double> out) {
        for (std::size_t i = 0; i < d.field.size(); ++i) {
            const auto br = rabi_branches(m * (d.field[i] - p[2]), p[1], p[0]);
            out[i] = d.sign[i] > 0.0 ? br.upper : br.lower;
        }
    };
    problem.jacobian = [d, m](std::span<const double> p, Eigen::Ref<Eigen::MatrixXd> jac) {
        for (std::size_t i = 0; i < d.field.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const double delta = m * (d.field[i] - p[2]);
            const double root = std::hypot(delta, 2.0 * p[0]);
            jac(r, 0) = root > 0.0 ? d.sign[i] * 2.0 * p[0] / root : d.sign[i];
            jac(r, 1) = 1.0;
            const double ddelta = 0.5 + (root > 0.0 ? d.sign[i] * 0.5 * delta / root : 0.0);
            jac(r, 2) = -m * ddelta;
        }
    };
    return nlls_solve(problem,
                      {{"g_c", s[0], Bound::positive},
                       {"omega_c", s[1], Bound::free},
                       {"B_r", s[2], Bound::free}},
                      opt);
}

// Parameter vector of the full |S11|^2 model.
struct MapParams
{
    double g_c = 0.0;
    double gamma_s = 0.0;
    double kappa_c = 0.0;
    double kappa_e = 0.0;
    double omega_c = 0.0;
    double B_r = 0.0;
};

inline constexpr std::array<const char*, 6> map_param_names{"g_c", "gamma_s", "kappa_c", "kappa_e", "omega_c",
                                                             "B_r"};

inline MapParams map_params_from(const FitResult& fit)
{
    return {fit.value("g_c"),     fit.value("gamma_s"), fit.value("kappa_c"),
            fit.value("kappa_e"), fit.value("omega_c"), fit.value("B_r")};
}

struct MapFitOptions
{
    FieldConversion conversion;
    std::vector<std::string> frozen;  // names from map_param_names
    std::vector<double> weights;      // per pixel, row-major; empty = uniform
    NllsOptions nlls;
};

inline FitResult fit_full_s11_map(const SpectrumMap& input, const MapParams& initial, const MapFitOptions& opt = {})
{
    require(input.power.size() == input.rows() * input.cols() && input.rows() > 0,
            "fit_full_s11_map: map size mismatch", ErrorKind::data);
    for (const auto& name : opt.frozen)
        require(std::find_if(map_param_names.begin(), map_param_names.end(),
                             [&](const char* n) { return name == n; }) != map_param_names.end(),
                "fit_full_s11_map: unknown parameter to freeze: " + name);

    std::vector<std::string> notes;
    SpectrumMap map = input;
    if (map.scale == PowerScale::dB) {
        notes.push_back("input map was in dB; converted to linear power before fitting");
        for (double& v : map.power)
            v = std::pow(10.0, v / 10.0);
        map.scale = PowerScale::linear;
    }

    const double m = opt.conversion.m0_over_hbar;
    LeastSquaresProblem problem;
    problem.observed = map.power;
    problem.weights = opt.weights;
    const std::vector<double> fields = map.field_axis;
    const std::vector<double> freqs = map.frequency_axis;
    problem.predict = [fields, freqs, m](std::span<const double> p, std::span<double> out) {
        const CavityParams cav{p[4], p[2], p[3], std::nullopt};
        const std::size_t nc = freqs.size();
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const double delta = m * (fields[i] - p[5]);
            for (std::size_t j = 0; j < nc; ++j)
                out[i * nc + j] = reflection_power(freqs[j], delta, cav, p[0], p[1]);
        }
    };

    auto frozen = [&](const char* name) {
        return std::find(opt.frozen.begin(), opt.frozen.end(), name) != opt.frozen.end();
    };
    const std::array<double, 6> init{initial.g_c,     initial.gamma_s, initial.kappa_c,
                                     initial.kappa_e, initial.omega_c, initial.B_r};
    std::vector<Parameter> params;
    for (std::size_t k = 0; k < 6; ++k) {
        const bool is_rate = k < 4;
        params.push_back({map_param_names[k], init[k],
                          frozen(map_param_names[k]) ? Bound::fixed : (is_rate ? Bound::positive : Bound::free)});
    }
    auto fit = nlls_solve(problem, std::move(params), opt.nlls);
    fit.notes.insert(fit.notes.end(), notes.begin(), notes.end());
    return fit;
}

// Initial guesses for the map fit: omega_c, kappa_c, kappa_e from the two
// outermost (far-detuned) rows; B_r at the row with the largest deviation
// from that bare response; gamma_s from the field extent of the perturbation
// and g_c from the gap (two dips) or the linewidth excess (one dip) there.
inline MapParams seed_map_parameters(const SpectrumMap& map, FieldConversion conv = {})
{
    require(map.rows() >= 3, "seed_map_parameters: need at least three field rows", ErrorKind::data);
    require(map.scale == PowerScale::linear, "seed_map_parameters: map must be linear", ErrorKind::data);
    const auto first = fit_row_lorentzian(map.frequency_axis, map.row(0));
    const auto last = fit_row_lorentzian(map.frequency_axis, map.row(map.rows() - 1));
    MapParams s;
    s.omega_c = 0.5 * (first.value("omega_c") + last.value("omega_c"));
    s.kappa_c = 0.5 * (first.value("kappa") + last.value("kappa"));
    s.kappa_e = 0.5 * (first.value("kappa_e") + last.value("kappa_e"));

    const CavityParams bare{s.omega_c, s.kappa_c, s.kappa_e, std::nullopt};
    std::vector<double> deviation(map.rows(), 0.0);
    for (std::size_t i = 0; i < map.rows(); ++i)
        for (std::size_t j = 0; j < map.cols(); ++j) {
            const double e = map.at(i, j) - reflection_power(map.frequency_axis[j], 0.0, bare, 0.0, 1.0);
            deviation[i] += e * e;
        }
    const auto i_peak = static_cast<std::size_t>(std::max_element(deviation.begin(), deviation.end()) -
                                                 deviation.begin());
    s.B_r = map.field_axis[i_peak];

    std::size_t lo = i_peak, hi = i_peak;
    while (lo > 0 && deviation[lo - 1] >= 0.5 * deviation[i_peak])
        --lo;
    while (hi + 1 < map.rows() && deviation[hi + 1] >= 0.5 * deviation[i_peak])
        ++hi;
    const double step = std::abs(conv.m0_over_hbar) * (map.field_axis[1] - map.field_axis[0]);
    s.gamma_s = std::max(0.5 * std::abs(conv.m0_over_hbar) * (map.field_axis[hi] - map.field_axis[lo]), step);

    const auto row = map.row(i_peak);
    auto minima = detail::row_minima(row);
    std::sort(minima.begin(), minima.end(), [](const auto& a, const auto& b) { return a.prominence > b.prominence; });
    if (minima.size() >= 2 && minima[1].prominence > 0.05 * minima[0].prominence) {
        s.g_c = 0.5 * std::abs(map.frequency_axis[minima[0].index] - map.frequency_axis[minima[1].index]);
    } else {
        const auto centre = fit_row_lorentzian(map.frequency_axis, row);
        const double excess = std::max(centre.value("kappa") - s.kappa_c, 1e-3 * s.kappa_c);
        s.g_c = std::sqrt(excess * s.gamma_s);
    }
    return s;
}

} // namespace cavspin
