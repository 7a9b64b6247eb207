#pragma once

// Normal-mode splitting on resonance (Delta = 0): numeric minima counting on
// |S11|^2, the closed-form quartic criterion and the merge-point scan.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cavspin/core_model.hpp"
#include "cavspin/error.hpp"

namespace cavspin {

struct SplittingVerdict
{
    int minima_count = 0;
    std::vector<double> dip_frequencies;  // rad/s, ascending
    std::vector<double> dip_depths;       // |S11|^2 at each dip
    bool exact_condition_holds = false;
    double cooperativity_C = 0.0;
    Regime regime = Regime::weak;
};

// Two reflection minima at Delta = 0 iff
//   g^4 - gamma^2 (1 + 4C)(gamma^2 - 2 g^2) > 0,
// exact for kappa_e = kappa_c. Evaluated in x = (g/gamma)^2.
inline bool exact_splitting_condition(double g_c, double gamma_s, double C)
{
    require(gamma_s > 0.0, "exact_splitting_condition: gamma_s must be positive");
    require(C >= 0.0, "exact_splitting_condition: cooperativity must be non-negative");
    const double r = g_c / gamma_s;
    const double x = r * r;
    return x * x - (1.0 + 4.0 * C) * (1.0 - 2.0 * x) > 0.0;
}

// Limit of the quartic criterion for kappa_c >> g_c, gamma_s.
inline double asymptotic_threshold_ratio()
{
    return std::sqrt(std::sqrt(2.0) - 1.0);
}

// Root of the quartic criterion in g_c for kappa_e = kappa_c, where
// C = g^2/(2 kappa gamma). With k = kappa_c/gamma_s and x = (g/gamma)^2 it
// reads (k + 4) x^2 + 2 (k - 1) x - k = 0.
inline double critical_coupling_closed_form(double kappa_c, double gamma_s)
{
    require(kappa_c > 0.0 && gamma_s > 0.0, "critical_coupling_closed_form: rates must be positive");
    const double k = kappa_c / gamma_s;
    const double b = k - 1.0;
    const double x = k / (b + std::sqrt(b * b + k * (k + 4.0)));
    return gamma_s * std::sqrt(x);
}

struct MinimaSearchOptions
{
    double depth_significance = 1e-12;  // relative to the lower neighbouring maximum
    double refine_tolerance = 1e-10;    // relative to omega_c
    double merge_floor = 1e-9;          // relative to omega_c
};

namespace detail {

inline double smallest_positive_rate(double g_c, double kappa_c, double gamma_s)
{
    double m = std::min(kappa_c, gamma_s);
    if (g_c > 0.0)
        m = std::min(m, g_c);
    return m;
}

template <class F>
double golden_section_min(F&& f, double lo, double hi, double tol)
{
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

struct Dip
{
    double offset;
    double depth;
};

// Interior local minima of f sampled on offsets[k], refined by golden section
// inside the neighbouring grid cells and then merged/filtered.
template <class F>
std::vector<Dip> find_dips(F&& f, std::span<const double> offsets, double merge_distance, double refine_tol,
                           double depth_significance)
{
    const std::size_t n = offsets.size();
    std::vector<double> p(n);
    for (std::size_t k = 0; k < n; ++k)
        p[k] = f(offsets[k]);

    std::vector<std::size_t> idx;
    for (std::size_t k = 1; k + 1 < n; ++k)
        if (p[k] < p[k - 1] && p[k] <= p[k + 1])
            idx.push_back(k);

    std::vector<Dip> dips;
    for (std::size_t m = 0; m < idx.size(); ++m) {
        const std::size_t k = idx[m];
        // Highest sample between this minimum and its neighbouring minima.
        const std::size_t left_end = m == 0 ? 0 : idx[m - 1];
        const std::size_t right_end = m + 1 == idx.size() ? n - 1 : idx[m + 1];
        const double left_max = *std::max_element(p.begin() + static_cast<std::ptrdiff_t>(left_end),
                                                  p.begin() + static_cast<std::ptrdiff_t>(k));
        const double right_max = *std::max_element(p.begin() + static_cast<std::ptrdiff_t>(k + 1),
                                                   p.begin() + static_cast<std::ptrdiff_t>(right_end) + 1);
        const double barrier = std::min(left_max, right_max);
        if (barrier - p[k] <= depth_significance * barrier)
            continue;

        double best = offsets[k];
        double best_p = p[k];
        const double refined = golden_section_min(f, offsets[k - 1], offsets[k + 1], refine_tol);
        const double refined_p = f(refined);
        if (refined_p < best_p) {
            best = refined;
            best_p = refined_p;
        }
        dips.push_back({best, best_p});
    }

    std::vector<Dip> merged;
    for (const Dip& d : dips) {
        if (!merged.empty() && d.offset - merged.back().offset < merge_distance) {
            if (d.depth < merged.back().depth)
                merged.back() = d;
            continue;
        }
        merged.push_back(d);
    }
    return merged;
}

} // namespace detail

// Counts |S11|^2 minima versus probe frequency at Delta = 0 on
// [omega_c - window, omega_c + window]. The grid is symmetric about omega_c.
inline SplittingVerdict count_minima_on_resonance(const CavityParams& cav, double g_c, double gamma_s,
                                                  double window, double resolution,
                                                  const MinimaSearchOptions& opt = {})
{
    cav.validate();
    require(gamma_s > 0.0, "count_minima_on_resonance: gamma_s must be positive");
    require(g_c >= 0.0, "count_minima_on_resonance: g_c must be non-negative");
    const double largest = std::max({g_c, cav.kappa_c, gamma_s});
    const double smallest = detail::smallest_positive_rate(g_c, cav.kappa_c, gamma_s);
    require(window >= 10.0 * largest,
            "count_minima_on_resonance: window must be at least 10 x max(g_c, kappa_c, gamma_s)");
    require(resolution > 0.0 && resolution <= smallest / 50.0,
            "count_minima_on_resonance: resolution must not exceed min(g_c, kappa_c, gamma_s)/50");

    const auto half = static_cast<std::ptrdiff_t>(std::ceil(window / resolution));
    std::vector<double> offsets(static_cast<std::size_t>(2 * half + 1));
    for (std::ptrdiff_t k = -half; k <= half; ++k)
        offsets[static_cast<std::size_t>(k + half)] = static_cast<double>(k) * resolution;

    auto power = [&](double probe) { return reflection_power_at_offset(probe, 0.0, cav, g_c, gamma_s); };
    const auto dips = detail::find_dips(power, offsets, std::max(resolution, opt.merge_floor * cav.omega_c),
                                        opt.refine_tolerance * cav.omega_c, opt.depth_significance);
    require(!dips.empty(), "count_minima_on_resonance: no interior minimum in the window", ErrorKind::data);

    SplittingVerdict v;
    v.minima_count = static_cast<int>(dips.size());
    for (const auto& d : dips) {
        v.dip_frequencies.push_back(cav.omega_c + d.offset);
        v.dip_depths.push_back(d.depth);
    }
    v.cooperativity_C = cooperativity(g_c, cav.kappa_c, gamma_s);
    v.exact_condition_holds = exact_splitting_condition(g_c, gamma_s, v.cooperativity_C);
    v.regime = classify_regime(g_c, cav.kappa_c, gamma_s);
    return v;
}

// Default grid: window 10 x the largest rate, resolution 1/50 of the smallest.
inline SplittingVerdict count_minima_on_resonance(const CavityParams& cav, double g_c, double gamma_s)
{
    const double largest = std::max({g_c, cav.kappa_c, gamma_s});
    const double smallest = detail::smallest_positive_rate(g_c, cav.kappa_c, gamma_s);
    return count_minima_on_resonance(cav, g_c, gamma_s, 10.0 * largest, smallest / 50.0);
}

struct MergePoint
{
    double g_critical = 0.0;  // rad/s
    double ratio = 0.0;       // g_critical / gamma_s
    int bisection_steps = 0;
};

// Critical g_c where the on-resonance spectrum changes from one dip to two.
// A coarse scan of `steps` points brackets the first transition, bisection
// then narrows it to relative width `rel_tol`. One grid (window from the
// upper end, resolution from the lower end) is shared by every evaluation.
inline MergePoint merge_point_scan(const CavityParams& cav, double gamma_s, double g_lo, double g_hi, int steps,
                                   double rel_tol = 1e-4)
{
    cav.validate();
    require(gamma_s > 0.0, "merge_point_scan: gamma_s must be positive");
    require(g_lo > 0.0 && g_hi > g_lo, "merge_point_scan: need 0 < g_lo < g_hi");
    require(steps >= 16, "merge_point_scan: steps must be at least 16");

    const double window = 10.0 * std::max({g_hi, cav.kappa_c, gamma_s});
    const double resolution = std::min({g_lo, cav.kappa_c, gamma_s}) / 50.0;
    auto count = [&](double g) {
        return count_minima_on_resonance(cav, g, gamma_s, window, resolution).minima_count;
    };

    if (count(g_lo) != 1 || count(g_hi) < 2)
        fail(ErrorKind::data, "merge_point_scan: no one-to-two dip transition inside the g_c range");

    const auto grid = linspace(g_lo, g_hi, static_cast<std::size_t>(steps));
    double below = g_lo, above = g_hi;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if (count(grid[k]) >= 2) {
            below = grid[k - 1];
            above = grid[k];
            break;
        }
    }

    MergePoint out;
    while (above - below > rel_tol * below) {
        const double mid = 0.5 * (below + above);
        if (count(mid) >= 2)
            above = mid;
        else
            below = mid;
        ++out.bisection_steps;
    }
    out.g_critical = 0.5 * (below + above);
    out.ratio = out.g_critical / gamma_s;
    return out;
}

} // namespace cavspin
