#pragma once

// sqrt(N) scaling of the collective coupling and the position dependence of
// the coupling along the cavity axis.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cavspin/error.hpp"
#include "cavspin/nlls.hpp"

namespace cavspin {

struct CouplingVsN
{
    std::vector<double> N;
    std::vector<double> g_c;       // rad/s
    std::vector<double> weight;    // empty: uniform
    std::vector<bool> excluded;    // empty: none

    void validate() const
    {
        require(N.size() == g_c.size(), "coupling-vs-N: N and g_c lengths differ", ErrorKind::data);
        require(weight.empty() || weight.size() == N.size(), "coupling-vs-N: weight length differs",
                ErrorKind::data);
        require(excluded.empty() || excluded.size() == N.size(), "coupling-vs-N: exclusion length differs",
                ErrorKind::data);
        for (std::size_t k = 0; k < N.size(); ++k) {
            require(N[k] > 0.0, "coupling-vs-N: N must be positive", ErrorKind::data);
            require(g_c[k] >= 0.0, "coupling-vs-N: g_c must be non-negative", ErrorKind::data);
        }
    }
};

struct SqrtNFit
{
    FitResult fit;                  // single parameter "g_s"
    std::vector<double> residuals;  // g_c - g_s sqrt(N), excluded points included
    bool weighted = false;
    bool through_origin = true;
};

// Weighted least squares of g_c = g_s sqrt(N) through the origin:
// g_s = sum w g sqrt(N) / sum w N.
inline SqrtNFit sqrtN_regression(const CouplingVsN& data)
{
    data.validate();
    double swgs = 0.0, swn = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < data.N.size(); ++k) {
        if (!data.excluded.empty() && data.excluded[k])
            continue;
        const double w = data.weight.empty() ? 1.0 : data.weight[k];
        swgs += w * data.g_c[k] * std::sqrt(data.N[k]);
        swn += w * data.N[k];
        ++used;
    }
    require(used >= 1, "sqrtN_regression: no data points", ErrorKind::data);

    SqrtNFit out;
    out.weighted = !data.weight.empty();
    const double g_s = swgs / swn;
    double chi2 = 0.0;
    for (std::size_t k = 0; k < data.N.size(); ++k) {
        const double r = data.g_c[k] - g_s * std::sqrt(data.N[k]);
        out.residuals.push_back(r);
        if (data.excluded.empty() || !data.excluded[k])
            chi2 += (data.weight.empty() ? 1.0 : data.weight[k]) * r * r;
    }
    FitResult& f = out.fit;
    f.names = {"g_s"};
    f.values = {g_s};
    f.fixed = {false};
    f.data_points = used;
    f.residual_norm = std::sqrt(chi2);
    f.variances = {used > 1 ? chi2 / static_cast<double>(used - 1) / swn : 0.0};
    f.converged = true;
    f.termination = "closed form";
    f.notes.push_back(std::string("through-origin, ") + (out.weighted ? "weighted" : "unweighted"));
    if (used == 1)
        f.notes.push_back("single point: no degrees of freedom for an uncertainty");
    return out;
}

struct PositionProfile
{
    std::vector<double> position;  // m, strictly increasing
    std::vector<double> g_c;       // rad/s

    void validate() const
    {
        require(position.size() == g_c.size(), "position profile: column lengths differ", ErrorKind::data);
        for (std::size_t k = 1; k < position.size(); ++k)
            require(position[k] > position[k - 1], "position profile: positions must be strictly increasing",
                    ErrorKind::data);
    }
};

// g(z) = A |sin(2 pi z / period + phase)| + offset.
struct RectifiedSinusoid
{
    double amplitude = 0.0;
    double period = 1.0;  // m
    double phase = 0.0;   // rad, in [0, pi)
    double offset = 0.0;

    double operator()(double z) const
    {
        return amplitude * std::abs(std::sin(2.0 * std::numbers::pi * z / period + phase)) + offset;
    }

    // Maximum of the profile closest to z.
    double nearest_peak(double z) const
    {
        const double pi = std::numbers::pi;
        const double u = 2.0 * pi * z / period + phase;
        const double k = std::round((u - pi / 2.0) / pi);
        return (pi / 2.0 + k * pi - phase) * period / (2.0 * pi);
    }
};

inline CurveModel rectified_sinusoid_model()
{
    CurveModel c;
    c.value = [](double z, std::span<const double> p) {
        return RectifiedSinusoid{p[0], p[1], p[2], p[3]}(z);
    };
    c.gradient = [](double z, std::span<const double> p, std::span<double> grad) {
        const double w = 2.0 * std::numbers::pi / p[1];
        const double u = w * z + p[2];
        const double s = std::sin(u);
        const double ds = (s >= 0.0 ? 1.0 : -1.0) * std::cos(u);
        grad[0] = std::abs(s);
        grad[1] = p[0] * ds * (-w * z / p[1]);
        grad[2] = p[0] * ds;
        grad[3] = 1.0;
    };
    return c;
}

struct SinusoidFit
{
    FitResult fit;  // amplitude, period, phase, offset
    RectifiedSinusoid curve;
    bool flat = false;
};

namespace detail {

// Frequency of the strongest component of the mean-removed profile, from a
// direct (non-uniform) Fourier sum on a fine frequency grid.
inline double dominant_frequency(std::span<const double> z, std::span<const double> y)
{
    double mean = 0.0;
    for (double v : y)
        mean += v;
    mean /= static_cast<double>(y.size());
    const double span = z.back() - z.front();
    double min_step = span;
    for (std::size_t k = 1; k < z.size(); ++k)
        min_step = std::min(min_step, z[k] - z[k - 1]);
    const double f_lo = 0.25 / span;
    const double f_hi = 0.5 / min_step;
    constexpr int n = 2000;
    double best_f = f_lo, best_p = -1.0;
    for (int q = 0; q <= n; ++q) {
        const double f = f_lo + (f_hi - f_lo) * q / n;
        std::complex<double> acc = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k)
            acc += (y[k] - mean) * std::polar(1.0, -2.0 * std::numbers::pi * f * z[k]);
        if (std::norm(acc) > best_p) {
            best_p = std::norm(acc);
            best_f = f;
        }
    }
    return best_f;
}

inline double wrap_phase(double phase)
{
    const double pi = std::numbers::pi;
    double r = std::fmod(phase, pi);
    if (r < 0.0)
        r += pi;
    return r;
}

} // namespace detail

// Fits the rectified sinusoid. The period is seeded from the dominant
// spectral component (the fundamental of |sin| is 2/period) and from the data
// span; the lowest-cost converged start wins.
inline SinusoidFit fit_position_sinusoid(const PositionProfile& profile, const NllsOptions& opt = {})
{
    profile.validate();
    require(profile.position.size() >= 5, "fit_position_sinusoid: need at least five points", ErrorKind::data);
    const auto& z = profile.position;
    const auto& y = profile.g_c;
    const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
    const double y_min = *lo_it, y_max = *hi_it;
    const double z_peak = z[static_cast<std::size_t>(hi_it - y.begin())];

    SinusoidFit out;
    const double scale = std::max(std::abs(y_max), std::abs(y_min));
    if (y_max - y_min <= 1e-12 * scale) {
        double mean = 0.0;
        for (double v : y)
            mean += v;
        mean /= static_cast<double>(y.size());
        out.flat = true;
        out.curve = {0.0, NAN, NAN, mean};
        FitResult& f = out.fit;
        f.names = {"amplitude", "period", "phase", "offset"};
        f.values = {0.0, NAN, NAN, mean};
        f.variances = {0.0, INFINITY, INFINITY, 0.0};
        f.fixed = {false, false, false, false};
        f.data_points = y.size();
        f.converged = true;
        f.degenerate = true;
        f.termination = "flat profile";
        f.notes.push_back("flat profile: amplitude is zero, period and phase undefined");
        return out;
    }

    const double span = z.back() - z.front();
    const double f_dom = detail::dominant_frequency(z, y);
    std::vector<double> period_seeds{2.0 / f_dom, 1.0 * span, 2.0 * span, 4.0 * span};

    const auto pts = [&] {
        std::vector<DataPoint> p;
        for (std::size_t k = 0; k < z.size(); ++k)
            p.push_back({z[k], y[k], 1.0});
        return p;
    }();

    bool have = false;
    for (double period : period_seeds) {
        const double phase = std::numbers::pi / 2.0 - 2.0 * std::numbers::pi * z_peak / period;
        FitResult fit;
        try {
            fit = nlls_solve(rectified_sinusoid_model(), pts,
                             {{"amplitude", y_max - y_min, Bound::positive},
                              {"period", period, Bound::positive},
                              {"phase", phase, Bound::free},
                              {"offset", y_min, Bound::free}},
                             opt);
        } catch (const Error&) {
            continue;
        }
        if (!have || (fit.converged && !out.fit.converged) ||
            (fit.converged == out.fit.converged && fit.residual_norm < out.fit.residual_norm)) {
            out.fit = fit;
            have = true;
        }
    }
    require(have, "fit_position_sinusoid: no start converged", ErrorKind::fit);
    const std::size_t ip = out.fit.index("phase");
    out.fit.values[ip] = detail::wrap_phase(out.fit.values[ip]);
    out.curve = {out.fit.value("amplitude"), out.fit.value("period"), out.fit.value("phase"),
                 out.fit.value("offset")};
    return out;
}

namespace detail {

// Integral of h over [a, b], split at the zeros of the sinusoid so every
// piece is smooth.
template <class H>
double integrate_piecewise(const RectifiedSinusoid& s, H&& h, double a, double b)
{
    using boost::math::quadrature::gauss_kronrod;
    std::vector<double> cuts{a};
    if (s.amplitude != 0.0 && std::isfinite(s.period)) {
        const double pi = std::numbers::pi;
        const double w = 2.0 * pi / s.period;
        // zeros where w z + phase = k pi
        const double k_lo = std::ceil((w * a + s.phase) / pi);
        const double k_hi = std::floor((w * b + s.phase) / pi);
        for (double k = k_lo; k <= k_hi; k += 1.0) {
            const double zc = (k * pi - s.phase) / w;
            if (zc > a && zc < b)
                cuts.push_back(zc);
        }
    }
    cuts.push_back(b);
    double total = 0.0;
    for (std::size_t q = 0; q + 1 < cuts.size(); ++q)
        total += gauss_kronrod<double, 31>::integrate(h, cuts[q], cuts[q + 1], 15, 1e-12);
    return total;
}

} // namespace detail

// Root-mean-square coupling over [centre - L/2, centre + L/2].
inline double average_coupling_over_length(const RectifiedSinusoid& profile, double sample_length, double centre)
{
    require(sample_length >= 0.0, "average_coupling_over_length: sample length must be non-negative");
    if (sample_length == 0.0)
        return std::abs(profile(centre));
    if (profile.amplitude == 0.0)
        return std::abs(profile.offset);
    const double a = centre - 0.5 * sample_length, b = centre + 0.5 * sample_length;
    const double sq = detail::integrate_piecewise(profile, [&](double z) { return profile(z) * profile(z); }, a, b);
    return std::sqrt(sq / sample_length);
}

// Plain mean over the same interval, for comparison with the rms average.
inline double mean_coupling_over_length(const RectifiedSinusoid& profile, double sample_length, double centre)
{
    require(sample_length >= 0.0, "mean_coupling_over_length: sample length must be non-negative");
    if (sample_length == 0.0)
        return profile(centre);
    if (profile.amplitude == 0.0)
        return profile.offset;
    const double a = centre - 0.5 * sample_length, b = centre + 0.5 * sample_length;
    return detail::integrate_piecewise(profile, profile, a, b) / sample_length;
}

} // namespace cavspin
