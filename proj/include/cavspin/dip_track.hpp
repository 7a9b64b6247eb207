#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cavspin/core_model.hpp"
#include "cavspin/error.hpp"

namespace cavspin {

enum class BranchTag
{
    single,
    upper,
    lower,
};

inline const char* to_string(BranchTag t)
{
    switch (t) {
    case BranchTag::upper: return "upper";
    case BranchTag::lower: return "lower";
    case BranchTag::single: return "single";
    }
    return "?";
}

// Dip positions digitised from a spectrum map. Entries are ordered by field;
// a field value repeats when two branches were resolved on that row.
struct DipTrack
{
    std::vector<double> field;          // T
    std::vector<double> dip_frequency;  // rad/s
    std::vector<BranchTag> branch;

    std::size_t size() const { return field.size(); }

    void push(double b, double w, BranchTag tag)
    {
        field.push_back(b);
        dip_frequency.push_back(w);
        branch.push_back(tag);
    }

    void validate() const
    {
        require(field.size() == dip_frequency.size() && field.size() == branch.size(),
                "dip track: column lengths differ", ErrorKind::data);
        for (std::size_t k = 1; k < field.size(); ++k) {
            require(field[k] >= field[k - 1], "dip track: fields must be non-decreasing", ErrorKind::data);
            if (field[k] == field[k - 1])
                require(k < 2 || field[k - 2] != field[k], "dip track: more than two dips on one field",
                        ErrorKind::data);
        }
    }

    std::size_t count(BranchTag tag) const
    {
        return static_cast<std::size_t>(std::count(branch.begin(), branch.end(), tag));
    }
};

struct TrackOptions
{
    // Minima whose topographic prominence (linear power) is below this are
    // treated as noise.
    double min_prominence = 1e-9;
    // Minima are also dropped when their prominence is below this many
    // estimated pixel-noise sigmas (see estimate_noise_sigma); 0 disables.
    double noise_sigmas = 6.0;
};

// Robust pixel-noise level of a map: median absolute second difference along
// frequency, scaled to a Gaussian sigma (white noise gives a second
// difference of variance 6 sigma^2). Smooth noiseless maps give a small
// value set by the curvature of the far wings.
inline double estimate_noise_sigma(const SpectrumMap& map)
{
    std::vector<double> d;
    d.reserve(map.power.size());
    for (std::size_t i = 0; i < map.rows(); ++i) {
        const auto row = map.row(i);
        for (std::size_t j = 1; j + 1 < row.size(); ++j)
            d.push_back(std::abs(row[j - 1] - 2.0 * row[j] + row[j + 1]));
    }
    if (d.empty())
        return 0.0;
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return 1.4826 * *mid / std::sqrt(6.0);
}

namespace detail {

struct RowMinimum
{
    std::size_t index;
    double prominence;
};

// Local minima of a sampled row with their topographic prominence: the
// height of the lower of the two barriers separating the minimum from deeper
// ground (or from the row edge).
inline std::vector<RowMinimum> row_minima(std::span<const double> p)
{
    std::vector<RowMinimum> out;
    const std::size_t n = p.size();
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (!(p[k] < p[k - 1] && p[k] <= p[k + 1]))
            continue;
        double left = p[k];
        for (std::size_t q = k; q-- > 0;) {
            if (p[q] < p[k])
                break;
            left = std::max(left, p[q]);
        }
        double right = p[k];
        for (std::size_t q = k + 1; q < n; ++q) {
            if (p[q] < p[k])
                break;
            right = std::max(right, p[q]);
        }
        out.push_back({k, std::min(left, right) - p[k]});
    }
    return out;
}

// Vertex of the parabola through (x0,y0), (x1,y1), (x2,y2), clamped to [x0, x2].
inline double parabola_vertex(double x0, double y0, double x1, double y1, double x2, double y2)
{
    const double d0 = (y1 - y0) / (x1 - x0);
    const double d1 = (y2 - y1) / (x2 - x1);
    const double curv = (d1 - d0) / (x2 - x0);
    if (!(curv > 0.0) || !std::isfinite(curv))
        return x1;
    const double v = 0.5 * (x0 + x1) - d0 / (2.0 * curv);
    return std::clamp(v, x0, x2);
}

} // namespace detail

// Sub-grid dip position from the three samples around grid minimum k,
// interpolated in linear power. Log-power develops a cusp at dips that reach
// zero reflectance (critical coupling) and interpolates them poorly.
inline double refine_dip(std::span<const double> axis, std::span<const double> power, std::size_t k)
{
    return detail::parabola_vertex(axis[k - 1], power[k - 1], axis[k], power[k], axis[k + 1], power[k + 1]);
}

inline DipTrack extract_dip_track(const SpectrumMap& map, int expect_branches, const TrackOptions& opt = {})
{
    require(expect_branches == 1 || expect_branches == 2, "extract_dip_track: expect_branches must be 1 or 2");
    require(map.scale == PowerScale::linear, "extract_dip_track: map must be in linear scale", ErrorKind::data);
    require(map.cols() >= 3, "extract_dip_track: frequency axis too short", ErrorKind::data);
    require(map.power.size() == map.rows() * map.cols(), "extract_dip_track: map size mismatch", ErrorKind::data);

    const double threshold = std::max(opt.min_prominence, opt.noise_sigmas * estimate_noise_sigma(map));
    DipTrack track;
    std::size_t unresolved = 0;
    for (std::size_t i = 0; i < map.rows(); ++i) {
        const auto row = map.row(i);
        auto minima = detail::row_minima(row);
        std::erase_if(minima, [&](const auto& m) { return m.prominence < threshold; });
        std::sort(minima.begin(), minima.end(),
                  [](const auto& a, const auto& b) { return a.prominence > b.prominence; });

        std::vector<std::size_t> picked;
        for (const auto& m : minima) {
            if (static_cast<int>(picked.size()) == expect_branches)
                break;
            const bool close = std::any_of(picked.begin(), picked.end(), [&](std::size_t q) {
                return (q > m.index ? q - m.index : m.index - q) <= 2;
            });
            if (!close)
                picked.push_back(m.index);
        }
        if (picked.empty()) {
            ++unresolved;
            continue;
        }
        std::sort(picked.begin(), picked.end());
        const double b = map.field_axis[i];
        if (picked.size() == 2) {
            track.push(b, refine_dip(map.frequency_axis, row, picked[0]), BranchTag::lower);
            track.push(b, refine_dip(map.frequency_axis, row, picked[1]), BranchTag::upper);
        } else {
            if (expect_branches == 2)
                ++unresolved;
            track.push(b, refine_dip(map.frequency_axis, row, picked[0]), BranchTag::single);
        }
    }
    if (expect_branches == 2 && 2 * unresolved > map.rows())
        fail(ErrorKind::data, "extract_dip_track: two branches resolved on fewer than half of the rows; "
                              "use expect_branches = 1");
    require(track.size() > 0, "extract_dip_track: no dips found", ErrorKind::data);
    return track;
}

// Gap between the two branches on the row nearest to `field`, or NaN when that
// row has a single dip.
inline double branch_gap_at(const DipTrack& track, double field)
{
    double best_field = 0.0;
    double best_dist = INFINITY;
    for (double b : track.field)
        if (std::abs(b - field) < best_dist) {
            best_dist = std::abs(b - field);
            best_field = b;
        }
    double lo = NAN, hi = NAN;
    for (std::size_t k = 0; k < track.size(); ++k) {
        if (track.field[k] != best_field)
            continue;
        if (track.branch[k] == BranchTag::lower)
            lo = track.dip_frequency[k];
        if (track.branch[k] == BranchTag::upper)
            hi = track.dip_frequency[k];
    }
    return hi - lo;
}

} // namespace cavspin
