#pragma once

// Self-contained SVG plots: reflection maps as a dB colour image with
// optional overlay curves, and plain x-y charts. Output is a pure function of
// the input (fixed number formatting, no timestamps).

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "cavspin/core_model.hpp"
#include "cavspin/io/spectrum_csv.hpp"
#include "cavspin/io/text.hpp"

namespace cavspin::io {

enum class SeriesStyle
{
    line,
    dashed,
    markers,
};

// Data in plot units (G, MHz, mm, ...), not internal units.
struct Series
{
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    SeriesStyle style = SeriesStyle::line;
    std::string color = "#d62728";
};

namespace detail {

struct Rgb
{
    double r, g, b;
};

// Nine samples of the viridis colour map, linearly interpolated.
inline std::string viridis(double t)
{
    static constexpr std::array<Rgb, 9> stops{{{68, 1, 84},
                                               {71, 44, 122},
                                               {59, 81, 139},
                                               {44, 113, 142},
                                               {33, 144, 141},
                                               {39, 173, 129},
                                               {92, 200, 99},
                                               {170, 220, 50},
                                               {253, 231, 37}}};
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * (stops.size() - 1);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
    const double f = t - static_cast<double>(k);
    auto mix = [&](double a, double b) { return static_cast<int>(std::lround(a + f * (b - a))); };
    return fmt::format("#{:02x}{:02x}{:02x}", mix(stops[k].r, stops[k + 1].r), mix(stops[k].g, stops[k + 1].g),
                       mix(stops[k].b, stops[k + 1].b));
}

inline std::string num(double v) { return fmt::format("{:.2f}", v); }

// Tick positions on a 1-2-5 ladder, roughly `target` of them.
inline std::vector<double> nice_ticks(double lo, double hi, int target = 6)
{
    if (!(hi > lo))
        return {lo};
    const double raw = (hi - lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step)
        out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    return out;
}

inline std::string tick_label(double v, double step)
{
    const int decimals = std::max(0, static_cast<int>(-std::floor(std::log10(step) + 1e-9)));
    return fmt::format("{:.{}f}", v, decimals);
}

inline std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Frame
{
    double width = 720, height = 480;
    double left = 80, right = 110, top = 40, bottom = 60;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string header(const Frame& f, const std::string& title)
{
    return fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
                       "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
                       "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
                       "<text x=\"{2}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{3}</text>\n"
                       "<defs><clipPath id=\"plot\"><rect x=\"{4}\" y=\"{5}\" width=\"{6}\" height=\"{7}\"/>"
                       "</clipPath></defs>\n",
                       num(f.width), num(f.height), num(0.5 * (f.left + f.width - f.right)), escape(title),
                       num(f.left), num(f.top), num(f.width - f.left - f.right), num(f.height - f.top - f.bottom));
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel)
{
    std::string s = fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
                                num(f.left), num(f.top), num(f.width - f.left - f.right),
                                num(f.height - f.top - f.bottom));
    const auto xt = nice_ticks(f.x0, f.x1);
    const double xstep = xt.size() > 1 ? xt[1] - xt[0] : 1.0;
    for (double t : xt) {
        const double x = f.px(t), y = f.height - f.bottom;
        s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>"
                         "<text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\">{4}</text>\n",
                         num(x), num(y), num(y + 5), num(y + 18), tick_label(t, xstep));
    }
    const auto yt = nice_ticks(f.y0, f.y1);
    const double ystep = yt.size() > 1 ? yt[1] - yt[0] : 1.0;
    for (double t : yt) {
        const double y = f.py(t);
        s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>"
                         "<text x=\"{3}\" y=\"{4}\" text-anchor=\"end\">{5}</text>\n",
                         num(f.left), num(y), num(f.left - 5), num(f.left - 8), num(y + 4), tick_label(t, ystep));
    }
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     num(0.5 * (f.left + f.width - f.right)), num(f.height - 15), escape(xlabel));
    s += fmt::format("<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{1}</text>\n",
                     num(0.5 * (f.top + f.height - f.bottom)), escape(ylabel));
    return s;
}

inline std::string series_svg(const Frame& f, const Series& s)
{
    std::string out;
    if (s.style == SeriesStyle::markers) {
        for (std::size_t k = 0; k < s.x.size(); ++k)
            out += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>\n", num(f.px(s.x[k])),
                               num(f.py(s.y[k])), s.color);
        return out;
    }
    if (s.x.size() < 2)
        return out;
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"";
    if (s.style == SeriesStyle::dashed)
        out += " stroke-dasharray=\"6 4\"";
    out += " points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k)
        out += (k ? " " : "") + num(f.px(s.x[k])) + "," + num(f.py(s.y[k]));
    out += "\"/>\n";
    return out;
}

inline std::string legend(const Frame& f, const std::vector<Series>& series)
{
    std::size_t count = 0, longest = 0;
    for (const auto& s : series)
        if (!s.label.empty()) {
            ++count;
            longest = std::max(longest, s.label.size());
        }
    if (count == 0)
        return {};
    // Light backing box and outlined swatches keep white markers readable.
    std::string out = fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\" fill-opacity=\"0.85\" "
        "stroke=\"#999999\" stroke-width=\"0.5\"/>\n",
        num(f.left + 4), num(f.top + 4), num(26.0 + 6.5 * static_cast<double>(longest)),
        num(6.0 + 16.0 * static_cast<double>(count)));
    double y = f.top + 19;
    for (const auto& s : series) {
        if (s.label.empty())
            continue;
        out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\" stroke=\"#333333\" "
                           "stroke-width=\"0.5\"/><text x=\"{}\" y=\"{}\">{}</text>\n",
                           num(f.left + 10), num(y - 9), s.color, num(f.left + 24), num(y), escape(s.label));
        y += 16;
    }
    return out;
}

} // namespace detail

// Map image in dB over field (G, horizontal) and frequency (MHz, vertical),
// block-averaged in linear power down to at most max_cells per axis.
inline std::string map_svg(const SpectrumMap& map, const std::vector<Series>& overlays = {},
                           const std::string& title = "Reflected power |S11|^2", std::size_t max_cells = 240)
{
    require(map.rows() > 0 && map.cols() > 0, "map_svg: empty map", ErrorKind::data);
    const std::size_t bx = (map.rows() + max_cells - 1) / max_cells;
    const std::size_t by = (map.cols() + max_cells - 1) / max_cells;
    const std::size_t nx = (map.rows() + bx - 1) / bx, ny = (map.cols() + by - 1) / by;

    std::vector<double> db(nx * ny);
    for (std::size_t a = 0; a < nx; ++a)
        for (std::size_t b = 0; b < ny; ++b) {
            double acc = 0.0;
            std::size_t n = 0;
            for (std::size_t i = a * bx; i < std::min(map.rows(), (a + 1) * bx); ++i)
                for (std::size_t j = b * by; j < std::min(map.cols(), (b + 1) * by); ++j, ++n)
                    acc += map.scale == PowerScale::dB ? from_db(map.at(i, j)) : map.at(i, j);
            db[a * ny + b] = to_db(acc / static_cast<double>(n));
        }
    const auto [lo_it, hi_it] = std::minmax_element(db.begin(), db.end());
    const double lo = std::max(*lo_it, *hi_it - 60.0), hi = *hi_it;

    // Cell edges halfway between axis samples.
    auto edges = [](const std::vector<double>& c) {
        std::vector<double> e(c.size() + 1);
        if (c.size() == 1) {
            e[0] = c[0] - 0.5;
            e[1] = c[0] + 0.5;
            return e;
        }
        for (std::size_t k = 1; k < c.size(); ++k)
            e[k] = 0.5 * (c[k - 1] + c[k]);
        e[0] = c[0] - (e[1] - c[0]);
        e[c.size()] = c.back() + (c.back() - e[c.size() - 1]);
        return e;
    };
    std::vector<double> fg, fm;
    for (double b : map.field_axis)
        fg.push_back(units::tesla_to_gauss(b));
    for (double w : map.frequency_axis)
        fm.push_back(units::rad_to_mhz(w));
    const auto eg = edges(fg), em = edges(fm);

    detail::Frame f;
    f.x0 = eg.front();
    f.x1 = eg.back();
    f.y0 = em.front();
    f.y1 = em.back();
    std::string s = detail::header(f, title);
    for (std::size_t a = 0; a < nx; ++a) {
        const double xa = f.px(eg[a * bx]), xb = f.px(eg[std::min(map.rows(), (a + 1) * bx)]);
        for (std::size_t b = 0; b < ny; ++b) {
            const double ya = f.py(em[std::min(map.cols(), (b + 1) * by)]), yb = f.py(em[b * by]);
            const double t = hi > lo ? (db[a * ny + b] - lo) / (hi - lo) : 0.5;
            s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", detail::num(xa),
                             detail::num(ya), detail::num(xb - xa + 0.3), detail::num(yb - ya + 0.3),
                             detail::viridis(t));
        }
    }
    s += "<g clip-path=\"url(#plot)\">\n";
    for (const auto& o : overlays)
        s += detail::series_svg(f, o);
    s += "</g>\n";
    s += detail::axes(f, "Magnetic field (G)", "Frequency (MHz)");
    s += detail::legend(f, overlays);

    // Colour bar.
    const double cx = f.width - f.right + 20, top = f.top, h = f.height - f.top - f.bottom;
    constexpr int steps = 64;
    for (int k = 0; k < steps; ++k)
        s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"16\" height=\"{}\" fill=\"{}\"/>\n", detail::num(cx),
                         detail::num(top + h * (steps - 1 - k) / steps), detail::num(h / steps + 0.3),
                         detail::viridis((k + 0.5) / steps));
    const auto ticks = detail::nice_ticks(lo, hi, 5);
    const double step = ticks.size() > 1 ? ticks[1] - ticks[0] : 1.0;
    for (double t : ticks) {
        const double y = top + h * (1.0 - (t - lo) / (hi - lo));
        s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", detail::num(cx + 20), detail::num(y + 4),
                         detail::tick_label(t, step));
    }
    s += fmt::format("<text x=\"{}\" y=\"{}\">dB</text>\n", detail::num(cx), detail::num(top - 6));
    s += "</svg>\n";
    return s;
}

inline std::string xy_svg(const std::vector<Series>& series, const std::string& xlabel, const std::string& ylabel,
                          const std::string& title)
{
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, s.y[k]);
            y1 = std::max(y1, s.y[k]);
        }
    require(std::isfinite(x0) && std::isfinite(y0), "xy_svg: no data", ErrorKind::data);
    const double px = x1 > x0 ? 0.05 * (x1 - x0) : 0.5, py = y1 > y0 ? 0.08 * (y1 - y0) : 0.5;
    detail::Frame f;
    f.right = 30;
    f.x0 = x0 - px;
    f.x1 = x1 + px;
    f.y0 = y0 - py;
    f.y1 = y1 + py;
    std::string s = detail::header(f, title) + "<g clip-path=\"url(#plot)\">\n";
    for (const auto& ser : series)
        s += detail::series_svg(f, ser);
    s += "</g>\n";
    s += detail::axes(f, xlabel, ylabel);
    s += detail::legend(f, series);
    s += "</svg>\n";
    return s;
}

} // namespace cavspin::io
