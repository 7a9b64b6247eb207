#pragma once

// Spectrum grid CSV:
//
//   # scale: linear            (or dB, power decibels)
//   field_G/freq_MHz,f_1,f_2,...
//   B_1,p_11,p_12,...
//   B_2,p_21,...
//
// Further '#' lines are comments. Maps are always returned in linear power.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "cavspin/core_model.hpp"
#include "cavspin/io/text.hpp"
#include "cavspin/units.hpp"

namespace cavspin::io {

inline constexpr std::string_view spectrum_corner = "field_G/freq_MHz";

inline double to_db(double linear)
{
    // Clipped-at-zero noise can produce exact zeros; keep them finite.
    return 10.0 * std::log10(std::max(linear, 1e-300));
}

inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

inline std::string format_frequency(double w)
{
    return format_exact_preimage(w, units::rad_to_mhz, units::mhz_to_rad);
}

inline std::string format_field(double b)
{
    return format_exact_preimage(b, units::tesla_to_gauss, units::gauss_to_tesla);
}

inline std::string spectrum_csv_string(const SpectrumMap& map, PowerScale out_scale = PowerScale::linear)
{
    require(map.rows() > 0 && map.cols() > 0 && map.power.size() == map.rows() * map.cols(),
            "spectrum csv: map is empty or inconsistent", ErrorKind::data);
    std::string out = fmt::format("# scale: {}\n{}", to_string(out_scale), spectrum_corner);
    for (double w : map.frequency_axis)
        out += "," + format_frequency(w);
    out += '\n';
    for (std::size_t i = 0; i < map.rows(); ++i) {
        out += format_field(map.field_axis[i]);
        for (std::size_t j = 0; j < map.cols(); ++j) {
            double v = map.at(i, j);
            if (map.scale != out_scale)
                v = out_scale == PowerScale::dB ? to_db(v) : from_db(v);
            out += "," + format_double(v);
        }
        out += '\n';
    }
    return out;
}

inline void write_spectrum_csv(const SpectrumMap& map, const std::filesystem::path& path,
                               PowerScale out_scale = PowerScale::linear)
{
    write_text_file(path, spectrum_csv_string(map, out_scale));
}

inline SpectrumMap parse_spectrum_csv(std::string_view text, const std::string& name = "spectrum")
{
    const auto lines = lines_of(text);
    auto where = [&](std::size_t n) { return name + ":" + std::to_string(n); };

    std::optional<PowerScale> scale;
    std::size_t k = 0;
    for (; k < lines.size(); ++k) {
        const auto t = trim(lines[k].text);
        if (t.empty())
            continue;
        if (t.front() != '#')
            break;
        const auto body = trim(t.substr(1));
        if (body.starts_with("scale:")) {
            const auto v = trim(body.substr(6));
            if (v == "linear")
                scale = PowerScale::linear;
            else if (v == "dB" || v == "db")
                scale = PowerScale::dB;
            else
                fail(ErrorKind::data, where(lines[k].number) + ": unknown scale '" + std::string(v) +
                                          "' (expected linear or dB)");
        }
    }
    if (!scale)
        fail(ErrorKind::data, name + ": missing '# scale: linear|dB' header line");
    if (k == lines.size())
        fail(ErrorKind::data, name + ": no axis row");

    SpectrumMap map;
    const auto header = split(lines[k].text);
    if (header.front() != spectrum_corner)
        fail(ErrorKind::data, where(lines[k].number) + ": axis row must start with '" + std::string(spectrum_corner) +
                                  "'");
    if (header.size() < 2)
        fail(ErrorKind::data, where(lines[k].number) + ": frequency axis is empty");
    for (std::size_t j = 1; j < header.size(); ++j) {
        const double w = units::mhz_to_rad(
            parse_double(header[j], where(lines[k].number) + ", column " + std::to_string(j + 1)));
        if (!map.frequency_axis.empty() && !(w > map.frequency_axis.back()))
            fail(ErrorKind::data, where(lines[k].number) + ": frequency axis is not strictly increasing at column " +
                                      std::to_string(j + 1));
        map.frequency_axis.push_back(w);
    }

    for (++k; k < lines.size(); ++k) {
        const auto t = trim(lines[k].text);
        if (t.empty() || t.front() == '#')
            continue;
        const auto cells = split(lines[k].text);
        const auto at = where(lines[k].number);
        if (cells.size() != header.size())
            fail(ErrorKind::data, at + ": expected " + std::to_string(header.size()) + " cells, found " +
                                      std::to_string(cells.size()));
        const double b = units::gauss_to_tesla(parse_double(cells[0], at + ", column 1"));
        if (!map.field_axis.empty() && !(b > map.field_axis.back()))
            fail(ErrorKind::data, at + ": field axis is not strictly increasing");
        map.field_axis.push_back(b);
        for (std::size_t j = 1; j < cells.size(); ++j) {
            const double v = parse_double(cells[j], at + ", column " + std::to_string(j + 1));
            map.power.push_back(*scale == PowerScale::dB ? from_db(v) : v);
        }
    }
    if (map.field_axis.empty())
        fail(ErrorKind::data, name + ": no data rows");
    map.scale = PowerScale::linear;
    return map;
}

inline SpectrumMap read_spectrum_csv(const std::filesystem::path& path)
{
    return parse_spectrum_csv(read_text_file(path), path.string());
}

} // namespace cavspin::io
