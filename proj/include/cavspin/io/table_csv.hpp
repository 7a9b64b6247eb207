#pragma once

// Dip tracks (field_G,freq_MHz,branch) and generic numeric column tables with
// a named header row. '#' lines are comments.

#include <algorithm>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cavspin/dip_track.hpp"
#include "cavspin/io/spectrum_csv.hpp"
#include "cavspin/io/text.hpp"

namespace cavspin::io {

inline std::string track_csv_string(const DipTrack& track)
{
    std::string out = "field_G,freq_MHz,branch\n";
    for (std::size_t k = 0; k < track.size(); ++k)
        out += fmt::format("{},{},{}\n", format_field(track.field[k]), format_frequency(track.dip_frequency[k]),
                           to_string(track.branch[k]));
    return out;
}

inline void write_track_csv(const DipTrack& track, const std::filesystem::path& path)
{
    write_text_file(path, track_csv_string(track));
}

inline BranchTag parse_branch(std::string_view s, const std::string& where)
{
    for (auto tag : {BranchTag::single, BranchTag::upper, BranchTag::lower})
        if (s == to_string(tag))
            return tag;
    fail(ErrorKind::data, where + ": unknown branch '" + std::string(s) + "' (single, upper or lower)");
}

inline DipTrack parse_track_csv(std::string_view text, const std::string& name = "track")
{
    DipTrack track;
    bool header = false;
    for (const auto& line : lines_of(text)) {
        const auto t = trim(line.text);
        if (t.empty() || t.front() == '#')
            continue;
        const auto at = name + ":" + std::to_string(line.number);
        const auto cells = split(line.text);
        if (!header) {
            if (cells.size() != 3 || cells[0] != "field_G" || cells[1] != "freq_MHz" || cells[2] != "branch")
                fail(ErrorKind::data, at + ": header must be 'field_G,freq_MHz,branch'");
            header = true;
            continue;
        }
        if (cells.size() != 3)
            fail(ErrorKind::data, at + ": expected 3 cells, found " + std::to_string(cells.size()));
        const double b = units::gauss_to_tesla(parse_double(cells[0], at + ", field_G"));
        const double w = units::mhz_to_rad(parse_double(cells[1], at + ", freq_MHz"));
        if (track.size() > 0 && b < track.field.back())
            fail(ErrorKind::data, at + ": fields must be non-decreasing");
        track.push(b, w, parse_branch(cells[2], at));
    }
    if (!header)
        fail(ErrorKind::data, name + ": missing header row");
    if (track.size() == 0)
        fail(ErrorKind::data, name + ": no data rows");
    track.validate();
    return track;
}

inline DipTrack read_track_csv(const std::filesystem::path& path)
{
    return parse_track_csv(read_text_file(path), path.string());
}

struct Table
{
    std::vector<std::string> headers;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    bool has(std::string_view name) const
    {
        return std::find(headers.begin(), headers.end(), name) != headers.end();
    }

    const std::vector<double>& column(std::string_view name) const
    {
        const auto it = std::find(headers.begin(), headers.end(), name);
        if (it == headers.end())
            fail(ErrorKind::data, "table: missing column '" + std::string(name) + "'");
        return columns[static_cast<std::size_t>(it - headers.begin())];
    }
};

inline Table parse_table_csv(std::string_view text, const std::string& name = "table")
{
    Table table;
    for (const auto& line : lines_of(text)) {
        const auto t = trim(line.text);
        if (t.empty() || t.front() == '#')
            continue;
        const auto at = name + ":" + std::to_string(line.number);
        const auto cells = split(line.text);
        if (table.headers.empty()) {
            for (auto c : cells) {
                if (c.empty())
                    fail(ErrorKind::data, at + ": empty column name");
                table.headers.emplace_back(c);
            }
            table.columns.resize(cells.size());
            continue;
        }
        if (cells.size() != table.headers.size())
            fail(ErrorKind::data, at + ": expected " + std::to_string(table.headers.size()) + " cells, found " +
                                      std::to_string(cells.size()));
        for (std::size_t j = 0; j < cells.size(); ++j)
            table.columns[j].push_back(parse_double(cells[j], at + ", " + table.headers[j]));
    }
    if (table.headers.empty())
        fail(ErrorKind::data, name + ": missing header row");
    return table;
}

inline Table read_table_csv(const std::filesystem::path& path)
{
    return parse_table_csv(read_text_file(path), path.string());
}

inline std::string table_csv_string(const Table& table)
{
    std::string out;
    for (std::size_t j = 0; j < table.headers.size(); ++j)
        out += (j ? "," : "") + table.headers[j];
    out += '\n';
    for (std::size_t i = 0; i < table.rows(); ++i) {
        for (std::size_t j = 0; j < table.columns.size(); ++j)
            out += (j ? "," : "") + format_double(table.columns[j][i]);
        out += '\n';
    }
    return out;
}

} // namespace cavspin::io
