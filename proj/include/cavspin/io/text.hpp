#pragma once

// Number formatting and parsing shared by the text formats. Numbers are
// written in shortest round-trip form and parsed locale-independently.

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cavspin/error.hpp"

namespace cavspin::io {

inline std::string format_double(double v)
{
    return fmt::format("{}", v);
}

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',')
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

// Strict parse of a whole field as a double; `where` prefixes the error.
inline double parse_double(std::string_view text, const std::string& where, ErrorKind kind = ErrorKind::data)
{
    const auto s = trim(text);
    double v = 0.0;
    const char* begin = s.data();
    if (!s.empty() && s.front() == '+')
        ++begin;
    const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        fail(kind, where + ": cannot parse '" + std::string(s) + "' as a number");
    if (!std::isfinite(v))
        fail(kind, where + ": non-finite value '" + std::string(s) + "'");
    return v;
}

// Decimal text for an external-unit value whose conversion back to internal
// units reproduces `internal` exactly. Among the few doubles next to
// to_external(internal) that do, the shortest text wins. Without any exact
// preimage the nearest external value is written.
template <class ToExternal, class ToInternal>
std::string format_exact_preimage(double internal, ToExternal to_external, ToInternal to_internal)
{
    const double y0 = to_external(internal);
    std::string best;
    double y = y0;
    for (int k = 0; k < 4; ++k)
        y = std::nextafter(y, -INFINITY);
    for (int k = 0; k <= 8; ++k, y = std::nextafter(y, INFINITY)) {
        if (to_internal(y) != internal)
            continue;
        auto text = format_double(y);
        if (best.empty() || text.size() < best.size())
            best = std::move(text);
    }
    return best.empty() ? format_double(y0) : best;
}

inline std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::io, "cannot open " + path.string() + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        fail(ErrorKind::io, "write to " + path.string() + " failed");
}

// Splits text into lines, keeping 1-based line numbers; strips '\r'.
struct Line
{
    std::size_t number = 0;
    std::string_view text;
};

inline std::vector<Line> lines_of(std::string_view text)
{
    std::vector<Line> out;
    std::size_t start = 0, number = 1;
    while (start <= text.size()) {
        auto pos = text.find('\n', start);
        if (pos == std::string_view::npos)
            pos = text.size();
        auto line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        out.push_back({number++, line});
        if (pos == text.size())
            break;
        start = pos + 1;
    }
    while (!out.empty() && trim(out.back().text).empty())
        out.pop_back();
    return out;
}

} // namespace cavspin::io
