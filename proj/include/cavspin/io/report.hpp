#pragma once

// Result tables in reporting units: an aligned text form for people and a
// JSON form for scripts. Every fitted value carries an uncertainty or is
// marked frozen.

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cavspin/nlls.hpp"
#include "cavspin/units.hpp"

namespace cavspin::io {

enum class Unit
{
    mhz,   // rad/s shown as MHz "/2pi"
    gauss, // T shown as G
    hz,    // rad/s shown as Hz "/2pi"
    mm,    // m shown as mm
    rad,
    none,
};

inline const char* unit_label(Unit u)
{
    switch (u) {
    case Unit::mhz: return "MHz";
    case Unit::gauss: return "G";
    case Unit::hz: return "Hz";
    case Unit::mm: return "mm";
    case Unit::rad: return "rad";
    case Unit::none: return "";
    }
    return "";
}

inline double to_unit(double internal, Unit u)
{
    switch (u) {
    case Unit::mhz: return units::rad_to_mhz(internal);
    case Unit::gauss: return units::tesla_to_gauss(internal);
    case Unit::hz: return units::rad_to_hz(internal);
    case Unit::mm: return internal / units::mm;
    case Unit::rad:
    case Unit::none: return internal;
    }
    return internal;
}

// Conventional reporting unit of a parameter name used by the fits.
inline Unit unit_of(std::string_view name)
{
    if (name == "B_r")
        return Unit::gauss;
    if (name == "g_s")
        return Unit::hz;
    if (name == "period")
        return Unit::mm;
    if (name == "phase")
        return Unit::rad;
    if (name == "g_c" || name == "gamma_s" || name == "kappa_c" || name == "kappa_e" || name == "kappa" ||
        name == "omega_c" || name == "amplitude" || name == "offset")
        return Unit::mhz;
    return Unit::none;
}

struct ReportRow
{
    std::string quantity;
    double value = 0.0;
    std::string unit;
    std::optional<double> uncertainty;  // empty: exact or derived without error
    bool frozen = false;
    std::string note;
};

struct ReportTable
{
    std::string title;
    std::vector<ReportRow> rows;
    std::vector<std::string> notes;

    void add(std::string quantity, double internal, Unit unit, std::optional<double> sigma = std::nullopt,
             std::string note = {})
    {
        std::optional<double> s;
        if (sigma)
            s = std::abs(to_unit(*sigma, unit));
        rows.push_back({std::move(quantity), to_unit(internal, unit), unit_label(unit), s, false, std::move(note)});
    }

    // One row per fit parameter plus the fit diagnostics as notes.
    void add_fit(const FitResult& fit, const std::string& note = "fitted")
    {
        for (std::size_t k = 0; k < fit.names.size(); ++k) {
            const Unit u = unit_of(fit.names[k]);
            ReportRow row{fit.names[k], to_unit(fit.values[k], u), unit_label(u), std::nullopt, false, note};
            if (fit.fixed[k]) {
                row.frozen = true;
                row.note = "held at the configured value";
            } else {
                row.uncertainty = std::abs(to_unit(std::sqrt(fit.variances[k]), u));
            }
            rows.push_back(std::move(row));
        }
        notes.push_back(fmt::format("fit {} after {} iterations ({}), {} data points",
                                    fit.converged ? "converged" : "did not converge", fit.iterations,
                                    fit.termination, fit.data_points));
        if (fit.degenerate)
            notes.push_back("fit is degenerate: some parameters are not identifiable from these data");
        notes.insert(notes.end(), fit.notes.begin(), fit.notes.end());
    }

    static std::string format_number(double v) { return fmt::format("{:.9g}", v); }
    static std::string format_uncertainty(double v) { return fmt::format("{:.3g}", v); }

    std::string uncertainty_text(const ReportRow& r) const
    {
        if (r.frozen)
            return "frozen";
        if (!r.uncertainty)
            return "-";
        if (std::isinf(*r.uncertainty))
            return "unidentified";
        return format_uncertainty(*r.uncertainty);
    }

    std::string text() const
    {
        const std::vector<std::string> head{"quantity", "value", "unit", "uncertainty", "note"};
        std::vector<std::vector<std::string>> cells;
        for (const auto& r : rows)
            cells.push_back({r.quantity, format_number(r.value), r.unit, uncertainty_text(r), r.note});
        std::vector<std::size_t> width(head.size());
        for (std::size_t j = 0; j < head.size(); ++j) {
            width[j] = head[j].size();
            for (const auto& c : cells)
                width[j] = std::max(width[j], c[j].size());
        }
        auto line = [&](const std::vector<std::string>& c) {
            std::string s;
            for (std::size_t j = 0; j < c.size(); ++j)
                s += j + 1 < c.size() ? fmt::format("{:<{}}  ", c[j], width[j]) : c[j];
            while (!s.empty() && s.back() == ' ')
                s.pop_back();
            return s + '\n';
        };
        std::string out;
        if (!title.empty())
            out += title + "\n\n";
        out += line(head);
        for (const auto& c : cells)
            out += line(c);
        if (!notes.empty()) {
            out += '\n';
            for (const auto& n : notes)
                out += "note: " + n + '\n';
        }
        return out;
    }

    nlohmann::ordered_json json() const
    {
        nlohmann::ordered_json j;
        j["title"] = title;
        auto& arr = j["rows"] = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json row;
            row["quantity"] = r.quantity;
            row["value"] = r.value;
            row["unit"] = r.unit;
            if (r.frozen)
                row["uncertainty"] = "frozen";
            else if (r.uncertainty && std::isfinite(*r.uncertainty))
                row["uncertainty"] = *r.uncertainty;
            else if (r.uncertainty)
                row["uncertainty"] = "unidentified";
            else
                row["uncertainty"] = nullptr;
            row["note"] = r.note;
            arr.push_back(std::move(row));
        }
        j["notes"] = notes;
        return j;
    }

    const ReportRow* find(std::string_view quantity) const
    {
        for (const auto& r : rows)
            if (r.quantity == quantity)
                return &r;
        return nullptr;
    }
};

} // namespace cavspin::io
