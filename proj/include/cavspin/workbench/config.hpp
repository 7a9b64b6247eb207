#pragma once

// Run configuration: a flat INI file with sections. Reporting units (MHz
// "/2pi", G, mm) are converted to internal units here and nowhere else.
// Unknown sections or keys are rejected so that typos cannot pass silently.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cavspin/core_model.hpp"
#include "cavspin/error.hpp"
#include "cavspin/io/text.hpp"
#include "cavspin/units.hpp"

namespace cavspin::workbench {

enum class Command
{
    simulate,
    fit_dispersive,
    fit_kappa,
    fit_branches,
    fit_map,
    threshold_scan,
    nscale,
    position,
};

inline constexpr std::pair<Command, const char*> command_names[] = {
    {Command::simulate, "simulate"},       {Command::fit_dispersive, "fit-dispersive"},
    {Command::fit_kappa, "fit-kappa"},     {Command::fit_branches, "fit-branches"},
    {Command::fit_map, "fit-map"},         {Command::threshold_scan, "threshold-scan"},
    {Command::nscale, "nscale"},           {Command::position, "position"},
};

inline const char* to_string(Command c)
{
    for (const auto& [cmd, name] : command_names)
        if (cmd == c)
            return name;
    return "?";
}

inline std::optional<Command> parse_command(const std::string& s)
{
    for (const auto& [cmd, name] : command_names)
        if (s == name)
            return cmd;
    return std::nullopt;
}

enum class NoiseModel
{
    none,
    additive,
    multiplicative,
};

inline const char* to_string(NoiseModel m)
{
    switch (m) {
    case NoiseModel::none: return "none";
    case NoiseModel::additive: return "additive";
    case NoiseModel::multiplicative: return "multiplicative";
    }
    return "?";
}

struct NoiseConfig
{
    NoiseModel model = NoiseModel::none;
    double sigma = 0.0;  // linear power units (additive) or fraction (multiplicative)
    std::optional<std::uint64_t> seed;
};

struct GridConfig
{
    double field_min = 0.0, field_max = 0.0;  // T
    std::size_t field_count = 0;
    double freq_min = 0.0, freq_max = 0.0;    // rad/s
    std::size_t freq_count = 0;

    bool present() const { return field_count > 0 && freq_count > 0; }
};

// Every physical value is optional at parse time; each command checks what
// it needs and reports missing keys by name.
struct RunConfig
{
    Command command = Command::simulate;
    std::filesystem::path source;  // the config file, empty for in-memory text
    std::string text;              // raw bytes, hashed into the manifest

    // [cavity]
    std::optional<double> omega_c, kappa_c, kappa_e, kappa_e_ratio, mode_volume;
    // [spins]
    std::optional<double> g_c, gamma_s, B_r;
    double m0_over_hbar = units::default_m0_over_hbar;
    // [grid]
    GridConfig grid;
    // [noise]
    NoiseConfig noise;
    // [io]
    std::optional<std::filesystem::path> input_map, input_track, input_table;
    PowerScale output_scale = PowerScale::linear;
    std::string prefix;
    // [fit]
    std::vector<std::string> freeze;
    int expect_branches = 0;  // 0: decide from the data
    bool initial_from_config = false;
    // [scan]
    double scan_lo_ratio = 0.3, scan_hi_ratio = 1.2;
    int scan_steps = 32;
    // [nscale]
    std::vector<double> nscale_N, nscale_g_c, nscale_weight;
    std::vector<bool> nscale_excluded;
    // [position]
    std::vector<double> position_z, position_g_c;
    std::optional<double> sample_length, sample_center;

    std::filesystem::path resolve(const std::filesystem::path& p) const
    {
        if (p.is_absolute() || source.empty())
            return p;
        return source.parent_path() / p;
    }

    double need(const std::optional<double>& v, const char* key) const
    {
        if (!v)
            fail(ErrorKind::config, std::string("config: missing required key ") + key + " for command " +
                                        to_string(command));
        return *v;
    }

    CavityParams cavity() const
    {
        CavityParams c;
        c.omega_c = need(omega_c, "[cavity] omega_c_MHz");
        c.kappa_c = need(kappa_c, "[cavity] kappa_c_MHz");
        if (kappa_e)
            c.kappa_e = *kappa_e;
        else
            c.kappa_e = need(kappa_e_ratio, "[cavity] kappa_e_MHz or kappa_e_ratio") * c.kappa_c;
        c.mode_volume = mode_volume;
        try {
            c.validate();
        } catch (const Error& e) {
            fail(ErrorKind::config, std::string("config: ") + e.what());
        }
        return c;
    }
};

namespace detail {

using Ptree = boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& schema()
{
    static const std::map<std::string, std::set<std::string>> keys{
        {"run", {"command"}},
        {"cavity", {"omega_c_MHz", "kappa_c_MHz", "kappa_e_MHz", "kappa_e_ratio", "mode_volume_m3"}},
        {"spins", {"g_c_MHz", "gamma_s_MHz", "B_r_G", "m0_MHz_per_G"}},
        {"grid", {"field_min_G", "field_max_G", "field_count", "freq_min_MHz", "freq_max_MHz", "freq_count"}},
        {"noise", {"model", "sigma", "seed"}},
        {"io", {"input", "track", "table", "scale", "prefix"}},
        {"fit", {"freeze", "expect_branches", "initial"}},
        {"scan", {"g_min_ratio", "g_max_ratio", "steps"}},
        {"nscale", {"N", "g_c_MHz", "weight", "excluded"}},
        {"position", {"position_mm", "g_c_MHz", "sample_length_mm", "center_mm"}},
    };
    return keys;
}

inline std::optional<std::string> get(const Ptree& tree, const std::string& section, const std::string& key)
{
    const auto sec = tree.get_child_optional(section);
    if (!sec)
        return std::nullopt;
    const auto v = sec->get_optional<std::string>(key);
    if (!v)
        return std::nullopt;
    return std::string(io::trim(*v));
}

inline std::string where(const std::string& section, const std::string& key)
{
    return "config: [" + section + "] " + key;
}

inline std::optional<double> number(const Ptree& t, const std::string& section, const std::string& key)
{
    const auto v = get(t, section, key);
    if (!v)
        return std::nullopt;
    return io::parse_double(*v, where(section, key), ErrorKind::config);
}

inline std::vector<double> number_list(const Ptree& t, const std::string& section, const std::string& key)
{
    std::vector<double> out;
    const auto v = get(t, section, key);
    if (!v || v->empty())
        return out;
    for (auto cell : io::split(*v))
        out.push_back(io::parse_double(cell, where(section, key), ErrorKind::config));
    return out;
}

inline std::optional<long long> integer(const Ptree& t, const std::string& section, const std::string& key)
{
    const auto v = get(t, section, key);
    if (!v)
        return std::nullopt;
    std::size_t used = 0;
    long long n = 0;
    try {
        n = std::stoll(*v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v->size())
        fail(ErrorKind::config, where(section, key) + ": expected an integer, got '" + *v + "'");
    return n;
}

inline double mhz(std::optional<double> v) { return units::mhz_to_rad(*v); }

} // namespace detail

// `command` comes from the command line when given there; it must agree with
// [run] command when the file also names one.
inline RunConfig parse_config(const std::string& text, const std::filesystem::path& source = {},
                              std::optional<Command> command = std::nullopt)
{
    detail::Ptree tree;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorKind::config, "config: line " + std::to_string(e.line()) + ": " + e.message());
    }

    const auto& schema = detail::schema();
    for (const auto& [section, body] : tree) {
        const auto it = schema.find(section);
        if (it == schema.end())
            fail(ErrorKind::config, "config: unknown section [" + section + "]");
        if (body.empty() && !body.data().empty())
            fail(ErrorKind::config, "config: key '" + section + "' outside any section");
        for (const auto& [key, value] : body)
            if (!it->second.contains(key))
                fail(ErrorKind::config, "config: unknown key '" + key + "' in section [" + section + "]");
    }

    RunConfig c;
    c.source = source;
    c.text = text;

    const auto cmd = detail::get(tree, "run", "command");
    if (!cmd && !command)
        fail(ErrorKind::config, "config: [run] command is required");
    if (cmd) {
        const auto parsed = parse_command(*cmd);
        if (!parsed)
            fail(ErrorKind::config, "config: [run] command '" + *cmd + "' is not one of simulate, fit-dispersive, "
                                    "fit-kappa, fit-branches, fit-map, threshold-scan, nscale, position");
        if (command && *command != *parsed)
            fail(ErrorKind::config, std::string("config: [run] command is ") + to_string(*parsed) +
                                        " but the command line asked for " + to_string(*command));
        c.command = *parsed;
    } else {
        c.command = *command;
    }

    using detail::number;
    auto rate = [&](const char* section, const char* key) -> std::optional<double> {
        const auto v = number(tree, section, key);
        if (!v)
            return std::nullopt;
        return units::mhz_to_rad(*v);
    };
    c.omega_c = rate("cavity", "omega_c_MHz");
    c.kappa_c = rate("cavity", "kappa_c_MHz");
    c.kappa_e = rate("cavity", "kappa_e_MHz");
    c.kappa_e_ratio = number(tree, "cavity", "kappa_e_ratio");
    c.mode_volume = number(tree, "cavity", "mode_volume_m3");
    if (c.kappa_e && c.kappa_e_ratio)
        fail(ErrorKind::config, "config: give either [cavity] kappa_e_MHz or kappa_e_ratio, not both");

    c.g_c = rate("spins", "g_c_MHz");
    c.gamma_s = rate("spins", "gamma_s_MHz");
    if (const auto b = number(tree, "spins", "B_r_G"))
        c.B_r = units::gauss_to_tesla(*b);
    if (const auto m = number(tree, "spins", "m0_MHz_per_G")) {
        if (*m == 0.0)
            fail(ErrorKind::config, "config: [spins] m0_MHz_per_G must be non-zero");
        c.m0_over_hbar = units::mhz_to_rad(*m) / units::gauss;
    }

    const bool any_grid = tree.get_child_optional("grid").has_value();
    if (any_grid) {
        auto need = [&](const char* key) {
            const auto v = number(tree, "grid", key);
            if (!v)
                fail(ErrorKind::config, detail::where("grid", key) + " is required when [grid] is present");
            return *v;
        };
        auto count = [&](const char* key) {
            const auto v = detail::integer(tree, "grid", key);
            if (!v || *v < 1)
                fail(ErrorKind::config, detail::where("grid", key) + " must be a positive integer");
            return static_cast<std::size_t>(*v);
        };
        c.grid.field_min = units::gauss_to_tesla(need("field_min_G"));
        c.grid.field_max = units::gauss_to_tesla(need("field_max_G"));
        c.grid.field_count = count("field_count");
        c.grid.freq_min = units::mhz_to_rad(need("freq_min_MHz"));
        c.grid.freq_max = units::mhz_to_rad(need("freq_max_MHz"));
        c.grid.freq_count = count("freq_count");
        if (!(c.grid.field_max > c.grid.field_min) && c.grid.field_count > 1)
            fail(ErrorKind::config, "config: [grid] field_max_G must exceed field_min_G");
        if (!(c.grid.freq_max > c.grid.freq_min) && c.grid.freq_count > 1)
            fail(ErrorKind::config, "config: [grid] freq_max_MHz must exceed freq_min_MHz");
    }

    if (const auto m = detail::get(tree, "noise", "model")) {
        if (*m == "none")
            c.noise.model = NoiseModel::none;
        else if (*m == "additive")
            c.noise.model = NoiseModel::additive;
        else if (*m == "multiplicative")
            c.noise.model = NoiseModel::multiplicative;
        else
            fail(ErrorKind::config, "config: [noise] model '" + *m + "' is not one of none, additive, multiplicative");
    }
    c.noise.sigma = number(tree, "noise", "sigma").value_or(0.0);
    if (c.noise.sigma < 0.0)
        fail(ErrorKind::config, "config: [noise] sigma must be non-negative");
    if (c.noise.sigma > 0.0 && c.noise.model == NoiseModel::none && detail::get(tree, "noise", "model"))
        fail(ErrorKind::config, "config: [noise] sigma given with model = none");
    if (c.noise.sigma > 0.0 && c.noise.model == NoiseModel::none)
        c.noise.model = NoiseModel::additive;  // documented default model
    if (const auto s = detail::integer(tree, "noise", "seed")) {
        if (*s < 0)
            fail(ErrorKind::config, "config: [noise] seed must be non-negative");
        c.noise.seed = static_cast<std::uint64_t>(*s);
    }

    if (const auto p = detail::get(tree, "io", "input"))
        c.input_map = *p;
    if (const auto p = detail::get(tree, "io", "track"))
        c.input_track = *p;
    if (const auto p = detail::get(tree, "io", "table"))
        c.input_table = *p;
    if (const auto s = detail::get(tree, "io", "scale")) {
        if (*s == "linear")
            c.output_scale = PowerScale::linear;
        else if (*s == "dB" || *s == "db")
            c.output_scale = PowerScale::dB;
        else
            fail(ErrorKind::config, "config: [io] scale must be linear or dB");
    }
    c.prefix = detail::get(tree, "io", "prefix").value_or(to_string(c.command));
    if (c.prefix.empty() || c.prefix.find_first_of("/\\") != std::string::npos)
        fail(ErrorKind::config, "config: [io] prefix must be a plain file stem");

    if (const auto f = detail::get(tree, "fit", "freeze"); f && !f->empty())
        for (auto name : io::split(*f))
            c.freeze.emplace_back(name);
    if (const auto e = detail::integer(tree, "fit", "expect_branches")) {
        if (*e != 1 && *e != 2)
            fail(ErrorKind::config, "config: [fit] expect_branches must be 1 or 2");
        c.expect_branches = static_cast<int>(*e);
    }
    if (const auto i = detail::get(tree, "fit", "initial")) {
        if (*i == "config")
            c.initial_from_config = true;
        else if (*i != "auto")
            fail(ErrorKind::config, "config: [fit] initial must be auto or config");
    }

    c.scan_lo_ratio = number(tree, "scan", "g_min_ratio").value_or(c.scan_lo_ratio);
    c.scan_hi_ratio = number(tree, "scan", "g_max_ratio").value_or(c.scan_hi_ratio);
    if (const auto s = detail::integer(tree, "scan", "steps"))
        c.scan_steps = static_cast<int>(*s);

    c.nscale_N = detail::number_list(tree, "nscale", "N");
    for (double g : detail::number_list(tree, "nscale", "g_c_MHz"))
        c.nscale_g_c.push_back(units::mhz_to_rad(g));
    c.nscale_weight = detail::number_list(tree, "nscale", "weight");
    for (double e : detail::number_list(tree, "nscale", "excluded")) {
        if (e != 0.0 && e != 1.0)
            fail(ErrorKind::config, "config: [nscale] excluded entries must be 0 or 1");
        c.nscale_excluded.push_back(e != 0.0);
    }
    if (c.nscale_N.size() != c.nscale_g_c.size())
        fail(ErrorKind::config, "config: [nscale] N and g_c_MHz lists differ in length");

    for (double z : detail::number_list(tree, "position", "position_mm"))
        c.position_z.push_back(z * units::mm);
    for (double g : detail::number_list(tree, "position", "g_c_MHz"))
        c.position_g_c.push_back(units::mhz_to_rad(g));
    if (c.position_z.size() != c.position_g_c.size())
        fail(ErrorKind::config, "config: [position] position_mm and g_c_MHz lists differ in length");
    if (const auto l = number(tree, "position", "sample_length_mm"))
        c.sample_length = *l * units::mm;
    if (const auto z = number(tree, "position", "center_mm"))
        c.sample_center = *z * units::mm;
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path, std::optional<Command> command = std::nullopt)
{
    std::string text;
    try {
        text = io::read_text_file(path);
    } catch (const Error& e) {
        fail(ErrorKind::config, e.what());
    }
    return parse_config(text, path, command);
}

} // namespace cavspin::workbench
