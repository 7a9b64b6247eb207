#pragma once

// Command dispatch for the workbench. Each command reads its inputs (files
// named in [io] or a synthetic map from the config), calls the library, and
// writes <prefix>_report.txt, <prefix>_report.json, plots, CSVs and a
// manifest into the output directory.
//
// Exit codes: 0 success, 2 configuration error, 3 data or file error,
// 4 fit failure or non-convergence, 5 internal error.

#include <Eigen/Core>
#include <boost/version.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cavspin/core_model.hpp"
#include "cavspin/dip_track.hpp"
#include "cavspin/fits.hpp"
#include "cavspin/io/report.hpp"
#include "cavspin/io/spectrum_csv.hpp"
#include "cavspin/io/svg.hpp"
#include "cavspin/io/table_csv.hpp"
#include "cavspin/regression.hpp"
#include "cavspin/splitting.hpp"
#include "cavspin/workbench/config.hpp"
#include "cavspin/workbench/synthetic.hpp"

#ifndef CAVSPIN_VERSION
#define CAVSPIN_VERSION "unknown"
#endif

namespace cavspin::workbench {

enum ExitCode : int
{
    exit_ok = 0,
    exit_config = 2,
    exit_data = 3,
    exit_fit = 4,
    exit_internal = 5,
};

inline int exit_code_of(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument: return exit_config;
    case ErrorKind::data:
    case ErrorKind::io: return exit_data;
    case ErrorKind::fit: return exit_fit;
    }
    return exit_internal;
}

struct RunOptions
{
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;  // overrides [noise] seed
    bool quiet = false;
};

inline std::string sha256_hex(std::string_view data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorKind::io, "sha256: digest failed");
    std::string out;
    for (unsigned int k = 0; k < len; ++k)
        out += fmt::format("{:02x}", md[k]);
    return out;
}

inline nlohmann::ordered_json library_versions()
{
    nlohmann::ordered_json v;
    v["cavspin"] = CAVSPIN_VERSION;
#if defined(__clang__)
    v["compiler"] = fmt::format("clang {}.{}.{}", __clang_major__, __clang_minor__, __clang_patchlevel__);
#elif defined(__GNUC__)
    v["compiler"] = fmt::format("gcc {}.{}.{}", __GNUC__, __GNUC_MINOR__, __GNUC_PATCHLEVEL__);
#else
    v["compiler"] = "unknown";
#endif
    v["eigen"] = fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
    v["boost"] = fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100);
    v["fmt"] = fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100);
    v["nlohmann_json"] = fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                     NLOHMANN_JSON_VERSION_PATCH);
    v["openssl"] = OPENSSL_VERSION_TEXT;
    return v;
}

// Bookkeeping for one run: where files go, what was read and written.
class RunContext
{
public:
    RunContext(RunConfig config, RunOptions options) : config_(std::move(config)), options_(std::move(options))
    {
        if (options_.seed) {
            config_.noise.seed = options_.seed;
            seed_source_ = "command line";
        } else if (config_.noise.seed) {
            seed_source_ = "config";
        }
    }

    const RunConfig& config() const { return config_; }
    const RunOptions& options() const { return options_; }
    io::ReportTable& report() { return report_; }
    FieldConversion conversion() const { return FieldConversion{config_.m0_over_hbar}; }

    std::string file_name(const std::string& stem) const { return config_.prefix + "_" + stem; }

    void write(const std::string& stem, const std::string& content)
    {
        const auto name = file_name(stem);
        io::write_text_file(options_.out_dir / name, content);
        outputs_.push_back({name, sha256_hex(content)});
    }

    std::string read_input(const std::filesystem::path& configured)
    {
        const auto path = config_.resolve(configured);
        auto text = io::read_text_file(path);
        inputs_.push_back({configured.string(), sha256_hex(text)});
        return text;
    }

    nlohmann::ordered_json manifest(int exit_code, const std::string& error = {}) const
    {
        nlohmann::ordered_json m;
        m["command"] = to_string(config_.command);
        m["config"] = {{"path", config_.source.string()}, {"sha256", sha256_hex(config_.text)}};
        m["seed"] = config_.noise.seed ? nlohmann::ordered_json(*config_.noise.seed) : nlohmann::ordered_json(nullptr);
        m["seed_source"] = seed_source_.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(seed_source_);
        auto files = [](const std::vector<std::pair<std::string, std::string>>& list) {
            auto arr = nlohmann::ordered_json::array();
            for (const auto& [path, hash] : list)
                arr.push_back({{"path", path}, {"sha256", hash}});
            return arr;
        };
        m["inputs"] = files(inputs_);
        m["outputs"] = files(outputs_);
        m["exit_code"] = exit_code;
        if (!error.empty())
            m["error"] = error;
        m["versions"] = library_versions();
        return m;
    }

private:
    RunConfig config_;
    RunOptions options_;
    io::ReportTable report_;
    std::string seed_source_;
    std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
};

namespace detail {

// Dip positions as marker series, one per branch tag present.
inline std::vector<io::Series> track_series(const DipTrack& track, const std::string& color = "#ffffff")
{
    std::vector<io::Series> out;
    for (auto tag : {BranchTag::single, BranchTag::lower, BranchTag::upper}) {
        io::Series s{std::string("dips (") + to_string(tag) + ")", {}, {}, io::SeriesStyle::markers, color};
        for (std::size_t k = 0; k < track.size(); ++k)
            if (track.branch[k] == tag) {
                s.x.push_back(units::tesla_to_gauss(track.field[k]));
                s.y.push_back(units::rad_to_mhz(track.dip_frequency[k]));
            }
        if (!s.x.empty())
            out.push_back(std::move(s));
    }
    return out;
}

inline io::Series curve_series(std::string label, double b_lo, double b_hi, const std::function<double(double)>& f,
                               io::SeriesStyle style = io::SeriesStyle::dashed, std::string color = "#d62728")
{
    io::Series s{std::move(label), {}, {}, style, std::move(color)};
    for (double b : linspace(b_lo, b_hi, 400)) {
        s.x.push_back(units::tesla_to_gauss(b));
        s.y.push_back(units::rad_to_mhz(f(b)));
    }
    return s;
}

struct MapSource
{
    SpectrumMap map;
    bool from_file = false;
};

inline MapSource load_map(RunContext& ctx)
{
    const auto& c = ctx.config();
    if (c.input_map) {
        const auto text = ctx.read_input(*c.input_map);
        auto map = io::parse_spectrum_csv(text, c.input_map->string());
        if (text.find("# scale: dB") != std::string::npos)
            ctx.report().notes.push_back("input map was in dB; converted to linear power");
        return {std::move(map), true};
    }
    auto syn = generate_synthetic(c);
    ctx.report().notes.push_back("input is a synthetic map generated from the config");
    ctx.write("truth.json", syn.truth.dump(2) + "\n");
    return {std::move(syn.map), false};
}

inline int expected_branches(const RunConfig& c, int fallback)
{
    return c.expect_branches ? c.expect_branches : fallback;
}

// Dip track from [io] track, or extracted from the map source.
inline DipTrack load_track(RunContext& ctx, int branches, std::optional<SpectrumMap>& map_out)
{
    const auto& c = ctx.config();
    if (c.input_track)
        return io::parse_track_csv(ctx.read_input(*c.input_track), c.input_track->string());
    auto src = load_map(ctx);
    auto track = extract_dip_track(src.map, branches);
    ctx.write("track.csv", io::track_csv_string(track));
    map_out = std::move(src.map);
    return track;
}

inline void add_conversion_row(RunContext& ctx)
{
    ctx.report().rows.push_back({"m0_over_hbar", units::rad_to_mhz(ctx.config().m0_over_hbar * units::gauss),
                                 "MHz/G", std::nullopt, false, "field to detuning conversion used"});
}

inline void add_cooperativity(io::ReportTable& r, double g, double kappa_c, double gamma_s)
{
    const double C = cooperativity(g, kappa_c, gamma_s);
    r.rows.push_back({"cooperativity", C, "", std::nullopt, false,
                      std::string("derived; regime ") + to_string(classify_regime(g, kappa_c, gamma_s))});
}

inline int fit_status(const FitResult& fit, std::ostream& err)
{
    if (fit.converged)
        return exit_ok;
    err << "cavspin: fit did not converge (" << fit.termination << ")\n";
    return exit_fit;
}

inline void write_plot(RunContext& ctx, const std::string& stem, const std::optional<SpectrumMap>& map,
                       std::vector<io::Series> overlays, const std::string& title, const std::string& ylabel = "Frequency (MHz)")
{
    if (map)
        ctx.write(stem, io::map_svg(*map, overlays, title));
    else
        ctx.write(stem, io::xy_svg(overlays, "Magnetic field (G)", ylabel, title));
}

inline int run_simulate(RunContext& ctx, std::ostream&)
{
    const auto& c = ctx.config();
    auto syn = generate_synthetic(c);
    const auto cav = c.cavity();
    const auto spins = spins_of(c);
    ctx.write("map.csv", io::spectrum_csv_string(syn.map, c.output_scale));
    ctx.write("truth.json", syn.truth.dump(2) + "\n");

    auto& r = ctx.report();
    r.title = "simulate";
    r.add("omega_c", cav.omega_c, io::Unit::mhz, std::nullopt, "generating value");
    r.add("kappa_c", cav.kappa_c, io::Unit::mhz, std::nullopt, "generating value");
    r.add("kappa_e", cav.kappa_e, io::Unit::mhz, std::nullopt, "generating value");
    r.add("g_c", spins.g_s, io::Unit::mhz, std::nullopt, "generating value");
    r.add("gamma_s", spins.gamma_s, io::Unit::mhz, std::nullopt, "generating value");
    r.add("B_r", spins.B_r, io::Unit::gauss, std::nullopt, "generating value");
    add_conversion_row(ctx);
    add_cooperativity(r, spins.g_s, cav.kappa_c, spins.gamma_s);
    const auto verdict = count_minima_on_resonance(cav, spins.g_s, spins.gamma_s);
    r.rows.push_back({"minima_on_resonance", static_cast<double>(verdict.minima_count), "", std::nullopt, false,
                      "reflection dips at zero detuning"});
    if (c.noise.model != NoiseModel::none && c.noise.sigma > 0.0)
        r.notes.push_back(fmt::format("{} noise, sigma {}, seed {}", to_string(c.noise.model), c.noise.sigma,
                                      *c.noise.seed));

    std::vector<io::Series> overlays;
    int branches = expected_branches(c, verdict.minima_count >= 2 ? 2 : 1);
    std::optional<DipTrack> track;
    try {
        track = extract_dip_track(syn.map, branches);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::data || branches != 2 || c.expect_branches)
            throw;
        r.notes.push_back("two branches were not resolved on most rows; dip track has a single branch");
        track = extract_dip_track(syn.map, 1);
    }
    ctx.write("track.csv", io::track_csv_string(*track));
    overlays = track_series(*track);
    ctx.write("map.svg", io::map_svg(syn.map, overlays, "Simulated |S11|^2"));
    return exit_ok;
}

inline int run_fit_dispersive(RunContext& ctx, std::ostream& err)
{
    const auto& c = ctx.config();
    std::optional<SpectrumMap> map;
    const auto track = load_track(ctx, expected_branches(c, 1), map);
    const auto fit = fit_dispersive_track(track, ctx.conversion());

    auto& r = ctx.report();
    r.title = "fit-dispersive: omega(B) = omega_c - g_c^2 Delta / (Delta^2 + gamma_s^2)";
    r.add_fit(fit);
    add_conversion_row(ctx);
    if (c.kappa_c)
        add_cooperativity(r, fit.value("g_c"), *c.kappa_c, fit.value("gamma_s"));

    const double m = c.m0_over_hbar;
    const auto model = models::dispersive(m);
    auto overlays = track_series(track, map ? "#ffffff" : "#1f77b4");
    overlays.push_back(curve_series("dispersive fit", track.field.front(), track.field.back(),
                                    [&](double b) { return model.value(b, fit.values); }));
    write_plot(ctx, "fit.svg", map, overlays, "Dispersive fit");
    return fit_status(fit, err);
}

inline int run_fit_kappa(RunContext& ctx, std::ostream& err)
{
    const auto& c = ctx.config();
    std::vector<FieldSample> samples;
    if (c.input_table) {
        const auto table = io::parse_table_csv(ctx.read_input(*c.input_table), c.input_table->string());
        const auto& b = table.column("field_G");
        const auto& k = table.column("kappa_MHz");
        for (std::size_t i = 0; i < table.rows(); ++i)
            samples.push_back({units::gauss_to_tesla(b[i]), units::mhz_to_rad(k[i]),
                               table.has("weight") ? table.column("weight")[i] : 1.0});
    } else {
        const auto src = load_map(ctx);
        samples = extract_linewidth_track(src.map);
        io::Table t{{"field_G", "kappa_MHz"}, {{}, {}}};
        for (const auto& s : samples) {
            t.columns[0].push_back(units::tesla_to_gauss(s.field));
            t.columns[1].push_back(units::rad_to_mhz(s.value));
        }
        ctx.write("linewidth.csv", io::table_csv_string(t));
    }
    const auto fit = fit_kappa_lorentzian(samples, ctx.conversion());

    auto& r = ctx.report();
    r.title = "fit-kappa: kappa(B) = kappa_c + g_c^2 gamma_s / (Delta^2 + gamma_s^2)";
    r.add_fit(fit);
    add_conversion_row(ctx);
    add_cooperativity(r, fit.value("g_c"), fit.value("kappa_c"), fit.value("gamma_s"));

    const auto model = models::linewidth(c.m0_over_hbar);
    io::Series data{"half-width", {}, {}, io::SeriesStyle::markers, "#1f77b4"};
    for (const auto& s : samples) {
        data.x.push_back(units::tesla_to_gauss(s.field));
        data.y.push_back(units::rad_to_mhz(s.value));
    }
    std::vector<io::Series> series{data, curve_series("linewidth fit", samples.front().field, samples.back().field,
                                                      [&](double b) { return model.value(b, fit.values); })};
    ctx.write("fit.svg", io::xy_svg(series, "Magnetic field (G)", "Half-width (MHz)", "Linewidth fit"));
    return fit_status(fit, err);
}

inline int run_fit_branches(RunContext& ctx, std::ostream& err)
{
    const auto& c = ctx.config();
    std::optional<SpectrumMap> map;
    const auto track = load_track(ctx, expected_branches(c, 2), map);
    const auto fit = fit_rabi_branches(track, ctx.conversion());

    auto& r = ctx.report();
    r.title = "fit-branches: omega_pm = omega_c + Delta/2 pm sqrt(Delta^2 + 4 g_c^2)/2";
    r.add_fit(fit);
    add_conversion_row(ctx);
    r.add("gap_on_resonance", 2.0 * fit.value("g_c"), io::Unit::mhz, 2.0 * fit.sigma("g_c"), "derived: 2 g_c");

    const double m = c.m0_over_hbar;
    const double g = fit.value("g_c"), wc = fit.value("omega_c"), br = fit.value("B_r");
    auto overlays = track_series(track, map ? "#ffffff" : "#1f77b4");
    overlays.push_back(curve_series("upper branch", track.field.front(), track.field.back(),
                                    [&](double b) { return rabi_branches(m * (b - br), wc, g).upper; }));
    overlays.push_back(curve_series("lower branch", track.field.front(), track.field.back(),
                                    [&](double b) { return rabi_branches(m * (b - br), wc, g).lower; }));
    write_plot(ctx, "fit.svg", map, overlays, "Coupled-branch fit");
    return fit_status(fit, err);
}

inline int run_fit_map(RunContext& ctx, std::ostream& err)
{
    const auto& c = ctx.config();
    const auto src = load_map(ctx);
    const auto conv = ctx.conversion();

    auto configured = [&](const std::string& name) {
        if (name == "g_c")
            return c.need(c.g_c, "[spins] g_c_MHz");
        if (name == "gamma_s")
            return c.need(c.gamma_s, "[spins] gamma_s_MHz");
        if (name == "B_r")
            return c.need(c.B_r, "[spins] B_r_G");
        const auto cav = c.cavity();
        if (name == "kappa_c")
            return cav.kappa_c;
        if (name == "kappa_e")
            return cav.kappa_e;
        if (name == "omega_c")
            return cav.omega_c;
        fail(ErrorKind::config, "config: [fit] freeze: unknown parameter '" + name +
                                    "' (g_c, gamma_s, kappa_c, kappa_e, omega_c, B_r)");
    };
    for (const auto& name : c.freeze)
        configured(name);

    MapParams init = c.initial_from_config ? MapParams{} : seed_map_parameters(src.map, conv);
    std::array<double*, 6> slots{&init.g_c, &init.gamma_s, &init.kappa_c, &init.kappa_e, &init.omega_c, &init.B_r};
    for (std::size_t k = 0; k < 6; ++k) {
        const std::string name = map_param_names[k];
        const bool frozen = std::find(c.freeze.begin(), c.freeze.end(), name) != c.freeze.end();
        if (c.initial_from_config || frozen)
            *slots[k] = configured(name);
    }

    MapFitOptions opt;
    opt.conversion = conv;
    opt.frozen = c.freeze;
    const auto fit = fit_full_s11_map(src.map, init, opt);

    auto& r = ctx.report();
    r.title = "fit-map: full |S11|^2 model";
    r.add_fit(fit);
    add_conversion_row(ctx);
    add_cooperativity(r, fit.value("g_c"), fit.value("kappa_c"), fit.value("gamma_s"));
    if (!c.initial_from_config)
        r.notes.push_back("initial values seeded from the data");

    const auto p = map_params_from(fit);
    const CavityParams cav{p.omega_c, p.kappa_c, p.kappa_e, std::nullopt};
    const auto model = simulate_map(cav, SpinEnsembleParams::from_collective(p.g_c, p.gamma_s, p.B_r, conv.m0_over_hbar),
                                    src.map.field_axis, src.map.frequency_axis);
    ctx.write("data.svg", io::map_svg(src.map, {}, "Input |S11|^2"));
    ctx.write("model.svg", io::map_svg(model, {}, "Fitted |S11|^2"));
    return fit_status(fit, err);
}

inline int run_threshold_scan(RunContext& ctx, std::ostream&)
{
    const auto& c = ctx.config();
    const auto cav = c.cavity();
    const double gamma = c.need(c.gamma_s, "[spins] gamma_s_MHz");
    if (!(gamma > 0.0))
        fail(ErrorKind::config, "config: [spins] gamma_s_MHz must be positive");
    if (!(c.scan_lo_ratio > 0.0 && c.scan_hi_ratio > c.scan_lo_ratio))
        fail(ErrorKind::config, "config: [scan] needs 0 < g_min_ratio < g_max_ratio");
    if (c.scan_steps < 16)
        fail(ErrorKind::config, "config: [scan] steps must be at least 16");
    const double g_lo = c.scan_lo_ratio * gamma, g_hi = c.scan_hi_ratio * gamma;
    const auto merge = merge_point_scan(cav, gamma, g_lo, g_hi, c.scan_steps);

    auto& r = ctx.report();
    r.title = "threshold-scan: on-resonance dip merge point";
    r.rows.push_back({"critical_ratio", merge.ratio, "", std::nullopt, false,
                      "g_c/gamma_s where two dips merge into one (numeric count)"});
    r.add("g_c_critical", merge.g_critical, io::Unit::mhz, merge.g_critical * 1e-4, "bisection bracket");
    const double closed = critical_coupling_closed_form(cav.kappa_c, gamma);
    r.rows.push_back({"closed_form_ratio", closed / gamma, "", std::nullopt, false,
                      "root of the quartic criterion, exact for kappa_e = kappa_c"});
    r.rows.push_back({"asymptotic_ratio", asymptotic_threshold_ratio(), "", std::nullopt, false,
                      "kappa_c much larger than g_c and gamma_s"});
    r.add("kappa_c", cav.kappa_c, io::Unit::mhz, std::nullopt, "configured");
    r.add("kappa_e", cav.kappa_e, io::Unit::mhz, std::nullopt, "configured");
    r.add("gamma_s", gamma, io::Unit::mhz, std::nullopt, "configured");
    if (cav.kappa_e != cav.kappa_c)
        r.notes.push_back("kappa_e differs from kappa_c: the closed form is approximate, the numeric count is exact");

    io::Table t{{"g_over_gamma", "g_c_MHz", "minima", "cooperativity", "exact_condition"}, {}};
    t.columns.resize(5);
    io::Series counts{"dips at zero detuning", {}, {}, io::SeriesStyle::markers, "#1f77b4"};
    io::Series cond{"quartic criterion (1 = split)", {}, {}, io::SeriesStyle::line, "#d62728"};
    for (double g : linspace(g_lo, g_hi, static_cast<std::size_t>(c.scan_steps))) {
        const auto v = count_minima_on_resonance(cav, g, gamma);
        const double C = cooperativity(g, cav.kappa_c, gamma);
        const bool exact = exact_splitting_condition(g, gamma, C);
        t.columns[0].push_back(g / gamma);
        t.columns[1].push_back(units::rad_to_mhz(g));
        t.columns[2].push_back(v.minima_count);
        t.columns[3].push_back(C);
        t.columns[4].push_back(exact ? 1.0 : 0.0);
        counts.x.push_back(g / gamma);
        counts.y.push_back(v.minima_count);
        cond.x.push_back(g / gamma);
        cond.y.push_back(exact ? 2.0 : 1.0);
    }
    ctx.write("scan.csv", io::table_csv_string(t));
    ctx.write("scan.svg", io::xy_svg({counts, cond}, "g_c / gamma_s", "Number of dips", "Dip count at zero detuning"));
    return exit_ok;
}

inline int run_nscale(RunContext& ctx, std::ostream& err)
{
    const auto& c = ctx.config();
    CouplingVsN data;
    if (c.input_table) {
        const auto table = io::parse_table_csv(ctx.read_input(*c.input_table), c.input_table->string());
        data.N = table.column("N");
        for (double g : table.column("g_c_MHz"))
            data.g_c.push_back(units::mhz_to_rad(g));
        if (table.has("weight"))
            data.weight = table.column("weight");
        if (table.has("excluded"))
            for (double e : table.column("excluded"))
                data.excluded.push_back(e != 0.0);
    } else {
        data.N = c.nscale_N;
        data.g_c = c.nscale_g_c;
        data.weight = c.nscale_weight;
        data.excluded = c.nscale_excluded;
    }
    if (data.N.empty())
        fail(ErrorKind::config, "config: nscale needs [nscale] N and g_c_MHz lists or an [io] table");
    const auto out = sqrtN_regression(data);

    auto& r = ctx.report();
    r.title = "nscale: g_c = g_s sqrt(N)";
    r.add_fit(out.fit);
    for (std::size_t k = 0; k < data.N.size(); ++k) {
        const bool excl = !data.excluded.empty() && data.excluded[k];
        r.add(fmt::format("residual[{}]", k), out.residuals[k], io::Unit::mhz, std::nullopt,
              fmt::format("N = {:.3g}{}", data.N[k], excl ? ", excluded from the fit" : ""));
    }

    io::Series used{"data", {}, {}, io::SeriesStyle::markers, "#1f77b4"};
    io::Series skipped{"excluded", {}, {}, io::SeriesStyle::markers, "#7f7f7f"};
    double root_max = 0.0;
    for (std::size_t k = 0; k < data.N.size(); ++k) {
        const double x = std::sqrt(data.N[k]) / 1e7;
        root_max = std::max(root_max, x);
        auto& s = (!data.excluded.empty() && data.excluded[k]) ? skipped : used;
        s.x.push_back(x);
        s.y.push_back(units::rad_to_mhz(data.g_c[k]));
    }
    const double gs = out.fit.value("g_s");
    io::Series line{"g_s sqrt(N)", {0.0, 1.05 * root_max}, {0.0, units::rad_to_mhz(gs * 1.05 * root_max * 1e7)},
                    io::SeriesStyle::dashed, "#d62728"};
    std::vector<io::Series> series{used, line};
    if (!skipped.x.empty())
        series.push_back(skipped);
    ctx.write("fit.svg", io::xy_svg(series, "sqrt(N) / 10^7", "g_c (MHz)", "Collective coupling against spin number"));
    return fit_status(out.fit, err);
}

inline int run_position(RunContext& ctx, std::ostream& err)
{
    const auto& c = ctx.config();
    PositionProfile profile;
    if (c.input_table) {
        const auto table = io::parse_table_csv(ctx.read_input(*c.input_table), c.input_table->string());
        for (double z : table.column("position_mm"))
            profile.position.push_back(z * units::mm);
        for (double g : table.column("g_c_MHz"))
            profile.g_c.push_back(units::mhz_to_rad(g));
    } else {
        profile.position = c.position_z;
        profile.g_c = c.position_g_c;
    }
    if (profile.position.empty())
        fail(ErrorKind::config, "config: position needs [position] position_mm and g_c_MHz lists or an [io] table");
    const auto out = fit_position_sinusoid(profile);

    auto& r = ctx.report();
    r.title = "position: g_c(z) = A |sin(2 pi z / period + phase)| + offset";
    r.add_fit(out.fit);
    if (c.sample_length) {
        const double centre = c.sample_center.value_or(0.5 * (profile.position.front() + profile.position.back()));
        const auto note = fmt::format("over {} mm centred at {} mm", *c.sample_length / units::mm, centre / units::mm);
        r.add("g_c_rms_average", average_coupling_over_length(out.curve, *c.sample_length, centre), io::Unit::mhz,
              std::nullopt, "rms " + note);
        r.add("g_c_mean", mean_coupling_over_length(out.curve, *c.sample_length, centre), io::Unit::mhz,
              std::nullopt, "mean " + note);
    }

    io::Series data{"data", {}, {}, io::SeriesStyle::markers, "#1f77b4"};
    for (std::size_t k = 0; k < profile.position.size(); ++k) {
        data.x.push_back(profile.position[k] / units::mm);
        data.y.push_back(units::rad_to_mhz(profile.g_c[k]));
    }
    std::vector<io::Series> series{data};
    if (!out.flat) {
        io::Series curve{"rectified sinusoid", {}, {}, io::SeriesStyle::dashed, "#d62728"};
        for (double z : linspace(profile.position.front(), profile.position.back(), 400)) {
            curve.x.push_back(z / units::mm);
            curve.y.push_back(units::rad_to_mhz(out.curve(z)));
        }
        series.push_back(curve);
    }
    ctx.write("fit.svg", io::xy_svg(series, "Position (mm)", "g_c (MHz)", "Coupling against sample position"));
    return fit_status(out.fit, err);
}

inline int dispatch(RunContext& ctx, std::ostream& err)
{
    switch (ctx.config().command) {
    case Command::simulate: return run_simulate(ctx, err);
    case Command::fit_dispersive: return run_fit_dispersive(ctx, err);
    case Command::fit_kappa: return run_fit_kappa(ctx, err);
    case Command::fit_branches: return run_fit_branches(ctx, err);
    case Command::fit_map: return run_fit_map(ctx, err);
    case Command::threshold_scan: return run_threshold_scan(ctx, err);
    case Command::nscale: return run_nscale(ctx, err);
    case Command::position: return run_position(ctx, err);
    }
    return exit_internal;
}

} // namespace detail

// Runs one configured command. Module errors are reported on `err` with
// their context and mapped to exit codes; nothing is thrown.
inline int run(const RunConfig& config, const RunOptions& options, std::ostream& out, std::ostream& err)
{
    std::optional<RunContext> ctx;
    // A failed run still leaves a manifest once the output directory exists.
    auto fail_with = [&](int code, const std::string& message) {
        err << message << '\n';
        if (ctx) {
            try {
                io::write_text_file(options.out_dir / ctx->file_name("manifest.json"),
                                    ctx->manifest(code, message).dump(2) + "\n");
            } catch (const std::exception& e) {
                err << "cavspin: could not write manifest: " << e.what() << '\n';
            }
        }
        return code;
    };
    try {
        std::error_code ec;
        std::filesystem::create_directories(options.out_dir, ec);
        if (ec)
            fail(ErrorKind::io, "cannot create output directory " + options.out_dir.string() + ": " + ec.message());
        ctx.emplace(config, options);
        const int code = detail::dispatch(*ctx, err);
        auto& r = ctx->report();
        ctx->write("report.txt", r.text());
        ctx->write("report.json", r.json().dump(2) + "\n");
        const auto manifest = ctx->manifest(code).dump(2) + "\n";
        io::write_text_file(options.out_dir / ctx->file_name("manifest.json"), manifest);
        if (!options.quiet)
            out << r.text();
        return code;
    } catch (const Error& e) {
        return fail_with(exit_code_of(e.kind()), "cavspin: " + std::string(to_string(config.command)) + ": " + e.what());
    } catch (const std::exception& e) {
        return fail_with(exit_internal, std::string("cavspin: internal error: ") + e.what());
    }
}

} // namespace cavspin::workbench
