// Command-line front end: one subcommand per workbench command, each driven
// by an INI config file.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "cavspin/workbench/run.hpp"

namespace wb = cavspin::workbench;

int main(int argc, char** argv)
{
    CLI::App app{"Cavity and spin-ensemble reflection spectra: simulation, fits and scans"};
    app.require_subcommand(1);
    app.set_version_flag("--version", CAVSPIN_VERSION);

    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    bool quiet = false;

    for (const auto& [command, name] : wb::command_names) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("-c,--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", out_dir, "output directory (created if missing)");
        sub->add_option("--seed", seed, "noise seed, overrides [noise] seed");
        sub->add_flag("-q,--quiet", quiet, "do not print the report");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : wb::exit_config;
    }

    const auto* sub = app.get_subcommands().front();
    const auto command = wb::parse_command(sub->get_name());
    wb::RunConfig config;
    try {
        config = wb::load_config(config_path, command);
    } catch (const cavspin::Error& e) {
        std::cerr << "cavspin: " << e.what() << '\n';
        return wb::exit_code_of(e.kind());
    }
    return wb::run(config, wb::RunOptions{out_dir, seed, quiet}, std::cout, std::cerr);
}
