#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tdcd/config.hpp"
#include "tdcd/errors.hpp"
#include "tdcd/runner.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tiered coordinate-descent training simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string axis;
    std::string format = "csv";
    std::vector<std::string> values;

    auto* run = app.add_subcommand("run", "execute one configured training run");
    run->add_option("--config", config_path, "JSON config file")->required();
    run->add_option("--out", out_path, "output directory for the run artifacts")->required();

    auto* sweep = app.add_subcommand("sweep", "sequential one-axis sweep off a base config");
    sweep->add_option("--config", config_path, "JSON base config file")->required();
    sweep->add_option("--axis", axis, "swept field: Q, eta, N, or K")->required();
    sweep->add_option("--values", values, "axis values (comma separated)")
        ->required()
        ->delimiter(',');
    sweep->add_option("--out", out_path, "sweep output directory")->required();

    auto* gen = app.add_subcommand("gen-data", "write the configured synthetic dataset");
    gen->add_option("--config", config_path, "JSON config file (synthetic dataset)")->required();
    gen->add_option("--out", out_path, "output dataset path")->required();
    gen->add_option("--format", format, "csv or binary")->capture_default_str();

    auto* check =
        app.add_subcommand("check", "gradient, reduction, and convergence-bound self-checks");
    auto* version = app.add_subcommand("version", "print the version and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (version->parsed()) {
            std::cout << "tdcd " << kVersion << "\n";
            return tdcd::kExitOk;
        }
        if (check->parsed()) return tdcd::run_check(std::cout);
        if (run->parsed()) {
            const tdcd::SimConfig cfg = tdcd::load_config(config_path);
            const tdcd::RunOutcome outcome = tdcd::run_to_directory(cfg, out_path);
            if (!outcome.message.empty()) std::cerr << outcome.message << "\n";
            return outcome.exit_code;
        }
        if (sweep->parsed()) {
            const tdcd::SimConfig cfg = tdcd::load_config(config_path);
            const tdcd::SweepOutcome outcome = tdcd::run_sweep(cfg, axis, values, out_path);
            for (const auto& row : outcome.rows)
                if (!row.message.empty())
                    std::cerr << row.axis << "=" << row.value << ": " << row.message << "\n";
            return outcome.exit_code;
        }
        if (gen->parsed()) {
            const tdcd::SimConfig cfg = tdcd::load_config(config_path);
            return tdcd::generate_data_files(cfg, out_path, format, std::cout);
        }
    } catch (const tdcd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return tdcd::kExitConfig;
    } catch (const tdcd::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return tdcd::kExitDiverged;
    } catch (const tdcd::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return tdcd::kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return tdcd::kExitConfig;
    }
    return tdcd::kExitConfig;
}
