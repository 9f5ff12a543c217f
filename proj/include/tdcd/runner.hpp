#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tdcd/config.hpp"
#include "tdcd/oracles.hpp"

namespace tdcd {

// Exit codes shared by the CLI: 0 completed, 1 config error, 2 divergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitDiverged = 2;

struct RunOutcome {
    int exit_code = kExitOk;
    std::string message; // human-readable failure description
    TrainingTrace trace;
    std::filesystem::path dir;
};

// Executes one run and writes config_snapshot.json, trace.jsonl, trace.csv
// and metrics.csv (plus bound_report.json when the config asks for it) into
// out_dir. Artifacts are byte-deterministic functions of the config.
RunOutcome run_to_directory(const SimConfig& config, const std::filesystem::path& out_dir);

struct BoundOutcome {
    bool computed = false;
    std::string skip_reason;
    BoundConstants constants;
    BoundReport report;
};

// Convergence-bound evaluation for a finished run: constants are analytic
// for linear + squared error, otherwise probe estimates; the round-start
// virtual iterates of the run serve as probe points.
BoundOutcome compute_bound(const EngineSetup& setup, const ObjectiveContext& ctx,
                           const TrainingTrace& trace, const BoundRequest& request);

struct SweepRow {
    std::string axis;
    std::string value;
    std::string status; // ok | diverged | config_error
    double final_loss = 0.0;
    double final_clock = 0.0;
    double clock_to_target = 0.0;
    bool selected = false; // eta axis: lowest final loss
    std::string dir;
    std::string message;
};

struct SweepOutcome {
    int exit_code = kExitOk; // 0 only when every row is ok
    double target_loss = 0.0;
    std::vector<SweepRow> rows;
};

// Sequential sweep over one axis (Q | eta | N | K); all other fields share
// the base config. Q sweeps preserve the base total iteration budget Q*R.
// Each run owns out_dir/run_<axis>_<value>/; summary.csv gets one row per
// run and failures do not stop later runs. The target loss is the loss the
// best completed run reached at 80% of its clock budget.
SweepOutcome run_sweep(const SimConfig& base, const std::string& axis,
                       const std::vector<std::string>& values,
                       const std::filesystem::path& out_dir);

// Self-checks: finite-difference gradient probes for every architecture and
// loss, protocol reductions against the three independent references, and
// the convergence bound on an analytic quadratic. Returns 0 when all pass.
int run_check(std::ostream& log);

// Writes the configured synthetic dataset as csv or binary, plus a JSON
// metadata sidecar (<out>.meta.json) with the planted and fitted optima.
int generate_data_files(const SimConfig& config, const std::string& out_path,
                        const std::string& format, std::ostream& log);

} // namespace tdcd
