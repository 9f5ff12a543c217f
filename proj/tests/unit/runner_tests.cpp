#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tdcd/config.hpp"
#include "tdcd/runner.hpp"

using namespace tdcd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base_json() {
    return json{
        {"topology", {{"silos", 2}, {"clients", 2}}},
        {"model", {{"architecture", "linear"}}},
        {"loss", {{"kind", "squared_error"}}},
        {"training", {{"q_local_steps", 2}, {"eta", 0.05}, {"batch_size", 8}, {"rounds", 4}}},
        {"latency", {{"t_comm", 10.0}, {"t_comp", 1.0}}},
        {"seeds", {{"data", 11}, {"init", 12}, {"batch", 13}}},
        {"dataset",
         {{"source", "synthetic"},
          {"task", "least_squares"},
          {"samples", 24},
          {"features", 4},
          {"noise", 0.3},
          {"condition", 2.0},
          {"correlation", 0.25}}},
    };
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("tdcd_rt_" + tag)) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("a run writes its artifact set and is byte-reproducible") {
    const SimConfig cfg = parse_config(base_json());
    TempDir a("a");
    TempDir b("b");
    const RunOutcome first = run_to_directory(cfg, a.path);
    CHECK(first.exit_code == kExitOk);
    CHECK(first.trace.records.size() == 5); // start + one per round

    for (const char* name : {"config_snapshot.json", "trace.jsonl", "trace.csv", "metrics.csv"})
        CHECK(fs::exists(a.path / name));
    CHECK_FALSE(fs::exists(a.path / "bound_report.json")); // not requested

    const RunOutcome second = run_to_directory(cfg, b.path);
    CHECK(second.exit_code == kExitOk);
    for (const char* name : {"config_snapshot.json", "trace.jsonl", "trace.csv", "metrics.csv"})
        CHECK(slurp(a.path / name) == slurp(b.path / name));
}

TEST_CASE("a reloaded snapshot reproduces the run byte for byte") {
    const SimConfig cfg = parse_config(base_json());
    TempDir a("snap_src");
    TempDir b("snap_dst");
    run_to_directory(cfg, a.path);

    const SimConfig reloaded = load_config((a.path / "config_snapshot.json").string());
    run_to_directory(reloaded, b.path);
    CHECK(slurp(a.path / "trace.jsonl") == slurp(b.path / "trace.jsonl"));
    CHECK(slurp(a.path / "config_snapshot.json") == slurp(b.path / "config_snapshot.json"));
}

TEST_CASE("metrics and bound reports are emitted on request") {
    json j = base_json();
    j["bound"] = {{"enabled", true}, {"pairs", 16}};
    const SimConfig cfg = parse_config(j);
    TempDir d("bound");
    const RunOutcome out = run_to_directory(cfg, d.path);
    CHECK(out.exit_code == kExitOk);

    const json report = json::parse(slurp(d.path / "bound_report.json"));
    CHECK(report["constants"]["source"] == "analytic");
    CHECK(report["constants"]["smooth_l"].get<double>() > 0.0);
    CHECK(report["report"]["rhs"].get<double>() > 0.0);
    CHECK(report["report"].contains("satisfied"));

    // metrics.csv: header plus one row for the final model on the full data.
    std::istringstream m(slurp(d.path / "metrics.csv"));
    std::string header, row, extra;
    REQUIRE(std::getline(m, header));
    REQUIRE(std::getline(m, row));
    CHECK_FALSE(std::getline(m, extra));
    CHECK(header.rfind("split,samples,loss", 0) == 0);
    CHECK(row.rfind("train,24,", 0) == 0);
}

TEST_CASE("a zero-round run leaves the trace empty but the model evaluated") {
    json j = base_json();
    j["training"]["rounds"] = 0;
    TempDir d("r0");
    const RunOutcome out = run_to_directory(parse_config(j), d.path);
    CHECK(out.exit_code == kExitOk);
    CHECK(out.trace.records.empty()); // no rounds, no rows
    CHECK(out.trace.rounds.empty());
    CHECK_FALSE(out.trace.final_model.empty()); // the initial hub blocks
    CHECK(std::isfinite(out.trace.final_loss));
    const std::string jsonl = slurp(d.path / "trace.jsonl");
    CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 0);
    CHECK(fs::exists(d.path / "metrics.csv")); // evaluation of the init model
}

TEST_CASE("sweep rows share everything except the swept axis") {
    const SimConfig base = parse_config(base_json());
    TempDir d("sweep_q");
    const SweepOutcome sweep = run_sweep(base, "Q", {"1", "2", "4"}, d.path);
    CHECK(sweep.exit_code == kExitOk);
    REQUIRE(sweep.rows.size() == 3);

    // Base budget is Q*R = 8 iterations; each row preserves it.
    const json s1 = json::parse(slurp(d.path / "run_Q_1" / "config_snapshot.json"));
    const json s4 = json::parse(slurp(d.path / "run_Q_4" / "config_snapshot.json"));
    CHECK(s1["training"]["q_local_steps"] == 1);
    CHECK(s1["training"]["rounds"] == 8);
    CHECK(s4["training"]["q_local_steps"] == 4);
    CHECK(s4["training"]["rounds"] == 2);

    json masked1 = s1;
    json masked4 = s4;
    for (auto* m : {&masked1, &masked4}) {
        (*m)["training"].erase("q_local_steps");
        (*m)["training"].erase("rounds");
    }
    CHECK(masked1.dump() == masked4.dump());

    CHECK(fs::exists(d.path / "summary.csv"));
    const std::string summary = slurp(d.path / "summary.csv");
    CHECK(summary.find("Q,1,ok") != std::string::npos);
    CHECK(summary.find("Q,4,ok") != std::string::npos);

    // Re-running the sweep reproduces the summary byte for byte.
    TempDir d2("sweep_q2");
    run_sweep(base, "Q", {"1", "2", "4"}, d2.path);
    CHECK(slurp(d.path / "summary.csv") == slurp(d2.path / "summary.csv"));
}

TEST_CASE("an eta sweep marks the lowest final loss as selected") {
    json j = base_json();
    j["training"]["rounds"] = 6;
    TempDir d("sweep_eta");
    const SweepOutcome sweep = run_sweep(parse_config(j), "eta", {"0.005", "0.05"}, d.path);
    CHECK(sweep.exit_code == kExitOk);
    REQUIRE(sweep.rows.size() == 2);
    int selected = 0;
    std::size_t which = 0;
    for (std::size_t i = 0; i < sweep.rows.size(); ++i)
        if (sweep.rows[i].selected) {
            ++selected;
            which = i;
        }
    CHECK(selected == 1);
    CHECK(sweep.rows[which].final_loss ==
          std::min(sweep.rows[0].final_loss, sweep.rows[1].final_loss));
}

TEST_CASE("a diverged sweep row does not poison the others") {
    json j = base_json();
    TempDir d("sweep_div");
    const SweepOutcome sweep = run_sweep(parse_config(j), "eta", {"0.05", "1e200"}, d.path);
    CHECK(sweep.exit_code != kExitOk);
    REQUIRE(sweep.rows.size() == 2);
    CHECK(sweep.rows[0].status == "ok");
    CHECK(sweep.rows[1].status == "diverged");
    const std::string summary = slurp(d.path / "summary.csv");
    CHECK(summary.find("diverged") != std::string::npos);
}

TEST_CASE("gen-data writes the dataset and its metadata sidecar") {
    const SimConfig cfg = parse_config(base_json());
    TempDir d("gendata");
    fs::create_directories(d.path);
    const std::string out = (d.path / "bench.csv").string();
    std::ostringstream log;
    CHECK(generate_data_files(cfg, out, "csv", log) == 0);
    CHECK(fs::exists(out));
    CHECK(fs::exists(out + ".meta.json"));

    const json meta = json::parse(slurp(out + ".meta.json"));
    CHECK(meta.contains("theta_star"));
    CHECK(meta.contains("theta_opt"));
    CHECK(meta.contains("optimum_loss"));
    CHECK(meta.contains("smooth_l"));

    // The written file loads back as a usable dataset for the same config.
    json file_cfg = base_json();
    file_cfg["dataset"] = {{"source", "csv"}, {"path", out}};
    const BuiltRun run = build_run(parse_config(file_cfg));
    CHECK(run.dataset.sample_count() == 24);
    CHECK(run.dataset.feature_count() == 4);
}
