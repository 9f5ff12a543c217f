#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdcd/oracles.hpp"
#include "tdcd/protocol.hpp"
#include "tdcd/synthetic.hpp"

namespace tdcd {

enum class DatasetSource { Synthetic, Csv, Binary };

struct DatasetConfig {
    DatasetSource source = DatasetSource::Synthetic;
    SyntheticSpec synthetic;
    std::string path;                  // csv / binary
    std::string label_column = "label"; // csv
};

// Smoothness/variance probing request; when enabled the runner emits
// bound_report.json alongside the traces.
struct BoundRequest {
    bool enabled = false;
    int pairs = 64;
    double radius = 0.5;
    std::uint64_t seed = 0;
    int sampled_batches = 64;
    long long enumeration_cap = 200000;
};

// Parsed run configuration. One JSON file with typed sections; every seed is
// explicit so a snapshot fully determines the run.
struct SimConfig {
    int silos = 1;
    std::vector<int> clients;      // length == silos after parsing
    Architecture architecture = Architecture::Linear;
    int hidden_width = 0;          // mlp only
    LossSpec loss;
    std::vector<int> feature_split; // empty = near-equal contiguous split
    int q_local_steps = 1;
    double eta = 0.0;
    std::size_t batch_size = 1;
    long rounds = 0;
    LatencyModel latency;
    std::uint64_t data_seed = 0;
    std::uint64_t init_seed = 0;
    std::uint64_t batch_seed = 0;
    DatasetConfig dataset;
    bool eval_every_iter = false;
    BoundRequest bound;
};

// Throws ConfigError naming the offending "section.field". Unknown sections
// and keys are rejected so snapshots never silently drop anything.
SimConfig parse_config(const nlohmann::json& root);
SimConfig load_config(const std::string& path);

// Canonical JSON with every default materialized. Idempotent through
// parse_config: the snapshot of a snapshot is byte-identical.
nlohmann::json effective_config(const SimConfig& config);

// Everything needed to execute a run, with the dataset loaded or generated,
// columns split, shards drawn, and the config's derived fields resolved.
struct BuiltRun {
    EngineSetup setup;
    Dataset dataset;
    std::vector<VerticalPartition> partitions;
    std::optional<SyntheticMetadata> metadata; // synthetic sources only
    SimConfig resolved;                        // feature_split etc. filled in
};

BuiltRun build_run(const SimConfig& config);

} // namespace tdcd
