#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tdcd/data.hpp"
#include "tdcd/metrics.hpp"
#include "tdcd/model.hpp"
#include "tdcd/objective.hpp"

namespace tdcd {

// One silo's static inputs: its model shape, its column slice of the
// features (all M rows), and its clients' horizontal shards.
struct SiloSetup {
    SiloModelSpec spec;
    Matrix features;                     // M x D_j
    std::vector<HorizontalShard> shards; // K_j entries, client-index order
};

struct EngineSetup {
    std::vector<SiloSetup> silos;
    std::vector<double> labels; // global label vector (row order of features)
    LossSpec loss;
    int q_local_steps = 1;
    double eta = 0.0;
    std::size_t batch_size = 1;
    long rounds = 0;
    std::uint64_t batch_seed = 0;
    LatencyModel latency;
    bool eval_every_iter = false; // full-data loss at every local iteration
    bool record_internals = true; // keep per-iteration virtual models etc.
    std::optional<double> eta_max_hint; // warn when eta exceeds it

    std::size_t sample_count() const { return labels.size(); }
    std::size_t silo_count() const { return silos.size(); }
};

struct HubState {
    int silo_index = 0;
    ParamBlock block; // the silo average after each round
};

struct ClientState {
    int silo_index = 0;
    int client_index = 0;
    ParamBlock block;
    EmbeddingBatch stale_other;          // received cross-silo sum, frozen per round
    std::vector<long> my_batch_ids;      // this client's slice of the round batch
    std::vector<double> my_batch_labels; // aligned with my_batch_ids
};

struct EngineState {
    std::vector<HubState> hubs;
    std::vector<std::vector<ClientState>> clients; // [silo][client]
};

struct VariantTally {
    long long count = 0;
    long long scalars = 0;
};

// Scalar payload totals per message variant. Sample-ID lists ride along
// uncounted; only float payloads are charged.
struct MessageTally {
    VariantTally weights_down;   // hub -> client, whole block
    VariantTally embeddings_up;  // client -> hub, E x |own batch slice|
    VariantTally hub_exchange;   // hub -> every other hub, E x B
    VariantTally projected_down; // hub -> client, E x |own batch slice|
    VariantTally weights_up;     // client -> hub, whole block

    long long total_scalars() const {
        return weights_down.scalars + embeddings_up.scalars + hub_exchange.scalars +
               projected_down.scalars + weights_up.scalars;
    }
};

// One row of the emitted run trace (JSONL and CSV share these columns).
struct TraceRecord {
    long round = 0;
    long iter = 0;
    double clock = 0.0;
    double loss = 0.0;
    double grad_sq_norm = 0.0; // full objective at the enclosing round's start
    long long msgs_scalars = 0;
};

struct RoundTrace {
    long round_index = 0;
    long start_iter = 0;  // t0 = round_index * Q
    double clock_start = 0.0;
    double clock_end = 0.0;
    double start_loss = 0.0;
    double start_grad_sq_norm = 0.0;
    MessageTally messages;

    // Analytic internals (filled when record_internals):
    std::vector<std::vector<double>> virtual_models; // Q+1 entries, t0 .. t0+Q
    std::vector<std::vector<double>> mean_grads;     // Q entries, applied at t0+q
    std::vector<std::vector<std::uint64_t>> stale_hashes; // [flat client][step]
    std::vector<std::size_t> client_batch_sizes;          // [flat client]
    std::vector<double> iter_losses; // eval_every_iter: loss at t0+q, q=1..Q-1
};

struct TrainingTrace {
    enum class Status { Completed, Diverged };
    Status status = Status::Completed;
    int diverged_client = -1;
    int diverged_silo = -1;
    long diverged_iter = -1;
    std::string divergence_message;

    std::vector<RoundTrace> rounds;
    std::vector<TraceRecord> records; // emission-ready rows
    std::vector<double> final_model;  // assembled at the last completed boundary
    double final_loss = 0.0;
    double final_grad_sq_norm = 0.0;
    std::vector<std::string> warnings;
};

void validate_setup(const EngineSetup& setup);

// Position of client (silo, client) in silo-major flat order, the index used
// by RoundTrace::stale_hashes and client_batch_sizes.
std::size_t flat_client_index(const EngineSetup& setup, std::size_t silo, std::size_t client);

// Objective context over the engine's own feature slices.
ObjectiveContext make_context(const EngineSetup& setup);

// Hub blocks from the seeded initializer; every client starts at its hub's
// block; batch state empty until the first round.
EngineState init_state(const EngineSetup& setup, std::uint64_t init_seed);

// One full communication round: shared batch selection, weight distribution,
// embedding round-trip, hub exchange, projection, Q local steps on frozen
// cross-silo embeddings, hub averaging. Throws DivergenceError naming
// (client, silo, iteration) when a step produces non-finite parameters.
RoundTrace run_round(EngineState& state, const EngineSetup& setup, const ObjectiveContext& ctx,
                     long round_index);

// R consecutive rounds plus a closing record for the final model. On
// divergence the trace of completed rounds is retained and status says so.
TrainingTrace run_training(const EngineSetup& setup, const ObjectiveContext& ctx,
                           std::uint64_t init_seed);

// Concatenation of hub blocks in silo order.
std::vector<double> assemble_global_model(const std::vector<HubState>& hubs);

} // namespace tdcd
