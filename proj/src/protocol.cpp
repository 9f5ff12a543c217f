#include "tdcd/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "tdcd/prng.hpp"

namespace tdcd {

namespace {

std::uint64_t hash_embedding_batch(const EmbeddingBatch& b) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto mixin = [&h](const void* p, std::size_t len) {
        const auto* u = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= u[i];
            h *= 0x100000001B3ull;
        }
    };
    if (!b.ids.empty()) mixin(b.ids.data(), b.ids.size() * sizeof(long));
    if (!b.values.data().empty())
        mixin(b.values.data().data(), b.values.data().size() * sizeof(double));
    return h;
}

std::vector<ParamBlock> hub_blocks_of(const EngineState& state) {
    std::vector<ParamBlock> blocks;
    blocks.reserve(state.hubs.size());
    for (const auto& hub : state.hubs) blocks.push_back(hub.block);
    return blocks;
}

std::vector<double> mean_client_blocks(const EngineState& state, const EngineSetup& setup) {
    std::vector<double> flat;
    for (std::size_t j = 0; j < setup.silo_count(); ++j) {
        const auto& row = state.clients[j];
        const std::size_t p = setup.silos[j].spec.param_count();
        const double inv_k = 1.0 / static_cast<double>(row.size());
        for (std::size_t i = 0; i < p; ++i) {
            double s = 0.0;
            for (const auto& c : row) s += c.block.values[i];
            flat.push_back(s * inv_k);
        }
    }
    return flat;
}

} // namespace

std::size_t flat_client_index(const EngineSetup& setup, std::size_t silo, std::size_t client) {
    std::size_t flat = client;
    for (std::size_t j = 0; j < silo; ++j) flat += setup.silos[j].shards.size();
    return flat;
}

void validate_setup(const EngineSetup& setup) {
    if (setup.silos.empty()) throw ConfigError("engine: at least one silo required");
    if (setup.q_local_steps < 1) throw ConfigError("engine: q_local_steps must be >= 1");
    if (setup.eta < 0.0) throw ConfigError("engine: eta must be >= 0");
    if (setup.rounds < 0) throw ConfigError("engine: rounds must be >= 0");
    if (setup.latency.t_comm < 0.0 || setup.latency.t_comp < 0.0 ||
        setup.latency.t_hub_client < 0.0 || setup.latency.t_hub_hub < 0.0)
        throw ConfigError("engine: latency constants must be >= 0");

    const std::size_t m = setup.sample_count();
    if (m < 1) throw ConfigError("engine: empty label vector");
    if (setup.batch_size < 1 || setup.batch_size > m)
        throw ConfigError("engine: batch_size must be in [1, " + std::to_string(m) + "]");

    const int e = setup.silos[0].spec.embedding_dim;
    for (std::size_t j = 0; j < setup.silos.size(); ++j) {
        const auto& silo = setup.silos[j];
        validate_spec(silo.spec);
        if (silo.spec.silo_index != static_cast<int>(j))
            throw ConfigError("engine: silo " + std::to_string(j) + " spec has silo_index " +
                              std::to_string(silo.spec.silo_index));
        if (silo.spec.embedding_dim != e)
            throw ConfigError("engine: embedding_dim differs across silos");
        if (silo.features.rows() != m)
            throw ConfigError("engine: silo " + std::to_string(j) + " feature rows " +
                              std::to_string(silo.features.rows()) + " != label count " +
                              std::to_string(m));
        if (silo.features.cols() != static_cast<std::size_t>(silo.spec.input_dim))
            throw ConfigError("engine: silo " + std::to_string(j) + " feature columns != input_dim");
        if (silo.shards.empty())
            throw ConfigError("engine: silo " + std::to_string(j) + " has no clients");
        for (std::size_t k = 0; k < silo.shards.size(); ++k) {
            const auto& shard = silo.shards[k];
            if (shard.client_index != static_cast<int>(k) ||
                shard.silo_index != static_cast<int>(j))
                throw ConfigError("engine: shard indices inconsistent at silo " +
                                  std::to_string(j) + " client " + std::to_string(k));
            if (shard.sorted_ids.size() != shard.owned_ids.size() ||
                shard.sorted_labels.size() != shard.owned_ids.size())
                throw ConfigError("engine: shard lookup tables missing at silo " +
                                  std::to_string(j) + " client " + std::to_string(k));
        }
    }
    validate_loss(setup.loss, e);
}

ObjectiveContext make_context(const EngineSetup& setup) {
    ObjectiveContext ctx;
    ctx.labels = setup.labels;
    ctx.loss = setup.loss;
    for (const auto& silo : setup.silos) {
        ctx.specs.push_back(silo.spec);
        ctx.silo_features.push_back(silo.features);
    }
    return ctx;
}

EngineState init_state(const EngineSetup& setup, std::uint64_t init_seed) {
    validate_setup(setup);
    EngineState state;
    state.hubs.reserve(setup.silo_count());
    state.clients.resize(setup.silo_count());
    for (std::size_t j = 0; j < setup.silo_count(); ++j) {
        HubState hub;
        hub.silo_index = static_cast<int>(j);
        hub.block = init_block(setup.silos[j].spec, init_seed);
        auto& row = state.clients[j];
        row.resize(setup.silos[j].shards.size());
        for (std::size_t k = 0; k < row.size(); ++k) {
            row[k].silo_index = static_cast<int>(j);
            row[k].client_index = static_cast<int>(k);
            row[k].block = hub.block;
        }
        state.hubs.push_back(std::move(hub));
    }
    return state;
}

RoundTrace run_round(EngineState& state, const EngineSetup& setup, const ObjectiveContext& ctx,
                     long round_index) {
    const int q_steps = setup.q_local_steps;
    const std::size_t n_silos = setup.silo_count();
    const std::size_t b = setup.batch_size;
    const std::size_t e = static_cast<std::size_t>(setup.silos[0].spec.embedding_dim);
    const long t0 = round_index * q_steps;
    const double t_q = round_latency(q_steps, setup.latency);
    const bool want_models = setup.record_internals || setup.eval_every_iter;

    RoundTrace trace;
    trace.round_index = round_index;
    trace.start_iter = t0;
    trace.clock_start = static_cast<double>(round_index) * t_q;
    trace.clock_end = static_cast<double>(round_index + 1) * t_q;

    // Round-start evaluation: at a boundary the virtual iterate equals the
    // hub blocks, so evaluate those directly.
    {
        const std::vector<ParamBlock> blocks = hub_blocks_of(state);
        trace.start_loss = full_loss(ctx, blocks);
        trace.start_grad_sq_norm = squared_norm(full_gradient(ctx, blocks));
    }

    // (1) shared mini-batch for the round, identical at every silo.
    const Minibatch batch = sample_minibatch(setup.batch_seed, t0, b, setup.sample_count());

    // (2) weights and sample IDs down; each client takes its slice of the
    // batch in batch order.
    for (std::size_t j = 0; j < n_silos; ++j) {
        const auto& silo = setup.silos[j];
        const long long p = static_cast<long long>(silo.spec.param_count());
        for (std::size_t k = 0; k < state.clients[j].size(); ++k) {
            ClientState& client = state.clients[j][k];
            client.block = state.hubs[j].block;
            trace.messages.weights_down.count += 1;
            trace.messages.weights_down.scalars += p;

            const HorizontalShard& shard = silo.shards[k];
            client.my_batch_ids.clear();
            client.my_batch_labels.clear();
            for (long id : batch.ids)
                if (shard.owns(id)) {
                    client.my_batch_ids.push_back(id);
                    client.my_batch_labels.push_back(shard.label_of(id));
                }
            trace.client_batch_sizes.push_back(client.my_batch_ids.size());
        }
    }

    // (3) client embeddings on owned batch rows; hub union over clients.
    std::vector<Matrix> phi(n_silos);          // per silo: B x E, batch order
    std::vector<std::vector<Matrix>> own_rows(n_silos); // cached per client
    for (std::size_t j = 0; j < n_silos; ++j) {
        phi[j] = Matrix(b, e);
        std::vector<char> filled(b, 0);
        own_rows[j].resize(state.clients[j].size());
        for (std::size_t k = 0; k < state.clients[j].size(); ++k) {
            ClientState& client = state.clients[j][k];
            own_rows[j][k] = gather_rows(setup.silos[j].features, client.my_batch_ids);
            const Matrix phi_kj = embed(setup.silos[j].spec, client.block, own_rows[j][k]);
            trace.messages.embeddings_up.count += 1;
            trace.messages.embeddings_up.scalars +=
                static_cast<long long>(phi_kj.rows()) * static_cast<long long>(e);

            // Place this client's rows at their batch positions.
            std::size_t next = 0;
            for (std::size_t pos = 0; pos < b; ++pos) {
                if (!setup.silos[j].shards[k].owns(batch.ids[pos])) continue;
                for (std::size_t c = 0; c < e; ++c) phi[j](pos, c) = phi_kj(next, c);
                filled[pos] = 1;
                ++next;
            }
        }
        for (std::size_t pos = 0; pos < b; ++pos)
            if (!filled[pos])
                throw ConfigError("engine: batch sample " + std::to_string(batch.ids[pos]) +
                                  " not owned by any client of silo " + std::to_string(j));
    }

    // (4)+(5) all-to-all hub exchange; receiver sums everyone else.
    std::vector<Matrix> phi_minus(n_silos);
    for (std::size_t j = 0; j < n_silos; ++j) {
        phi_minus[j] = Matrix(b, e);
        for (std::size_t l = 0; l < n_silos; ++l) {
            if (l == j) continue;
            add_in_place(phi_minus[j], phi[l]);
        }
        trace.messages.hub_exchange.count += 1; // one broadcast per hub
        trace.messages.hub_exchange.scalars += static_cast<long long>(n_silos - 1) *
                                               static_cast<long long>(b) *
                                               static_cast<long long>(e);
    }

    // (6) projection down to clients; frozen for the whole round.
    for (std::size_t j = 0; j < n_silos; ++j) {
        EmbeddingBatch full;
        full.ids = batch.ids;
        full.values = phi_minus[j];
        for (std::size_t k = 0; k < state.clients[j].size(); ++k) {
            ClientState& client = state.clients[j][k];
            client.stale_other = project(full, setup.silos[j].shards[k]);
            trace.messages.projected_down.count += 1;
            trace.messages.projected_down.scalars +=
                static_cast<long long>(client.stale_other.size()) * static_cast<long long>(e);
        }
    }

    // (7) Q local steps. Own embeddings are recomputed from the current
    // block every step; stale_other and the batch slice never change.
    std::size_t total_clients = 0;
    for (std::size_t j = 0; j < n_silos; ++j) total_clients += state.clients[j].size();
    if (setup.record_internals) {
        trace.stale_hashes.assign(total_clients, {});
        trace.virtual_models.reserve(static_cast<std::size_t>(q_steps) + 1);
        trace.mean_grads.reserve(q_steps);
    }
    std::vector<std::vector<double>> iter_models;
    if (want_models) {
        iter_models.push_back(mean_client_blocks(state, setup));
        if (setup.record_internals) trace.virtual_models.push_back(iter_models.back());
    }

    for (int q = 0; q < q_steps; ++q) {
        const long t = t0 + q;
        std::vector<double> mean_grad;
        for (std::size_t j = 0; j < n_silos; ++j) {
            const auto& spec = setup.silos[j].spec;
            const std::size_t p = spec.param_count();
            const std::size_t k_j = state.clients[j].size();
            std::vector<double> grad_sum(p, 0.0);
            for (std::size_t k = 0; k < k_j; ++k) {
                ClientState& client = state.clients[j][k];
                if (setup.record_internals)
                    trace.stale_hashes[flat_client_index(setup, j, k)].push_back(
                        hash_embedding_batch(client.stale_other));
                if (client.my_batch_ids.empty()) continue; // no samples: skip the step
                std::vector<double> grad;
                try {
                    grad = partial_gradient(spec, client.block, own_rows[j][k],
                                            client.stale_other.values, client.my_batch_labels,
                                            setup.loss);
                } catch (const NumericError& err) {
                    throw DivergenceError(std::string(err.what()) + " at client " +
                                              std::to_string(k) + ", silo " + std::to_string(j) +
                                              ", iteration " + std::to_string(t),
                                          static_cast<int>(k), static_cast<int>(j), t);
                }
                for (std::size_t i = 0; i < p; ++i) {
                    client.block.values[i] -= setup.eta * grad[i];
                    grad_sum[i] += grad[i];
                }
                if (!client.block.finite())
                    throw DivergenceError("non-finite parameters at client " + std::to_string(k) +
                                              ", silo " + std::to_string(j) + ", iteration " +
                                              std::to_string(t),
                                          static_cast<int>(k), static_cast<int>(j), t);
            }
            const double inv_k = 1.0 / static_cast<double>(k_j);
            for (double v : grad_sum) mean_grad.push_back(v * inv_k);
        }
        if (want_models) iter_models.push_back(mean_client_blocks(state, setup));
        if (setup.record_internals) {
            trace.virtual_models.push_back(iter_models.back());
            trace.mean_grads.push_back(std::move(mean_grad));
        }
    }

    if (setup.eval_every_iter) {
        for (int q = 1; q < q_steps; ++q) {
            const std::vector<ParamBlock> blocks = split_global(iter_models[q], ctx.specs);
            trace.iter_losses.push_back(full_loss(ctx, blocks));
        }
    }

    // (8) hub averaging in fixed client order.
    for (std::size_t j = 0; j < n_silos; ++j) {
        const std::size_t p = setup.silos[j].spec.param_count();
        const std::size_t k_j = state.clients[j].size();
        const long long pl = static_cast<long long>(p);
        std::vector<double>& hub = state.hubs[j].block.values;
        for (std::size_t i = 0; i < p; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < k_j; ++k) s += state.clients[j][k].block.values[i];
            hub[i] = s / static_cast<double>(k_j);
        }
        trace.messages.weights_up.count += static_cast<long long>(k_j);
        trace.messages.weights_up.scalars += static_cast<long long>(k_j) * pl;
    }

    return trace;
}

TrainingTrace run_training(const EngineSetup& setup, const ObjectiveContext& ctx,
                           std::uint64_t init_seed) {
    validate_setup(setup);
    EngineState state = init_state(setup, init_seed);
    TrainingTrace out;

    if (setup.eta_max_hint && setup.eta > *setup.eta_max_hint) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "eta %.6g exceeds the smoothness-based ceiling %.6g; the convergence "
                      "guarantee does not apply",
                      setup.eta, *setup.eta_max_hint);
        out.warnings.emplace_back(buf);
    }

    const double t_q = round_latency(setup.q_local_steps, setup.latency);
    for (long r = 0; r < setup.rounds; ++r) {
        RoundTrace rt;
        try {
            rt = run_round(state, setup, ctx, r);
        } catch (const DivergenceError& err) {
            out.status = TrainingTrace::Status::Diverged;
            out.diverged_client = err.client_index;
            out.diverged_silo = err.silo_index;
            out.diverged_iter = err.iter;
            out.divergence_message = err.what();
            break;
        } catch (const NumericError& err) {
            out.status = TrainingTrace::Status::Diverged;
            out.divergence_message = err.what();
            break;
        }
        out.records.push_back({r, rt.start_iter, rt.clock_start, rt.start_loss,
                               rt.start_grad_sq_norm, rt.messages.total_scalars()});
        if (setup.eval_every_iter)
            for (int q = 1; q < setup.q_local_steps; ++q)
                out.records.push_back(
                    {r, rt.start_iter + q,
                     rt.clock_end - static_cast<double>(setup.q_local_steps - q) *
                                        setup.latency.t_comp,
                     rt.iter_losses[static_cast<std::size_t>(q) - 1], rt.start_grad_sq_norm,
                     0});
        out.rounds.push_back(std::move(rt));
    }

    out.final_model = assemble_global_model(state.hubs);
    try {
        const std::vector<ParamBlock> blocks = hub_blocks_of(state);
        out.final_loss = full_loss(ctx, blocks);
        out.final_grad_sq_norm = squared_norm(full_gradient(ctx, blocks));
    } catch (const NumericError&) {
        out.final_loss = std::numeric_limits<double>::infinity();
        out.final_grad_sq_norm = std::numeric_limits<double>::infinity();
    }
    if (out.status == TrainingTrace::Status::Completed && setup.rounds > 0)
        out.records.push_back({setup.rounds, setup.rounds * setup.q_local_steps,
                               static_cast<double>(setup.rounds) * t_q, out.final_loss,
                               out.final_grad_sq_norm, 0});
    return out;
}

std::vector<double> assemble_global_model(const std::vector<HubState>& hubs) {
    std::vector<double> flat;
    for (const auto& hub : hubs)
        flat.insert(flat.end(), hub.block.values.begin(), hub.block.values.end());
    return flat;
}

} // namespace tdcd
