#include "tdcd/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tdcd/linalg.hpp"
#include "tdcd/prng.hpp"

namespace tdcd {

namespace {

std::vector<ParamBlock> seeded_blocks(const ObjectiveContext& ctx, std::uint64_t init_seed) {
    std::vector<ParamBlock> blocks;
    blocks.reserve(ctx.specs.size());
    for (const auto& spec : ctx.specs) blocks.push_back(init_block(spec, init_seed));
    return blocks;
}

// Positions (and IDs) of the batch rows a shard owns, batch order.
struct ClientSlice {
    std::vector<long> ids;
    std::vector<std::size_t> positions;
};

ClientSlice slice_of(const HorizontalShard& shard, const std::vector<long>& batch_ids) {
    ClientSlice s;
    for (std::size_t p = 0; p < batch_ids.size(); ++p)
        if (shard.owns(batch_ids[p])) {
            s.ids.push_back(batch_ids[p]);
            s.positions.push_back(p);
        }
    return s;
}

Matrix rows_at(const Matrix& m, const std::vector<std::size_t>& positions) {
    Matrix out(positions.size(), m.cols());
    for (std::size_t r = 0; r < positions.size(); ++r) {
        const double* src = m.row(positions[r]);
        std::copy(src, src + m.cols(), out.row(r));
    }
    return out;
}

// Per-silo embeddings over the given batch at the given blocks.
std::vector<Matrix> batch_embeddings(const ObjectiveContext& ctx,
                                     const std::vector<ParamBlock>& blocks,
                                     const std::vector<long>& ids) {
    std::vector<Matrix> phi;
    phi.reserve(ctx.specs.size());
    for (std::size_t j = 0; j < ctx.specs.size(); ++j)
        phi.push_back(embed(ctx.specs[j], blocks[j], gather_rows(ctx.silo_features[j], ids)));
    return phi;
}

Matrix sum_excluding(const std::vector<Matrix>& phi, std::size_t skip) {
    Matrix out(phi[0].rows(), phi[0].cols());
    for (std::size_t l = 0; l < phi.size(); ++l) {
        if (l == skip) continue;
        add_in_place(out, phi[l]);
    }
    return out;
}

// The client stochastic gradient g_kj at the current blocks (fresh
// cross-silo embeddings, no staleness).
std::vector<double> client_gradient(const ObjectiveContext& ctx,
                                    const std::vector<ParamBlock>& blocks, std::size_t silo,
                                    const ClientSlice& slice, const Matrix& phi_minus) {
    const Matrix own_rows = gather_rows(ctx.silo_features[silo], slice.ids);
    const Matrix other = rows_at(phi_minus, slice.positions);
    const std::vector<double> labels = gather_labels(ctx.labels, slice.ids);
    return partial_gradient(ctx.specs[silo], blocks[silo], own_rows, other, labels, ctx.loss);
}

// B distinct IDs by partial Fisher-Yates from the given stream.
std::vector<long> draw_ids(Stream& g, std::size_t batch_size, std::size_t m) {
    std::vector<long> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = static_cast<long>(i);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(g.below(m - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(batch_size);
    return idx;
}

std::vector<double> flat_normal(Stream& g, std::size_t dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = g.normal();
    return v;
}

// base + radius * unit direction
std::vector<double> perturb(const std::vector<double>& base, Stream& g, double radius) {
    std::vector<double> dir = flat_normal(g, base.size());
    const double n = l2_norm(dir);
    std::vector<double> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        out[i] = base[i] + (n > 0.0 ? radius * dir[i] / n : 0.0);
    return out;
}

std::vector<double> flat_full_gradient(const ObjectiveContext& ctx,
                                       const std::vector<double>& flat) {
    const std::vector<ParamBlock> blocks = split_global(flat, ctx.specs);
    std::vector<double> out;
    for (const auto& g : full_gradient(ctx, blocks))
        out.insert(out.end(), g.begin(), g.end());
    return out;
}

double vec_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<std::vector<double>> probe_iterates(const ObjectiveContext& ctx,
                                                const ProbeConfig& probe) {
    if (!probe.iterates_override.empty()) return probe.iterates_override;
    std::size_t dim = 0;
    for (const auto& spec : ctx.specs) dim += spec.param_count();
    std::vector<std::vector<double>> iterates;
    for (int i = 0; i < probe.probe_iterates; ++i) {
        Stream g(probe.seed, kTagProbe, 1000 + static_cast<std::uint64_t>(i));
        iterates.push_back(flat_normal(g, dim));
    }
    return iterates;
}

// sigma_sq at one iterate over sampled (not enumerated) batches.
std::vector<double> sampled_sigma_sq(const ObjectiveContext& ctx,
                                     const std::vector<std::vector<HorizontalShard>>& shards,
                                     const std::vector<ParamBlock>& blocks,
                                     const ProbeConfig& probe) {
    const std::vector<std::vector<double>> exact = full_gradient(ctx, blocks);
    const std::size_t n_silos = ctx.specs.size();
    std::vector<double> out(n_silos, 0.0);
    for (std::size_t j = 0; j < n_silos; ++j) {
        double worst = 0.0;
        for (std::size_t k = 0; k < shards[j].size(); ++k) {
            double sum_sq = 0.0;
            long counted = 0;
            for (std::size_t b = 0; b < probe.sampled_batches; ++b) {
                Stream g(probe.seed, kTagProbe, 3000 + static_cast<std::uint64_t>(b));
                const std::vector<long> ids = draw_ids(g, probe.batch_size, ctx.sample_count());
                const ClientSlice slice = slice_of(shards[j][k], ids);
                if (slice.ids.empty()) continue;
                const std::vector<Matrix> phi = batch_embeddings(ctx, blocks, ids);
                const std::vector<double> g_kj =
                    client_gradient(ctx, blocks, j, slice, sum_excluding(phi, j));
                double d = 0.0;
                for (std::size_t i = 0; i < g_kj.size(); ++i) {
                    const double r = g_kj[i] - exact[j][i];
                    d += r * r;
                }
                sum_sq += d;
                ++counted;
            }
            if (counted > 0) worst = std::max(worst, sum_sq / static_cast<double>(counted));
        }
        out[j] = worst;
    }
    return out;
}

std::vector<double> sigma_sq_at(const ObjectiveContext& ctx,
                                const std::vector<std::vector<HorizontalShard>>& shards,
                                const std::vector<ParamBlock>& blocks,
                                const ProbeConfig& probe) {
    const long long count =
        combination_count(ctx.sample_count(), probe.batch_size, probe.enumeration_cap);
    if (count <= probe.enumeration_cap)
        return enumerated_sigma_sq(ctx, shards, blocks, probe.batch_size);
    return sampled_sigma_sq(ctx, shards, blocks, probe);
}

} // namespace

ReferenceTrajectory centralized_sgd_reference(const ObjectiveContext& ctx,
                                              std::uint64_t init_seed, std::uint64_t batch_seed,
                                              double eta, std::size_t batch_size,
                                              long iterations) {
    std::vector<ParamBlock> blocks = seeded_blocks(ctx, init_seed);
    ReferenceTrajectory traj;
    traj.iterates.push_back(concat_blocks(blocks));
    for (long t = 0; t < iterations; ++t) {
        const Minibatch batch = sample_minibatch(batch_seed, t, batch_size, ctx.sample_count());
        std::vector<std::vector<double>> grads;
        try {
            grads = batch_gradient(ctx, blocks, batch.ids);
        } catch (const NumericError& err) {
            throw DivergenceError(std::string(err.what()) + " at iteration " + std::to_string(t),
                                  -1, -1, t);
        }
        for (std::size_t j = 0; j < blocks.size(); ++j)
            for (std::size_t i = 0; i < grads[j].size(); ++i)
                blocks[j].values[i] -= eta * grads[j][i];
        for (std::size_t j = 0; j < blocks.size(); ++j)
            if (!blocks[j].finite())
                throw DivergenceError("centralized reference: non-finite parameters at iteration " +
                                          std::to_string(t),
                                      -1, static_cast<int>(j), t);
        traj.iterates.push_back(concat_blocks(blocks));
    }
    return traj;
}

ReferenceTrajectory local_sgd_reference(const ObjectiveContext& ctx,
                                        const std::vector<HorizontalShard>& shards,
                                        std::uint64_t init_seed, std::uint64_t batch_seed,
                                        double eta, std::size_t batch_size, int q_steps,
                                        long rounds) {
    if (ctx.specs.size() != 1)
        throw ConfigError("local SGD reference: single-silo topology required");
    const SiloModelSpec& spec = ctx.specs[0];
    const ParamBlock start = init_block(spec, init_seed);
    std::vector<ParamBlock> clients(shards.size(), start);
    const std::size_t p = spec.param_count();

    auto mean_block = [&]() {
        std::vector<double> m(p, 0.0);
        for (const auto& c : clients)
            for (std::size_t i = 0; i < p; ++i) m[i] += c.values[i];
        for (double& v : m) v /= static_cast<double>(clients.size());
        return m;
    };

    ReferenceTrajectory traj;
    traj.iterates.push_back(mean_block());
    for (long r = 0; r < rounds; ++r) {
        const long t0 = r * q_steps;
        const Minibatch batch =
            sample_minibatch(batch_seed, t0, batch_size, ctx.sample_count());
        std::vector<ClientSlice> slices;
        std::vector<Matrix> own_rows;
        std::vector<std::vector<double>> labels;
        for (const auto& shard : shards) {
            slices.push_back(slice_of(shard, batch.ids));
            own_rows.push_back(gather_rows(ctx.silo_features[0], slices.back().ids));
            labels.push_back(gather_labels(ctx.labels, slices.back().ids));
        }
        for (int q = 0; q < q_steps; ++q) {
            for (std::size_t k = 0; k < clients.size(); ++k) {
                if (slices[k].ids.empty()) continue;
                const Matrix zero_other(slices[k].ids.size(),
                                        static_cast<std::size_t>(spec.embedding_dim));
                const std::vector<double> grad = partial_gradient(
                    spec, clients[k], own_rows[k], zero_other, labels[k], ctx.loss);
                for (std::size_t i = 0; i < p; ++i) clients[k].values[i] -= eta * grad[i];
            }
            traj.iterates.push_back(mean_block());
        }
        const std::vector<double> avg = mean_block();
        for (auto& c : clients) c.values = avg;
    }
    return traj;
}

ReferenceTrajectory single_tier_vfl_reference(const ObjectiveContext& ctx,
                                              std::uint64_t init_seed, std::uint64_t batch_seed,
                                              double eta, std::size_t batch_size, int q_steps,
                                              long rounds) {
    std::vector<ParamBlock> blocks = seeded_blocks(ctx, init_seed);
    const std::size_t n_silos = ctx.specs.size();

    ReferenceTrajectory traj;
    traj.iterates.push_back(concat_blocks(blocks));
    for (long r = 0; r < rounds; ++r) {
        const long t0 = r * q_steps;
        const Minibatch batch =
            sample_minibatch(batch_seed, t0, batch_size, ctx.sample_count());
        std::vector<Matrix> own_rows;
        for (std::size_t j = 0; j < n_silos; ++j)
            own_rows.push_back(gather_rows(ctx.silo_features[j], batch.ids));
        const std::vector<double> labels = gather_labels(ctx.labels, batch.ids);

        // Frozen cross-silo sums from the round-start blocks.
        std::vector<Matrix> phi;
        for (std::size_t j = 0; j < n_silos; ++j)
            phi.push_back(embed(ctx.specs[j], blocks[j], own_rows[j]));
        std::vector<Matrix> frozen_other;
        for (std::size_t j = 0; j < n_silos; ++j) frozen_other.push_back(sum_excluding(phi, j));

        for (int q = 0; q < q_steps; ++q) {
            for (std::size_t j = 0; j < n_silos; ++j) {
                const std::vector<double> grad = partial_gradient(
                    ctx.specs[j], blocks[j], own_rows[j], frozen_other[j], labels, ctx.loss);
                for (std::size_t i = 0; i < grad.size(); ++i)
                    blocks[j].values[i] -= eta * grad[i];
            }
            traj.iterates.push_back(concat_blocks(blocks));
        }
    }
    return traj;
}

ReductionReport reduction_check(ReductionKind kind, const EngineSetup& setup,
                                std::uint64_t init_seed, double tolerance) {
    switch (kind) {
        case ReductionKind::N1LocalSgd:
            if (setup.silo_count() != 1)
                throw ConfigError("reduction check: single-silo config required");
            break;
        case ReductionKind::K1Vfl:
            for (const auto& silo : setup.silos)
                if (silo.shards.size() != 1)
                    throw ConfigError("reduction check: one client per silo required");
            break;
        case ReductionKind::Q1Centralized: {
            if (setup.q_local_steps != 1)
                throw ConfigError("reduction check: q_local_steps must be 1");
            bool single_client = true;
            for (const auto& silo : setup.silos)
                if (silo.shards.size() != 1) single_client = false;
            if (!single_client) {
                // Multi-client equivalence needs equal batch slices, which
                // only a full batch over evenly sized shards guarantees.
                if (setup.batch_size != setup.sample_count())
                    throw ConfigError("reduction check: centralized equivalence with several "
                                      "clients requires a full batch");
                for (const auto& silo : setup.silos)
                    for (const auto& shard : silo.shards)
                        if (shard.owned_ids.size() * silo.shards.size() !=
                            setup.sample_count())
                            throw ConfigError("reduction check: shards must be evenly sized");
            }
            break;
        }
    }

    EngineSetup run = setup;
    run.record_internals = true;
    const ObjectiveContext ctx = make_context(run);
    const TrainingTrace trace = run_training(run, ctx, init_seed);

    ReductionReport report;
    report.kind = kind;
    report.tolerance = tolerance;
    if (trace.status != TrainingTrace::Status::Completed) {
        report.max_rel_deviation = std::numeric_limits<double>::infinity();
        report.pass = false;
        return report;
    }

    std::vector<std::vector<double>> engine;
    if (!trace.rounds.empty()) {
        engine.push_back(trace.rounds.front().virtual_models.front());
        for (const auto& rt : trace.rounds)
            for (std::size_t q = 1; q < rt.virtual_models.size(); ++q)
                engine.push_back(rt.virtual_models[q]);
    }

    ReferenceTrajectory ref;
    switch (kind) {
        case ReductionKind::N1LocalSgd:
            ref = local_sgd_reference(ctx, setup.silos[0].shards, init_seed, setup.batch_seed,
                                      setup.eta, setup.batch_size, setup.q_local_steps,
                                      setup.rounds);
            break;
        case ReductionKind::K1Vfl:
            ref = single_tier_vfl_reference(ctx, init_seed, setup.batch_seed, setup.eta,
                                            setup.batch_size, setup.q_local_steps,
                                            setup.rounds);
            break;
        case ReductionKind::Q1Centralized:
            ref = centralized_sgd_reference(ctx, init_seed, setup.batch_seed, setup.eta,
                                            setup.batch_size, setup.rounds);
            break;
    }

    if (engine.size() != ref.iterates.size())
        throw ConfigError("reduction check: trajectory lengths differ (" +
                          std::to_string(engine.size()) + " vs " +
                          std::to_string(ref.iterates.size()) + ")");

    double worst = 0.0;
    for (std::size_t t = 0; t < engine.size(); ++t) {
        double max_abs = 0.0, max_ref = 0.0;
        for (std::size_t i = 0; i < engine[t].size(); ++i) {
            max_abs = std::max(max_abs, std::abs(engine[t][i] - ref.iterates[t][i]));
            max_ref = std::max(max_ref, std::abs(ref.iterates[t][i]));
        }
        worst = std::max(worst, max_abs / std::max(1.0, max_ref));
    }
    report.max_rel_deviation = worst;
    report.pass = worst <= tolerance;
    return report;
}

long long combination_count(std::size_t m, std::size_t b, long long cap) {
    if (b > m) return 0;
    b = std::min(b, m - b);
    unsigned __int128 c = 1;
    for (std::size_t i = 1; i <= b; ++i) {
        c = c * (m - b + i) / i;
        if (c > static_cast<unsigned __int128>(cap)) return cap + 1;
    }
    return static_cast<long long>(c);
}

void for_each_combination(std::size_t m, std::size_t b,
                          const std::function<void(const std::vector<long>&)>& fn) {
    if (b < 1 || b > m) throw ConfigError("combinations: need 1 <= B <= M");
    std::vector<long> ids(b);
    for (std::size_t i = 0; i < b; ++i) ids[i] = static_cast<long>(i);
    for (;;) {
        fn(ids);
        std::size_t i = b;
        while (i > 0 && ids[i - 1] == static_cast<long>(m - b + i - 1)) --i;
        if (i == 0) return;
        ++ids[i - 1];
        for (std::size_t r = i; r < b; ++r) ids[r] = ids[r - 1] + 1;
    }
}

std::vector<std::vector<double>> batch_averaged_weighted_gradient(
    const ObjectiveContext& ctx, const std::vector<std::vector<HorizontalShard>>& shards,
    const std::vector<ParamBlock>& blocks, std::size_t batch_size) {
    const std::size_t n_silos = ctx.specs.size();
    std::vector<std::vector<double>> accum(n_silos);
    for (std::size_t j = 0; j < n_silos; ++j)
        accum[j].assign(ctx.specs[j].param_count(), 0.0);

    long long batches = 0;
    for_each_combination(ctx.sample_count(), batch_size, [&](const std::vector<long>& ids) {
        const std::vector<Matrix> phi = batch_embeddings(ctx, blocks, ids);
        for (std::size_t j = 0; j < n_silos; ++j) {
            const Matrix other = sum_excluding(phi, j);
            for (const auto& shard : shards[j]) {
                const ClientSlice slice = slice_of(shard, ids);
                if (slice.ids.empty()) continue;
                const std::vector<double> g = client_gradient(ctx, blocks, j, slice, other);
                const double w =
                    static_cast<double>(slice.ids.size()) / static_cast<double>(batch_size);
                for (std::size_t i = 0; i < g.size(); ++i) accum[j][i] += w * g[i];
            }
        }
        ++batches;
    });

    for (auto& a : accum)
        for (double& v : a) v /= static_cast<double>(batches);
    return accum;
}

std::vector<double> enumerated_sigma_sq(const ObjectiveContext& ctx,
                                        const std::vector<std::vector<HorizontalShard>>& shards,
                                        const std::vector<ParamBlock>& blocks,
                                        std::size_t batch_size) {
    const std::vector<std::vector<double>> exact = full_gradient(ctx, blocks);
    const std::size_t n_silos = ctx.specs.size();
    std::vector<std::vector<double>> sum_sq(n_silos);
    std::vector<std::vector<long>> counted(n_silos);
    for (std::size_t j = 0; j < n_silos; ++j) {
        sum_sq[j].assign(shards[j].size(), 0.0);
        counted[j].assign(shards[j].size(), 0);
    }

    for_each_combination(ctx.sample_count(), batch_size, [&](const std::vector<long>& ids) {
        const std::vector<Matrix> phi = batch_embeddings(ctx, blocks, ids);
        for (std::size_t j = 0; j < n_silos; ++j) {
            const Matrix other = sum_excluding(phi, j);
            for (std::size_t k = 0; k < shards[j].size(); ++k) {
                const ClientSlice slice = slice_of(shards[j][k], ids);
                if (slice.ids.empty()) continue;
                const std::vector<double> g = client_gradient(ctx, blocks, j, slice, other);
                double d = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double r = g[i] - exact[j][i];
                    d += r * r;
                }
                sum_sq[j][k] += d;
                counted[j][k] += 1;
            }
        }
    });

    std::vector<double> out(n_silos, 0.0);
    for (std::size_t j = 0; j < n_silos; ++j)
        for (std::size_t k = 0; k < shards[j].size(); ++k)
            if (counted[j][k] > 0)
                out[j] = std::max(out[j], sum_sq[j][k] / static_cast<double>(counted[j][k]));
    return out;
}

BoundConstants analytic_constants(const ObjectiveContext& ctx,
                                  const std::vector<std::vector<HorizontalShard>>& shards,
                                  const ProbeConfig& probe) {
    for (const auto& spec : ctx.specs)
        if (spec.architecture != Architecture::Linear)
            throw ConfigError("analytic constants: linear models only");
    if (ctx.loss.kind != LossKind::SquaredError)
        throw ConfigError("analytic constants: squared-error loss only");
    if (probe.batch_size < 1 || probe.batch_size > ctx.sample_count())
        throw ConfigError("analytic constants: probe batch_size out of range");

    const std::size_t m = ctx.sample_count();
    const std::size_t n_silos = ctx.specs.size();

    // Full feature matrix, silo order.
    std::size_t d_total = 0;
    for (const auto& f : ctx.silo_features) d_total += f.cols();
    Matrix x(m, d_total);
    {
        std::size_t col = 0;
        for (const auto& f : ctx.silo_features) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t c = 0; c < f.cols(); ++c) x(i, col + c) = f(i, c);
            col += f.cols();
        }
    }

    BoundConstants out;
    out.source = BoundConstants::Source::Analytic;
    out.smooth_l = lambda_max(scaled_gram(x, 2.0 / static_cast<double>(m)));

    // Column offset of each silo's block inside the full matrix.
    std::vector<std::size_t> offset(n_silos, 0);
    for (std::size_t j = 1; j < n_silos; ++j)
        offset[j] = offset[j - 1] + ctx.silo_features[j - 1].cols();

    // Operator norm of the gradient map of one client over one batch slice:
    // rows S, block columns (j): || (2/|S|) X_{S,(j)}^T X_{S,:} ||.
    auto slice_operator_norm = [&](std::size_t j, const std::vector<long>& rows) {
        const std::size_t d_j = ctx.silo_features[j].cols();
        const double scale = 2.0 / static_cast<double>(rows.size());
        Matrix jac(d_j, d_total);
        for (long id : rows) {
            const double* xr = x.row(static_cast<std::size_t>(id));
            for (std::size_t a = 0; a < d_j; ++a) {
                const double xa = xr[offset[j] + a];
                for (std::size_t c = 0; c < d_total; ++c) jac(a, c) += scale * xa * xr[c];
            }
        }
        // ||J|| = sqrt(lambda_max(J J^T)), using the smaller Gram side.
        Matrix g(d_j, d_j);
        for (std::size_t a = 0; a < d_j; ++a)
            for (std::size_t c = 0; c < d_j; ++c) {
                double s = 0.0;
                for (std::size_t t = 0; t < d_total; ++t) s += jac(a, t) * jac(c, t);
                g(a, c) = s;
            }
        return std::sqrt(std::max(0.0, lambda_max(g)));
    };

    const long long count = combination_count(m, probe.batch_size, probe.enumeration_cap);
    double l_max = 0.0;
    if (count <= probe.enumeration_cap) {
        // Exact: maximize over every batch realization per client.
        for_each_combination(m, probe.batch_size, [&](const std::vector<long>& ids) {
            for (std::size_t j = 0; j < n_silos; ++j)
                for (const auto& shard : shards[j]) {
                    const ClientSlice slice = slice_of(shard, ids);
                    if (slice.ids.empty()) continue;
                    l_max = std::max(l_max, slice_operator_norm(j, slice.ids));
                }
        });
    } else {
        // Rank-one upper bound: mean of rank-one maps is bounded by the
        // largest per-sample norm 2 * ||x_(j)|| * ||x||.
        for (std::size_t j = 0; j < n_silos; ++j) {
            const std::size_t d_j = ctx.silo_features[j].cols();
            for (const auto& shard : shards[j])
                for (long id : shard.owned_ids) {
                    const double* xr = x.row(static_cast<std::size_t>(id));
                    double nj = 0.0, nfull = 0.0;
                    for (std::size_t a = 0; a < d_j; ++a)
                        nj += xr[offset[j] + a] * xr[offset[j] + a];
                    for (std::size_t c = 0; c < d_total; ++c) nfull += xr[c] * xr[c];
                    l_max = std::max(l_max, 2.0 * std::sqrt(nj) * std::sqrt(nfull));
                }
        }
    }
    out.smooth_l_max = l_max;

    // Variance at the probe iterates (exact when enumerable).
    out.sigma_sq.assign(n_silos, 0.0);
    for (const auto& flat : probe_iterates(ctx, probe)) {
        const std::vector<ParamBlock> blocks = split_global(flat, ctx.specs);
        const std::vector<double> s = sigma_sq_at(ctx, shards, blocks, probe);
        for (std::size_t j = 0; j < n_silos; ++j) out.sigma_sq[j] = std::max(out.sigma_sq[j], s[j]);
    }
    return out;
}

BoundConstants estimate_constants(const ObjectiveContext& ctx,
                                  const std::vector<std::vector<HorizontalShard>>& shards,
                                  const ProbeConfig& probe) {
    if (probe.batch_size < 1 || probe.batch_size > ctx.sample_count())
        throw ConfigError("estimate constants: probe batch_size out of range");
    const std::vector<std::vector<double>> iterates = probe_iterates(ctx, probe);
    if (iterates.empty()) throw ConfigError("estimate constants: no probe iterates");

    BoundConstants out;
    out.source = BoundConstants::Source::Estimated;

    // Batches for the client-gradient Lipschitz probes.
    std::vector<std::vector<long>> batches;
    const std::size_t n_probe_batches = std::max<std::size_t>(1, probe.sampled_batches);
    for (std::size_t b = 0; b < n_probe_batches; ++b) {
        Stream g(probe.seed, kTagProbe, 3000 + static_cast<std::uint64_t>(b));
        batches.push_back(draw_ids(g, probe.batch_size, ctx.sample_count()));
    }

    double l_est = 0.0, l_max_est = 0.0;
    for (int pair = 0; pair < probe.pairs; ++pair) {
        const std::vector<double>& base = iterates[pair % iterates.size()];
        Stream g(probe.seed, kTagProbe, 2000 + static_cast<std::uint64_t>(pair));
        const std::vector<double> a = perturb(base, g, probe.radius);
        const std::vector<double> b = perturb(base, g, probe.radius);
        const double dist = vec_distance(a, b);
        if (dist == 0.0) continue;

        const std::vector<double> ga = flat_full_gradient(ctx, a);
        const std::vector<double> gb = flat_full_gradient(ctx, b);
        l_est = std::max(l_est, vec_distance(ga, gb) / dist);

        const std::vector<long>& ids = batches[pair % batches.size()];
        const std::vector<ParamBlock> blocks_a = split_global(a, ctx.specs);
        const std::vector<ParamBlock> blocks_b = split_global(b, ctx.specs);
        const std::vector<Matrix> phi_a = batch_embeddings(ctx, blocks_a, ids);
        const std::vector<Matrix> phi_b = batch_embeddings(ctx, blocks_b, ids);
        for (std::size_t j = 0; j < ctx.specs.size(); ++j) {
            const Matrix other_a = sum_excluding(phi_a, j);
            const Matrix other_b = sum_excluding(phi_b, j);
            for (const auto& shard : shards[j]) {
                const ClientSlice slice = slice_of(shard, ids);
                if (slice.ids.empty()) continue;
                const std::vector<double> g1 = client_gradient(ctx, blocks_a, j, slice, other_a);
                const std::vector<double> g2 = client_gradient(ctx, blocks_b, j, slice, other_b);
                l_max_est = std::max(l_max_est, vec_distance(g1, g2) / dist);
            }
        }
    }
    out.smooth_l = l_est;
    out.smooth_l_max = l_max_est;

    out.sigma_sq.assign(ctx.specs.size(), 0.0);
    for (const auto& flat : iterates) {
        const std::vector<ParamBlock> blocks = split_global(flat, ctx.specs);
        const std::vector<double> s = sigma_sq_at(ctx, shards, blocks, probe);
        for (std::size_t j = 0; j < s.size(); ++j)
            out.sigma_sq[j] = std::max(out.sigma_sq[j], s[j]);
    }
    return out;
}

double eta_ceiling(const BoundConstants& constants, int q_steps) {
    const double worst = std::max(constants.smooth_l, constants.smooth_l_max);
    if (q_steps < 1) throw ConfigError("eta ceiling: Q must be >= 1");
    if (worst <= 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / (8.0 * static_cast<double>(q_steps) * worst);
}

BoundReport convergence_bound(const std::vector<double>& round_start_grad_sq,
                              const BoundConstants& constants, double eta, int q_steps,
                              double initial_loss, double final_loss) {
    if (round_start_grad_sq.empty())
        throw ConfigError("convergence bound: needs at least one round-start gradient record");
    if (eta <= 0.0) throw ConfigError("convergence bound: eta must be > 0");
    if (q_steps < 1) throw ConfigError("convergence bound: Q must be >= 1");

    BoundReport report;
    const double r = static_cast<double>(round_start_grad_sq.size());
    double lhs = 0.0;
    for (double v : round_start_grad_sq) lhs += v;
    report.lhs = lhs / r;

    const double q = static_cast<double>(q_steps);
    const double l = constants.smooth_l;
    const double l_max_sq = constants.smooth_l_max * constants.smooth_l_max;
    report.descent_term = 4.0 * (initial_loss - final_loss) / (eta * q * r);
    report.variance_term =
        4.0 * (eta * l * q + 4.0 * eta * eta * q * q * l_max_sq +
               8.0 * eta * eta * eta * q * q * q * l * l_max_sq) *
        constants.sigma_sq_total();
    report.rhs = report.descent_term + report.variance_term;
    report.eta_max = eta_ceiling(constants, q_steps);
    report.eta_admissible = eta <= report.eta_max;
    report.satisfied = report.lhs <= report.rhs;
    return report;
}

std::string to_string(ReductionKind kind) {
    switch (kind) {
        case ReductionKind::N1LocalSgd: return "n1_local_sgd";
        case ReductionKind::K1Vfl: return "k1_vfl";
        case ReductionKind::Q1Centralized: return "q1_centralized";
    }
    return "?";
}

double max_fd_relative_error(Architecture arch, LossKind kind, int probes, std::uint64_t seed,
                             double step) {
    double worst = 0.0;
    for (int p = 0; p < probes; ++p) {
        Stream g(seed, kTagProbe, static_cast<std::uint64_t>(p));
        const int d = 1 + static_cast<int>(g.below(6));
        const int h = 1 + static_cast<int>(g.below(5));
        const int n = 1 + static_cast<int>(g.below(5));
        const int classes = (kind == LossKind::SoftmaxCrossEntropy)
                                ? 2 + static_cast<int>(g.below(4))
                                : 1;
        SiloModelSpec spec{0, d, classes, arch, arch == Architecture::Mlp ? h : 0};
        LossSpec loss{kind, classes};

        ParamBlock block;
        block.values.resize(spec.param_count());
        for (double& v : block.values) v = g.uniform(-0.9, 0.9);

        Matrix rows(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
        for (double& v : rows.data()) v = 0.8 * g.normal();
        Matrix other(static_cast<std::size_t>(n), static_cast<std::size_t>(classes));
        for (double& v : other.data()) v = 0.5 * g.normal();

        std::vector<double> labels(static_cast<std::size_t>(n));
        for (double& y : labels) {
            switch (kind) {
                case LossKind::SquaredError: y = g.normal(); break;
                case LossKind::BinaryCrossEntropyWithLogit:
                    y = static_cast<double>(g.below(2));
                    break;
                case LossKind::SoftmaxCrossEntropy:
                    y = static_cast<double>(g.below(static_cast<std::uint64_t>(classes)));
                    break;
            }
        }

        const auto analytic = partial_gradient(spec, block, rows, other, labels, loss);

        auto loss_at = [&](const ParamBlock& b) {
            Matrix sum = embed(spec, b, rows);
            for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] += other.data()[i];
            return composite_loss(sum, labels, loss);
        };

        std::vector<double> fd(block.size());
        ParamBlock probe_block = block;
        for (std::size_t i = 0; i < block.size(); ++i) {
            const double saved = probe_block.values[i];
            probe_block.values[i] = saved + step;
            const double up = loss_at(probe_block);
            probe_block.values[i] = saved - step;
            const double down = loss_at(probe_block);
            probe_block.values[i] = saved;
            fd[i] = (up - down) / (2.0 * step);
        }

        std::vector<double> diff(block.size());
        for (std::size_t i = 0; i < block.size(); ++i) diff[i] = analytic[i] - fd[i];
        const double rel = l2_norm(diff) / std::max(l2_norm(fd), 1e-12);
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace tdcd
