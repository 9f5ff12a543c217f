#include "tdcd/objective.hpp"

#include <cmath>

namespace tdcd {

namespace {

// Per-silo embeddings of the given rows; other_sum for silo j is the
// index-order sum over l != j, mirroring the hub-exchange reduction.
std::vector<Matrix> silo_embeddings(const ObjectiveContext& ctx,
                                    const std::vector<ParamBlock>& blocks,
                                    const std::vector<long>* ids) {
    std::vector<Matrix> phi;
    phi.reserve(ctx.specs.size());
    for (std::size_t j = 0; j < ctx.specs.size(); ++j) {
        const Matrix rows =
            ids ? gather_rows(ctx.silo_features[j], *ids) : ctx.silo_features[j];
        phi.push_back(embed(ctx.specs[j], blocks[j], rows));
    }
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

} // namespace

ObjectiveContext make_context(const Dataset& dataset,
                              const std::vector<VerticalPartition>& partitions,
                              const std::vector<SiloModelSpec>& specs, const LossSpec& loss) {
    if (partitions.size() != specs.size())
        throw ConfigError("objective: partition count does not match spec count");
    ObjectiveContext ctx;
    ctx.specs = specs;
    ctx.labels = dataset.labels;
    ctx.loss = loss;
    ctx.silo_features.reserve(partitions.size());
    for (std::size_t j = 0; j < partitions.size(); ++j) {
        if (static_cast<std::size_t>(specs[j].input_dim) != partitions[j].columns.size())
            throw ConfigError("objective: silo " + std::to_string(j) + " spec input_dim " +
                              std::to_string(specs[j].input_dim) + " != owned column count " +
                              std::to_string(partitions[j].columns.size()));
        ctx.silo_features.push_back(slice_columns(dataset.features, partitions[j].columns));
    }
    return ctx;
}

Matrix embedding_total(const ObjectiveContext& ctx, const std::vector<ParamBlock>& blocks) {
    if (blocks.size() != ctx.specs.size())
        throw ConfigError("objective: block count does not match silo count");
    Matrix total(ctx.sample_count(), static_cast<std::size_t>(ctx.specs[0].embedding_dim));
    for (std::size_t j = 0; j < ctx.specs.size(); ++j)
        add_in_place(total, embed(ctx.specs[j], blocks[j], ctx.silo_features[j]));
    return total;
}

double full_loss(const ObjectiveContext& ctx, const std::vector<ParamBlock>& blocks) {
    return composite_loss(embedding_total(ctx, blocks), ctx.labels, ctx.loss);
}

std::vector<std::vector<double>> full_gradient(const ObjectiveContext& ctx,
                                               const std::vector<ParamBlock>& blocks) {
    const std::vector<Matrix> phi = silo_embeddings(ctx, blocks, nullptr);
    std::vector<std::vector<double>> grads;
    grads.reserve(ctx.specs.size());
    for (std::size_t j = 0; j < ctx.specs.size(); ++j)
        grads.push_back(partial_gradient(ctx.specs[j], blocks[j], ctx.silo_features[j],
                                         sum_excluding(phi, j), ctx.labels, ctx.loss));
    return grads;
}

std::vector<std::vector<double>> batch_gradient(const ObjectiveContext& ctx,
                                                const std::vector<ParamBlock>& blocks,
                                                const std::vector<long>& ids) {
    const std::vector<Matrix> phi = silo_embeddings(ctx, blocks, &ids);
    const std::vector<double> y = gather_labels(ctx.labels, ids);
    std::vector<std::vector<double>> grads;
    grads.reserve(ctx.specs.size());
    for (std::size_t j = 0; j < ctx.specs.size(); ++j) {
        const Matrix rows = gather_rows(ctx.silo_features[j], ids);
        grads.push_back(partial_gradient(ctx.specs[j], blocks[j], rows, sum_excluding(phi, j),
                                         y, ctx.loss));
    }
    return grads;
}

double squared_norm(const std::vector<std::vector<double>>& per_silo) {
    double s = 0.0;
    for (const auto& g : per_silo)
        for (double v : g) s += v * v;
    return s;
}

std::vector<double> concat_blocks(const std::vector<ParamBlock>& blocks) {
    std::vector<double> flat;
    std::size_t total = 0;
    for (const auto& b : blocks) total += b.size();
    flat.reserve(total);
    for (const auto& b : blocks) flat.insert(flat.end(), b.values.begin(), b.values.end());
    return flat;
}

std::vector<ParamBlock> split_global(const std::vector<double>& flat,
                                     const std::vector<SiloModelSpec>& specs) {
    std::vector<ParamBlock> blocks;
    blocks.reserve(specs.size());
    std::size_t pos = 0;
    for (const auto& spec : specs) {
        const std::size_t n = spec.param_count();
        if (pos + n > flat.size())
            throw ConfigError("split_global: flat vector shorter than spec layout");
        ParamBlock b;
        b.values.assign(flat.begin() + pos, flat.begin() + pos + n);
        blocks.push_back(std::move(b));
        pos += n;
    }
    if (pos != flat.size())
        throw ConfigError("split_global: flat vector longer than spec layout");
    return blocks;
}

} // namespace tdcd
