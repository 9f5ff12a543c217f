#pragma once

#include <vector>

#include "tdcd/data.hpp"
#include "tdcd/matrix.hpp"
#include "tdcd/model.hpp"

namespace tdcd {

// Everything needed to evaluate the composite objective
//   L(theta) = (1/M) sum_i loss( sum_j h_j(theta_j; x_ij), y_i )
// at any collection of per-silo parameter blocks. Shared by the engine
// (round metrics), the evaluation module, and the reference oracles.
struct ObjectiveContext {
    std::vector<SiloModelSpec> specs;
    std::vector<Matrix> silo_features; // one M x D_j slice per silo, shared row order
    std::vector<double> labels;        // length M
    LossSpec loss;

    std::size_t sample_count() const { return labels.size(); }
};

ObjectiveContext make_context(const Dataset& dataset,
                              const std::vector<VerticalPartition>& partitions,
                              const std::vector<SiloModelSpec>& specs, const LossSpec& loss);

// Sum over silos of h_j applied to all M rows (M x E).
Matrix embedding_total(const ObjectiveContext& ctx, const std::vector<ParamBlock>& blocks);

double full_loss(const ObjectiveContext& ctx, const std::vector<ParamBlock>& blocks);

// Exact partial derivative of the full-dataset objective per silo block.
std::vector<std::vector<double>> full_gradient(const ObjectiveContext& ctx,
                                               const std::vector<ParamBlock>& blocks);

// Mini-batch gradient over the given sample IDs (the K=1 stochastic gradient
// g_j: mean over the batch rows, exact cross-silo embeddings at `blocks`).
std::vector<std::vector<double>> batch_gradient(const ObjectiveContext& ctx,
                                                const std::vector<ParamBlock>& blocks,
                                                const std::vector<long>& ids);

double squared_norm(const std::vector<std::vector<double>>& per_silo);

// Flat global vector <-> per-silo blocks, silo order.
std::vector<double> concat_blocks(const std::vector<ParamBlock>& blocks);
std::vector<ParamBlock> split_global(const std::vector<double>& flat,
                                     const std::vector<SiloModelSpec>& specs);

} // namespace tdcd
