#pragma once

#include <optional>
#include <string>

#include "tdcd/objective.hpp"

namespace tdcd {

// Simulated latency constants. The default model charges one t_comm per
// communication hop, three hops per round. The split mode prices hub-client
// and hub-hub hops separately (2*t_hub_client + t_hub_hub per round).
struct LatencyModel {
    double t_comm = 0.0;
    double t_comp = 0.0;
    bool split_hops = false;
    double t_hub_client = 0.0;
    double t_hub_hub = 0.0;
};

// Simulated duration of one communication round with Q local steps:
// 3*t_comm + Q*t_comp (or the split form when enabled).
double round_latency(int q_local_steps, const LatencyModel& model);

struct MetricReport {
    std::string split;
    double loss = 0.0;
    std::optional<double> accuracy;       // classification only
    std::optional<double> f1;             // binary tasks only
    std::optional<double> top_k_accuracy; // multiclass, when top_k >= 1
    int top_k = 0;
    std::size_t sample_count = 0;
};

// Full-split evaluation of the assembled global model. Decisions: binary ->
// logit >= 0; multiclass -> argmax with ties to the lowest index. F1 is the
// positive-class harmonic mean, 0 by convention when precision+recall = 0.
MetricReport evaluate(const ObjectiveContext& ctx, const std::vector<ParamBlock>& blocks,
                      const std::string& split, int top_k = 0);

} // namespace tdcd
