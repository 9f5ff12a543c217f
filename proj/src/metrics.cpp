#include "tdcd/metrics.hpp"

namespace tdcd {

double round_latency(int q_local_steps, const LatencyModel& model) {
    if (q_local_steps < 1) throw ConfigError("round_latency: Q must be >= 1");
    const double steps = static_cast<double>(q_local_steps) * model.t_comp;
    if (model.split_hops) return 2.0 * model.t_hub_client + model.t_hub_hub + steps;
    return 3.0 * model.t_comm + steps;
}

MetricReport evaluate(const ObjectiveContext& ctx, const std::vector<ParamBlock>& blocks,
                      const std::string& split, int top_k) {
    const Matrix z = embedding_total(ctx, blocks);
    const std::size_t n = z.rows();
    const std::size_t classes = z.cols();

    MetricReport report;
    report.split = split;
    report.sample_count = n;
    report.top_k = top_k;
    report.loss = composite_loss(z, ctx.labels, ctx.loss);

    if (ctx.loss.kind == LossKind::SquaredError) return report; // regression: loss only

    if (ctx.loss.kind == LossKind::BinaryCrossEntropyWithLogit) {
        long correct = 0, tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool pred = z(i, 0) >= 0.0;
            const bool truth = ctx.labels[i] != 0.0;
            if (pred == truth) ++correct;
            if (pred && truth) ++tp;
            if (pred && !truth) ++fp;
            if (!pred && truth) ++fn;
        }
        report.accuracy = static_cast<double>(correct) / static_cast<double>(n);
        const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        report.f1 =
            precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        return report;
    }

    // Softmax: argmax with ties to the lowest index.
    long correct = 0, topk_correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = z.row(i);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (row[c] > row[arg]) arg = c;
        const auto y = static_cast<std::size_t>(ctx.labels[i]);
        if (arg == y) ++correct;
        if (top_k >= 1) {
            // Rank of the true class under the same tie order as argmax.
            std::size_t rank = 0;
            for (std::size_t c = 0; c < classes; ++c)
                if (row[c] > row[y] || (row[c] == row[y] && c < y)) ++rank;
            if (rank < static_cast<std::size_t>(top_k)) ++topk_correct;
        }
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (top_k >= 1)
        report.top_k_accuracy = static_cast<double>(topk_correct) / static_cast<double>(n);
    return report;
}

} // namespace tdcd
