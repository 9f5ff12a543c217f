#include <doctest.h>

#include <cmath>

#include "tdcd/errors.hpp"
#include "tdcd/metrics.hpp"
#include "tdcd/objective.hpp"

using namespace tdcd;

namespace {

// One-silo identity-ish context so logits are directly controllable:
// linear model, one feature per sample equal to 1, block = logits row.
ObjectiveContext logit_context(const std::vector<double>& labels, int embedding_dim) {
    ObjectiveContext ctx;
    ctx.specs.push_back(SiloModelSpec{0, 1, embedding_dim, Architecture::Linear, 0});
    ctx.silo_features.emplace_back(labels.size(), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) ctx.silo_features[0](i, 0) = 1.0;
    ctx.labels = labels;
    return ctx;
}

} // namespace

TEST_CASE("round latency follows 3 t_comm + Q t_comp") {
    struct Row {
        int q;
        double t_comm, t_comp, expect;
    };
    const Row table[] = {
        {1, 0.0, 0.0, 0.0},    {1, 1.0, 1.0, 4.0},     {5, 10.0, 1.0, 35.0},
        {10, 100.0, 1.0, 310.0}, {2, 0.5, 0.25, 2.0},  {25, 100.0, 1.0, 325.0},
        {1, 100.0, 0.0, 300.0},  {7, 3.0, 2.0, 23.0},  {4, 0.0, 1.5, 6.0},
        {100, 1.0, 0.5, 53.0},
    };
    for (const Row& r : table) {
        LatencyModel m;
        m.t_comm = r.t_comm;
        m.t_comp = r.t_comp;
        CHECK(round_latency(r.q, m) == r.expect);
    }
    LatencyModel m;
    CHECK_THROWS_AS(round_latency(0, m), ConfigError);
}

TEST_CASE("split-hop latency charges the asymmetric legs") {
    LatencyModel m;
    m.split_hops = true;
    m.t_hub_client = 3.0;
    m.t_hub_hub = 10.0;
    m.t_comp = 2.0;
    // 2 * 3 + 10 + 4 * 2
    CHECK(round_latency(4, m) == 24.0);
}

TEST_CASE("squared-error evaluation reports loss only") {
    ObjectiveContext ctx = logit_context({1.0, 2.0}, 1);
    ctx.loss = {LossKind::SquaredError, 1};
    std::vector<ParamBlock> blocks{ParamBlock{{1.5}}}; // both predictions 1.5
    const MetricReport r = evaluate(ctx, blocks, "train", 0);
    CHECK(r.split == "train");
    CHECK(r.sample_count == 2);
    CHECK(r.loss == doctest::Approx(0.25));
    CHECK_FALSE(r.accuracy.has_value());
    CHECK_FALSE(r.f1.has_value());
    CHECK_FALSE(r.top_k_accuracy.has_value());
}

TEST_CASE("binary metrics use the logit-sign decision rule") {
    // labels:      1    1    0    0
    // logit 0.7 -> predict 1 for all: TP=2 FP=2 FN=0
    ObjectiveContext ctx = logit_context({1.0, 1.0, 0.0, 0.0}, 1);
    ctx.loss = {LossKind::BinaryCrossEntropyWithLogit, 1};
    const MetricReport r = evaluate(ctx, {ParamBlock{{0.7}}}, "train", 0);
    REQUIRE(r.accuracy.has_value());
    REQUIRE(r.f1.has_value());
    CHECK(*r.accuracy == doctest::Approx(0.5));
    // precision 0.5, recall 1.0 -> f1 = 2/3
    CHECK(*r.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("f1 is zero when nothing is predicted positive") {
    ObjectiveContext ctx = logit_context({1.0, 0.0}, 1);
    ctx.loss = {LossKind::BinaryCrossEntropyWithLogit, 1};
    const MetricReport r = evaluate(ctx, {ParamBlock{{-2.0}}}, "train", 0);
    REQUIRE(r.f1.has_value());
    CHECK(*r.f1 == 0.0);
    CHECK(*r.accuracy == doctest::Approx(0.5));
}

TEST_CASE("multiclass accuracy breaks argmax ties toward the lowest class") {
    // Block rows give every sample identical logits; tie -> class 0.
    ObjectiveContext ctx = logit_context({0.0, 1.0, 2.0}, 3);
    ctx.loss = {LossKind::SoftmaxCrossEntropy, 3};
    const MetricReport r = evaluate(ctx, {ParamBlock{{0.4, 0.4, 0.4}}}, "train", 2);
    REQUIRE(r.accuracy.has_value());
    CHECK(*r.accuracy == doctest::Approx(1.0 / 3.0)); // only the label-0 sample
    REQUIRE(r.top_k_accuracy.has_value());
    CHECK(r.top_k == 2);
    // Ranks under the tie rule: class 0 rank 0, class 1 rank 1, class 2 rank 2.
    CHECK(*r.top_k_accuracy == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("top-k saturates at the class count") {
    ObjectiveContext ctx = logit_context({2.0, 0.0}, 3);
    ctx.loss = {LossKind::SoftmaxCrossEntropy, 3};
    const MetricReport r = evaluate(ctx, {ParamBlock{{0.9, -0.2, 0.1}}}, "train", 3);
    REQUIRE(r.top_k_accuracy.has_value());
    CHECK(*r.top_k_accuracy == 1.0);
}
