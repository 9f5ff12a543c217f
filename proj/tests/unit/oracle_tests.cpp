#include <doctest.h>

#include <cmath>
#include <vector>

#include "tdcd/errors.hpp"
#include "tdcd/oracles.hpp"
#include "tdcd/prng.hpp"

#include "test_support.hpp"

using namespace tdcd;
using tdcd::testing::quad_setup;

namespace {

std::vector<std::vector<HorizontalShard>> shards_of(const EngineSetup& s) {
    std::vector<std::vector<HorizontalShard>> out;
    for (const auto& silo : s.silos) out.push_back(silo.shards);
    return out;
}

std::vector<ParamBlock> init_blocks(const EngineSetup& s, std::uint64_t seed) {
    std::vector<ParamBlock> blocks;
    for (const auto& silo : s.silos) blocks.push_back(init_block(silo.spec, seed));
    return blocks;
}

} // namespace

TEST_CASE("the first centralized step matches the hand-written update") {
    const EngineSetup s = quad_setup(4, 2, {2}, {1}, 1, 0.1, 4, 1);
    const ObjectiveContext ctx = make_context(s);
    const auto traj = centralized_sgd_reference(ctx, 19, s.batch_seed, 0.1, 4, 1);
    REQUIRE(traj.iterates.size() == 2);

    // theta1 = theta0 - eta (2/M) X^T (X theta0 - y), written out by hand.
    const auto theta0 = traj.iterates[0];
    const Matrix& x = s.silos[0].features;
    std::vector<double> expect = theta0;
    for (std::size_t c = 0; c < 2; ++c) {
        double g = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            double z = 0.0;
            for (std::size_t cc = 0; cc < 2; ++cc) z += x(i, cc) * theta0[cc];
            g += x(i, c) * 2.0 * (z - s.labels[i]);
        }
        expect[c] -= 0.1 * g / 4.0;
    }
    for (std::size_t c = 0; c < 2; ++c)
        CHECK(traj.iterates[1][c] == doctest::Approx(expect[c]).epsilon(1e-12));
}

TEST_CASE("combination counting and enumeration") {
    CHECK(combination_count(8, 4) == 70);
    CHECK(combination_count(50, 2) == 1225);
    CHECK(combination_count(5, 0) == 1);
    CHECK(combination_count(5, 5) == 1);
    CHECK(combination_count(40, 20, 1000) == 1001); // saturated

    std::vector<std::vector<long>> sets;
    for_each_combination(5, 3, [&](const std::vector<long>& ids) { sets.push_back(ids); });
    REQUIRE(sets.size() == 10);
    CHECK(sets.front() == std::vector<long>{0, 1, 2});
    CHECK(sets.back() == std::vector<long>{2, 3, 4});
    for (std::size_t i = 1; i < sets.size(); ++i) CHECK(sets[i - 1] < sets[i]); // lexicographic
}

TEST_CASE("the ID-weighted batch average recovers the exact partial gradient") {
    const EngineSetup s = quad_setup(6, 4, {2, 2}, {2, 2}, 1, 0.0, 2, 0);
    const ObjectiveContext ctx = make_context(s);
    const auto blocks = init_blocks(s, 23);

    const auto averaged = batch_averaged_weighted_gradient(ctx, shards_of(s), blocks, 2);
    const auto exact = full_gradient(ctx, blocks);
    REQUIRE(averaged.size() == exact.size());
    for (std::size_t j = 0; j < exact.size(); ++j)
        for (std::size_t i = 0; i < exact[j].size(); ++i)
            CHECK(std::abs(averaged[j][i] - exact[j][i]) <= 1e-12);
}

TEST_CASE("client-gradient variance vanishes exactly when K=1 and B=M") {
    const EngineSetup s = quad_setup(6, 4, {2, 2}, {1, 1}, 1, 0.0, 6, 0);
    const ObjectiveContext ctx = make_context(s);
    const auto blocks = init_blocks(s, 29);

    const auto zero = enumerated_sigma_sq(ctx, shards_of(s), blocks, 6);
    for (double v : zero) CHECK(v == 0.0);

    const auto positive = enumerated_sigma_sq(ctx, shards_of(s), blocks, 2);
    for (double v : positive) CHECK(v > 0.0);
}

TEST_CASE("analytic constants on the all-ones design") {
    EngineSetup s = quad_setup(2, 1, {1}, {1}, 1, 0.0, 2, 0);
    s.silos[0].features(0, 0) = 1.0;
    s.silos[0].features(1, 0) = 1.0;
    const ObjectiveContext ctx = make_context(s);
    ProbeConfig probe;
    probe.batch_size = 2;
    const BoundConstants c = analytic_constants(ctx, shards_of(s), probe);
    CHECK(c.smooth_l == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(c.smooth_l_max == doctest::Approx(2.0).epsilon(1e-12));
    REQUIRE(c.sigma_sq.size() == 1);
    CHECK(c.sigma_sq[0] == 0.0);
    CHECK(c.source == BoundConstants::Source::Analytic);
}

TEST_CASE("sampled Lipschitz estimates never exceed the analytic constants") {
    const EngineSetup s = quad_setup(8, 4, {2, 2}, {2, 2}, 1, 0.0, 4, 0);
    const ObjectiveContext ctx = make_context(s);
    ProbeConfig probe;
    probe.batch_size = 4;
    probe.pairs = 128;
    const BoundConstants analytic = analytic_constants(ctx, shards_of(s), probe);
    const BoundConstants estimated = estimate_constants(ctx, shards_of(s), probe);
    CHECK(estimated.smooth_l <= analytic.smooth_l * (1.0 + 1e-9));
    CHECK(estimated.smooth_l_max <= analytic.smooth_l_max * (1.0 + 1e-9));
    CHECK(estimated.source == BoundConstants::Source::Estimated);
    // Same enumeration path for the variances.
    REQUIRE(estimated.sigma_sq.size() == analytic.sigma_sq.size());
    for (std::size_t j = 0; j < analytic.sigma_sq.size(); ++j)
        CHECK(estimated.sigma_sq[j] == doctest::Approx(analytic.sigma_sq[j]).epsilon(1e-12));
}

TEST_CASE("the learning-rate ceiling is 1 / (8 Q max(L, Lmax))") {
    BoundConstants c;
    c.smooth_l = 2.0;
    c.smooth_l_max = 5.0;
    c.sigma_sq = {0.0};
    CHECK(eta_ceiling(c, 1) == doctest::Approx(1.0 / 40.0));
    CHECK(eta_ceiling(c, 4) == doctest::Approx(1.0 / 160.0));
    c.smooth_l_max = 1.0;
    CHECK(eta_ceiling(c, 1) == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("the bound collapses to the descent term when the variance is zero") {
    BoundConstants c;
    c.smooth_l = 2.0;
    c.smooth_l_max = 2.0;
    c.sigma_sq = {0.0, 0.0};
    const double eta = eta_ceiling(c, 2);
    const BoundReport r = convergence_bound({1.0, 1.0, 1.0, 1.0}, c, eta, 2, 10.0, 4.0);
    CHECK(r.lhs == doctest::Approx(1.0));
    CHECK(r.variance_term == 0.0);
    CHECK(r.rhs == doctest::Approx(r.descent_term));
    CHECK(r.descent_term == doctest::Approx(4.0 * (10.0 - 4.0) / (eta * 2.0 * 4.0)));
    CHECK(r.eta_admissible);

    const BoundReport above = convergence_bound({1.0}, c, eta * 1.01, 2, 10.0, 4.0);
    CHECK_FALSE(above.eta_admissible);

    CHECK_THROWS_AS(convergence_bound({}, c, eta, 2, 10.0, 4.0), ConfigError);
    CHECK_THROWS_AS(convergence_bound({1.0}, c, 0.0, 2, 10.0, 4.0), ConfigError);
}

TEST_CASE("reduction checks pass on their native topologies") {
    SUBCASE("single silo reduces to local SGD") {
        const EngineSetup s = quad_setup(12, 4, {4}, {3}, 3, 0.02, 6, 8);
        const ReductionReport r = reduction_check(ReductionKind::N1LocalSgd, s, 15);
        CHECK(r.pass);
        CHECK(r.max_rel_deviation <= 1e-10);
    }
    SUBCASE("one client per silo reduces to single-tier vertical training") {
        const EngineSetup s = quad_setup(12, 4, {2, 2}, {1, 1}, 3, 0.02, 6, 8);
        const ReductionReport r = reduction_check(ReductionKind::K1Vfl, s, 16);
        CHECK(r.pass);
    }
    SUBCASE("Q=1 with full batches and even shards reduces to centralized SGD") {
        const EngineSetup s = quad_setup(8, 4, {2, 2}, {2, 2}, 1, 0.02, 8, 8);
        const ReductionReport r = reduction_check(ReductionKind::Q1Centralized, s, 17);
        CHECK(r.pass);
    }
    SUBCASE("the centralized reduction refuses mini-batches with K > 1") {
        const EngineSetup s = quad_setup(8, 4, {2, 2}, {2, 2}, 1, 0.02, 4, 8);
        CHECK_THROWS_AS(reduction_check(ReductionKind::Q1Centralized, s, 18), ConfigError);
    }
}
