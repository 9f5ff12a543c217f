#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tdcd/objective.hpp"
#include "tdcd/protocol.hpp"

namespace tdcd {

// Smoothness and variance constants feeding the convergence bound.
struct BoundConstants {
    enum class Source { Analytic, Estimated };

    double smooth_l = 0.0;         // Lipschitz constant of the full gradient
    double smooth_l_max = 0.0;     // max over (k, j) of the client-gradient constant
    std::vector<double> sigma_sq;  // per-silo variance bound
    Source source = Source::Estimated;

    double sigma_sq_total() const {
        double s = 0.0;
        for (double v : sigma_sq) s += v;
        return s;
    }
};

struct BoundReport {
    double lhs = 0.0;           // mean round-start squared gradient norm
    double rhs = 0.0;
    double descent_term = 0.0;  // 4 (L(0) - L(T)) / (eta Q R)
    double variance_term = 0.0; // 4 (eta L Q + 4 eta^2 Q^2 Lmax^2 + 8 eta^3 Q^3 L Lmax^2) sum sigma^2
    double eta_max = 0.0;       // 1 / (8 Q max(L, Lmax))
    bool eta_admissible = false;
    bool satisfied = false;
};

// Iterates of a reference trajectory, one flat global vector per iteration
// (T+1 entries including the start).
struct ReferenceTrajectory {
    std::vector<std::vector<double>> iterates;
};

// Full-model mini-batch SGD on the composite objective: every block updated
// simultaneously from gradients at the same iterate, batch t drawn exactly
// as the protocol draws it at iteration t.
ReferenceTrajectory centralized_sgd_reference(const ObjectiveContext& ctx,
                                              std::uint64_t init_seed, std::uint64_t batch_seed,
                                              double eta, std::size_t batch_size,
                                              long iterations);

// Local SGD with periodic averaging for the single-silo topology: each
// client steps on its own slice of the shared batch (no cross-silo terms),
// blocks averaged every q steps. Virtual iterate recorded every iteration.
ReferenceTrajectory local_sgd_reference(const ObjectiveContext& ctx,
                                        const std::vector<HorizontalShard>& shards,
                                        std::uint64_t init_seed, std::uint64_t batch_seed,
                                        double eta, std::size_t batch_size, int q_steps,
                                        long rounds);

// Single-tier vertical training (one client per silo), written directly from
// the update rule: per round, freeze cross-silo embedding sums at the round
// start, then q steps per silo recomputing own embeddings.
ReferenceTrajectory single_tier_vfl_reference(const ObjectiveContext& ctx,
                                              std::uint64_t init_seed, std::uint64_t batch_seed,
                                              double eta, std::size_t batch_size, int q_steps,
                                              long rounds);

enum class ReductionKind { N1LocalSgd, K1Vfl, Q1Centralized };

struct ReductionReport {
    ReductionKind kind;
    double max_rel_deviation = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Runs the engine and the matching reference on identical seeds and reports
// the maximum relative deviation between per-iteration virtual iterates.
ReductionReport reduction_check(ReductionKind kind, const EngineSetup& setup,
                                std::uint64_t init_seed, double tolerance = 1e-10);

// Number of B-subsets of {0..M-1}, saturating at `cap`.
long long combination_count(std::size_t m, std::size_t b, long long cap = 1LL << 62);

// Visits every B-subset in lexicographic order (ids ascending).
void for_each_combination(std::size_t m, std::size_t b,
                          const std::function<void(const std::vector<long>&)>& fn);

// The ID-weighted client-gradient mean (sum_k |batch slice k| * g_kj) / B,
// averaged over every possible batch. Equals the exact partial gradient by
// the unbiasedness property; exposed so tests can assert it.
std::vector<std::vector<double>> batch_averaged_weighted_gradient(
    const ObjectiveContext& ctx, const std::vector<std::vector<HorizontalShard>>& shards,
    const std::vector<ParamBlock>& blocks, std::size_t batch_size);

// Exact per-silo variance of the client gradients at one iterate: max over
// clients of the mean over enumerated batches of ||g_kj - grad_j L||^2.
// Batches where a client holds no samples are skipped for that client.
std::vector<double> enumerated_sigma_sq(const ObjectiveContext& ctx,
                                        const std::vector<std::vector<HorizontalShard>>& shards,
                                        const std::vector<ParamBlock>& blocks,
                                        std::size_t batch_size);

// Central finite-difference check of partial_gradient over seeded random
// probes (shapes, parameters, inputs, stale other-silo sums all drawn from
// the probe stream). Returns the worst L2-relative error across probes.
double max_fd_relative_error(Architecture arch, LossKind kind, int probes, std::uint64_t seed,
                             double step = 1e-6);

struct ProbeConfig {
    int pairs = 64;            // random point pairs per Lipschitz probe
    double radius = 0.5;       // perturbation radius around probe iterates
    int probe_iterates = 5;    // generated when no override is given
    std::uint64_t seed = 0;
    std::size_t batch_size = 0;          // B for variance probing
    std::size_t sampled_batches = 64;    // when enumeration is infeasible
    long long enumeration_cap = 200000;  // max C(M,B) to enumerate
    std::vector<std::vector<double>> iterates_override; // e.g. run round starts
};

// Analytic constants for linear models under the squared-error loss:
// L = lambda_max((2/M) X^T X); client constants as the largest operator norm
// of the client-batch gradient map (exact over enumerated batches when
// feasible, a rank-one upper bound otherwise). Variances by enumeration at
// the probe iterates. Throws for non-quadratic objectives.
BoundConstants analytic_constants(const ObjectiveContext& ctx,
                                  const std::vector<std::vector<HorizontalShard>>& shards,
                                  const ProbeConfig& probe);

// Sampled estimates for arbitrary models: Lipschitz ratios over random point
// pairs, variances over enumerated or sampled batches at probe iterates.
// Sampled values are lower bounds on the true constants.
BoundConstants estimate_constants(const ObjectiveContext& ctx,
                                  const std::vector<std::vector<HorizontalShard>>& shards,
                                  const ProbeConfig& probe);

// Learning-rate ceiling of the convergence guarantee.
double eta_ceiling(const BoundConstants& constants, int q_steps);

// Evaluates the convergence bound: lhs = mean of the recorded round-start
// squared gradient norms, rhs = descent term + variance term.
BoundReport convergence_bound(const std::vector<double>& round_start_grad_sq,
                              const BoundConstants& constants, double eta, int q_steps,
                              double initial_loss, double final_loss);

std::string to_string(ReductionKind kind);

} // namespace tdcd
