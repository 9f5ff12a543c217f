#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tdcd/data.hpp"

namespace tdcd {

enum class SyntheticTask { LeastSquares, Logistic };

// Deterministic benchmark generator. Features are seeded Gaussians with a
// per-column scale ramp (the population condition number of X^T X equals
// `condition`) and optional equicorrelation across columns (couples the
// blocks of a vertical split). Labels come from a planted linear model.
struct SyntheticSpec {
    std::size_t samples = 0;  // M
    std::size_t features = 0; // D
    SyntheticTask task = SyntheticTask::LeastSquares;
    double noise = 0.0;       // label noise sigma (least squares)
    double margin = 1.0;      // logit scale (logistic)
    double condition = 1.0;   // >= 1
    double correlation = 0.0; // in [0, 1): shared-factor weight rho
    std::vector<double> theta_star_override; // default: seeded standard normal
};

struct SyntheticMetadata {
    std::vector<double> theta_star;
    std::vector<double> theta_opt;        // least squares: normal-equation solution
    std::optional<double> optimum_loss;   // least squares only
    double smooth_l = 0.0;                // lambda_max((2/M) X^T X)
    std::vector<double> block_l;          // per contiguous block when dims given
};

struct SyntheticResult {
    Dataset dataset;
    SyntheticMetadata metadata;
};

std::string to_string(SyntheticTask task);
SyntheticTask synthetic_task_from_string(const std::string& name);

// silo_dims (optional) adds per-block smoothness constants to the metadata.
SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t data_seed,
                                   const std::vector<int>& silo_dims = {});

} // namespace tdcd
