#include "tdcd/synthetic.hpp"

#include <cmath>
#include <string>

#include "tdcd/errors.hpp"
#include "tdcd/linalg.hpp"
#include "tdcd/prng.hpp"

namespace tdcd {

std::string to_string(SyntheticTask task) {
    return task == SyntheticTask::LeastSquares ? "least_squares" : "logistic";
}

SyntheticTask synthetic_task_from_string(const std::string& name) {
    if (name == "least_squares") return SyntheticTask::LeastSquares;
    if (name == "logistic") return SyntheticTask::Logistic;
    throw ConfigError("unknown synthetic task '" + name + "' (expected least_squares or logistic)");
}

namespace {

void check_spec(const SyntheticSpec& spec) {
    if (spec.samples == 0) throw ConfigError("synthetic: samples must be positive");
    if (spec.features == 0) throw ConfigError("synthetic: features must be positive");
    if (spec.condition < 1.0) throw ConfigError("synthetic: condition must be >= 1");
    if (spec.correlation < 0.0 || spec.correlation >= 1.0)
        throw ConfigError("synthetic: correlation must lie in [0, 1)");
    if (spec.noise < 0.0) throw ConfigError("synthetic: noise must be >= 0");
    if (!spec.theta_star_override.empty() && spec.theta_star_override.size() != spec.features)
        throw ConfigError("synthetic: theta_star override has " +
                          std::to_string(spec.theta_star_override.size()) + " entries, expected " +
                          std::to_string(spec.features));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t data_seed,
                                   const std::vector<int>& silo_dims) {
    check_spec(spec);
    const std::size_t m = spec.samples;
    const std::size_t d = spec.features;

    std::vector<double> scale(d, 1.0);
    if (d > 1) {
        const double denom = 2.0 * static_cast<double>(d - 1);
        for (std::size_t c = 0; c < d; ++c)
            scale[c] = std::pow(spec.condition, -static_cast<double>(c) / denom);
    }

    // Row-major feature draws: one shared factor per row, then one
    // independent draw per column, so the stream layout is stable even when
    // correlation is zero.
    Dataset dataset;
    dataset.features = Matrix(m, d);
    dataset.labels.resize(m);
    const double rho = spec.correlation;
    const double w_shared = std::sqrt(rho);
    const double w_own = std::sqrt(1.0 - rho);
    Stream xs(data_seed, kTagSyntheticX, 0);
    for (std::size_t i = 0; i < m; ++i) {
        const double shared = xs.normal();
        for (std::size_t c = 0; c < d; ++c) {
            const double own = xs.normal();
            dataset.features(i, c) = scale[c] * (w_shared * shared + w_own * own);
        }
    }

    SyntheticMetadata meta;
    if (spec.theta_star_override.empty()) {
        Stream ts(data_seed, kTagSyntheticTheta, 0);
        meta.theta_star.resize(d);
        for (std::size_t c = 0; c < d; ++c) meta.theta_star[c] = ts.normal();
    } else {
        meta.theta_star = spec.theta_star_override;
    }

    Stream ns(data_seed, kTagSyntheticNoise, 0);
    for (std::size_t i = 0; i < m; ++i) {
        double z = 0.0;
        for (std::size_t c = 0; c < d; ++c) z += dataset.features(i, c) * meta.theta_star[c];
        if (spec.task == SyntheticTask::LeastSquares) {
            const double eps = ns.normal(); // drawn even when noise == 0
            dataset.labels[i] = z + spec.noise * eps;
        } else {
            const double u = ns.next_f64();
            dataset.labels[i] = (u < sigmoid(spec.margin * z)) ? 1.0 : 0.0;
        }
    }

    const Matrix gram = scaled_gram(dataset.features, 2.0 / static_cast<double>(m));
    meta.smooth_l = lambda_max(gram);

    if (spec.task == SyntheticTask::LeastSquares) {
        // Normal equations X^T X theta = X^T y; exact minimiser of the
        // mean squared residual whenever X has full column rank.
        Matrix xtx(d, d);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) xtx(a, b) = gram(a, b) * (static_cast<double>(m) / 2.0);
        std::vector<double> xty(d, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < d; ++c) xty[c] += dataset.features(i, c) * dataset.labels[i];
        meta.theta_opt = solve_linear(xtx, xty);
        double sse = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double z = 0.0;
            for (std::size_t c = 0; c < d; ++c) z += dataset.features(i, c) * meta.theta_opt[c];
            const double r = z - dataset.labels[i];
            sse += r * r;
        }
        meta.optimum_loss = sse / static_cast<double>(m);
    }

    if (!silo_dims.empty()) {
        const auto parts = split_vertical(d, silo_dims);
        for (const auto& part : parts) {
            Matrix block = slice_columns(dataset.features, part.columns);
            meta.block_l.push_back(lambda_max(scaled_gram(block, 2.0 / static_cast<double>(m))));
        }
    }

    return {std::move(dataset), std::move(meta)};
}

} // namespace tdcd
