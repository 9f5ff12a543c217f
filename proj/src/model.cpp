#include "tdcd/model.hpp"

#include <cmath>
#include <limits>

#include "tdcd/prng.hpp"

namespace tdcd {

namespace {

bool all_finite(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

// Numerically stable log(1 + exp(z)).
double softplus(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct MlpOffsets {
    std::size_t w1, b1, w2, b2;
};

MlpOffsets mlp_offsets(const SiloModelSpec& s) {
    const std::size_t d = static_cast<std::size_t>(s.input_dim);
    const std::size_t h = static_cast<std::size_t>(s.hidden_width);
    const std::size_t e = static_cast<std::size_t>(s.embedding_dim);
    return {0, d * h, d * h + h, d * h + h + h * e};
}

} // namespace

std::size_t SiloModelSpec::param_count() const {
    const std::size_t d = static_cast<std::size_t>(input_dim);
    const std::size_t e = static_cast<std::size_t>(embedding_dim);
    if (architecture == Architecture::Linear) return d * e;
    const std::size_t h = static_cast<std::size_t>(hidden_width);
    return d * h + h + h * e + e;
}

bool ParamBlock::finite() const { return all_finite(values.data(), values.size()); }

std::string to_string(Architecture a) {
    return a == Architecture::Linear ? "linear" : "mlp";
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::SquaredError: return "squared_error";
        case LossKind::BinaryCrossEntropyWithLogit: return "binary_cross_entropy_with_logit";
        case LossKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "?";
}

void validate_spec(const SiloModelSpec& spec) {
    if (spec.input_dim < 1) throw ConfigError("model spec: input_dim must be >= 1");
    if (spec.embedding_dim < 1) throw ConfigError("model spec: embedding_dim must be >= 1");
    if (spec.architecture == Architecture::Mlp && spec.hidden_width < 1)
        throw ConfigError("model spec: mlp hidden_width must be >= 1");
}

void validate_loss(const LossSpec& loss, int embedding_dim) {
    switch (loss.kind) {
        case LossKind::SquaredError:
        case LossKind::BinaryCrossEntropyWithLogit:
            if (embedding_dim != loss.label_arity)
                throw ConfigError("loss: embedding_dim must equal label arity (" +
                                  std::to_string(loss.label_arity) + ") for " +
                                  to_string(loss.kind));
            break;
        case LossKind::SoftmaxCrossEntropy:
            if (loss.label_arity < 2)
                throw ConfigError("loss: softmax_cross_entropy needs at least 2 classes");
            if (embedding_dim != loss.label_arity)
                throw ConfigError("loss: embedding_dim must equal class count for softmax");
            break;
    }
}

ParamBlock init_block(const SiloModelSpec& spec, std::uint64_t init_seed) {
    validate_spec(spec);
    Stream g(init_seed, kTagInit, static_cast<std::uint64_t>(spec.silo_index));
    ParamBlock block;
    block.values.resize(spec.param_count());
    if (spec.architecture == Architecture::Linear) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
        for (double& v : block.values) v = g.uniform(-bound, bound);
        return block;
    }
    const auto off = mlp_offsets(spec);
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_width));
    for (std::size_t i = off.w1; i < off.w2; ++i) block.values[i] = g.uniform(-bound1, bound1);
    for (std::size_t i = off.w2; i < block.values.size(); ++i)
        block.values[i] = g.uniform(-bound2, bound2);
    return block;
}

Matrix embed(const SiloModelSpec& spec, const ParamBlock& block, const Matrix& rows) {
    validate_spec(spec);
    if (rows.cols() != static_cast<std::size_t>(spec.input_dim))
        throw ConfigError("embed: rows have " + std::to_string(rows.cols()) +
                          " columns, spec expects " + std::to_string(spec.input_dim));
    if (block.size() != spec.param_count())
        throw ConfigError("embed: block length " + std::to_string(block.size()) +
                          " does not match spec (" + std::to_string(spec.param_count()) + ")");

    const std::size_t n = rows.rows();
    const std::size_t d = static_cast<std::size_t>(spec.input_dim);
    const std::size_t e = static_cast<std::size_t>(spec.embedding_dim);
    Matrix out(n, e);

    if (spec.architecture == Architecture::Linear) {
        // out[i][c] = sum_d rows[i][d] * W[d][c]
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) {
                const double x = rows(i, k);
                for (std::size_t c = 0; c < e; ++c) out(i, c) += x * block.values[k * e + c];
            }
        return out;
    }

    const std::size_t h = static_cast<std::size_t>(spec.hidden_width);
    const auto off = mlp_offsets(spec);
    const double* w1 = block.values.data() + off.w1;
    const double* b1 = block.values.data() + off.b1;
    const double* w2 = block.values.data() + off.w2;
    const double* b2 = block.values.data() + off.b2;

    std::vector<double> a1(h);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < h; ++j) {
            double z = b1[j];
            for (std::size_t k = 0; k < d; ++k) z += rows(i, k) * w1[k * h + j];
            a1[j] = std::tanh(z);
        }
        for (std::size_t c = 0; c < e; ++c) {
            double z = b2[c];
            for (std::size_t j = 0; j < h; ++j) z += a1[j] * w2[j * e + c];
            out(i, c) = z;
        }
    }
    return out;
}

double composite_loss(const Matrix& embedding_sum, const std::vector<double>& labels,
                      const LossSpec& loss) {
    const std::size_t n = embedding_sum.rows();
    const std::size_t e = embedding_sum.cols();
    if (labels.size() != n) throw ConfigError("composite_loss: label count mismatch");
    if (n == 0) return 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        if (!all_finite(embedding_sum.row(i), e) || !std::isfinite(labels[i]))
            throw NumericError("composite_loss: non-finite input at sample index " +
                               std::to_string(i));
    }

    double total = 0.0;
    switch (loss.kind) {
        case LossKind::SquaredError:
            for (std::size_t i = 0; i < n; ++i) {
                const double r = embedding_sum(i, 0) - labels[i];
                total += r * r;
            }
            break;
        case LossKind::BinaryCrossEntropyWithLogit:
            for (std::size_t i = 0; i < n; ++i) {
                const double z = embedding_sum(i, 0);
                total += softplus(z) - labels[i] * z;
            }
            break;
        case LossKind::SoftmaxCrossEntropy:
            for (std::size_t i = 0; i < n; ++i) {
                const double* z = embedding_sum.row(i);
                double zmax = z[0];
                for (std::size_t c = 1; c < e; ++c) zmax = std::max(zmax, z[c]);
                double lse = 0.0;
                for (std::size_t c = 0; c < e; ++c) lse += std::exp(z[c] - zmax);
                const auto y = static_cast<std::size_t>(labels[i]);
                if (y >= e)
                    throw NumericError("composite_loss: class label out of range at sample " +
                                       std::to_string(i));
                total += zmax + std::log(lse) - z[y];
            }
            break;
    }
    return total / static_cast<double>(n);
}

Matrix loss_output_gradient(const Matrix& embedding_sum, const std::vector<double>& labels,
                            const LossSpec& loss) {
    const std::size_t n = embedding_sum.rows();
    const std::size_t e = embedding_sum.cols();
    if (labels.size() != n) throw ConfigError("loss gradient: label count mismatch");
    Matrix dz(n, e);
    switch (loss.kind) {
        case LossKind::SquaredError:
            for (std::size_t i = 0; i < n; ++i)
                dz(i, 0) = 2.0 * (embedding_sum(i, 0) - labels[i]);
            break;
        case LossKind::BinaryCrossEntropyWithLogit:
            for (std::size_t i = 0; i < n; ++i)
                dz(i, 0) = sigmoid(embedding_sum(i, 0)) - labels[i];
            break;
        case LossKind::SoftmaxCrossEntropy:
            for (std::size_t i = 0; i < n; ++i) {
                const double* z = embedding_sum.row(i);
                double zmax = z[0];
                for (std::size_t c = 1; c < e; ++c) zmax = std::max(zmax, z[c]);
                double lse = 0.0;
                for (std::size_t c = 0; c < e; ++c) lse += std::exp(z[c] - zmax);
                for (std::size_t c = 0; c < e; ++c) dz(i, c) = std::exp(z[c] - zmax) / lse;
                dz(i, static_cast<std::size_t>(labels[i])) -= 1.0;
            }
            break;
    }
    return dz;
}

std::vector<double> partial_gradient(const SiloModelSpec& spec, const ParamBlock& block,
                                     const Matrix& own_rows, const Matrix& other_sum,
                                     const std::vector<double>& labels, const LossSpec& loss) {
    const std::size_t n = own_rows.rows();
    const std::size_t e = static_cast<std::size_t>(spec.embedding_dim);
    if (other_sum.rows() != n || other_sum.cols() != e)
        throw ConfigError("partial_gradient: other_sum shape mismatch");
    if (labels.size() != n) throw ConfigError("partial_gradient: label count mismatch");

    std::vector<double> grad(spec.param_count(), 0.0);
    if (n == 0) return grad;

    const Matrix own = embed(spec, block, own_rows);
    const Matrix total = add(own, other_sum);
    const Matrix dz = loss_output_gradient(total, labels, loss);
    const double inv_n = 1.0 / static_cast<double>(n);
    const std::size_t d = static_cast<std::size_t>(spec.input_dim);

    if (spec.architecture == Architecture::Linear) {
        // dW[k][c] = (1/n) sum_i x[i][k] * dz[i][c]
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) {
                const double x = own_rows(i, k);
                for (std::size_t c = 0; c < e; ++c) grad[k * e + c] += x * dz(i, c);
            }
        for (double& v : grad) v *= inv_n;
    } else {
        const std::size_t h = static_cast<std::size_t>(spec.hidden_width);
        const auto off = mlp_offsets(spec);
        const double* w1 = block.values.data() + off.w1;
        const double* b1 = block.values.data() + off.b1;
        const double* w2 = block.values.data() + off.w2;
        std::vector<double> a1(h), dz1(h);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < h; ++j) {
                double z = b1[j];
                for (std::size_t k = 0; k < d; ++k) z += own_rows(i, k) * w1[k * h + j];
                a1[j] = std::tanh(z);
            }
            // Output layer.
            for (std::size_t c = 0; c < e; ++c) {
                const double g = dz(i, c);
                for (std::size_t j = 0; j < h; ++j) grad[off.w2 + j * e + c] += a1[j] * g;
                grad[off.b2 + c] += g;
            }
            // Hidden layer through tanh.
            for (std::size_t j = 0; j < h; ++j) {
                double back = 0.0;
                for (std::size_t c = 0; c < e; ++c) back += dz(i, c) * w2[j * e + c];
                dz1[j] = back * (1.0 - a1[j] * a1[j]);
            }
            for (std::size_t k = 0; k < d; ++k) {
                const double x = own_rows(i, k);
                for (std::size_t j = 0; j < h; ++j) grad[off.w1 + k * h + j] += x * dz1[j];
            }
            for (std::size_t j = 0; j < h; ++j) grad[off.b1 + j] += dz1[j];
        }
        for (double& v : grad) v *= inv_n;
    }

    if (!all_finite(grad.data(), grad.size()))
        throw NumericError("partial_gradient: non-finite gradient for silo " +
                           std::to_string(spec.silo_index));
    return grad;
}

} // namespace tdcd
