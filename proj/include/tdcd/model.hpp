#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdcd/matrix.hpp"

namespace tdcd {

enum class Architecture { Linear, Mlp };

enum class LossKind { SquaredError, BinaryCrossEntropyWithLogit, SoftmaxCrossEntropy };

// Per-silo model shape. Every silo maps its feature slice to a shared
// embedding space of width embedding_dim; embeddings are summed elementwise
// across silos, so embedding_dim must be identical for all silos in a run.
struct SiloModelSpec {
    int silo_index = 0;
    int input_dim = 0;     // feature count D_j owned by this silo
    int embedding_dim = 0; // E, shared across silos
    Architecture architecture = Architecture::Linear;
    int hidden_width = 0;  // H, mlp only

    // Flat parameter count. Layout:
    //   linear: W (input_dim x E, row-major)
    //   mlp:    W1 (input_dim x H) | b1 (H) | W2 (H x E) | b2 (E)
    std::size_t param_count() const;
};

// Flat parameter vector for one silo block (hub copy or client copy).
struct ParamBlock {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    bool finite() const;
};

struct LossSpec {
    LossKind kind = LossKind::SquaredError;
    int label_arity = 1; // 1 for scalar targets, class count for softmax
};

std::string to_string(Architecture a);
std::string to_string(LossKind k);

// Per-sample embeddings for a list of sample IDs; the protocol's wire payload.
struct EmbeddingBatch {
    std::vector<long> ids;
    Matrix values; // ids.size() x E

    std::size_t size() const { return ids.size(); }
};

void validate_spec(const SiloModelSpec& spec);
void validate_loss(const LossSpec& loss, int embedding_dim);

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per layer, drawn in layout order
// from the stream keyed by (seed, "init", silo_index).
ParamBlock init_block(const SiloModelSpec& spec, std::uint64_t init_seed);

// Forward pass of h_j on each row: rows (n x D_j) -> embeddings (n x E).
// Pure; bit-identical on repeated calls.
Matrix embed(const SiloModelSpec& spec, const ParamBlock& block, const Matrix& rows);

// Mean over samples of the per-sample loss on summed embeddings.
double composite_loss(const Matrix& embedding_sum, const std::vector<double>& labels,
                      const LossSpec& loss);

// d(per-sample loss)/d(embedding sum), one row per sample (no 1/n factor).
Matrix loss_output_gradient(const Matrix& embedding_sum, const std::vector<double>& labels,
                            const LossSpec& loss);

// Stochastic partial derivative of the mini-batch loss with respect to this
// block. Own embeddings are recomputed from `block`; `other_sum` (the summed
// embeddings of every other silo for the same sample IDs, possibly stale) is
// treated as a constant. Returns mean over the n rows, same layout as block.
std::vector<double> partial_gradient(const SiloModelSpec& spec, const ParamBlock& block,
                                     const Matrix& own_rows, const Matrix& other_sum,
                                     const std::vector<double>& labels, const LossSpec& loss);

} // namespace tdcd
