#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdcd/matrix.hpp"
#include "tdcd/model.hpp"

namespace tdcd {

struct Dataset {
    Matrix features;            // M x D, sample IDs are row indices 0..M-1
    std::vector<double> labels; // length M

    std::size_t sample_count() const { return features.rows(); }
    std::size_t feature_count() const { return features.cols(); }
};

// The feature columns owned by one silo. Produced as contiguous ranges by
// split_vertical; hand-built column lists pass through validate_partitions.
struct VerticalPartition {
    int silo_index = 0;
    std::vector<int> columns;
};

// The sample IDs owned by one client inside a silo, in permutation order,
// with the matching label copy.
struct HorizontalShard {
    int silo_index = 0;
    int client_index = 0;
    std::vector<long> owned_ids;
    std::vector<double> labels;        // aligned with owned_ids
    std::vector<long> sorted_ids;      // owned_ids sorted, for lookups
    std::vector<double> sorted_labels; // aligned with sorted_ids

    bool owns(long id) const;
    double label_of(long id) const; // throws if the shard does not own id
};

// Shared mini-batch for the round starting at global iteration t0.
struct Minibatch {
    long round_start_iter = 0;
    std::vector<long> ids;
};

// Checks finiteness of every entry and that labels fit the loss: {0,1} for
// the binary logit loss, integers in [0, arity) for softmax.
void validate_dataset(const Dataset& dataset, const LossSpec& loss);

// Contiguous column ranges in silo order. Throws if the dims don't sum to
// the dataset's feature count.
std::vector<VerticalPartition> split_vertical(std::size_t total_features,
                                              const std::vector<int>& silo_dims);

// Explicit column assignment; validates disjointness and coverage of all
// `total_features` columns across the given partitions.
void validate_partitions(const std::vector<VerticalPartition>& partitions,
                         std::size_t total_features);

// One seeded permutation of 0..M-1 per silo (stream keyed by the silo index),
// cut into contiguous blocks; when M mod clients != 0 the lowest-indexed
// clients take one extra ID each.
std::vector<HorizontalShard> shard_horizontal(const Dataset& dataset, int silo_index,
                                              int clients, std::uint64_t data_seed);

// B IDs without replacement by partial Fisher-Yates from the stream keyed by
// (batch_seed, "minibatch", t0). Every silo calling with the same arguments
// gets the identical list in identical order.
Minibatch sample_minibatch(std::uint64_t batch_seed, long t0, std::size_t batch_size,
                           std::size_t sample_count);

// Rows of `embeddings` whose IDs the shard owns, preserving batch order.
// An empty result is legal (the client skips its local steps that round).
EmbeddingBatch project(const EmbeddingBatch& embeddings, const HorizontalShard& shard);

Matrix slice_columns(const Matrix& features, const std::vector<int>& columns);
Matrix gather_rows(const Matrix& features, const std::vector<long>& ids);
std::vector<double> gather_labels(const std::vector<double>& labels,
                                  const std::vector<long>& ids);

// CSV with a header row; the named label column holds targets, every other
// column is a feature (file order preserved).
Dataset load_csv(const std::string& path, const std::string& label_column);
void save_csv(const std::string& path, const Dataset& dataset, const std::string& label_column);

// Binary format: 16-byte header (magic "TDB1", uint32 M, uint32 D, 4 zero
// bytes), column-major float64 features, then M float64 labels. Everything
// little-endian.
Dataset load_binary(const std::string& path);
void save_binary(const std::string& path, const Dataset& dataset);

} // namespace tdcd
