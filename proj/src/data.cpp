#include "tdcd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tdcd/prng.hpp"

namespace tdcd {

namespace {

constexpr char kBinaryMagic[4] = {'T', 'D', 'B', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_f64_field(const std::string& s, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("csv: cannot parse '" + s + "' as a number (row " +
                          std::to_string(row) + ", column " + column + ")");
    return v;
}

std::string format_f64(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

} // namespace

bool HorizontalShard::owns(long id) const {
    return std::binary_search(sorted_ids.begin(), sorted_ids.end(), id);
}

double HorizontalShard::label_of(long id) const {
    const auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), id);
    if (it == sorted_ids.end() || *it != id)
        throw ConfigError("shard (" + std::to_string(client_index) + "," +
                          std::to_string(silo_index) + ") does not own sample " +
                          std::to_string(id));
    return sorted_labels[static_cast<std::size_t>(it - sorted_ids.begin())];
}

void validate_dataset(const Dataset& dataset, const LossSpec& loss) {
    const std::size_t m = dataset.sample_count();
    if (m < 1) throw ConfigError("dataset: needs at least one sample");
    if (dataset.labels.size() != m)
        throw ConfigError("dataset: label count " + std::to_string(dataset.labels.size()) +
                          " does not match sample count " + std::to_string(m));
    for (std::size_t i = 0; i < dataset.features.data().size(); ++i)
        if (!std::isfinite(dataset.features.data()[i]))
            throw NumericError("dataset: non-finite feature entry at flat index " +
                               std::to_string(i));
    for (std::size_t i = 0; i < m; ++i) {
        const double y = dataset.labels[i];
        if (!std::isfinite(y))
            throw NumericError("dataset: non-finite label at sample " + std::to_string(i));
        switch (loss.kind) {
            case LossKind::SquaredError:
                break;
            case LossKind::BinaryCrossEntropyWithLogit:
                if (y != 0.0 && y != 1.0)
                    throw ConfigError("dataset: binary loss needs labels in {0,1}, sample " +
                                      std::to_string(i) + " has " + format_f64(y));
                break;
            case LossKind::SoftmaxCrossEntropy: {
                const double r = std::floor(y);
                if (r != y || y < 0.0 || y >= static_cast<double>(loss.label_arity))
                    throw ConfigError("dataset: softmax labels must be integers in [0," +
                                      std::to_string(loss.label_arity) + "), sample " +
                                      std::to_string(i) + " has " + format_f64(y));
                break;
            }
        }
    }
}

std::vector<VerticalPartition> split_vertical(std::size_t total_features,
                                              const std::vector<int>& silo_dims) {
    long sum = 0;
    for (int d : silo_dims) {
        if (d < 1) throw ConfigError("split_vertical: every silo dim must be >= 1");
        sum += d;
    }
    if (sum != static_cast<long>(total_features))
        throw ConfigError("split_vertical: dims sum to " + std::to_string(sum) +
                          " but the dataset has " + std::to_string(total_features) +
                          " features");
    std::vector<VerticalPartition> parts;
    parts.reserve(silo_dims.size());
    int next = 0;
    for (std::size_t j = 0; j < silo_dims.size(); ++j) {
        VerticalPartition p;
        p.silo_index = static_cast<int>(j);
        p.columns.resize(silo_dims[j]);
        std::iota(p.columns.begin(), p.columns.end(), next);
        next += silo_dims[j];
        parts.push_back(std::move(p));
    }
    return parts;
}

void validate_partitions(const std::vector<VerticalPartition>& partitions,
                         std::size_t total_features) {
    std::vector<char> seen(total_features, 0);
    for (const auto& p : partitions) {
        if (p.columns.empty())
            throw ConfigError("partition: silo " + std::to_string(p.silo_index) +
                              " owns no columns");
        for (int c : p.columns) {
            if (c < 0 || static_cast<std::size_t>(c) >= total_features)
                throw ConfigError("partition: column " + std::to_string(c) + " out of range");
            if (seen[c])
                throw ConfigError("partition: column " + std::to_string(c) +
                                  " assigned to more than one silo");
            seen[c] = 1;
        }
    }
    for (std::size_t c = 0; c < total_features; ++c)
        if (!seen[c])
            throw ConfigError("partition: column " + std::to_string(c) + " unassigned");
}

std::vector<HorizontalShard> shard_horizontal(const Dataset& dataset, int silo_index,
                                              int clients, std::uint64_t data_seed) {
    const std::size_t m = dataset.sample_count();
    if (clients < 1) throw ConfigError("shard_horizontal: client count must be >= 1");
    if (static_cast<std::size_t>(clients) > m)
        throw ConfigError("shard_horizontal: " + std::to_string(clients) +
                          " clients but only " + std::to_string(m) + " samples");

    std::vector<long> perm(m);
    std::iota(perm.begin(), perm.end(), 0L);
    Stream g(data_seed, kTagShard, static_cast<std::uint64_t>(silo_index));
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(g.below(m - i));
        std::swap(perm[i], perm[j]);
    }

    const std::size_t base = m / static_cast<std::size_t>(clients);
    const std::size_t rem = m % static_cast<std::size_t>(clients);
    std::vector<HorizontalShard> shards;
    shards.reserve(clients);
    std::size_t start = 0;
    for (int k = 0; k < clients; ++k) {
        const std::size_t size = base + (static_cast<std::size_t>(k) < rem ? 1 : 0);
        HorizontalShard s;
        s.silo_index = silo_index;
        s.client_index = k;
        s.owned_ids.assign(perm.begin() + start, perm.begin() + start + size);
        s.labels.resize(size);
        for (std::size_t i = 0; i < size; ++i)
            s.labels[i] = dataset.labels[static_cast<std::size_t>(s.owned_ids[i])];
        s.sorted_ids = s.owned_ids;
        std::sort(s.sorted_ids.begin(), s.sorted_ids.end());
        s.sorted_labels.resize(size);
        for (std::size_t i = 0; i < size; ++i)
            s.sorted_labels[i] = dataset.labels[static_cast<std::size_t>(s.sorted_ids[i])];
        shards.push_back(std::move(s));
        start += size;
    }
    return shards;
}

Minibatch sample_minibatch(std::uint64_t batch_seed, long t0, std::size_t batch_size,
                           std::size_t sample_count) {
    if (batch_size < 1 || batch_size > sample_count)
        throw ConfigError("sample_minibatch: batch size " + std::to_string(batch_size) +
                          " out of range for " + std::to_string(sample_count) + " samples");
    std::vector<long> idx(sample_count);
    std::iota(idx.begin(), idx.end(), 0L);
    Stream g(batch_seed, kTagMinibatch, static_cast<std::uint64_t>(t0));
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(g.below(sample_count - i));
        std::swap(idx[i], idx[j]);
    }
    Minibatch batch;
    batch.round_start_iter = t0;
    batch.ids.assign(idx.begin(), idx.begin() + batch_size);
    return batch;
}

EmbeddingBatch project(const EmbeddingBatch& embeddings, const HorizontalShard& shard) {
    EmbeddingBatch out;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < embeddings.ids.size(); ++i)
        if (shard.owns(embeddings.ids[i])) keep.push_back(i);
    out.ids.reserve(keep.size());
    out.values = Matrix(keep.size(), embeddings.values.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.ids.push_back(embeddings.ids[keep[r]]);
        const double* src = embeddings.values.row(keep[r]);
        std::copy(src, src + embeddings.values.cols(), out.values.row(r));
    }
    return out;
}

Matrix slice_columns(const Matrix& features, const std::vector<int>& columns) {
    Matrix out(features.rows(), columns.size());
    for (std::size_t i = 0; i < features.rows(); ++i)
        for (std::size_t c = 0; c < columns.size(); ++c)
            out(i, c) = features(i, static_cast<std::size_t>(columns[c]));
    return out;
}

Matrix gather_rows(const Matrix& features, const std::vector<long>& ids) {
    Matrix out(ids.size(), features.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= features.rows())
            throw ConfigError("gather_rows: sample ID " + std::to_string(ids[r]) +
                              " out of range");
        const double* src = features.row(static_cast<std::size_t>(ids[r]));
        std::copy(src, src + features.cols(), out.row(r));
    }
    return out;
}

std::vector<double> gather_labels(const std::vector<double>& labels,
                                  const std::vector<long>& ids) {
    std::vector<double> out(ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= labels.size())
            throw ConfigError("gather_labels: sample ID " + std::to_string(ids[r]) +
                              " out of range");
        out[r] = labels[static_cast<std::size_t>(ids[r])];
    }
    return out;
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw ConfigError("csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw ConfigError("csv: " + path + " is empty");
    const std::vector<std::string> header = split_csv_line(line);
    long label_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) {
            label_idx = static_cast<long>(i);
            break;
        }
    if (label_idx < 0)
        throw ConfigError("csv: label column '" + label_column + "' not found in " + path);
    if (header.size() < 2)
        throw ConfigError("csv: " + path + " has no feature columns");

    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw ConfigError("csv: row " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(header.size()));
        std::vector<double> feat;
        feat.reserve(header.size() - 1);
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const double v = parse_f64_field(fields[i], line_no, header[i]);
            if (static_cast<long>(i) == label_idx)
                labels.push_back(v);
            else
                feat.push_back(v);
        }
        rows.push_back(std::move(feat));
    }
    if (rows.empty()) throw ConfigError("csv: " + path + " has no data rows");

    Dataset d;
    d.features = Matrix(rows.size(), header.size() - 1);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), d.features.row(i));
    d.labels = std::move(labels);
    return d;
}

void save_csv(const std::string& path, const Dataset& dataset, const std::string& label_column) {
    std::ofstream out(path);
    if (!out) throw ConfigError("csv: cannot write " + path);
    const std::size_t d = dataset.feature_count();
    for (std::size_t c = 0; c < d; ++c) out << "x" << c << ",";
    out << label_column << "\n";
    for (std::size_t i = 0; i < dataset.sample_count(); ++i) {
        for (std::size_t c = 0; c < d; ++c) out << format_f64(dataset.features(i, c)) << ",";
        out << format_f64(dataset.labels[i]) << "\n";
    }
}

Dataset load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("binary dataset: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBinaryMagic, 4) != 0)
        throw ConfigError("binary dataset: bad magic in " + path);
    const std::uint32_t m = read_u32(in);
    const std::uint32_t d = read_u32(in);
    read_u32(in); // reserved
    if (!in || m == 0 || d == 0)
        throw ConfigError("binary dataset: bad header in " + path);

    Dataset out;
    out.features = Matrix(m, d);
    for (std::uint32_t c = 0; c < d; ++c)
        for (std::uint32_t i = 0; i < m; ++i) out.features(i, c) = read_f64(in);
    out.labels.resize(m);
    for (std::uint32_t i = 0; i < m; ++i) out.labels[i] = read_f64(in);
    if (!in) throw ConfigError("binary dataset: " + path + " truncated");
    return out;
}

void save_binary(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("binary dataset: cannot write " + path);
    out.write(kBinaryMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(dataset.sample_count()));
    write_u32(out, static_cast<std::uint32_t>(dataset.feature_count()));
    write_u32(out, 0);
    for (std::size_t c = 0; c < dataset.feature_count(); ++c)
        for (std::size_t i = 0; i < dataset.sample_count(); ++i)
            write_f64(out, dataset.features(i, c));
    for (double y : dataset.labels) write_f64(out, y);
}

} // namespace tdcd
