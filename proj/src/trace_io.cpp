#include "tdcd/trace_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "tdcd/errors.hpp"

namespace tdcd {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary); // binary: no newline translation
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    return out;
}

// JSON number or null when not representable.
std::string json_double(double v) {
    if (!std::isfinite(v)) return "null";
    return format_double(v);
}

} // namespace

void write_trace_jsonl(const TrainingTrace& trace, const std::string& path) {
    auto out = open_out(path);
    for (const auto& rec : trace.records) {
        out << "{\"round\":" << rec.round << ",\"iter\":" << rec.iter
            << ",\"clock\":" << json_double(rec.clock) << ",\"loss\":" << json_double(rec.loss)
            << ",\"grad_sq_norm\":" << json_double(rec.grad_sq_norm)
            << ",\"msgs_scalars\":" << rec.msgs_scalars << "}\n";
    }
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

void write_trace_csv(const TrainingTrace& trace, const std::string& path) {
    auto out = open_out(path);
    out << "round,iter,clock,loss,grad_sq_norm,msgs_scalars\n";
    for (const auto& rec : trace.records) {
        out << rec.round << ',' << rec.iter << ',' << format_double(rec.clock) << ','
            << format_double(rec.loss) << ',' << format_double(rec.grad_sq_norm) << ','
            << rec.msgs_scalars << '\n';
    }
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

void write_metrics_csv(const std::vector<MetricReport>& reports, const std::string& path) {
    auto out = open_out(path);
    out << "split,samples,loss,accuracy,f1,top_k,top_k_accuracy\n";
    for (const auto& r : reports) {
        out << r.split << ',' << r.sample_count << ',' << format_double(r.loss) << ','
            << (r.accuracy ? format_double(*r.accuracy) : std::string()) << ','
            << (r.f1 ? format_double(*r.f1) : std::string()) << ',' << r.top_k << ','
            << (r.top_k_accuracy ? format_double(*r.top_k_accuracy) : std::string()) << '\n';
    }
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

} // namespace tdcd
