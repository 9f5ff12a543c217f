#pragma once

#include <string>
#include <vector>

#include "tdcd/metrics.hpp"
#include "tdcd/protocol.hpp"

namespace tdcd {

// Shortest decimal form that round-trips the exact double. Non-finite values
// render as "inf" / "-inf" / "nan".
std::string format_double(double v);

// One JSON object per record: round, iter, clock, loss, grad_sq_norm,
// msgs_scalars. Non-finite numerics become null so every line stays valid
// JSON. Output is byte-deterministic for a given trace.
void write_trace_jsonl(const TrainingTrace& trace, const std::string& path);

// Same records as CSV with header round,iter,clock,loss,grad_sq_norm,
// msgs_scalars; non-finite values keep their text form.
void write_trace_csv(const TrainingTrace& trace, const std::string& path);

// Header split,samples,loss,accuracy,f1,top_k,top_k_accuracy; absent
// optional metrics leave empty cells.
void write_metrics_csv(const std::vector<MetricReport>& reports, const std::string& path);

} // namespace tdcd
