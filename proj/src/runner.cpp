#include "tdcd/runner.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#include "tdcd/errors.hpp"
#include "tdcd/trace_io.hpp"

namespace tdcd {

namespace {

using nlohmann::json;

json json_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

std::vector<std::vector<HorizontalShard>> shard_table(const EngineSetup& setup) {
    std::vector<std::vector<HorizontalShard>> out;
    out.reserve(setup.silos.size());
    for (const auto& silo : setup.silos) out.push_back(silo.shards);
    return out;
}

json bound_json(const BoundOutcome& outcome, const SimConfig& config) {
    json root;
    if (!outcome.computed) {
        root["computed"] = false;
        root["skip_reason"] = outcome.skip_reason;
        return root;
    }
    root["computed"] = true;
    root["q_local_steps"] = config.q_local_steps;
    root["eta"] = config.eta;
    root["rounds"] = config.rounds;
    root["constants"] = {
        {"source", outcome.constants.source == BoundConstants::Source::Analytic ? "analytic"
                                                                                : "estimated"},
        {"smooth_l", json_number(outcome.constants.smooth_l)},
        {"smooth_l_max", json_number(outcome.constants.smooth_l_max)},
        {"sigma_sq", outcome.constants.sigma_sq},
        {"sigma_sq_total", json_number(outcome.constants.sigma_sq_total())},
    };
    root["report"] = {
        {"lhs", json_number(outcome.report.lhs)},
        {"rhs", json_number(outcome.report.rhs)},
        {"descent_term", json_number(outcome.report.descent_term)},
        {"variance_term", json_number(outcome.report.variance_term)},
        {"eta_max", json_number(outcome.report.eta_max)},
        {"eta_admissible", outcome.report.eta_admissible},
        {"satisfied", outcome.report.satisfied},
    };
    return root;
}

std::string sanitize_component(const std::string& value) {
    std::string out;
    for (char c : value)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_');
    return out;
}

bool parse_ll(const std::string& s, long long& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

bool parse_dbl(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size() && std::isfinite(out);
    } catch (...) {
        return false;
    }
}

// The swept field replaces its base value; everything else (seeds included)
// is shared. Q sweeps rescale rounds to keep the total step budget Q*R.
SimConfig apply_axis(const SimConfig& base, const std::string& axis, const std::string& value) {
    SimConfig cfg = base;
    if (axis == "Q") {
        long long q = 0;
        if (!parse_ll(value, q) || q < 1)
            throw ConfigError("sweep value '" + value + "' is not a valid Q (integer >= 1)");
        const long long budget =
            static_cast<long long>(base.q_local_steps) * static_cast<long long>(base.rounds);
        cfg.q_local_steps = static_cast<int>(q);
        cfg.rounds = base.rounds == 0 ? 0 : static_cast<long>(std::max(1LL, budget / q));
        return cfg;
    }
    if (axis == "eta") {
        double eta = 0.0;
        if (!parse_dbl(value, eta) || eta < 0.0)
            throw ConfigError("sweep value '" + value + "' is not a valid eta (number >= 0)");
        cfg.eta = eta;
        return cfg;
    }
    if (axis == "N") {
        long long n = 0;
        if (!parse_ll(value, n) || n < 1)
            throw ConfigError("sweep value '" + value + "' is not a valid N (integer >= 1)");
        for (int k : base.clients)
            if (k != base.clients.front())
                throw ConfigError("N sweep requires a uniform per-silo client count");
        cfg.silos = static_cast<int>(n);
        cfg.clients.assign(static_cast<std::size_t>(n), base.clients.front());
        cfg.feature_split.clear(); // re-derived near-equal over the new N
        return cfg;
    }
    if (axis == "K") {
        long long k = 0;
        if (!parse_ll(value, k) || k < 1)
            throw ConfigError("sweep value '" + value + "' is not a valid K (integer >= 1)");
        cfg.clients.assign(static_cast<std::size_t>(base.silos), static_cast<int>(k));
        return cfg;
    }
    throw ConfigError("unknown sweep axis '" + axis + "' (expected Q, eta, N, or K)");
}

} // namespace

BoundOutcome compute_bound(const EngineSetup& setup, const ObjectiveContext& ctx,
                           const TrainingTrace& trace, const BoundRequest& request) {
    BoundOutcome out;
    if (trace.status != TrainingTrace::Status::Completed) {
        out.skip_reason = "run diverged";
        return out;
    }
    if (trace.rounds.empty()) {
        out.skip_reason = "no rounds executed";
        return out;
    }
    if (setup.eta <= 0.0) {
        out.skip_reason = "eta is zero";
        return out;
    }

    ProbeConfig probe;
    probe.pairs = request.pairs;
    probe.radius = request.radius;
    probe.seed = request.seed;
    probe.batch_size = setup.batch_size;
    probe.sampled_batches = static_cast<std::size_t>(request.sampled_batches);
    probe.enumeration_cap = request.enumeration_cap;
    for (const auto& round : trace.rounds) {
        if (round.virtual_models.empty()) {
            out.skip_reason = "trace lacks recorded iterates";
            return out;
        }
        probe.iterates_override.push_back(round.virtual_models.front());
    }

    bool quadratic = setup.loss.kind == LossKind::SquaredError;
    for (const auto& silo : setup.silos)
        quadratic = quadratic && silo.spec.architecture == Architecture::Linear;

    const auto shards = shard_table(setup);
    out.constants = quadratic ? analytic_constants(ctx, shards, probe)
                              : estimate_constants(ctx, shards, probe);

    std::vector<double> grads;
    grads.reserve(trace.rounds.size());
    for (const auto& round : trace.rounds) grads.push_back(round.start_grad_sq_norm);

    out.report = convergence_bound(grads, out.constants, setup.eta, setup.q_local_steps,
                                   trace.rounds.front().start_loss, trace.final_loss);
    out.computed = true;
    return out;
}

RunOutcome run_to_directory(const SimConfig& config, const std::filesystem::path& out_dir) {
    RunOutcome out;
    out.dir = out_dir;

    BuiltRun built;
    try {
        built = build_run(config);
    } catch (const ConfigError& e) {
        out.exit_code = kExitConfig;
        out.message = e.what();
        return out;
    }

    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "config_snapshot.json", effective_config(built.resolved).dump(2) + "\n");

    const ObjectiveContext ctx = make_context(built.setup);
    out.trace = run_training(built.setup, ctx, config.init_seed);

    write_trace_jsonl(out.trace, (out_dir / "trace.jsonl").string());
    write_trace_csv(out.trace, (out_dir / "trace.csv").string());

    // The final model sits at a round boundary even after divergence (hub
    // blocks only move at boundaries), so evaluation is always meaningful.
    std::vector<MetricReport> reports;
    try {
        const auto blocks = split_global(out.trace.final_model, [&] {
            std::vector<SiloModelSpec> specs;
            for (const auto& silo : built.setup.silos) specs.push_back(silo.spec);
            return specs;
        }());
        const int top_k = config.loss.kind == LossKind::SoftmaxCrossEntropy
                              ? std::min(5, config.loss.label_arity)
                              : 0;
        reports.push_back(evaluate(ctx, blocks, "train", top_k));
        write_metrics_csv(reports, (out_dir / "metrics.csv").string());
    } catch (const NumericError& e) {
        out.message = std::string("metrics skipped: ") + e.what();
    }

    if (config.bound.enabled) {
        const BoundOutcome bound = compute_bound(built.setup, ctx, out.trace, config.bound);
        write_text(out_dir / "bound_report.json", bound_json(bound, built.resolved).dump(2) + "\n");
    }

    if (out.trace.status == TrainingTrace::Status::Diverged) {
        out.exit_code = kExitDiverged;
        out.message = out.trace.divergence_message;
    }
    return out;
}

SweepOutcome run_sweep(const SimConfig& base, const std::string& axis,
                       const std::vector<std::string>& values,
                       const std::filesystem::path& out_dir) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    std::set<std::string> seen_names;

    SweepOutcome out;
    out.target_loss = std::numeric_limits<double>::quiet_NaN();
    std::filesystem::create_directories(out_dir);

    std::vector<TrainingTrace> traces(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        SweepRow row;
        row.axis = axis;
        row.value = values[i];
        row.final_loss = row.final_clock = row.clock_to_target =
            std::numeric_limits<double>::quiet_NaN();
        const std::string name = "run_" + axis + "_" + sanitize_component(values[i]);
        if (!seen_names.insert(name).second)
            throw ConfigError("sweep values collide on directory name '" + name + "'");
        row.dir = name;
        try {
            const SimConfig cfg = apply_axis(base, axis, values[i]);
            RunOutcome run = run_to_directory(cfg, out_dir / name);
            traces[i] = std::move(run.trace);
            row.message = run.message;
            if (run.exit_code == kExitOk) row.status = "ok";
            else if (run.exit_code == kExitDiverged) row.status = "diverged";
            else row.status = "config_error";
        } catch (const ConfigError& e) {
            row.status = "config_error";
            row.message = e.what();
        }
        out.rows.push_back(std::move(row));
    }

    // Target rule: the best completed run's loss at 80% of its clock budget.
    std::size_t best = values.size();
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        if (out.rows[i].status != "ok" || traces[i].records.empty()) continue;
        out.rows[i].final_loss = traces[i].records.back().loss;
        out.rows[i].final_clock = traces[i].records.back().clock;
        if (best == values.size() || out.rows[i].final_loss < out.rows[best].final_loss) best = i;
    }
    if (best != values.size()) {
        const auto& records = traces[best].records;
        const double cutoff = 0.8 * records.back().clock;
        double target = records.front().loss;
        for (const auto& rec : records)
            if (rec.clock <= cutoff) target = rec.loss;
        out.target_loss = target;
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            if (out.rows[i].status != "ok") continue;
            double reached = std::numeric_limits<double>::infinity();
            for (const auto& rec : traces[i].records)
                if (rec.loss <= target) {
                    reached = rec.clock;
                    break;
                }
            out.rows[i].clock_to_target = reached;
        }
    }

    if (axis == "eta" && best != values.size()) out.rows[best].selected = true;

    auto cell = [](bool present, double v) { return present ? format_double(v) : std::string(); };
    std::string csv = "axis,value,status,final_loss,final_clock,clock_to_target,target_loss,"
                      "selected,dir\n";
    for (const auto& row : out.rows) {
        const bool ok = row.status == "ok";
        csv += row.axis + ',' + row.value + ',' + row.status + ',';
        csv += cell(ok && !std::isnan(row.final_loss), row.final_loss) + ',';
        csv += cell(ok && !std::isnan(row.final_clock), row.final_clock) + ',';
        csv += cell(ok && !std::isnan(row.clock_to_target), row.clock_to_target) + ',';
        csv += cell(!std::isnan(out.target_loss), out.target_loss) + ',';
        csv += std::string(row.selected ? "1" : "0") + ',' + row.dir + '\n';
    }
    write_text(out_dir / "summary.csv", csv);

    for (const auto& row : out.rows)
        if (row.status != "ok") out.exit_code = kExitConfig;
    return out;
}

namespace {

SimConfig check_base_config() {
    SimConfig cfg;
    cfg.silos = 2;
    cfg.clients = {2, 2};
    cfg.architecture = Architecture::Linear;
    cfg.loss = {LossKind::SquaredError, 1};
    cfg.q_local_steps = 5;
    cfg.eta = 0.02;
    cfg.batch_size = 8;
    cfg.rounds = 20;
    cfg.latency = {};
    cfg.data_seed = 101;
    cfg.init_seed = 202;
    cfg.batch_seed = 303;
    cfg.dataset.source = DatasetSource::Synthetic;
    cfg.dataset.synthetic.task = SyntheticTask::LeastSquares;
    cfg.dataset.synthetic.samples = 32;
    cfg.dataset.synthetic.features = 6;
    cfg.dataset.synthetic.noise = 0.3;
    cfg.dataset.synthetic.condition = 2.0;
    cfg.dataset.synthetic.correlation = 0.25;
    return cfg;
}

} // namespace

int run_check(std::ostream& log) {
    bool ok = true;

    for (Architecture arch : {Architecture::Linear, Architecture::Mlp}) {
        for (LossKind kind : {LossKind::SquaredError, LossKind::BinaryCrossEntropyWithLogit,
                              LossKind::SoftmaxCrossEntropy}) {
            const double err = max_fd_relative_error(arch, kind, 25, 9001);
            const bool pass = err < 1e-5;
            ok = ok && pass;
            log << (pass ? "ok  " : "FAIL") << " gradient fd probe " << to_string(arch) << " + "
                << to_string(kind) << ": max rel err " << format_double(err) << "\n";
        }
    }

    struct Case {
        ReductionKind kind;
        SimConfig cfg;
    };
    std::vector<Case> cases;
    {
        SimConfig q1 = check_base_config();
        q1.q_local_steps = 1;
        q1.batch_size = q1.dataset.synthetic.samples; // full batch: exact equivalence
        cases.push_back({ReductionKind::Q1Centralized, q1});

        SimConfig n1 = check_base_config();
        n1.silos = 1;
        n1.clients = {3};
        cases.push_back({ReductionKind::N1LocalSgd, n1});

        SimConfig k1 = check_base_config();
        k1.clients = {1, 1};
        cases.push_back({ReductionKind::K1Vfl, k1});
    }
    for (const auto& c : cases) {
        const BuiltRun built = build_run(c.cfg);
        const ReductionReport report = reduction_check(c.kind, built.setup, c.cfg.init_seed);
        ok = ok && report.pass;
        log << (report.pass ? "ok  " : "FAIL") << " reduction " << to_string(c.kind)
            << ": max rel deviation " << format_double(report.max_rel_deviation) << " (tolerance "
            << format_double(report.tolerance) << ")\n";
    }

    {
        SimConfig cfg = check_base_config();
        cfg.dataset.synthetic.samples = 8;
        cfg.dataset.synthetic.features = 4;
        cfg.batch_size = 4;
        cfg.rounds = 16;
        cfg.bound.enabled = true;
        for (int q : {1, 2, 4}) {
            cfg.q_local_steps = q;
            BuiltRun built = build_run(cfg);
            const ObjectiveContext ctx = make_context(built.setup);
            // Probe the ceiling first, then run at it.
            ProbeConfig probe;
            probe.batch_size = cfg.batch_size;
            BoundConstants constants = analytic_constants(ctx, shard_table(built.setup), probe);
            built.setup.eta = eta_ceiling(constants, q);
            const TrainingTrace trace = run_training(built.setup, ctx, cfg.init_seed);
            const BoundOutcome outcome = compute_bound(built.setup, ctx, trace, cfg.bound);
            const bool pass = outcome.computed && outcome.report.satisfied &&
                              outcome.report.eta_admissible;
            ok = ok && pass;
            log << (pass ? "ok  " : "FAIL") << " convergence bound Q=" << q
                << " eta=" << format_double(built.setup.eta);
            if (outcome.computed)
                log << ": lhs " << format_double(outcome.report.lhs) << " <= rhs "
                    << format_double(outcome.report.rhs) << "\n";
            else
                log << ": " << outcome.skip_reason << "\n";
        }
    }

    log << (ok ? "all checks passed\n" : "CHECKS FAILED\n");
    return ok ? kExitOk : kExitConfig;
}

int generate_data_files(const SimConfig& config, const std::string& out_path,
                        const std::string& format, std::ostream& log) {
    if (config.dataset.source != DatasetSource::Synthetic)
        throw ConfigError("gen-data requires dataset.source = synthetic");
    if (format != "csv" && format != "binary")
        throw ConfigError("gen-data format must be csv or binary");

    const BuiltRun built = build_run(config);
    if (format == "csv") save_csv(out_path, built.dataset, "label");
    else save_binary(out_path, built.dataset);

    json meta;
    meta["samples"] = built.dataset.sample_count();
    meta["features"] = built.dataset.feature_count();
    meta["task"] = to_string(config.dataset.synthetic.task);
    meta["theta_star"] = built.metadata->theta_star;
    meta["smooth_l"] = json_number(built.metadata->smooth_l);
    if (!built.metadata->theta_opt.empty()) meta["theta_opt"] = built.metadata->theta_opt;
    if (built.metadata->optimum_loss) meta["optimum_loss"] = json_number(*built.metadata->optimum_loss);
    if (!built.metadata->block_l.empty()) meta["block_l"] = built.metadata->block_l;
    write_text(out_path + ".meta.json", meta.dump(2) + "\n");

    log << "wrote " << out_path << " (" << built.dataset.sample_count() << " x "
        << built.dataset.feature_count() << ") and " << out_path << ".meta.json\n";
    return kExitOk;
}

} // namespace tdcd
