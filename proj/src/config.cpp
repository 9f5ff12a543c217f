#include "tdcd/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "tdcd/errors.hpp"

namespace tdcd {

namespace {

using nlohmann::json;

// Field accessor with "section.field" error naming and unknown-key tracking.
class Section {
public:
    Section(const json& node, std::string name) : node_(node), name_(std::move(name)) {
        if (!node_.is_object()) throw ConfigError(name_ + ": expected an object");
    }

    bool has(const std::string& field) const { return node_.contains(field); }

    const json& raw(const std::string& field) {
        seen_.insert(field);
        auto it = node_.find(field);
        if (it == node_.end()) throw ConfigError(name_ + "." + field + ": missing");
        return *it;
    }

    long long integer(const std::string& field) {
        const json& v = raw(field);
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError(name_ + "." + field + ": expected an integer");
        return v.get<long long>();
    }

    long long integer_or(const std::string& field, long long fallback) {
        return has(field) ? integer(field) : (seen_.insert(field), fallback);
    }

    std::uint64_t seed(const std::string& field) {
        const json& v = raw(field);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<long long>() >= 0)
            return static_cast<std::uint64_t>(v.get<long long>());
        throw ConfigError(name_ + "." + field + ": expected a non-negative integer");
    }

    std::uint64_t seed_or(const std::string& field, std::uint64_t fallback) {
        if (has(field)) return seed(field);
        seen_.insert(field);
        return fallback;
    }

    double number(const std::string& field) {
        const json& v = raw(field);
        if (!v.is_number()) throw ConfigError(name_ + "." + field + ": expected a number");
        return v.get<double>();
    }

    double number_or(const std::string& field, double fallback) {
        return has(field) ? number(field) : (seen_.insert(field), fallback);
    }

    std::string text(const std::string& field) {
        const json& v = raw(field);
        if (!v.is_string()) throw ConfigError(name_ + "." + field + ": expected a string");
        return v.get<std::string>();
    }

    std::string text_or(const std::string& field, const std::string& fallback) {
        return has(field) ? text(field) : (seen_.insert(field), fallback);
    }

    bool boolean_or(const std::string& field, bool fallback) {
        if (!has(field)) {
            seen_.insert(field);
            return fallback;
        }
        const json& v = raw(field);
        if (!v.is_boolean()) throw ConfigError(name_ + "." + field + ": expected a boolean");
        return v.get<bool>();
    }

    void forbid(const std::string& field, const std::string& why) {
        seen_.insert(field);
        if (node_.contains(field)) throw ConfigError(name_ + "." + field + ": " + why);
    }

    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(name_ + "." + it.key() + ": unknown field");
    }

    const json& node() const { return node_; }
    const std::string& name() const { return name_; }

private:
    const json& node_;
    std::string name_;
    std::set<std::string> seen_;
};

int positive_int(Section& sec, const std::string& field) {
    const long long v = sec.integer(field);
    if (v < 1) throw ConfigError(sec.name() + "." + field + ": must be >= 1");
    if (v > 1'000'000'000) throw ConfigError(sec.name() + "." + field + ": implausibly large");
    return static_cast<int>(v);
}

std::vector<int> client_counts(Section& topo, int silos) {
    const json& v = topo.raw("clients");
    std::vector<int> out;
    if (v.is_number_integer() || v.is_number_unsigned()) {
        const long long k = v.get<long long>();
        if (k < 1) throw ConfigError("topology.clients: must be >= 1");
        out.assign(static_cast<std::size_t>(silos), static_cast<int>(k));
        return out;
    }
    if (!v.is_array()) throw ConfigError("topology.clients: expected an integer or a list");
    if (v.size() != static_cast<std::size_t>(silos))
        throw ConfigError("topology.clients: list length " + std::to_string(v.size()) +
                          " does not match topology.silos = " + std::to_string(silos));
    for (const auto& e : v) {
        if (!e.is_number_integer() && !e.is_number_unsigned())
            throw ConfigError("topology.clients: entries must be integers");
        const long long k = e.get<long long>();
        if (k < 1) throw ConfigError("topology.clients: entries must be >= 1");
        out.push_back(static_cast<int>(k));
    }
    return out;
}

DatasetConfig parse_dataset(Section& sec) {
    DatasetConfig out;
    const std::string source = sec.text("source");
    if (source == "synthetic") {
        out.source = DatasetSource::Synthetic;
        SyntheticSpec& sy = out.synthetic;
        sy.task = synthetic_task_from_string(sec.text("task"));
        sy.samples = static_cast<std::size_t>(positive_int(sec, "samples"));
        sy.features = static_cast<std::size_t>(positive_int(sec, "features"));
        if (sy.task == SyntheticTask::LeastSquares) {
            sy.noise = sec.number_or("noise", 0.0);
            sec.forbid("margin", "only valid for the logistic task");
        } else {
            sy.margin = sec.number_or("margin", 1.0);
            sec.forbid("noise", "only valid for the least_squares task");
        }
        sy.condition = sec.number_or("condition", 1.0);
        sy.correlation = sec.number_or("correlation", 0.0);
        if (sec.has("theta_star")) {
            const json& arr = sec.raw("theta_star");
            if (!arr.is_array()) throw ConfigError("dataset.theta_star: expected a list");
            for (const auto& e : arr) {
                if (!e.is_number()) throw ConfigError("dataset.theta_star: entries must be numbers");
                sy.theta_star_override.push_back(e.get<double>());
            }
        }
        // Range checks live in generate_synthetic; re-run them here so the
        // error carries the config field name.
        if (sy.condition < 1.0) throw ConfigError("dataset.condition: must be >= 1");
        if (sy.correlation < 0.0 || sy.correlation >= 1.0)
            throw ConfigError("dataset.correlation: must lie in [0, 1)");
        if (sy.noise < 0.0) throw ConfigError("dataset.noise: must be >= 0");
        if (!sy.theta_star_override.empty() && sy.theta_star_override.size() != sy.features)
            throw ConfigError("dataset.theta_star: length must equal dataset.features");
        return out;
    }
    if (source == "csv") {
        out.source = DatasetSource::Csv;
        out.path = sec.text("path");
        out.label_column = sec.text_or("label_column", "label");
        return out;
    }
    if (source == "binary") {
        out.source = DatasetSource::Binary;
        out.path = sec.text("path");
        return out;
    }
    throw ConfigError("dataset.source: expected synthetic, csv, or binary");
}

} // namespace

SimConfig parse_config(const json& root) {
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    static const std::set<std::string> known = {"topology", "model", "loss",  "training", "latency",
                                                "seeds",    "eval",  "bound", "dataset"};
    for (auto it = root.begin(); it != root.end(); ++it)
        if (!known.count(it.key())) throw ConfigError(it.key() + ": unknown section");
    for (const char* required : {"topology", "model", "loss", "training", "latency", "seeds", "dataset"})
        if (!root.contains(required)) throw ConfigError(std::string(required) + ": missing section");

    SimConfig cfg;

    Section topo(root.at("topology"), "topology");
    cfg.silos = positive_int(topo, "silos");
    cfg.clients = client_counts(topo, cfg.silos);
    topo.finish();

    Section model(root.at("model"), "model");
    const std::string arch = model.text("architecture");
    if (arch == "linear") {
        cfg.architecture = Architecture::Linear;
        model.forbid("hidden", "only valid for the mlp architecture");
    } else if (arch == "mlp") {
        cfg.architecture = Architecture::Mlp;
        cfg.hidden_width = positive_int(model, "hidden");
    } else {
        throw ConfigError("model.architecture: expected linear or mlp");
    }
    if (model.has("feature_split")) {
        const json& arr = model.raw("feature_split");
        if (!arr.is_array()) throw ConfigError("model.feature_split: expected a list");
        if (arr.size() != static_cast<std::size_t>(cfg.silos))
            throw ConfigError("model.feature_split: list length must equal topology.silos");
        for (const auto& e : arr) {
            if (!e.is_number_integer() && !e.is_number_unsigned())
                throw ConfigError("model.feature_split: entries must be integers");
            const long long d = e.get<long long>();
            if (d < 1) throw ConfigError("model.feature_split: entries must be >= 1");
            cfg.feature_split.push_back(static_cast<int>(d));
        }
    }
    model.finish();

    Section loss(root.at("loss"), "loss");
    const std::string kind = loss.text("kind");
    if (kind == "squared_error") {
        cfg.loss = {LossKind::SquaredError, 1};
        loss.forbid("classes", "only valid for the softmax loss");
    } else if (kind == "bce") {
        cfg.loss = {LossKind::BinaryCrossEntropyWithLogit, 1};
        loss.forbid("classes", "only valid for the softmax loss");
    } else if (kind == "softmax") {
        const int classes = positive_int(loss, "classes");
        if (classes < 2) throw ConfigError("loss.classes: must be >= 2");
        cfg.loss = {LossKind::SoftmaxCrossEntropy, classes};
    } else {
        throw ConfigError("loss.kind: expected squared_error, bce, or softmax");
    }
    loss.finish();

    Section training(root.at("training"), "training");
    cfg.q_local_steps = positive_int(training, "q_local_steps");
    cfg.eta = training.number("eta");
    if (cfg.eta < 0.0) throw ConfigError("training.eta: must be >= 0");
    cfg.batch_size = static_cast<std::size_t>(positive_int(training, "batch_size"));
    const long long rounds = training.integer("rounds");
    if (rounds < 0) throw ConfigError("training.rounds: must be >= 0");
    cfg.rounds = static_cast<long>(rounds);
    training.finish();

    Section latency(root.at("latency"), "latency");
    cfg.latency.t_comm = latency.number("t_comm");
    cfg.latency.t_comp = latency.number("t_comp");
    if (cfg.latency.t_comm < 0.0) throw ConfigError("latency.t_comm: must be >= 0");
    if (cfg.latency.t_comp < 0.0) throw ConfigError("latency.t_comp: must be >= 0");
    cfg.latency.split_hops = latency.boolean_or("split_hops", false);
    if (cfg.latency.split_hops) {
        cfg.latency.t_hub_client = latency.number("t_hub_client");
        cfg.latency.t_hub_hub = latency.number("t_hub_hub");
        if (cfg.latency.t_hub_client < 0.0) throw ConfigError("latency.t_hub_client: must be >= 0");
        if (cfg.latency.t_hub_hub < 0.0) throw ConfigError("latency.t_hub_hub: must be >= 0");
    } else {
        latency.forbid("t_hub_client", "requires split_hops = true");
        latency.forbid("t_hub_hub", "requires split_hops = true");
    }
    latency.finish();

    Section seeds(root.at("seeds"), "seeds");
    cfg.data_seed = seeds.seed("data");
    cfg.init_seed = seeds.seed("init");
    cfg.batch_seed = seeds.seed("batch");
    seeds.finish();

    Section dataset(root.at("dataset"), "dataset");
    cfg.dataset = parse_dataset(dataset);
    dataset.finish();

    if (root.contains("eval")) {
        Section eval(root.at("eval"), "eval");
        const std::string cadence = eval.text_or("cadence", "round");
        if (cadence == "iteration") cfg.eval_every_iter = true;
        else if (cadence != "round") throw ConfigError("eval.cadence: expected round or iteration");
        eval.finish();
    }

    if (root.contains("bound")) {
        Section bound(root.at("bound"), "bound");
        cfg.bound.enabled = bound.boolean_or("enabled", true);
        const long long pairs = bound.integer_or("pairs", 64);
        if (pairs < 1) throw ConfigError("bound.pairs: must be >= 1");
        cfg.bound.pairs = static_cast<int>(pairs);
        cfg.bound.radius = bound.number_or("radius", 0.5);
        if (cfg.bound.radius <= 0.0) throw ConfigError("bound.radius: must be > 0");
        cfg.bound.seed = bound.seed_or("seed", 0);
        const long long sampled = bound.integer_or("sampled_batches", 64);
        if (sampled < 1) throw ConfigError("bound.sampled_batches: must be >= 1");
        cfg.bound.sampled_batches = static_cast<int>(sampled);
        const long long cap = bound.integer_or("enumeration_cap", 200000);
        if (cap < 1) throw ConfigError("bound.enumeration_cap: must be >= 1");
        cfg.bound.enumeration_cap = cap;
        bound.finish();
    }

    return cfg;
}

SimConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    return parse_config(root);
}

nlohmann::json effective_config(const SimConfig& config) {
    json root;
    root["topology"] = {{"silos", config.silos}, {"clients", config.clients}};

    json model;
    model["architecture"] = config.architecture == Architecture::Linear ? "linear" : "mlp";
    if (config.architecture == Architecture::Mlp) model["hidden"] = config.hidden_width;
    if (!config.feature_split.empty()) model["feature_split"] = config.feature_split;
    root["model"] = std::move(model);

    json loss;
    switch (config.loss.kind) {
        case LossKind::SquaredError: loss["kind"] = "squared_error"; break;
        case LossKind::BinaryCrossEntropyWithLogit: loss["kind"] = "bce"; break;
        case LossKind::SoftmaxCrossEntropy:
            loss["kind"] = "softmax";
            loss["classes"] = config.loss.label_arity;
            break;
    }
    root["loss"] = std::move(loss);

    root["training"] = {{"q_local_steps", config.q_local_steps},
                        {"eta", config.eta},
                        {"batch_size", config.batch_size},
                        {"rounds", config.rounds}};

    json latency;
    latency["t_comm"] = config.latency.t_comm;
    latency["t_comp"] = config.latency.t_comp;
    if (config.latency.split_hops) {
        latency["split_hops"] = true;
        latency["t_hub_client"] = config.latency.t_hub_client;
        latency["t_hub_hub"] = config.latency.t_hub_hub;
    }
    root["latency"] = std::move(latency);

    root["seeds"] = {{"data", config.data_seed}, {"init", config.init_seed}, {"batch", config.batch_seed}};

    json dataset;
    switch (config.dataset.source) {
        case DatasetSource::Synthetic: {
            const SyntheticSpec& sy = config.dataset.synthetic;
            dataset["source"] = "synthetic";
            dataset["task"] = to_string(sy.task);
            dataset["samples"] = sy.samples;
            dataset["features"] = sy.features;
            if (sy.task == SyntheticTask::LeastSquares) dataset["noise"] = sy.noise;
            else dataset["margin"] = sy.margin;
            dataset["condition"] = sy.condition;
            dataset["correlation"] = sy.correlation;
            if (!sy.theta_star_override.empty()) dataset["theta_star"] = sy.theta_star_override;
            break;
        }
        case DatasetSource::Csv:
            dataset["source"] = "csv";
            dataset["path"] = config.dataset.path;
            dataset["label_column"] = config.dataset.label_column;
            break;
        case DatasetSource::Binary:
            dataset["source"] = "binary";
            dataset["path"] = config.dataset.path;
            break;
    }
    root["dataset"] = std::move(dataset);

    root["eval"] = {{"cadence", config.eval_every_iter ? "iteration" : "round"}};

    if (config.bound.enabled) {
        root["bound"] = {{"enabled", true},
                         {"pairs", config.bound.pairs},
                         {"radius", config.bound.radius},
                         {"seed", config.bound.seed},
                         {"sampled_batches", config.bound.sampled_batches},
                         {"enumeration_cap", config.bound.enumeration_cap}};
    }

    return root;
}

BuiltRun build_run(const SimConfig& config) {
    BuiltRun out;
    out.resolved = config;

    // The feature count must be known before the split can be resolved, so
    // non-synthetic sources load first.
    switch (config.dataset.source) {
        case DatasetSource::Csv:
            out.dataset = load_csv(config.dataset.path, config.dataset.label_column);
            break;
        case DatasetSource::Binary: out.dataset = load_binary(config.dataset.path); break;
        case DatasetSource::Synthetic: break;
    }

    const std::size_t total_features = config.dataset.source == DatasetSource::Synthetic
                                           ? config.dataset.synthetic.features
                                           : out.dataset.feature_count();

    std::vector<int> split = config.feature_split;
    if (split.empty()) {
        if (total_features < static_cast<std::size_t>(config.silos))
            throw ConfigError("topology.silos: more silos than dataset features (" +
                              std::to_string(total_features) + ")");
        const int base = static_cast<int>(total_features) / config.silos;
        const int rem = static_cast<int>(total_features) % config.silos;
        for (int j = 0; j < config.silos; ++j) split.push_back(base + (j < rem ? 1 : 0));
    } else {
        long long sum = 0;
        for (int d : split) sum += d;
        if (sum != static_cast<long long>(total_features))
            throw ConfigError("model.feature_split: entries sum to " + std::to_string(sum) +
                              " but the dataset has " + std::to_string(total_features) +
                              " features");
    }
    out.resolved.feature_split = split;

    if (config.dataset.source == DatasetSource::Synthetic) {
        auto result = generate_synthetic(config.dataset.synthetic, config.data_seed, split);
        out.dataset = std::move(result.dataset);
        out.metadata = std::move(result.metadata);
    }

    validate_dataset(out.dataset, config.loss);
    if (config.batch_size > out.dataset.sample_count())
        throw ConfigError("training.batch_size: exceeds dataset sample count " +
                          std::to_string(out.dataset.sample_count()));

    out.partitions = split_vertical(total_features, split);

    const int embedding_dim = config.loss.kind == LossKind::SoftmaxCrossEntropy
                                  ? config.loss.label_arity
                                  : 1;

    EngineSetup& setup = out.setup;
    for (int j = 0; j < config.silos; ++j) {
        SiloSetup silo;
        silo.spec = SiloModelSpec{j, split[static_cast<std::size_t>(j)], embedding_dim,
                                  config.architecture, config.hidden_width};
        silo.features = slice_columns(out.dataset.features,
                                      out.partitions[static_cast<std::size_t>(j)].columns);
        silo.shards = shard_horizontal(out.dataset, j, config.clients[static_cast<std::size_t>(j)],
                                       config.data_seed);
        setup.silos.push_back(std::move(silo));
    }
    setup.labels = out.dataset.labels;
    setup.loss = config.loss;
    setup.q_local_steps = config.q_local_steps;
    setup.eta = config.eta;
    setup.batch_size = config.batch_size;
    setup.rounds = config.rounds;
    setup.batch_seed = config.batch_seed;
    setup.latency = config.latency;
    setup.eval_every_iter = config.eval_every_iter;

    return out;
}

} // namespace tdcd
