#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <set>
#include <map>
#include <optional>

#include "dyncart/cartography.hpp"
#include "dyncart/data_io.hpp"
#include "dyncart/detection.hpp"
#include "dyncart/error.hpp"
#include "dyncart/experiment.hpp"
#include "dyncart/noise_lab.hpp"
#include "server.hpp"

namespace dyncart::cli {

namespace {

struct UsageError : Error {
    using Error::Error;
};

// Strips a known suffix so every output gets "<stem>.manifest.json".
fs::path manifest_path_for(const fs::path& out) {
    std::string s = out.string();
    for (const std::string suffix : {".meta.json", ".csv", ".json"}) {
        if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
            s.resize(s.size() - suffix.size());
            break;
        }
    }
    return fs::path(s + ".manifest.json");
}

// Command-line equivalent of everything CLI11 resolved, config files included.
std::vector<std::string> resolved_args(const CLI::App& sub, nlohmann::json& resolved) {
    std::vector<std::string> args{sub.get_name()};
    std::vector<std::string> named;
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->count() == 0) continue;
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "config" || name == "h") continue;
        const auto& values = opt->results();
        resolved[name] = values.size() == 1 ? nlohmann::json(values[0]) : nlohmann::json(values);
        if (opt->get_positional() && opt->get_lnames().empty() && opt->get_snames().empty()) {
            args.insert(args.end(), values.begin(), values.end());
            continue;
        }
        named.push_back("--" + (opt->get_lnames().empty() ? name : opt->get_lnames()[0]));
        if (opt->get_expected_max() != 0) named.insert(named.end(), values.begin(), values.end());
    }
    args.insert(args.end(), named.begin(), named.end());
    return args;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Appends "--key value" for every key=value line of the --config file whose
// key was not given on the command line, so flags override the file.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::string path;
    std::set<std::string> given;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0) continue;
        const auto eq = a.find('=');
        const std::string name = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
        given.insert(name);
        if (name == "config") path = eq != std::string::npos ? a.substr(eq + 1) : (i + 1 < args.size() ? args[i + 1] : "");
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::vector<std::string> out = args;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config file " + path + " line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (given.count(key)) continue;
        out.push_back("--" + key);
        out.push_back(value);
    }
    return out;
}

void write_manifest(RunManifest& m, const fs::path& path) {
    write_file_atomic(path, m.to_json().dump(1) + "\n");
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
    return s;
}

void check_rate(double rate) {
    if (!(rate > 0.0 && rate <= 0.5)) throw UsageError("invalid rate: must lie in (0, 0.5]");
}

std::string dataset_id(const fs::path& stem) { return dataset_paths(stem).csv.stem().string(); }

// Model features: min-max / one-hot encoding fitted on the same input file.
Dataset encoded(const Dataset& ds) { return with_encoding(ds, fit_encoding(ds)); }

struct TrainFlags {
    int iterations = 100;
    double learning_rate = 0.1;
    int max_depth = 6;
    double min_child_weight = 1e-3;
    double l2 = 1.0;
    std::uint64_t seed = 0;
    CLI::Option* lr_opt = nullptr;

    void add(CLI::App* sub) {
        sub->add_option("--iterations", iterations, "boosting iterations T")->check(CLI::PositiveNumber);
        lr_opt = sub->add_option("--learning-rate", learning_rate, "shrinkage in (0, 1]");
        sub->add_option("--max-depth", max_depth, "maximum tree depth")->check(CLI::PositiveNumber);
        sub->add_option("--min-child-weight", min_child_weight, "minimum hessian per child");
        sub->add_option("--l2", l2, "L2 leaf regularization");
        sub->add_option("--train-seed", seed, "training seed (recorded)");
    }
    // base supplies the learning rate when the flag was not given.
    TrainConfig config(const TrainConfig& base = {}) const {
        TrainConfig c;
        c.num_iterations = iterations;
        c.learning_rate = lr_opt && lr_opt->count() ? learning_rate : base.learning_rate;
        c.max_depth = max_depth;
        c.min_child_weight = min_child_weight;
        c.l2_reg = l2;
        c.seed = seed;
        try {
            c.validate();
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        return c;
    }
};

// Weights keyed by id from "id,weight" or a flags file ("id,score,flag").
std::vector<double> read_weights(const fs::path& path, const std::vector<std::int64_t>& ids) {
    std::map<std::int64_t, double> by_id;
    const std::string text = read_file(path);
    std::size_t start = 0;
    bool header = true;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            if (line.rfind("id,", 0) != 0) throw Error("corrupt weights file: header must start with id");
            header = false;
            continue;
        }
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        by_id[std::stoll(line.substr(0, c1))] = parse_double(line.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1));
    }
    std::vector<double> w;
    w.reserve(ids.size());
    for (auto id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("weights file does not cover id " + std::to_string(id));
        w.push_back(it->second);
    }
    return w;
}

CartographyReport make_report(const Ensemble& model, const Dataset& enc, const Dataset& raw, const fs::path& in) {
    const auto dyn = compute_dynamics(model, enc.X, enc.y);
    auto report = dynamics_to_report(dyn, enc.y, enc.ids, enc.schema.classes, dataset_id(in));
    if (raw.noise_mask) {
        for (std::size_t j = 0; j < report.points.size(); ++j) report.points[j].noisy = (*raw.noise_mask)[j];
    }
    return report;
}

class Cli {
  public:
    Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int run(const std::vector<std::string>& args);

  private:
    void build(CLI::App& app);
    void finish(const CLI::App& sub, const fs::path& primary_out);

    void cmd_generate();
    void cmd_inject();
    void cmd_split();
    void cmd_train();
    void cmd_map();
    void cmd_detect();
    void cmd_clean();
    void cmd_evaluate();
    void cmd_serve();
    int cmd_rerun();

    std::ostream& out_;
    std::ostream& err_;
    RunManifest manifest_;
    std::chrono::steady_clock::time_point start_;
    std::string manifest_override_;

    // generate
    std::string gen_kind;
    std::size_t gen_n = 0;
    std::uint64_t seed = 0;
    std::string in, out, model_path, weights_path, flags_path, report_path, validation_path;
    // inject
    std::string noise = "ncar";
    double rate = 0.1;
    int k = 10;
    double p = 0.5;
    // split
    double f_train = 0.8, f_validation = 0.1, f_test = 0.1;
    // train / detect
    TrainFlags train_flags, detect_flags;
    unsigned workers = 1;
    std::string method = "weights";
    std::string heuristic = "low_probability";
    std::string threshold = "auto";
    int rounds = 10;
    std::vector<double> candidates;
    std::string report_out;
    int validation_iterations = 50;
    // evaluate
    std::string ev_dataset = "binary";
    std::size_t ev_n = 15100;
    std::uint64_t ev_data_seed = 7;
    std::vector<std::string> ev_noise{"ncar"};
    std::vector<double> ev_rates{0.1};
    std::vector<std::string> ev_methods;
    int ev_budget = 10;
    int ev_nnar_k = 10;
    double ev_nnar_p = 0.5;
    std::string ev_artifacts;
    // serve
    std::string data_path, out_dir = "exports", ui_dir, host = "127.0.0.1";
    int port = 8765;
    // rerun
    std::string manifest_in;

    CLI::App* sub_generate = nullptr;
    CLI::App* sub_inject = nullptr;
    CLI::App* sub_split = nullptr;
    CLI::App* sub_train = nullptr;
    CLI::App* sub_map = nullptr;
    CLI::App* sub_detect = nullptr;
    CLI::App* sub_clean = nullptr;
    CLI::App* sub_evaluate = nullptr;
    CLI::App* sub_serve = nullptr;
    CLI::App* sub_rerun = nullptr;
};

CLI::App* add_sub(CLI::App& app, const std::string& name, const std::string& desc, std::string& manifest_override) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", "flat key=value file; command-line flags override it");
    sub->add_option("--manifest", manifest_override, "manifest path (default: <out>.manifest.json)");
    return sub;
}

void Cli::build(CLI::App& app) {
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.set_version_flag("--version", kToolVersion);

    sub_generate = add_sub(app, "generate", "write a synthetic dataset", manifest_override_);
    sub_generate->add_option("kind", gen_kind, "binary | multiclass")->required()->check(CLI::IsMember({"binary", "multiclass"}));
    sub_generate->add_option("--n", gen_n, "instances (default 15100 binary, 16500 multiclass)");
    sub_generate->add_option("--seed", seed, "generator seed");
    sub_generate->add_option("--out", out, "output stem")->required();

    sub_inject = add_sub(app, "inject", "corrupt labels with NCAR or NNAR noise", manifest_override_);
    sub_inject->add_option("--in", in, "input dataset stem")->required();
    sub_inject->add_option("--noise", noise, "ncar | nnar")->check(CLI::IsMember({"ncar", "nnar"}));
    sub_inject->add_option("--rate", rate, "fraction of labels to corrupt, in (0, 0.5]");
    sub_inject->add_option("--k", k, "NNAR neighbor count")->check(CLI::PositiveNumber);
    sub_inject->add_option("--p", p, "NNAR swap probability");
    sub_inject->add_option("--seed", seed, "noise seed");
    sub_inject->add_option("--out", out, "output stem")->required();

    sub_split = add_sub(app, "split", "stratified train/validation/test split", manifest_override_);
    sub_split->add_option("--in", in, "input dataset stem")->required();
    sub_split->add_option("--train", f_train, "train fraction");
    sub_split->add_option("--validation", f_validation, "validation fraction");
    sub_split->add_option("--test", f_test, "test fraction");
    sub_split->add_option("--seed", seed, "split seed");
    sub_split->add_option("--out", out, "output stem; parts go to <out>-train, -validation, -test")->required();

    sub_train = add_sub(app, "train", "fit a boosted ensemble", manifest_override_);
    sub_train->add_option("--in", in, "training dataset stem")->required();
    sub_train->add_option("--weights", weights_path, "optional id,weight CSV (or a flags file; its score column is used)");
    train_flags.add(sub_train);
    sub_train->add_option("--workers", workers, "split-search threads (output is identical for any value)");
    sub_train->add_option("--out", out, "model file")->required();

    sub_map = add_sub(app, "map", "compute the cartography report of a model", manifest_override_);
    sub_map->add_option("--in", in, "dataset stem the model was trained on")->required();
    sub_map->add_option("--model", model_path, "model file")->required();
    sub_map->add_option("--weights", weights_path, "optional learned weights (id,weight or flags file)");
    sub_map->add_option("--flags", flags_path, "optional flags file to mark points");
    sub_map->add_option("--out", out, "report file")->required();

    sub_detect = add_sub(app, "detect", "flag suspected label errors", manifest_override_);
    sub_detect->add_option("--in", in, "dataset stem");
    sub_detect->add_option("--report", report_path, "use the scores of a cartography report instead of training");
    sub_detect->add_option("--method", method, "product | weights | heuristics")
        ->check(CLI::IsMember({"product", "weights", "heuristics"}));
    sub_detect->add_option("--heuristic", heuristic, "low_probability | short_confidence | long_confidence")
        ->check(CLI::IsMember({"low_probability", "short_confidence", "long_confidence"}));
    sub_detect->add_option("--threshold", threshold,
                           "number in [0,1], auto (valley; the fixed default for heuristics) or validation");
    sub_detect->add_option("--rounds", rounds, "weight-learning rounds E")->check(CLI::PositiveNumber);
    sub_detect->add_option("--model", model_path, "model for product/heuristics (default: train one)");
    detect_flags.add(sub_detect);
    sub_detect->add_option("--validation", validation_path, "validation dataset stem for --threshold validation");
    sub_detect->add_option("--candidates", candidates, "candidate thresholds for --threshold validation")->delimiter(',');
    sub_detect->add_option("--validation-iterations", validation_iterations, "T of the cheap model used per candidate");
    sub_detect->add_option("--workers", workers, "split-search threads");
    sub_detect->add_option("--report-out", report_out, "also write a cartography report with weights and flags");
    sub_detect->add_option("--out", out, "flags CSV (a JSON header is written next to it)")->required();

    sub_clean = add_sub(app, "clean", "drop flagged rows from a dataset", manifest_override_);
    sub_clean->add_option("--in", in, "dataset stem")->required();
    sub_clean->add_option("--flags", flags_path, "flags CSV")->required();
    sub_clean->add_option("--out", out, "output stem")->required();

    sub_evaluate = add_sub(app, "evaluate", "run the noisy-vs-cleaned experiment sweep", manifest_override_);
    sub_evaluate->add_option("--dataset", ev_dataset, "binary | multiclass | path to a dataset stem");
    sub_evaluate->add_option("--n", ev_n, "synthetic instances");
    sub_evaluate->add_option("--data-seed", ev_data_seed, "synthetic generator seed");
    sub_evaluate->add_option("--noise", ev_noise, "noise types (ncar, nnar)")->delimiter(',');
    sub_evaluate->add_option("--rates", ev_rates, "noise rates")->delimiter(',');
    sub_evaluate->add_option("--methods", ev_methods, "detection methods (default: all)")->delimiter(',');
    sub_evaluate->add_option("--seed", seed, "experiment seed");
    sub_evaluate->add_option("--tune-budget", ev_budget, "random-search trials per fit")->check(CLI::PositiveNumber);
    sub_evaluate->add_option("--rounds", rounds, "weight-learning rounds E");
    sub_evaluate->add_option("--nnar-k", ev_nnar_k, "NNAR neighbor count");
    sub_evaluate->add_option("--nnar-p", ev_nnar_p, "NNAR swap probability");
    sub_evaluate->add_option("--train", f_train, "train fraction");
    sub_evaluate->add_option("--validation", f_validation, "validation fraction");
    sub_evaluate->add_option("--test", f_test, "test fraction");
    sub_evaluate->add_option("--workers", workers, "split-search threads");
    sub_evaluate->add_option("--artifacts", ev_artifacts, "directory for per-cell datasets, flags and reports");
    sub_evaluate->add_option("--out", out, "output stem; writes <out>.json and <out>.csv")->required();

    sub_serve = add_sub(app, "serve", "serve a report to the threshold UI", manifest_override_);
    sub_serve->add_option("--report", report_path, "cartography report")->required();
    sub_serve->add_option("--data", data_path, "dataset stem for cleaned exports");
    sub_serve->add_option("--out-dir", out_dir, "export directory");
    sub_serve->add_option("--ui-dir", ui_dir, "static UI bundle");
    sub_serve->add_option("--host", host, "bind address");
    sub_serve->add_option("--port", port, "port");

    sub_rerun = app.add_subcommand("rerun", "re-execute the command recorded in a manifest");
    sub_rerun->add_option("manifest", manifest_in, "manifest JSON")->required();
}

void Cli::finish(const CLI::App& sub, const fs::path& primary_out) {
    manifest_.command = sub.get_name();
    manifest_.args = resolved_args(sub, manifest_.resolved);
    manifest_.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const fs::path path = manifest_override_.empty() ? manifest_path_for(primary_out) : fs::path(manifest_override_);
    write_manifest(manifest_, path);
}

void Cli::cmd_generate() {
    const std::size_t n = gen_n ? gen_n : (gen_kind == "binary" ? 15100 : 16500);
    if (n < 100) throw UsageError("too small: n must be >= 100");
    const Dataset ds = gen_kind == "binary" ? gen_binary_synthetic(n, seed) : gen_multiclass_synthetic(n, seed);
    save_dataset(ds, out);
    const auto paths = dataset_paths(out);
    manifest_.seeds["generate"] = seed;
    manifest_.outputs = {paths.csv.string(), paths.meta.string()};
    out_ << ds.size() << " × " << ds.X.cols() << ", " << ds.num_classes << " classes\n";
    finish(*sub_generate, out);
}

void Cli::cmd_inject() {
    check_rate(rate);
    if (!(p > 0.0 && p <= 1.0)) throw UsageError("invalid swap probability: must lie in (0, 1]");
    const Dataset ds = load_dataset(in);
    Dataset noisy;
    if (noise == "ncar") {
        noisy = inject_ncar(ds, rate, seed);
    } else {
        const auto view = fit_encoding(ds);
        NnarOptions o;
        o.rate = rate;
        o.k = k;
        o.swap_probability = p;
        o.seed = seed;
        noisy = inject_nnar(ds, o, &view.X).dataset;
    }
    save_dataset(noisy, out);
    const auto src = dataset_paths(in);
    const auto dst = dataset_paths(out);
    manifest_.seeds["noise"] = seed;
    manifest_.inputs = {src.csv.string(), src.meta.string()};
    manifest_.outputs = {dst.csv.string(), dst.meta.string()};
    out_ << noisy.noisy_count() << " labels corrupted\n";
    finish(*sub_inject, out);
}

void Cli::cmd_split() {
    SplitSpec spec{f_train, f_validation, f_test, seed};
    try {
        spec.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const Dataset ds = load_dataset(in);
    const SplitParts parts = stratified_split(ds, spec);
    const std::string base = dataset_paths(out).csv.replace_extension().string();
    const std::pair<const char*, const Dataset*> named[] = {
        {"train", &parts.train}, {"validation", &parts.validation}, {"test", &parts.test}};
    for (const auto& [name, part] : named) {
        const std::string stem = base + "-" + name;
        save_dataset(*part, stem);
        const auto paths = dataset_paths(stem);
        manifest_.outputs.push_back(paths.csv.string());
        manifest_.outputs.push_back(paths.meta.string());
        out_ << name << ": " << part->size() << "\n";
    }
    manifest_.seeds["split"] = seed;
    manifest_.inputs = {dataset_paths(in).csv.string()};
    finish(*sub_split, out);
}

void Cli::cmd_train() {
    const TrainConfig cfg = train_flags.config();
    const Dataset raw = load_dataset(in);
    const Dataset ds = encoded(raw);
    std::vector<double> w(ds.size(), 1.0);
    if (!weights_path.empty()) {
        w = read_weights(weights_path, ds.ids);
        manifest_.inputs.push_back(weights_path);
    }
    const Ensemble model = fit(ds.X, ds.y, w, cfg, {workers, ds.num_classes});
    write_file_atomic(out, serialize(model));
    manifest_.inputs.push_back(dataset_paths(in).csv.string());
    manifest_.outputs = {out};
    manifest_.seeds["train"] = cfg.seed;
    out_ << "trained " << model.num_iterations() << " iterations, " << model.num_classes() << " classes, "
         << ds.size() << " rows\n";
    finish(*sub_train, out);
}

void Cli::cmd_map() {
    const Dataset raw = load_dataset(in);
    const Dataset ds = encoded(raw);
    const Ensemble model = deserialize(read_file(model_path));
    if (model.num_features() != static_cast<int>(ds.X.cols())) {
        throw Error("shape mismatch: model expects " + std::to_string(model.num_features()) + " features, dataset has " +
                    std::to_string(ds.X.cols()));
    }
    auto report = make_report(model, ds, raw, in);
    if (!weights_path.empty()) {
        const auto w = read_weights(weights_path, ds.ids);
        for (std::size_t j = 0; j < w.size(); ++j) report.points[j].weight = w[j];
    }
    if (!flags_path.empty()) {
        const auto flags = read_flags(flags_path);
        std::map<std::int64_t, bool> by_id;
        for (std::size_t i = 0; i < flags.ids.size(); ++i) by_id[flags.ids[i]] = flags.result.flags[i];
        for (auto& pt : report.points) {
            const auto it = by_id.find(pt.id);
            if (it == by_id.end()) throw Error("flags do not cover id " + std::to_string(pt.id));
            pt.flagged = it->second;
        }
    }
    write_report(report, out);
    manifest_.inputs = {dataset_paths(in).csv.string(), model_path};
    manifest_.outputs = {out};
    out_ << report.points.size() << " points, T=" << report.iterations << "\n";
    finish(*sub_map, out);
}

void Cli::cmd_detect() {
    if (in.empty() == report_path.empty()) throw UsageError("detect needs exactly one of --in or --report");
    const std::string digest = [&] {
        nlohmann::json resolved;
        return fnv1a_hex(join(resolved_args(*sub_detect, resolved), " "));
    }();

    if (!report_path.empty()) {
        if (method == "heuristics") throw UsageError("heuristics need --in: a report carries no class probabilities");
        if (threshold == "validation") throw UsageError("--threshold validation needs --in");
        const auto report = read_report(report_path);
        const std::string score = method == "weights" ? "weight" : "product";
        double t = 0.0;
        try {
            t = resolve_threshold(report, score, threshold);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        const auto det = report_detection(report, score, t);
        write_flags(det, report_ids(report), out, digest);
        manifest_.inputs = {report_path};
        manifest_.outputs = {out, flags_header_path(out).string()};
        out_ << det.flagged_count() << " of " << det.flags.size() << " flagged (" << score << " < "
             << format_double(t) << ")\n";
        finish(*sub_detect, out);
        return;
    }

    const Dataset raw = load_dataset(in);
    const Dataset ds = encoded(raw);
    const FitOptions fit_opts{workers, ds.num_classes};
    const bool fixed = threshold != "auto" && threshold != "validation";
    double fixed_t = 0.0;
    if (fixed) {
        try {
            fixed_t = parse_double(threshold);
        } catch (const Error&) {
            throw UsageError("invalid threshold: expected a number, auto or validation");
        }
        if (!(fixed_t >= 0.0 && fixed_t <= 1.0)) throw UsageError("invalid threshold: must be in [0, 1]");
    }

    std::optional<Ensemble> model;
    auto base_model = [&]() -> const Ensemble& {
        if (!model) {
            model = model_path.empty() ? fit(ds.X, ds.y, std::vector<double>(ds.size(), 1.0), detect_flags.config(), fit_opts)
                                       : deserialize(read_file(model_path));
        }
        return *model;
    };

    std::vector<double> scores;
    std::optional<WeightTrajectory> traj;
    DetectionResult det;
    if (method == "weights") {
        WeightLearningOptions wo;
        wo.rounds = rounds;
        wo.workers = workers;
        wo.num_classes = ds.num_classes;
        traj = learn_weights(ds.X, ds.y, detect_flags.config(default_detection_config()), wo);
        scores = traj->final_weights();
    } else if (method == "product") {
        scores = compute_dynamics(base_model(), ds.X, ds.y).product;
    }

    if (method == "heuristics") {
        if (threshold == "validation") throw UsageError("--threshold validation applies to product and weights");
        const auto probs = base_model().predict_proba(ds.X);
        if (heuristic == "low_probability") det = fixed ? heuristic_low_probability(probs, ds.y, fixed_t) : heuristic_low_probability(probs, ds.y);
        if (heuristic == "short_confidence") det = fixed ? heuristic_short_confidence(probs, ds.y, fixed_t) : heuristic_short_confidence(probs, ds.y);
        if (heuristic == "long_confidence") det = fixed ? heuristic_long_confidence(probs, ds.y, fixed_t) : heuristic_long_confidence(probs, ds.y);
    } else {
        double t = fixed_t;
        if (threshold == "auto") {
            t = auto_valley_threshold(scores).threshold;
        } else if (threshold == "validation") {
            if (validation_path.empty()) throw UsageError("--threshold validation needs --validation");
            const Dataset vraw = load_dataset(validation_path);
            const auto view = fit_encoding(raw);
            const Dataset vds = with_encoding(vraw, apply_encoding(view.params, vraw));
            std::vector<double> cands = candidates;
            if (cands.empty()) {
                for (int i = 1; i <= 19; ++i) cands.push_back(i * 0.05);
            }
            TrainConfig cheap = detect_flags.config();
            cheap.num_iterations = validation_iterations;
            const auto search = validation_threshold_search(ds, vds, scores, cands, default_metric(ds.num_classes), cheap, workers);
            t = search.threshold;
            manifest_.inputs.push_back(dataset_paths(validation_path).csv.string());
        }
        det = method == "weights" ? detect_by_weight(scores, t)
                                  : DetectionResult::from_scores("product", scores, t, Direction::flag_if_below);
    }
    write_flags(det, ds.ids, out, digest);
    manifest_.inputs.insert(manifest_.inputs.begin(), dataset_paths(in).csv.string());
    manifest_.outputs = {out, flags_header_path(out).string()};

    if (!report_out.empty()) {
        auto report = make_report(base_model(), ds, raw, in);
        for (std::size_t j = 0; j < report.points.size(); ++j) {
            if (traj) report.points[j].weight = scores[j];
            report.points[j].flagged = det.flags[j];
        }
        write_report(report, report_out);
        manifest_.outputs.push_back(report_out);
    }
    out_ << det.flagged_count() << " of " << det.flags.size() << " flagged (" << det.score_name << ", threshold "
         << format_double(det.threshold) << ")\n";
    finish(*sub_detect, out);
}

void Cli::cmd_clean() {
    const auto flags = read_flags(flags_path);
    const std::size_t kept = clean_dataset_files(in, flags.ids, flags.result.flags, out);
    const auto src = dataset_paths(in);
    const auto dst = dataset_paths(out);
    manifest_.inputs = {src.csv.string(), flags_path};
    manifest_.outputs = {dst.csv.string()};
    if (fs::exists(dst.meta)) manifest_.outputs.push_back(dst.meta.string());
    out_ << kept << " rows kept, " << flags.result.flagged_count() << " removed\n";
    finish(*sub_clean, out);
}

void Cli::cmd_evaluate() {
    ExperimentConfig base;
    if (ev_dataset == "binary" || ev_dataset == "multiclass") {
        base.dataset.kind = ev_dataset;
        base.dataset.n = ev_n;
        base.dataset.seed = ev_data_seed;
        if (ev_dataset == "multiclass" && !sub_evaluate->get_option("--n")->count()) base.dataset.n = 16500;
    } else {
        base.dataset.kind = "file";
        base.dataset.path = ev_dataset;
        manifest_.inputs.push_back(dataset_paths(ev_dataset).csv.string());
    }
    base.split = {f_train, f_validation, f_test, 0};
    try {
        base.split.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (!ev_methods.empty()) {
        base.methods.clear();
        for (const auto& m : ev_methods) {
            try {
                base.methods.push_back(method_from_string(m));
            } catch (const Error& e) {
                throw UsageError(e.what());
            }
        }
    }
    base.seed = seed;
    base.tune_budget = ev_budget;
    base.rounds = rounds;
    base.nnar_k = ev_nnar_k;
    base.nnar_p = ev_nnar_p;
    base.workers = workers;

    std::vector<ExperimentReport> reports;
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& nt : ev_noise) {
        NoiseType type;
        try {
            type = noise_type_from_string(nt);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        for (double r : ev_rates) {
            if (!(r >= 0.0 && r <= 0.5)) throw UsageError("invalid rate: must lie in [0, 0.5]");
            ExperimentConfig cfg = base;
            cfg.noise = type;
            cfg.rate = r;
            if (!ev_artifacts.empty()) {
                cfg.artifacts_dir = fs::path(ev_artifacts) / (std::string(to_string(type)) + "-" + format_double(r));
            }
            try {
                reports.push_back(run_experiment(cfg));
                const auto& rep = reports.back();
                out_ << to_string(rep.noise) << " " << format_double(rep.rate) << ": noisy f1 "
                     << format_double(rep.noisy.f1) << "\n";
            } catch (const Error& e) {
                failures.push_back({{"noise", to_string(type)}, {"rate", r}, {"error", e.what()}});
                err_ << to_string(type) << " " << format_double(r) << " failed: " << e.what() << "\n";
            }
        }
    }
    nlohmann::json doc = {{"reports", nlohmann::json::array()}, {"failures", failures}};
    for (const auto& r : reports) doc["reports"].push_back(r.to_json());
    const std::string stem = dataset_paths(out).csv.replace_extension().string();
    write_file_atomic(stem + ".json", doc.dump(1) + "\n");
    write_file_atomic(stem + ".csv", reports_csv(reports));
    manifest_.seeds["experiment"] = seed;
    manifest_.seeds["data"] = ev_data_seed;
    manifest_.outputs = {stem + ".json", stem + ".csv"};
    finish(*sub_evaluate, out);
    if (reports.empty()) throw Error("every experiment cell failed");
}

void Cli::cmd_serve() {
    ServeOptions opts;
    opts.report = report_path;
    if (!data_path.empty()) opts.data = fs::path(data_path);
    opts.out_dir = out_dir;
    if (!ui_dir.empty()) opts.ui_dir = fs::path(ui_dir);
    ReportServer server(opts);
    if (!server.bind(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    manifest_.inputs = {report_path};
    finish(*sub_serve, fs::path(out_dir) / "serve.json");
    out_ << "serving " << report_path << " on http://" << host << ":" << port << "/\n" << std::flush;
    server.listen_after_bind();
}

int Cli::cmd_rerun() {
    const auto m = RunManifest::from_json(nlohmann::json::parse(read_file(manifest_in)));
    if (m.args.empty()) throw Error("corrupt manifest: no arguments recorded");
    return run_cli(m.args, out_, err_);
}

int Cli::run(const std::vector<std::string>& args) {
    start_ = std::chrono::steady_clock::now();
    CLI::App app{"dyncart: training-dynamics label-noise toolkit", "dyncart"};
    build(app);
    try {
        std::vector<std::string> full;
        try {
            full = expand_config(args);
        } catch (const UsageError& e) {
            err_ << "error: " << e.what() << "\n";
            return 2;
        }
        std::vector<std::string> reversed(full.rbegin(), full.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out_, err_);
        return code == 0 ? 0 : 2;
    }
    try {
        if (sub_generate->parsed()) cmd_generate();
        else if (sub_inject->parsed()) cmd_inject();
        else if (sub_split->parsed()) cmd_split();
        else if (sub_train->parsed()) cmd_train();
        else if (sub_map->parsed()) cmd_map();
        else if (sub_detect->parsed()) cmd_detect();
        else if (sub_clean->parsed()) cmd_clean();
        else if (sub_evaluate->parsed()) cmd_evaluate();
        else if (sub_serve->parsed()) cmd_serve();
        else if (sub_rerun->parsed()) return cmd_rerun();
    } catch (const UsageError& e) {
        err_ << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err_ << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
    return {{"command", command}, {"args", args},       {"resolved", resolved},
            {"seeds", seeds},     {"inputs", inputs},   {"outputs", outputs},
            {"tool_version", tool_version},             {"duration_seconds", duration_seconds}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.args = j.at("args").get<std::vector<std::string>>();
        m.resolved = j.value("resolved", nlohmann::json::object());
        m.seeds = j.value("seeds", nlohmann::json::object());
        m.inputs = j.value("inputs", std::vector<std::string>{});
        m.outputs = j.value("outputs", std::vector<std::string>{});
        m.tool_version = j.value("tool_version", std::string());
        m.duration_seconds = j.value("duration_seconds", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("corrupt manifest: ") + e.what());
    }
    return m;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Cli cli(out, err);
    return cli.run(args);
}

}  // namespace dyncart::cli
