#include "dyncart/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dyncart/cartography.hpp"
#include "dyncart/data_io.hpp"
#include "dyncart/detection.hpp"
#include "dyncart/error.hpp"

namespace dyncart {

namespace {

// Stream tags for derive_seed; fixed so reports stay comparable across versions.
enum SeedTag : std::uint64_t {
    kSplitTag = 2,
    kTrainNoiseTag = 3,
    kValidationNoiseTag = 4,
    kTuneNoisyTag = 5,
    kTuneCleanedTag = 100,
};

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

Dataset inject(const Dataset& ds, const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.noise == NoiseType::ncar) return inject_ncar(ds, cfg.rate, seed);
    NnarOptions o;
    o.rate = cfg.rate;
    o.k = cfg.nnar_k;
    o.swap_probability = cfg.nnar_p;
    o.seed = seed;
    return inject_nnar(ds, o).dataset;
}

struct Detection {
    DetectionResult result;
    std::string rule;
};

Detection valley_detection(const std::vector<double>& scores, bool weights) {
    const auto v = auto_valley_threshold(scores);
    const double t = std::clamp(v.threshold, 0.0, 1.0);
    return {weights ? detect_by_weight(scores, t) : DetectionResult::from_scores("product", scores, t, Direction::flag_if_below),
            v.unimodal_fallback ? "valley-fallback" : "valley"};
}

nlohmann::json config_json_or_null(const std::optional<TrainConfig>& c) {
    return c ? config_to_json(*c) : nlohmann::json(nullptr);
}

std::string csv_number(std::optional<double> v) { return v ? format_double(*v) : std::string(); }

}  // namespace

TrainConfig sample_config(const SearchSpace& space, Rng& rng) {
    TrainConfig c;
    c.num_iterations = static_cast<int>(rng.between(space.min_iterations, space.max_iterations));
    c.learning_rate = log_uniform(rng, space.min_learning_rate, space.max_learning_rate);
    c.max_depth = static_cast<int>(rng.between(space.min_depth, space.max_depth));
    c.l2_reg = log_uniform(rng, space.min_l2, space.max_l2);
    return c;
}

SelectionMetric default_metric(int num_classes) {
    return num_classes == 2 ? SelectionMetric::prauc : SelectionMetric::f1_macro;
}

TuneResult random_search_tune(const Dataset& train, const Dataset& validation, int budget,
                              SelectionMetric metric, const SearchSpace& space, std::uint64_t seed,
                              unsigned workers) {
    if (budget < 1) throw Error("invalid budget: must be >= 1");
    Rng rng(seed);
    TuneResult best;
    best.metric = -std::numeric_limits<double>::infinity();
    const auto w = ones(train.size());
    for (int trial = 0; trial < budget; ++trial) {
        const TrainConfig c = sample_config(space, rng);
        const Ensemble model = fit(train.X, train.y, w, c, {workers, train.num_classes});
        const double m = validation_metric(model, validation.X, validation.y, metric, train.schema.positive_class);
        best.trial_metrics.push_back(m);
        if (trial == 0 || m > best.metric) {
            best.metric = m;
            best.config = c;
        }
    }
    return best;
}

ClassificationScore score_model(const Ensemble& model, const Dataset& test) {
    const auto proba = model.predict_proba(test.X);
    LabelVector pred(test.size());
    std::vector<double> pos;
    const int pc = test.schema.positive_class;
    for (std::size_t i = 0; i < test.size(); ++i) {
        pred[i] = argmax(proba.row(i));
        if (model.num_classes() == 2) pos.push_back(proba(i, static_cast<std::size_t>(pc)));
    }
    return classification_score(test.y, pred, model.num_classes(), pos, pc);
}

const char* to_string(NoiseType t) {
    switch (t) {
        case NoiseType::none: return "none";
        case NoiseType::ncar: return "NCAR";
        case NoiseType::nnar: return "NNAR";
    }
    return "?";
}

NoiseType noise_type_from_string(const std::string& s) {
    if (s == "none") return NoiseType::none;
    if (s == "ncar" || s == "NCAR") return NoiseType::ncar;
    if (s == "nnar" || s == "NNAR") return NoiseType::nnar;
    throw Error("invalid noise type: " + s);
}

const char* to_string(Method m) {
    switch (m) {
        case Method::product_threshold: return "product_threshold";
        case Method::weight_threshold: return "weight_threshold";
        case Method::low_probability: return "low_probability";
        case Method::short_confidence: return "short_confidence";
        case Method::long_confidence: return "long_confidence";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    for (Method m : all_methods()) {
        if (s == to_string(m)) return m;
    }
    throw Error("invalid method: " + s);
}

std::vector<Method> all_methods() {
    return {Method::product_threshold, Method::weight_threshold, Method::low_probability,
            Method::short_confidence, Method::long_confidence};
}

TrainConfig default_detection_config() {
    TrainConfig c;
    c.learning_rate = 1.0;
    return c;
}

nlohmann::json ExperimentConfig::to_json() const {
    std::vector<std::string> names;
    for (Method m : methods) names.emplace_back(to_string(m));
    return {{"dataset",
             {{"kind", dataset.kind}, {"n", dataset.n}, {"seed", dataset.seed}, {"path", dataset.path.string()}}},
            {"split", {{"train", split.train}, {"validation", split.validation}, {"test", split.test}}},
            {"noise", to_string(noise)},
            {"rate", rate},
            {"nnar_k", nnar_k},
            {"nnar_p", nnar_p},
            {"methods", names},
            {"seed", seed},
            {"tune_budget", tune_budget},
            {"space",
             {{"iterations", {space.min_iterations, space.max_iterations}},
              {"learning_rate", {space.min_learning_rate, space.max_learning_rate}},
              {"max_depth", {space.min_depth, space.max_depth}},
              {"l2_reg", {space.min_l2, space.max_l2}}}},
            {"detection_config", config_to_json(detection_config)},
            {"rounds", rounds}};
}

const MethodOutcome* ExperimentReport::find(Method m) const {
    for (const auto& o : methods) {
        if (o.method == m) return &o;
    }
    return nullptr;
}

nlohmann::json score_to_json(const ClassificationScore& s) {
    nlohmann::json j = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"f1_macro", s.f1_macro}};
    j["prauc"] = s.prauc ? nlohmann::json(*s.prauc) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json detection_to_json(const DetectionScore& s) {
    return {{"fpr", s.fpr},     {"fnr", s.fnr}, {"precision", s.precision}, {"recall", s.recall},
            {"tp", s.tp},       {"fp", s.fp},   {"tn", s.tn},               {"fn", s.fn}};
}

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& o : methods) {
        nlohmann::json jm = {{"method", to_string(o.method)}, {"ok", o.ok}};
        if (!o.ok) jm["error"] = o.error;
        jm["threshold"] = o.threshold;
        jm["threshold_rule"] = o.threshold_rule;
        jm["removed"] = o.removed;
        jm["detection"] = o.detection ? detection_to_json(*o.detection) : nlohmann::json(nullptr);
        jm["cleaned"] = o.cleaned ? score_to_json(*o.cleaned) : nlohmann::json(nullptr);
        jm["cleaned_config"] = config_json_or_null(o.cleaned_config);
        jm["cleaned_config_digest"] = o.cleaned_config ? fnv1a_hex(config_to_json(*o.cleaned_config).dump()) : "";
        ms.push_back(std::move(jm));
    }
    return {{"dataset_id", dataset_id},
            {"noise", to_string(noise)},
            {"rate", rate},
            {"seed", seed},
            {"rows", {{"train", train_rows}, {"validation", validation_rows}, {"test", test_rows}}},
            {"noisy_rows", {{"train", train_noisy}, {"validation", validation_noisy}, {"test", test_noisy}}},
            {"noisy_config", config_to_json(noisy_config)},
            {"noisy_config_digest", fnv1a_hex(config_to_json(noisy_config).dump())},
            {"noisy", score_to_json(noisy)},
            {"methods", std::move(ms)},
            {"config_digest", config_digest}};
}

Dataset experiment_dataset(const DatasetSource& source) {
    Dataset ds;
    if (source.kind == "binary") {
        ds = gen_binary_synthetic(source.n, source.seed);
    } else if (source.kind == "multiclass") {
        ds = gen_multiclass_synthetic(source.n, source.seed);
    } else if (source.kind == "file") {
        ds = load_dataset(source.path);
        if (ds.noise_mask && ds.noisy_count() > 0) {
            throw Error("labels already corrupted: experiment input must be clean");
        }
        ds.noise_mask.reset();
    } else {
        throw Error("invalid dataset kind: " + source.kind);
    }
    return ds;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    if (!(cfg.rate >= 0.0 && cfg.rate <= 0.5)) throw Error("invalid rate: must lie in [0, 0.5]");
    const nlohmann::json cfg_json = cfg.to_json();
    ExperimentReport report;
    report.noise = cfg.rate > 0.0 ? cfg.noise : NoiseType::none;
    report.rate = report.noise == NoiseType::none ? 0.0 : cfg.rate;
    report.seed = cfg.seed;
    report.config_digest = fnv1a_hex(cfg_json.dump());

    const Dataset full = experiment_dataset(cfg.dataset);
    report.dataset_id = cfg.dataset.kind == "file"
                            ? cfg.dataset.path.filename().string()
                            : cfg.dataset.kind + "-synthetic-n" + std::to_string(cfg.dataset.n) + "-s" +
                                  std::to_string(cfg.dataset.seed);

    SplitSpec split = cfg.split;
    split.seed = derive_seed(cfg.seed, kSplitTag);
    const SplitParts parts = stratified_split(full, split);

    // Scaling is fitted on the clean training rows only; noise touches labels, never X.
    const EncodedView train_view = fit_encoding(parts.train);
    Dataset train = with_encoding(parts.train, train_view);
    Dataset validation = with_encoding(parts.validation, apply_encoding(train_view.params, parts.validation));
    Dataset test = with_encoding(parts.test, apply_encoding(train_view.params, parts.test));
    test.noise_mask = std::vector<bool>(test.size(), false);

    if (report.noise != NoiseType::none) {
        train = inject(train, cfg, derive_seed(cfg.seed, kTrainNoiseTag));
        validation = inject(validation, cfg, derive_seed(cfg.seed, kValidationNoiseTag));
    }
    report.train_rows = train.size();
    report.validation_rows = validation.size();
    report.test_rows = test.size();
    report.train_noisy = train.noisy_count();
    report.validation_noisy = validation.noisy_count();
    report.test_noisy = test.noisy_count();

    if (cfg.artifacts_dir) {
        save_dataset(train, *cfg.artifacts_dir / "train");
        save_dataset(validation, *cfg.artifacts_dir / "validation");
        save_dataset(test, *cfg.artifacts_dir / "test");
        write_file_atomic(*cfg.artifacts_dir / "experiment_config.json", cfg_json.dump(1) + "\n");
    }

    const int k = train.num_classes;
    const SelectionMetric metric = default_metric(k);
    const FitOptions fit_opts{cfg.workers, k};

    const TuneResult noisy_tune = random_search_tune(train, validation, cfg.tune_budget, metric, cfg.space,
                                                     derive_seed(cfg.seed, kTuneNoisyTag), cfg.workers);
    report.noisy_config = noisy_tune.config;
    const Ensemble noisy_model = fit(train.X, train.y, ones(train.size()), noisy_tune.config, fit_opts);
    report.noisy = score_model(noisy_model, test);

    if (report.noise == NoiseType::none) {
        if (cfg.artifacts_dir) write_file_atomic(*cfg.artifacts_dir / "report.json", report.to_json().dump(1) + "\n");
        return report;
    }

    std::optional<ProbabilityMatrix> train_proba;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        const Method method = cfg.methods[mi];
        MethodOutcome out;
        out.method = method;
        try {
            Detection det;
            switch (method) {
                case Method::product_threshold: {
                    const auto dyn = compute_dynamics(noisy_model, train.X, train.y);
                    det = valley_detection(dyn.product, false);
                    break;
                }
                case Method::weight_threshold: {
                    WeightLearningOptions wo;
                    wo.rounds = cfg.rounds;
                    wo.workers = cfg.workers;
                    wo.num_classes = k;
                    const auto traj = learn_weights(train.X, train.y, cfg.detection_config, wo);
                    det = valley_detection(traj.final_weights(), true);
                    break;
                }
                default: {
                    if (!train_proba) train_proba = noisy_model.predict_proba(train.X);
                    if (method == Method::low_probability) det.result = heuristic_low_probability(*train_proba, train.y);
                    if (method == Method::short_confidence) det.result = heuristic_short_confidence(*train_proba, train.y);
                    if (method == Method::long_confidence) det.result = heuristic_long_confidence(*train_proba, train.y);
                    det.rule = "fixed";
                    break;
                }
            }
            out.threshold = det.result.threshold;
            out.threshold_rule = det.rule;
            out.removed = det.result.flagged_count();
            out.detection = detection_score(det.result.flags, *train.noise_mask);
            if (cfg.artifacts_dir) {
                write_flags(det.result, train.ids, *cfg.artifacts_dir / (std::string("flags-") + to_string(method) + ".csv"),
                            report.config_digest);
            }

            std::vector<std::size_t> keep;
            for (std::size_t j = 0; j < train.size(); ++j) {
                if (!det.result.flags[j]) keep.push_back(j);
            }
            const Dataset cleaned = train.subset(keep);
            const auto counts = cleaned.class_counts();
            for (std::size_t c = 0; c < counts.size(); ++c) {
                if (counts[c] == 0) {
                    throw Error("cleaning removed every instance of class " + train.schema.classes[c]);
                }
            }
            const TuneResult tune = random_search_tune(cleaned, validation, cfg.tune_budget, metric, cfg.space,
                                                       derive_seed(cfg.seed, kTuneCleanedTag + mi), cfg.workers);
            out.cleaned_config = tune.config;
            const Ensemble model = fit(cleaned.X, cleaned.y, ones(cleaned.size()), tune.config, fit_opts);
            out.cleaned = score_model(model, test);
        } catch (const Error& e) {
            out.ok = false;
            out.error = e.what();
        }
        report.methods.push_back(std::move(out));
    }
    if (cfg.artifacts_dir) write_file_atomic(*cfg.artifacts_dir / "report.json", report.to_json().dump(1) + "\n");
    return report;
}

std::string reports_csv(const std::vector<ExperimentReport>& reports) {
    std::string out =
        "dataset,noise,rate,method,status,removed,threshold,fpr,fnr,precision,recall,f1,f1_macro,prauc\n";
    auto row = [&](const ExperimentReport& r, const std::string& method, const std::string& status,
                   const std::string& removed, const std::string& threshold, const DetectionScore* d,
                   const ClassificationScore* s) {
        out += r.dataset_id + "," + to_string(r.noise) + "," + format_double(r.rate) + "," + method + "," + status +
               "," + removed + "," + threshold + ",";
        out += d ? format_double(d->fpr) + "," + format_double(d->fnr) : std::string(",");
        out += ",";
        if (s) {
            out += format_double(s->precision) + "," + format_double(s->recall) + "," + format_double(s->f1) + "," +
                   format_double(s->f1_macro) + "," + csv_number(s->prauc);
        } else {
            out += ",,,,";
        }
        out += "\n";
    };
    for (const auto& r : reports) {
        row(r, "noisy", "ok", "0", "", nullptr, &r.noisy);
        for (const auto& m : r.methods) {
            row(r, to_string(m.method), m.ok ? "ok" : "failed", std::to_string(m.removed),
                m.threshold_rule.empty() ? "" : format_double(m.threshold), m.detection ? &*m.detection : nullptr,
                m.cleaned ? &*m.cleaned : nullptr);
        }
    }
    return out;
}

}  // namespace dyncart
