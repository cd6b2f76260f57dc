#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyncart/dataset.hpp"
#include "dyncart/evaluation.hpp"
#include "dyncart/gbdt.hpp"
#include "dyncart/noise_lab.hpp"
#include "dyncart/rng.hpp"

namespace dyncart {

struct SearchSpace {
    int min_iterations = 50;
    int max_iterations = 300;
    double min_learning_rate = 0.03;  // log-uniform
    double max_learning_rate = 0.3;
    int min_depth = 3;
    int max_depth = 8;
    double min_l2 = 0.1;  // log-uniform
    double max_l2 = 10.0;
};

TrainConfig sample_config(const SearchSpace& space, Rng& rng);

struct TuneResult {
    TrainConfig config;
    double metric = 0.0;
    std::vector<double> trial_metrics;
};

// Seeded random search: `budget` configs drawn from `space`, each fitted on
// train and scored on validation. The first best trial wins ties.
TuneResult random_search_tune(const Dataset& train, const Dataset& validation, int budget,
                              SelectionMetric metric, const SearchSpace& space, std::uint64_t seed,
                              unsigned workers = 1);

SelectionMetric default_metric(int num_classes);

// Test-set score of a fitted model, with PR-AUC for binary problems.
ClassificationScore score_model(const Ensemble& model, const Dataset& test);

enum class NoiseType { none, ncar, nnar };
const char* to_string(NoiseType t);
NoiseType noise_type_from_string(const std::string& s);

enum class Method { product_threshold, weight_threshold, low_probability, short_confidence, long_confidence };
const char* to_string(Method m);
Method method_from_string(const std::string& s);
std::vector<Method> all_methods();

// Config used for the weight-learning detector. The full learning rate makes
// every round fit the training labels closely, so the per-round decrement
// 1 - c*mu stays small for instances whose label agrees with their
// neighborhood and the weights settle within ten rounds.
TrainConfig default_detection_config();

struct DatasetSource {
    std::string kind = "binary";  // binary | multiclass | file
    std::size_t n = 15100;
    std::uint64_t seed = 7;
    std::filesystem::path path;  // kind == file: dataset stem with sidecar
};

struct ExperimentConfig {
    DatasetSource dataset;
    SplitSpec split;
    NoiseType noise = NoiseType::ncar;
    double rate = 0.1;
    int nnar_k = 10;
    double nnar_p = 0.5;
    std::vector<Method> methods = all_methods();
    std::uint64_t seed = 0;
    int tune_budget = 10;
    SearchSpace space;
    TrainConfig detection_config = default_detection_config();
    int rounds = 10;
    unsigned workers = 1;
    // When set, split parts, noisy data, flags and the report are written here.
    std::optional<std::filesystem::path> artifacts_dir;

    nlohmann::json to_json() const;
};

struct MethodOutcome {
    Method method = Method::weight_threshold;
    bool ok = true;
    std::string error;
    double threshold = 0.0;
    std::string threshold_rule;  // "valley", "valley-fallback" or "fixed"
    std::size_t removed = 0;
    std::optional<DetectionScore> detection;
    std::optional<ClassificationScore> cleaned;
    std::optional<TrainConfig> cleaned_config;
};

struct ExperimentReport {
    std::string dataset_id;
    NoiseType noise = NoiseType::none;
    double rate = 0.0;
    std::uint64_t seed = 0;
    std::size_t train_rows = 0;
    std::size_t validation_rows = 0;
    std::size_t test_rows = 0;
    std::size_t train_noisy = 0;
    std::size_t validation_noisy = 0;
    std::size_t test_noisy = 0;  // always 0: test labels are never touched
    TrainConfig noisy_config;
    ClassificationScore noisy;
    std::vector<MethodOutcome> methods;
    std::string config_digest;

    const MethodOutcome* find(Method m) const;
    nlohmann::json to_json() const;
};

Dataset experiment_dataset(const DatasetSource& source);

// generate/load -> stratified split -> encode (fit on train) -> noise into
// train and validation -> tune + fit on noisy data -> per method: detect on
// train, drop flagged rows, tune + fit, score on the untouched test part.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

nlohmann::json score_to_json(const ClassificationScore& s);
nlohmann::json detection_to_json(const DetectionScore& s);

// One header line plus one row per (noise, method), the noisy baseline first.
std::string reports_csv(const std::vector<ExperimentReport>& reports);

}  // namespace dyncart
