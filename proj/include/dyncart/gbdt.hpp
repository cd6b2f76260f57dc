#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyncart/matrix.hpp"

namespace dyncart {

using LabelVector = std::vector<int>;

struct TrainConfig {
    int num_iterations = 100;
    double learning_rate = 0.1;
    int max_depth = 6;
    // Minimum hessian sum per child, measured on weights normalized to mean 1.
    double min_child_weight = 1e-3;
    double l2_reg = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

// Binary regression tree; nodes[0] is the root. Rows with x[feature] < threshold
// go left.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const;
    std::size_t leaf_count() const;
    bool operator==(const RegressionTree&) const = default;
};

struct FitOptions {
    // Split search is spread over this many threads; output is identical for
    // every value.
    unsigned workers = 1;
    // 0 infers K = max(y) + 1.
    int num_classes = 0;
};

// Trained boosted ensemble. Binary problems carry one tree per iteration
// (raw score of class 1), multiclass problems carry K trees per iteration.
class Ensemble {
  public:
    Ensemble() = default;
    Ensemble(int num_classes, int num_features, std::vector<double> base_score, TrainConfig config,
             std::vector<std::vector<RegressionTree>> iterations);

    int num_classes() const { return num_classes_; }
    int num_features() const { return num_features_; }
    int num_iterations() const { return static_cast<int>(iterations_.size()); }
    int trees_per_iteration() const { return num_classes_ == 2 ? 1 : num_classes_; }
    const TrainConfig& config() const { return config_; }
    const std::vector<double>& base_score() const { return base_score_; }
    const std::vector<std::vector<RegressionTree>>& iterations() const { return iterations_; }

    // Full-model class probabilities (all T iterations).
    ProbabilityMatrix predict_proba(const FeatureMatrix& X) const;

    bool operator==(const Ensemble&) const = default;

  private:
    int num_classes_ = 0;
    int num_features_ = 0;
    std::vector<double> base_score_;
    TrainConfig config_;
    std::vector<std::vector<RegressionTree>> iterations_;
};

// Weighted second-order boosting. Zero-weight rows are removed before any
// statistic is computed; remaining weights are rescaled to mean 1.
Ensemble fit(const FeatureMatrix& X, const LabelVector& y, std::span<const double> weights,
             const TrainConfig& cfg, const FitOptions& opts = {});

// Probabilities using the base score plus the first `iteration` tree groups,
// 1 <= iteration <= T.
ProbabilityMatrix predict_proba_at(const Ensemble& model, const FeatureMatrix& X, int iteration);

// (i, j) = probability of y[j] after i + 1 iterations, in one cumulative sweep.
StagedTable<double> staged_scores(const Ensemble& model, const FeatureMatrix& X,
                                  const LabelVector& y);

// (i, j) = argmax class after i + 1 iterations; ties go to the lower class.
StagedTable<int> staged_predictions(const Ensemble& model, const FeatureMatrix& X);

double weighted_log_loss(const Ensemble& model, const FeatureMatrix& X, const LabelVector& y,
                         std::span<const double> weights, int iteration);

nlohmann::json config_to_json(const TrainConfig& cfg);
// Validates the result; json errors propagate as nlohmann exceptions.
TrainConfig config_from_json(const nlohmann::json& j);

// Model file (JSON, format_version 1).
std::string serialize(const Ensemble& model);
Ensemble deserialize(const std::string& bytes);

// Argmax with lowest-index tie-breaking.
int argmax(std::span<const double> row);

}  // namespace dyncart
