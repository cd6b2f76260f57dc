#pragma once

#include <span>
#include <string>
#include <vector>

#include "dyncart/cartography.hpp"
#include "dyncart/dataset.hpp"
#include "dyncart/evaluation.hpp"
#include "dyncart/gbdt.hpp"

namespace dyncart {

enum class Direction { flag_if_below, flag_if_above };

const char* to_string(Direction d);
Direction direction_from_string(const std::string& s);

struct DetectionResult {
    std::vector<bool> flags;  // true = detected noisy
    std::string score_name;
    std::vector<double> scores;
    double threshold = 0.0;
    Direction direction = Direction::flag_if_below;

    // Flags follow from (scores, threshold, direction) exactly.
    static DetectionResult from_scores(std::string score_name, std::vector<double> scores,
                                       double threshold, Direction direction);
    std::size_t flagged_count() const;
    bool consistent() const;
};

// Flags m_j < threshold; threshold must lie in [0, 1].
DetectionResult detect_by_product(const TrainingDynamics& dyn, double threshold);

struct WeightTrajectory {
    std::vector<std::vector<double>> rounds;  // weights after each round, E x n

    std::size_t num_rounds() const { return rounds.size(); }
    const std::vector<double>& final_weights() const { return rounds.back(); }
};

struct WeightLearningOptions {
    int rounds = 10;
    // Algorithm initial weight; 1.0 keeps the clip range meaningful.
    double initial_weight = 1.0;
    unsigned workers = 1;
    int num_classes = 0;  // 0 infers from y
};

// Each round fits on the current weights, scores every instance (including
// zero-weight ones) and applies w <- clip(w - (1 - c * mu), 0, 1).
WeightTrajectory learn_weights(const FeatureMatrix& X, const LabelVector& y, const TrainConfig& cfg,
                               const WeightLearningOptions& opts = {});

// Flags final weight < threshold; threshold must lie in [0, 1].
DetectionResult detect_by_weight(const WeightTrajectory& traj, double threshold);
DetectionResult detect_by_weight(std::span<const double> final_weights, double threshold);

struct ValleyThreshold {
    double threshold = 0.0;
    bool unimodal_fallback = false;
};

// 50-bin histogram over [0, 1], 3-bin moving average, minimum bin strictly
// between the two highest local maxima. Falls back to the 10th percentile when
// there is no such valley. Needs at least 20 values.
ValleyThreshold auto_valley_threshold(std::span<const double> values);

// Max-class probability below threshold.
DetectionResult heuristic_low_probability(const ProbabilityMatrix& probs, const LabelVector& y,
                                          double threshold = 0.55);
// Probability of the given label below threshold.
DetectionResult heuristic_short_confidence(const ProbabilityMatrix& probs, const LabelVector& y,
                                           double threshold = 0.05);
// Some other class above threshold.
DetectionResult heuristic_long_confidence(const ProbabilityMatrix& probs, const LabelVector& y,
                                          double threshold = 0.95);

struct ThresholdSearchResult {
    double threshold = 0.0;
    double metric = 0.0;
    std::vector<double> candidate_metrics;  // -inf for infeasible candidates
};

// For each candidate t: drop train rows with score < t, fit cheap_cfg, evaluate
// on validation. Ties go to the smaller threshold.
ThresholdSearchResult validation_threshold_search(const Dataset& train, const Dataset& validation,
                                                  std::span<const double> scores,
                                                  std::span<const double> candidates,
                                                  SelectionMetric metric,
                                                  const TrainConfig& cheap_cfg, unsigned workers = 1);

}  // namespace dyncart
