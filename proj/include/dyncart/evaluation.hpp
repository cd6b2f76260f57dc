#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dyncart/gbdt.hpp"

namespace dyncart {

// Noise detection quality with "positive" meaning a corrupted label.
struct DetectionScore {
    double fpr = 0.0;  // FP / (TN + FP)
    double fnr = 0.0;  // FN / (TP + FN)
    double precision = 0.0;
    double recall = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

DetectionScore detection_score(const std::vector<bool>& flags, const std::vector<bool>& truth);

struct ClassificationScore {
    // Positive-class figures for binary problems, macro averages otherwise.
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double f1_macro = 0.0;
    std::optional<double> prauc;  // binary only
};

// positive_scores (binary only, may be empty) are the positive-class
// probabilities used for PR-AUC.
ClassificationScore classification_score(const LabelVector& y_true, const LabelVector& y_pred,
                                         int num_classes,
                                         std::span<const double> positive_scores = {},
                                         int positive_class = 1);

// Step-wise average precision over distinct score thresholds; tied scores form
// one threshold.
double pr_auc(const std::vector<bool>& y_true, std::span<const double> scores);

enum class SelectionMetric { prauc, f1_macro };

// Validation metric of a fitted model: PR-AUC of the positive class for binary
// data, macro F1 otherwise.
double validation_metric(const Ensemble& model, const FeatureMatrix& X, const LabelVector& y,
                         SelectionMetric metric, int positive_class = 1);

}  // namespace dyncart
