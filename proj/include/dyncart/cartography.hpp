#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dyncart/gbdt.hpp"

namespace dyncart {

// Per-instance training dynamics of one fitted ensemble over its T iterations.
struct TrainingDynamics {
    std::vector<double> mu;           // mean probability of the training label
    std::vector<double> sigma;        // population std of that probability
    std::vector<double> correctness;  // fraction of iterations predicting the label
    std::vector<double> product;      // correctness * mu
    int iterations = 0;

    std::size_t size() const { return mu.size(); }
};

TrainingDynamics compute_dynamics(const Ensemble& model, const FeatureMatrix& X,
                                  const LabelVector& y);

// Reduction step, exposed for callers that already hold the staged tables.
TrainingDynamics dynamics_from_staged(const StagedTable<double>& scores,
                                      const StagedTable<int>& predictions, const LabelVector& y);

struct CartographyPoint {
    std::int64_t id = 0;
    double mu = 0.0;
    double sigma = 0.0;
    double correctness = 0.0;
    double product = 0.0;
    std::optional<double> weight;
    std::string label;
    std::optional<bool> flagged;
    std::optional<bool> noisy;  // ground truth, simulations only

    bool operator==(const CartographyPoint&) const = default;
};

struct CartographyReport {
    int format_version = 1;
    std::string dataset_id;
    int iterations = 0;
    std::vector<CartographyPoint> points;

    bool has_weights() const;
    bool operator==(const CartographyReport&) const = default;
};

// class_names maps label index to its display name; empty means the index itself.
CartographyReport dynamics_to_report(const TrainingDynamics& dyn, const LabelVector& y,
                                     const std::vector<std::int64_t>& ids,
                                     const std::vector<std::string>& class_names = {},
                                     std::string dataset_id = {});

}  // namespace dyncart
