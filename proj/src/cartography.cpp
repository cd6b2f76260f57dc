#include "dyncart/cartography.hpp"

#include <algorithm>
#include <cmath>

#include "dyncart/error.hpp"

namespace dyncart {

TrainingDynamics dynamics_from_staged(const StagedTable<double>& scores,
                                      const StagedTable<int>& predictions, const LabelVector& y) {
    const std::size_t n = y.size();
    const std::size_t t = scores.iterations;
    if (scores.instances != n || predictions.instances != n || predictions.iterations != t) {
        throw Error("shape mismatch: staged tables do not match labels");
    }
    if (t == 0) throw Error("shape mismatch: zero iterations");

    TrainingDynamics dyn;
    dyn.iterations = static_cast<int>(t);
    dyn.mu.resize(n);
    dyn.sigma.resize(n);
    dyn.correctness.resize(n);
    dyn.product.resize(n);
    const double td = static_cast<double>(t);
    for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        int hits = 0;
        for (std::size_t i = 0; i < t; ++i) {
            sum += scores(i, j);
            if (predictions(i, j) == y[j]) ++hits;
        }
        const double mu = sum / td;
        double ss = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            const double dev = scores(i, j) - mu;
            ss += dev * dev;
        }
        dyn.mu[j] = mu;
        dyn.sigma[j] = std::sqrt(ss / td);
        dyn.correctness[j] = static_cast<double>(hits) / td;
        dyn.product[j] = dyn.correctness[j] * mu;
    }
    return dyn;
}

TrainingDynamics compute_dynamics(const Ensemble& model, const FeatureMatrix& X,
                                  const LabelVector& y) {
    if (y.size() != X.rows()) throw Error("shape mismatch: labels and rows differ");
    if (static_cast<int>(X.cols()) != model.num_features()) {
        throw Error("shape mismatch: feature count differs from model");
    }
    for (int label : y) {
        if (label < 0 || label >= model.num_classes()) {
            throw Error("shape mismatch: label outside model classes");
        }
    }
    return dynamics_from_staged(staged_scores(model, X, y), staged_predictions(model, X), y);
}

bool CartographyReport::has_weights() const {
    return !points.empty() &&
           std::all_of(points.begin(), points.end(), [](const auto& p) { return p.weight.has_value(); });
}

CartographyReport dynamics_to_report(const TrainingDynamics& dyn, const LabelVector& y,
                                     const std::vector<std::int64_t>& ids,
                                     const std::vector<std::string>& class_names,
                                     std::string dataset_id) {
    if (dyn.size() == 0) throw Error("empty dynamics");
    if (y.size() != dyn.size() || ids.size() != dyn.size()) {
        throw Error("shape mismatch: dynamics, labels and ids differ in length");
    }
    CartographyReport report;
    report.dataset_id = std::move(dataset_id);
    report.iterations = dyn.iterations;
    report.points.reserve(dyn.size());
    for (std::size_t j = 0; j < dyn.size(); ++j) {
        CartographyPoint p;
        p.id = ids[j];
        p.mu = dyn.mu[j];
        p.sigma = dyn.sigma[j];
        p.correctness = dyn.correctness[j];
        p.product = dyn.product[j];
        const auto label = static_cast<std::size_t>(y[j]);
        p.label = label < class_names.size() ? class_names[label] : std::to_string(y[j]);
        report.points.push_back(std::move(p));
    }
    return report;
}

}  // namespace dyncart
