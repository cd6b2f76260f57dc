#include "dyncart/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dyncart/error.hpp"

namespace dyncart {

namespace {

constexpr int kValleyBins = 50;

void check_threshold(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("invalid threshold: must be in [0, 1]");
}

bool flag(double score, double threshold, Direction d) {
    return d == Direction::flag_if_below ? score < threshold : score > threshold;
}

double percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

}  // namespace

const char* to_string(Direction d) {
    return d == Direction::flag_if_below ? "flag-if-below" : "flag-if-above";
}

Direction direction_from_string(const std::string& s) {
    if (s == "flag-if-below") return Direction::flag_if_below;
    if (s == "flag-if-above") return Direction::flag_if_above;
    throw Error("invalid direction: " + s);
}

DetectionResult DetectionResult::from_scores(std::string score_name, std::vector<double> scores,
                                             double threshold, Direction direction) {
    DetectionResult r;
    r.score_name = std::move(score_name);
    r.threshold = threshold;
    r.direction = direction;
    r.flags.resize(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j) r.flags[j] = flag(scores[j], threshold, direction);
    r.scores = std::move(scores);
    return r;
}

std::size_t DetectionResult::flagged_count() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

bool DetectionResult::consistent() const {
    if (flags.size() != scores.size()) return false;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (flags[j] != flag(scores[j], threshold, direction)) return false;
    }
    return true;
}

DetectionResult detect_by_product(const TrainingDynamics& dyn, double threshold) {
    check_threshold(threshold);
    return DetectionResult::from_scores("product", dyn.product, threshold, Direction::flag_if_below);
}

WeightTrajectory learn_weights(const FeatureMatrix& X, const LabelVector& y, const TrainConfig& cfg,
                               const WeightLearningOptions& opts) {
    if (opts.rounds < 1) throw Error("invalid rounds: E must be >= 1");
    if (!(opts.initial_weight > 0.0 && opts.initial_weight <= 1.0)) {
        throw Error("invalid initial weight: must be in (0, 1]");
    }
    const std::size_t n = y.size();
    std::vector<double> w(n, opts.initial_weight);
    WeightTrajectory traj;
    FitOptions fit_opts{opts.workers, opts.num_classes};
    if (fit_opts.num_classes == 0) {
        fit_opts.num_classes = y.empty() ? 0 : *std::max_element(y.begin(), y.end()) + 1;
    }
    for (int round = 0; round < opts.rounds; ++round) {
        Ensemble model;
        try {
            model = fit(X, y, w, cfg, fit_opts);
        } catch (const Error& e) {
            if (round == 0) throw;
            throw Error(std::string("weight collapse: surviving instances cannot be trained (") +
                        e.what() + ")");
        }
        const auto dyn = compute_dynamics(model, X, y);
        bool any_positive = false;
        for (std::size_t j = 0; j < n; ++j) {
            w[j] = std::clamp(w[j] - (1.0 - dyn.product[j]), 0.0, 1.0);
            any_positive = any_positive || w[j] > 0.0;
        }
        traj.rounds.push_back(w);
        if (!any_positive) {
            throw Error("weight collapse: all weights reached 0 in round " + std::to_string(round + 1) +
                        "; lower the learning pressure");
        }
    }
    return traj;
}

DetectionResult detect_by_weight(std::span<const double> final_weights, double threshold) {
    check_threshold(threshold);
    return DetectionResult::from_scores(
        "weight", std::vector<double>(final_weights.begin(), final_weights.end()), threshold,
        Direction::flag_if_below);
}

DetectionResult detect_by_weight(const WeightTrajectory& traj, double threshold) {
    if (traj.rounds.empty()) throw Error("empty trajectory");
    return detect_by_weight(traj.final_weights(), threshold);
}

ValleyThreshold auto_valley_threshold(std::span<const double> values) {
    if (values.size() < 20) throw Error("too few values: valley search needs at least 20");
    std::vector<double> hist(kValleyBins, 0.0);
    for (double v : values) {
        const double c = std::clamp(v, 0.0, 1.0);
        const int b = std::min(kValleyBins - 1, static_cast<int>(c * kValleyBins));
        hist[b] += 1.0;
    }
    std::vector<double> smooth(kValleyBins);
    for (int b = 0; b < kValleyBins; ++b) {
        double s = 0.0;
        int cnt = 0;
        for (int o = -1; o <= 1; ++o) {
            const int q = b + o;
            if (q < 0 || q >= kValleyBins) continue;
            s += hist[q];
            ++cnt;
        }
        smooth[b] = s / cnt;
    }

    // Local maxima: plateau runs whose neighbors on both sides are lower (or
    // absent), represented by the run's middle bin.
    struct Peak {
        double height;
        int bin;
    };
    std::vector<Peak> peaks;
    for (int a = 0; a < kValleyBins;) {
        int b = a;
        while (b + 1 < kValleyBins && smooth[b + 1] == smooth[a]) ++b;
        const bool left_lower = a == 0 || smooth[a - 1] < smooth[a];
        const bool right_lower = b == kValleyBins - 1 || smooth[b + 1] < smooth[a];
        if (left_lower && right_lower && smooth[a] > 0.0) peaks.push_back({smooth[a], (a + b) / 2});
        a = b + 1;
    }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& x, const Peak& y) { return x.height > y.height; });

    if (peaks.size() >= 2) {
        const int lo = std::min(peaks[0].bin, peaks[1].bin);
        const int hi = std::max(peaks[0].bin, peaks[1].bin);
        if (hi - lo >= 2) {
            double best = std::numeric_limits<double>::infinity();
            for (int b = lo + 1; b < hi; ++b) best = std::min(best, smooth[b]);
            int first = -1, last = -1;
            for (int b = lo + 1; b < hi; ++b) {
                if (smooth[b] == best) {
                    if (first < 0) first = b;
                    last = b;
                }
            }
            // Middle of the lowest bins; center of the two when the run has even length.
            const double center = (static_cast<double>(first + last) / 2.0 + 0.5) / kValleyBins;
            return {center, false};
        }
    }
    return {percentile(std::vector<double>(values.begin(), values.end()), 0.1), true};
}

DetectionResult heuristic_low_probability(const ProbabilityMatrix& probs, const LabelVector& y,
                                          double threshold) {
    if (probs.rows != y.size()) throw Error("shape mismatch: probabilities and labels differ");
    std::vector<double> scores(probs.rows);
    for (std::size_t j = 0; j < probs.rows; ++j) {
        const auto row = probs.row(j);
        scores[j] = *std::max_element(row.begin(), row.end());
    }
    return DetectionResult::from_scores("low_probability", std::move(scores), threshold,
                                        Direction::flag_if_below);
}

DetectionResult heuristic_short_confidence(const ProbabilityMatrix& probs, const LabelVector& y,
                                           double threshold) {
    if (probs.rows != y.size()) throw Error("shape mismatch: probabilities and labels differ");
    std::vector<double> scores(probs.rows);
    for (std::size_t j = 0; j < probs.rows; ++j) scores[j] = probs(j, static_cast<std::size_t>(y[j]));
    return DetectionResult::from_scores("short_confidence", std::move(scores), threshold,
                                        Direction::flag_if_below);
}

DetectionResult heuristic_long_confidence(const ProbabilityMatrix& probs, const LabelVector& y,
                                          double threshold) {
    if (probs.rows != y.size()) throw Error("shape mismatch: probabilities and labels differ");
    std::vector<double> scores(probs.rows, 0.0);
    for (std::size_t j = 0; j < probs.rows; ++j) {
        for (std::size_t c = 0; c < probs.cols; ++c) {
            if (static_cast<int>(c) != y[j]) scores[j] = std::max(scores[j], probs(j, c));
        }
    }
    return DetectionResult::from_scores("long_confidence", std::move(scores), threshold,
                                        Direction::flag_if_above);
}

ThresholdSearchResult validation_threshold_search(const Dataset& train, const Dataset& validation,
                                                  std::span<const double> scores,
                                                  std::span<const double> candidates,
                                                  SelectionMetric metric,
                                                  const TrainConfig& cheap_cfg, unsigned workers) {
    if (candidates.empty()) throw Error("empty candidate list");
    if (scores.size() != train.size()) throw Error("shape mismatch: scores and train rows differ");
    const int k = train.num_classes;
    ThresholdSearchResult result;
    result.metric = -std::numeric_limits<double>::infinity();
    result.threshold = candidates[0];
    bool have_best = false;
    for (double t : candidates) {
        double value = -std::numeric_limits<double>::infinity();
        std::vector<std::size_t> keep;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (!(scores[j] < t)) keep.push_back(j);
        }
        std::vector<char> present(static_cast<std::size_t>(k), 0);
        for (std::size_t j : keep) present[train.y[j]] = 1;
        const bool feasible = keep.size() >= static_cast<std::size_t>(k) &&
                              std::all_of(present.begin(), present.end(), [](char c) { return c != 0; });
        if (feasible) {
            const Dataset cleaned = train.subset(keep);
            const std::vector<double> w(cleaned.size(), 1.0);
            const Ensemble model = fit(cleaned.X, cleaned.y, w, cheap_cfg, {workers, k});
            value = validation_metric(model, validation.X, validation.y, metric, train.schema.positive_class);
        }
        result.candidate_metrics.push_back(value);
        const bool better = !have_best || value > result.metric ||
                            (value == result.metric && t < result.threshold);
        if (better) {
            result.metric = value;
            result.threshold = t;
            have_best = true;
        }
    }
    return result;
}

}  // namespace dyncart
