#include "dyncart/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "dyncart/error.hpp"

namespace dyncart {

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return (p > 0.0 && r > 0.0) ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

DetectionScore detection_score(const std::vector<bool>& flags, const std::vector<bool>& truth) {
    if (flags.size() != truth.size()) throw Error("shape mismatch: flags and truth differ in length");
    DetectionScore s;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (truth[i]) (flags[i] ? s.tp : s.fn)++;
        else (flags[i] ? s.fp : s.tn)++;
    }
    if (s.tp + s.fn == 0 || s.tn + s.fp == 0) {
        throw Error("undefined rate: truth mask needs both noisy and clean instances");
    }
    s.fpr = ratio(s.fp, s.tn + s.fp);
    s.fnr = ratio(s.fn, s.tp + s.fn);
    s.precision = ratio(s.tp, s.tp + s.fp);
    s.recall = ratio(s.tp, s.tp + s.fn);
    return s;
}

ClassificationScore classification_score(const LabelVector& y_true, const LabelVector& y_pred,
                                         int num_classes, std::span<const double> positive_scores,
                                         int positive_class) {
    if (y_true.size() != y_pred.size()) throw Error("shape mismatch: y_true and y_pred differ");
    const auto k = static_cast<std::size_t>(num_classes);
    std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const auto t = static_cast<std::size_t>(y_true[i]);
        const auto p = static_cast<std::size_t>(y_pred[i]);
        if (t >= k || p >= k) throw Error("invalid label: out of range");
        if (t == p) ++tp[t];
        else {
            ++fp[p];
            ++fn[t];
        }
    }
    ClassificationScore s;
    std::vector<double> prec(k), rec(k), f1(k);
    for (std::size_t c = 0; c < k; ++c) {
        prec[c] = ratio(tp[c], tp[c] + fp[c]);
        rec[c] = ratio(tp[c], tp[c] + fn[c]);
        f1[c] = harmonic(prec[c], rec[c]);
    }
    s.f1_macro = std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(k);
    if (num_classes == 2) {
        const auto pc = static_cast<std::size_t>(positive_class);
        s.precision = prec[pc];
        s.recall = rec[pc];
        s.f1 = f1[pc];
        if (!positive_scores.empty()) {
            std::vector<bool> truth(y_true.size());
            for (std::size_t i = 0; i < y_true.size(); ++i) truth[i] = y_true[i] == positive_class;
            const bool both = std::any_of(truth.begin(), truth.end(), [](bool b) { return b; }) &&
                              std::any_of(truth.begin(), truth.end(), [](bool b) { return !b; });
            if (both) s.prauc = pr_auc(truth, positive_scores);
        }
    } else {
        s.precision = std::accumulate(prec.begin(), prec.end(), 0.0) / static_cast<double>(k);
        s.recall = std::accumulate(rec.begin(), rec.end(), 0.0) / static_cast<double>(k);
        s.f1 = s.f1_macro;
    }
    return s;
}

double pr_auc(const std::vector<bool>& y_true, std::span<const double> scores) {
    if (y_true.size() != scores.size()) throw Error("shape mismatch: labels and scores differ");
    const std::size_t positives = static_cast<std::size_t>(std::count(y_true.begin(), y_true.end(), true));
    if (positives == 0 || positives == y_true.size()) {
        throw Error("undefined PRAUC: need both positive and negative instances");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double area = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            tp += y_true[order[i]] ? 1 : 0;
            ++seen;
            ++i;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

double validation_metric(const Ensemble& model, const FeatureMatrix& X, const LabelVector& y,
                         SelectionMetric metric, int positive_class) {
    const auto proba = model.predict_proba(X);
    if (metric == SelectionMetric::prauc && model.num_classes() == 2) {
        std::vector<bool> truth(y.size());
        std::vector<double> s(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            truth[i] = y[i] == positive_class;
            s[i] = proba(i, static_cast<std::size_t>(positive_class));
        }
        return pr_auc(truth, s);
    }
    LabelVector pred(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] = argmax(proba.row(i));
    return classification_score(y, pred, model.num_classes()).f1_macro;
}

}  // namespace dyncart
