#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dyncart/error.hpp"
#include "dyncart/gbdt.hpp"
#include "oracles.hpp"

using namespace dyncart;
using namespace dyncart::testing;

namespace {

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

RegressionTree stump(double value) {
    RegressionTree t;
    t.nodes.push_back(TreeNode{-1, 0.0, -1, -1, value});
    return t;
}

Ensemble zero_model(int k, int iterations) {
    TrainConfig cfg;
    cfg.num_iterations = iterations;
    const int per = k == 2 ? 1 : k;
    std::vector<std::vector<RegressionTree>> groups(iterations, std::vector<RegressionTree>(per, stump(0.0)));
    return Ensemble(k, 2, std::vector<double>(per, 0.0), cfg, groups);
}

Ensemble random_fit(std::size_t n, int k, int t, std::uint64_t seed, FeatureMatrix& X, LabelVector& y) {
    Rng rng(seed);
    X = random_matrix(n, 3, rng);
    y = random_labels(n, k, rng);
    TrainConfig cfg;
    cfg.num_iterations = t;
    cfg.max_depth = 3;
    cfg.learning_rate = 0.3;
    return fit(X, y, ones(n), cfg, {1, k});
}

}  // namespace

TEST_CASE("fit separates a linearly separable toy set") {
    const auto [X, y] = separable_toy();
    TrainConfig cfg;
    cfg.num_iterations = 50;
    cfg.max_depth = 3;
    const auto model = fit(X, y, ones(y.size()), cfg);
    const auto p = model.predict_proba(X);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < y.size(); ++j) correct += argmax(p.row(j)) == y[j];
    CHECK(correct == y.size());
    CHECK(model.num_iterations() == 50);
    CHECK(model.trees_per_iteration() == 1);
}

TEST_CASE("single-class labels are rejected") {
    const auto [X, y] = separable_toy();
    LabelVector same(y.size(), 1);
    CHECK_THROWS_WITH_AS(fit(X, same, ones(y.size()), TrainConfig{}), doctest::Contains("degenerate labels"), Error);
}

TEST_CASE("zero-weight rows give the same trees as dropping them") {
    Rng rng(3);
    const auto X = random_matrix(60, 3, rng);
    const auto y = random_labels(60, 4, rng);
    std::vector<double> w(60, 1.0);
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < 60; ++j) {
        if (j % 3 == 1) w[j] = 0.0;
        else kept.push_back(j);
    }
    LabelVector y_kept;
    for (auto j : kept) y_kept.push_back(y[j]);
    TrainConfig cfg;
    cfg.num_iterations = 8;
    cfg.max_depth = 4;
    const auto a = fit(X, y, w, cfg, {1, 4});
    const auto b = fit(X.select_rows(kept), y_kept, ones(kept.size()), cfg, {1, 4});
    REQUIRE(a.num_iterations() == b.num_iterations());
    for (int i = 0; i < a.num_iterations(); ++i) CHECK(a.iterations()[i] == b.iterations()[i]);
    CHECK(a == b);
}

TEST_CASE("scaling all weights changes predictions only by rounding") {
    Rng rng(4);
    const auto X = random_matrix(50, 2, rng);
    const auto y = random_labels(50, 2, rng);
    std::vector<double> w(50), w3(50);
    for (std::size_t j = 0; j < 50; ++j) {
        w[j] = 0.2 + 0.01 * static_cast<double>(j);
        w3[j] = 3.0 * w[j];
    }
    TrainConfig cfg;
    cfg.num_iterations = 5;
    // Normalization makes both fits see the same weights up to rounding.
    const auto a = fit(X, y, w, cfg).predict_proba(X);
    const auto b = fit(X, y, w3, cfg).predict_proba(X);
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-9));
}

TEST_CASE("fit is identical for every worker count") {
    Rng rng(5);
    const auto X = random_matrix(300, 5, rng);
    const auto y = random_labels(300, 3, rng);
    TrainConfig cfg;
    cfg.num_iterations = 10;
    const auto one = fit(X, y, ones(300), cfg, {1, 3});
    for (unsigned workers : {2u, 3u, 8u}) CHECK(fit(X, y, ones(300), cfg, {workers, 3}) == one);
}

TEST_CASE("staged prediction at the last iteration equals the full prediction") {
    FeatureMatrix X;
    LabelVector y;
    for (int k : {2, 4}) {
        const auto model = random_fit(40, k, 12, 20 + k, X, y);
        const auto full = model.predict_proba(X);
        const auto last = predict_proba_at(model, X, model.num_iterations());
        CHECK(full.values == last.values);
    }
}

TEST_CASE("staged prediction rejects iterations outside [1, T]") {
    const auto model = zero_model(2, 3);
    const auto X = FeatureMatrix::from_rows({{0.0, 0.0}});
    CHECK_THROWS_AS(predict_proba_at(model, X, 0), Error);
    CHECK_THROWS_AS(predict_proba_at(model, X, 4), Error);
}

TEST_CASE("an all-zero model predicts uniform probabilities") {
    const auto X = FeatureMatrix::from_rows({{0.1, 0.2}, {5.0, -3.0}});
    const auto p2 = zero_model(2, 3).predict_proba(X);
    for (double v : p2.values) CHECK(v == 0.5);
    const auto p4 = zero_model(4, 3).predict_proba(X);
    for (double v : p4.values) CHECK(v == 0.25);
    const auto preds = staged_predictions(zero_model(4, 3), X);
    for (int c : preds.values) CHECK(c == 0);
}

TEST_CASE("staged scores and predictions match the naive per-iteration loop") {
    FeatureMatrix X;
    LabelVector y;
    for (int k : {2, 4}) {
        const auto model = random_fit(20, k, 10, 40 + k, X, y);
        const auto scores = staged_scores(model, X, y);
        const auto preds = staged_predictions(model, X);
        const auto naive_s = naive_staged_scores(model, X, y);
        const auto naive_p = naive_staged_predictions(model, X);
        REQUIRE(scores.iterations == 10);
        for (std::size_t i = 0; i < 10; ++i) {
            for (std::size_t j = 0; j < 20; ++j) {
                CHECK(std::abs(scores(i, j) - naive_s[i][j]) <= 1e-12);
                CHECK(preds(i, j) == naive_p[i][j]);
            }
        }
    }
}

TEST_CASE("staged scores on clean separable data end at least as high as they start") {
    const auto [X, y] = separable_toy();
    TrainConfig cfg;
    cfg.num_iterations = 50;
    cfg.max_depth = 3;
    const auto model = fit(X, y, ones(y.size()), cfg);
    const auto s = staged_scores(model, X, y);
    for (std::size_t j = 0; j < y.size(); ++j) CHECK(s(49, j) >= s(0, j));
}

TEST_CASE("weighted log loss") {
    const auto X = FeatureMatrix::from_rows({{0.0, 0.0}, {1.0, 1.0}});
    const LabelVector y{0, 1};
    CHECK(weighted_log_loss(zero_model(2, 2), X, y, ones(2), 2) == doctest::Approx(std::numbers::ln2).epsilon(1e-12));

    const auto [Xs, ys] = separable_toy();
    TrainConfig cfg;
    cfg.num_iterations = 60;
    cfg.max_depth = 3;
    cfg.learning_rate = 0.1;
    const auto model = fit(Xs, ys, ones(ys.size()), cfg);
    double prev = weighted_log_loss(model, Xs, ys, ones(ys.size()), 1);
    for (int i = 2; i <= 60; ++i) {
        const double cur = weighted_log_loss(model, Xs, ys, ones(ys.size()), i);
        CHECK(cur <= prev + 1e-6);
        prev = cur;
    }
}

TEST_CASE("model serialization round-trips bit-exactly") {
    FeatureMatrix X;
    LabelVector y;
    const auto model = random_fit(40, 4, 6, 77, X, y);
    const std::string bytes = serialize(model);
    const auto back = deserialize(bytes);
    CHECK(back.config() == model.config());
    CHECK(back.base_score() == model.base_score());
    CHECK(back.predict_proba(X).values == model.predict_proba(X).values);
    CHECK(serialize(back) == bytes);

    CHECK_THROWS_WITH_AS(deserialize(bytes.substr(0, bytes.size() / 2)), doctest::Contains("corrupt model file"), Error);
    auto doc = nlohmann::json::parse(bytes);
    doc["format_version"] = 2;
    CHECK_THROWS_WITH_AS(deserialize(doc.dump()), doctest::Contains("unsupported format_version 2"), Error);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.max_depth = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.num_iterations = 7;
    cfg.seed = 9;
    CHECK(config_from_json(config_to_json(cfg)) == cfg);
}

TEST_CASE("argmax breaks ties toward the lower class") {
    const std::vector<double> row{0.3, 0.3, 0.3};
    CHECK(argmax(row) == 0);
    const std::vector<double> row2{0.1, 0.45, 0.45};
    CHECK(argmax(row2) == 1);
}
