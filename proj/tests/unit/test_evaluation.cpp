#include <doctest.h>

#include <cmath>

#include "dyncart/error.hpp"
#include "dyncart/evaluation.hpp"
#include "oracles.hpp"

using namespace dyncart;
using namespace dyncart::testing;

TEST_CASE("detection score boundary cases") {
    const std::vector<bool> truth{true, false, true, false};
    const auto perfect = detection_score(truth, truth);
    CHECK(perfect.fpr == 0.0);
    CHECK(perfect.fnr == 0.0);
    const auto none = detection_score({false, false, false, false}, truth);
    CHECK(none.fnr == 1.0);
    CHECK(none.fpr == 0.0);
    CHECK_THROWS_WITH_AS(detection_score({true, false}, {false, false}), doctest::Contains("undefined rate"), Error);
    CHECK_THROWS_AS(detection_score({true}, {true, false}), Error);
}

TEST_CASE("detection score on a hand-counted confusion") {
    const std::vector<bool> truth{true, true, true, true, false, false, false, false, false, false};
    const std::vector<bool> flags{true, true, true, false, true, false, false, false, false, false};
    const auto s = detection_score(flags, truth);
    CHECK(s.tp == 3);
    CHECK(s.fp == 1);
    CHECK(s.tn == 5);
    CHECK(s.fn == 1);
    CHECK(s.fpr == 1.0 / 6.0);
    CHECK(s.fnr == 0.25);
    CHECK(s.precision == 0.75);
    CHECK(s.recall == 0.75);
}

TEST_CASE("classification score on hand-counted fixtures") {
    const LabelVector y{0, 1, 0, 1, 2, 2};
    const auto perfect = classification_score(y, y, 3);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    // TP=2, FP=2, FN=0 for the positive class.
    const auto s = classification_score({1, 1, 0, 0, 0}, {1, 1, 1, 1, 0}, 2);
    CHECK(s.precision == 0.5);
    CHECK(s.recall == 1.0);
    CHECK(s.f1 == 2.0 / 3.0);
    // Negative class: TP=1, FP=0, FN=2 gives f1 0.5.
    CHECK(s.f1_macro == doctest::Approx((2.0 / 3.0 + 0.5) / 2.0).epsilon(1e-15));

    // Class 3 never present nor predicted counts as f1 0 in the macro mean.
    const auto m = classification_score({0, 1, 2}, {0, 1, 2}, 4);
    CHECK(m.f1_macro == 0.75);
}

TEST_CASE("classification score carries PR-AUC for binary problems") {
    const std::vector<double> scores{0.9, 0.2, 0.8, 0.1};
    const auto s = classification_score({1, 0, 1, 0}, {1, 0, 1, 0}, 2, scores);
    REQUIRE(s.prauc.has_value());
    CHECK(*s.prauc == 1.0);
    CHECK_FALSE(classification_score({0, 1, 2}, {0, 1, 2}, 3).prauc.has_value());
}

TEST_CASE("pr_auc fixed cases") {
    const std::vector<double> perfect{0.9, 0.8, 0.3, 0.1};
    CHECK(pr_auc({true, true, false, false}, perfect) == 1.0);

    const std::vector<bool> y{true, false, true, false};
    const std::vector<double> s{0.9, 0.8, 0.7, 0.1};
    // Thresholds 0.9, 0.8, 0.7 reach recall 0.5, 0.5, 1 at precision 1, 0.5, 2/3.
    CHECK(pr_auc(y, s) == doctest::Approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0)).epsilon(1e-15));
    CHECK(std::abs(pr_auc(y, s) - brute_force_pr_auc(y, s)) <= 1e-12);

    // Inverted ranking: the only recall step happens at the last threshold,
    // where precision equals the positive prevalence.
    const std::vector<double> inv{0.1, 0.9, 0.2, 0.8};
    CHECK(pr_auc(y, inv) == doctest::Approx(0.5 * 1.0 / 3.0 + 0.5 * 0.5).epsilon(1e-15));
    CHECK(std::abs(pr_auc(y, inv) - brute_force_pr_auc(y, inv)) <= 1e-12);

    // One tie group containing everything.
    const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
    CHECK(pr_auc(y, flat) == 0.5);

    CHECK_THROWS_WITH_AS(pr_auc({true, true}, std::vector<double>{0.1, 0.2}), doctest::Contains("undefined PRAUC"), Error);
}

TEST_CASE("pr_auc equals brute-force enumeration on small random instances") {
    Rng rng(2024);
    int checked = 0;
    while (checked < 300) {
        const std::size_t n = 2 + rng.below(11);
        std::vector<bool> y(n);
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.bernoulli(0.4);
            s[i] = static_cast<double>(rng.below(6)) / 5.0;  // coarse grid forces ties
        }
        if (std::count(y.begin(), y.end(), true) == 0 || std::count(y.begin(), y.end(), false) == 0) continue;
        CHECK(std::abs(pr_auc(y, s) - brute_force_pr_auc(y, s)) <= 1e-12);
        ++checked;
    }
}
