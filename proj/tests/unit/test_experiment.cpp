#include <doctest.h>

#include <sstream>

#include "dyncart/data_io.hpp"
#include "dyncart/error.hpp"
#include "dyncart/experiment.hpp"
#include "oracles.hpp"

using namespace dyncart;
using namespace dyncart::testing;

namespace {

SplitParts small_binary(std::size_t n = 1500) {
    const auto full = gen_binary_synthetic(n, 7);
    const auto parts = stratified_split(full, {0.8, 0.1, 0.1, 1});
    const auto view = fit_encoding(parts.train);
    SplitParts enc;
    enc.train = with_encoding(parts.train, view);
    enc.validation = with_encoding(parts.validation, apply_encoding(view.params, parts.validation));
    enc.test = with_encoding(parts.test, apply_encoding(view.params, parts.test));
    return enc;
}

}  // namespace

TEST_CASE("sampled configs stay inside the search space") {
    SearchSpace space;
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const auto c = sample_config(space, rng);
        CHECK(c.num_iterations >= 50);
        CHECK(c.num_iterations <= 300);
        CHECK(c.learning_rate >= 0.03);
        CHECK(c.learning_rate <= 0.3);
        CHECK(c.max_depth >= 3);
        CHECK(c.max_depth <= 8);
        CHECK(c.l2_reg >= 0.1);
        CHECK(c.l2_reg <= 10.0);
        CHECK_NOTHROW(c.validate());
    }
}

TEST_CASE("random search with budget 1 returns the single sample and is deterministic") {
    const auto parts = small_binary();
    SearchSpace space;
    space.max_iterations = 60;
    const auto r = random_search_tune(parts.train, parts.validation, 1, SelectionMetric::prauc, space, 9);
    Rng rng(9);
    CHECK(r.config == sample_config(space, rng));
    CHECK(r.trial_metrics.size() == 1);
    const auto a = random_search_tune(parts.train, parts.validation, 4, SelectionMetric::prauc, space, 5);
    const auto b = random_search_tune(parts.train, parts.validation, 4, SelectionMetric::prauc, space, 5);
    CHECK(a.config == b.config);
    CHECK(a.metric == b.metric);
    CHECK_THROWS_AS(random_search_tune(parts.train, parts.validation, 0, SelectionMetric::prauc, space, 5), Error);
}

TEST_CASE("tuned config is at least as good as the default on validation") {
    const auto parts = small_binary(3000);
    const auto tuned = random_search_tune(parts.train, parts.validation, 20, SelectionMetric::prauc, SearchSpace{}, 3);
    const auto model = fit(parts.train.X, parts.train.y, std::vector<double>(parts.train.size(), 1.0), TrainConfig{});
    CHECK(tuned.metric >= validation_metric(model, parts.validation.X, parts.validation.y, SelectionMetric::prauc));
}

TEST_CASE("names round-trip") {
    for (auto m : all_methods()) CHECK(method_from_string(to_string(m)) == m);
    CHECK(noise_type_from_string("ncar") == NoiseType::ncar);
    CHECK(noise_type_from_string("NNAR") == NoiseType::nnar);
    CHECK_THROWS_AS(method_from_string("magic"), Error);
}

TEST_CASE("experiment without noise skips detection") {
    ExperimentConfig cfg;
    cfg.dataset.n = 800;
    cfg.rate = 0.0;
    cfg.tune_budget = 1;
    cfg.space.max_iterations = 60;
    const auto r = run_experiment(cfg);
    CHECK(r.noise == NoiseType::none);
    CHECK(r.methods.empty());
    CHECK(r.train_noisy == 0);
    CHECK(r.noisy.prauc.has_value());
}

TEST_CASE("experiment runs every method and leaves the test part clean") {
    const auto dir = scratch_dir("experiment");
    ExperimentConfig cfg;
    cfg.dataset.n = 1500;
    cfg.rate = 0.1;
    cfg.tune_budget = 1;
    cfg.space.max_iterations = 60;
    cfg.detection_config.num_iterations = 30;
    cfg.artifacts_dir = dir;
    const auto r = run_experiment(cfg);
    CHECK(r.train_rows + r.validation_rows + r.test_rows == 1500);
    CHECK(r.train_noisy == static_cast<std::size_t>(std::llround(0.1 * r.train_rows)));
    CHECK(r.test_noisy == 0);
    REQUIRE(r.methods.size() == all_methods().size());
    for (const auto& m : r.methods) {
        INFO(to_string(m.method), " ", m.error);
        CHECK(m.ok);
        CHECK(m.detection.has_value());
        CHECK(m.cleaned.has_value());
    }
    CHECK(r.find(Method::weight_threshold)->threshold_rule.rfind("valley", 0) == 0);
    CHECK(r.find(Method::low_probability)->threshold_rule == "fixed");
    CHECK(fs::exists(dir / "train.csv"));
    CHECK(fs::exists(dir / "report.json"));

    const auto again = run_experiment(cfg);
    CHECK(again.to_json() == r.to_json());

    const std::string csv = reports_csv({r});
    std::istringstream lines(csv);
    std::string header, first;
    std::getline(lines, header);
    std::getline(lines, first);
    CHECK(header == "dataset,noise,rate,method,status,removed,threshold,fpr,fnr,precision,recall,f1,f1_macro,prauc");
    CHECK(first.find(",noisy,") != std::string::npos);
}
