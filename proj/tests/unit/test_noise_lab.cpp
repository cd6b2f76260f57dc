#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dyncart/error.hpp"
#include "dyncart/noise_lab.hpp"
#include "oracles.hpp"

using namespace dyncart;
using namespace dyncart::testing;

TEST_CASE("binary synthetic shape, balance and determinism") {
    const auto ds = gen_binary_synthetic(15100, 7);
    CHECK(ds.size() == 15100);
    CHECK(ds.X.cols() == 2);
    CHECK(ds.num_classes == 2);
    const auto counts = ds.class_counts();
    const double pos = static_cast<double>(counts[1]) / 15100.0;
    CHECK(pos >= 0.25);
    CHECK(pos <= 0.45);
    CHECK_FALSE(ds.noise_mask.has_value());
    const auto again = gen_binary_synthetic(15100, 7);
    CHECK(again.X == ds.X);
    CHECK(again.y == ds.y);
    CHECK(gen_binary_synthetic(15100, 8).X != ds.X);
    CHECK_THROWS_WITH_AS(gen_binary_synthetic(10, 7), doctest::Contains("too small"), Error);
}

TEST_CASE("multiclass synthetic shape and strictly decreasing class counts") {
    const auto ds = gen_multiclass_synthetic(16500, 7);
    CHECK(ds.size() == 16500);
    CHECK(ds.X.cols() == 2);
    CHECK(ds.num_classes == 4);
    const auto c = ds.class_counts();
    CHECK(c[0] > c[1]);
    CHECK(c[1] > c[2]);
    CHECK(c[2] > c[3]);
    const auto again = gen_multiclass_synthetic(16500, 7);
    CHECK(again.X == ds.X);
    CHECK(again.y == ds.y);
}

TEST_CASE("NCAR flips exactly round(rate * n) binary labels") {
    Rng rng(1);
    const auto base = make_dataset(random_matrix(10, 2, rng), {0, 1, 0, 1, 0, 1, 0, 0, 1, 0}, 2);
    const auto noisy = inject_ncar(base, 0.2, 3);
    REQUIRE(noisy.noise_mask.has_value());
    CHECK(noisy.noisy_count() == 2);
    for (std::size_t j = 0; j < 10; ++j) {
        if ((*noisy.noise_mask)[j]) CHECK(noisy.y[j] == 1 - base.y[j]);
        else CHECK(noisy.y[j] == base.y[j]);
    }
    CHECK(noisy.X == base.X);

    for (std::size_t n : {37u, 100u, 503u, 1000u}) {
        const auto ds = make_dataset(random_matrix(n, 2, rng), random_labels(n, 2, rng), 2);
        for (double rate : {0.01, 0.1, 0.25, 0.333, 0.5}) {
            const auto out = inject_ncar(ds, rate, n + static_cast<std::uint64_t>(rate * 1000));
            CHECK(out.noisy_count() == static_cast<std::size_t>(std::llround(rate * static_cast<double>(n))));
        }
    }
    CHECK_THROWS_AS(inject_ncar(base, 0.7, 1), Error);
    CHECK_THROWS_WITH_AS(inject_ncar(noisy, 0.1, 1), doctest::Contains("already corrupted"), Error);
}

TEST_CASE("multiclass NCAR keeps the class-count rank order") {
    const auto ds = gen_multiclass_synthetic(16500, 7);
    const auto noisy = inject_ncar(ds, 0.3, 5);
    CHECK(noisy.noisy_count() == 4950);
    const auto c = noisy.class_counts();
    CHECK(c[0] > c[1]);
    CHECK(c[1] > c[2]);
    CHECK(c[2] > c[3]);
    for (std::size_t j = 0; j < ds.size(); ++j) {
        CHECK(((*noisy.noise_mask)[j]) == (noisy.y[j] != ds.y[j]));
    }
}

TEST_CASE("knn_table matches the brute-force oracle") {
    Rng rng(9);
    const auto X = random_matrix(120, 3, rng);
    const auto table = knn_table(X, 7);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const std::set<std::size_t> got(table[i].begin(), table[i].end());
        CHECK(got == brute_force_knn_row(X, i, 7));
    }
}

TEST_CASE("NNAR pairs validate against an independent neighbor search") {
    const auto ds = gen_binary_synthetic(3000, 11);
    NnarOptions o;
    o.rate = 0.2;
    o.k = 10;
    o.seed = 4;
    const auto res = inject_nnar(ds, o);
    const auto& noisy = res.dataset;
    CHECK(noisy.noisy_count() == 600);
    CHECK(res.pairs.size() == 300);
    std::set<std::size_t> members;
    for (const auto& [a, b] : res.pairs) {
        CHECK(ds.y[a] != ds.y[b]);
        CHECK(brute_force_knn_row(ds.X, a, o.k).count(b) == 1);
        CHECK(members.insert(a).second);
        CHECK(members.insert(b).second);
        CHECK(noisy.y[a] == ds.y[b]);
        CHECK(noisy.y[b] == ds.y[a]);
    }
    for (std::size_t j = 0; j < ds.size(); ++j) CHECK((*noisy.noise_mask)[j] == (members.count(j) == 1));
    CHECK(noisy.class_counts() == ds.class_counts());
}

TEST_CASE("NNAR at 10% on the full binary set") {
    const auto ds = gen_binary_synthetic(15100, 7);
    NnarOptions o;
    o.rate = 0.1;
    o.seed = 2;
    const auto res = inject_nnar(ds, o);
    const auto count = res.dataset.noisy_count();
    CHECK(count % 2 == 0);
    CHECK(count >= 1509);
    CHECK(count <= 1511);
}

TEST_CASE("NNAR on well-separated blobs is infeasible") {
    Rng rng(6);
    std::vector<std::vector<double>> rows;
    LabelVector y;
    for (int c = 0; c < 2; ++c) {
        for (int j = 0; j < 1000; ++j) {
            rows.push_back({rng.normal(c * 100.0, 1.0), rng.normal(0.0, 1.0)});
            y.push_back(c);
        }
    }
    const auto ds = make_dataset(FeatureMatrix::from_rows(rows), y, 2);
    NnarOptions o;
    o.rate = 0.1;
    o.k = 5;
    CHECK_THROWS_WITH_AS(inject_nnar(ds, o), doctest::Contains("NNAR infeasible"), Error);
}

TEST_CASE("stratified split sizes") {
    const auto ds = gen_binary_synthetic(15100, 7);
    const auto parts = stratified_split(ds, {0.8, 0.1, 0.1, 3});
    CHECK(std::abs(static_cast<long>(parts.train.size()) - 12080) <= 1);
    CHECK(std::abs(static_cast<long>(parts.validation.size()) - 1510) <= 1);
    CHECK(std::abs(static_cast<long>(parts.test.size()) - 1510) <= 1);
    CHECK(parts.train.size() + parts.validation.size() + parts.test.size() == 15100);

    std::vector<std::size_t> all;
    for (const auto* rows : {&parts.train_rows, &parts.validation_rows, &parts.test_rows}) {
        CHECK(std::is_sorted(rows->begin(), rows->end()));
        all.insert(all.end(), rows->begin(), rows->end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t j = 0; j < all.size(); ++j) CHECK(all[j] == j);

    // Each part keeps the class balance within one instance per class.
    const auto total = ds.class_counts();
    const auto train = parts.train.class_counts();
    for (int c = 0; c < 2; ++c) CHECK(std::abs(static_cast<double>(train[c]) - 0.8 * total[c]) <= 1.0);

    Rng rng(2);
    const auto small = make_dataset(random_matrix(569, 2, rng), random_labels(569, 2, rng), 2);
    const auto bc = stratified_split(small, {0.67, 0.165, 0.165, 1});
    CHECK(std::abs(static_cast<long>(bc.train.size()) - 381) <= 1);
    CHECK(std::abs(static_cast<long>(bc.validation.size()) - 94) <= 1);
    CHECK(std::abs(static_cast<long>(bc.test.size()) - 94) <= 1);
}

TEST_CASE("single-class split follows the fractions") {
    Rng rng(3);
    const auto ds = make_dataset(random_matrix(100, 2, rng), LabelVector(100, 0), 2);
    const auto parts = stratified_split(ds, {0.8, 0.1, 0.1, 0});
    CHECK(parts.train.size() == 80);
    CHECK(parts.validation.size() == 10);
    CHECK(parts.test.size() == 10);
}

TEST_CASE("split validation") {
    CHECK_THROWS_AS((SplitSpec{0.5, 0.1, 0.1, 0}.validate()), Error);
    CHECK_THROWS_AS((SplitSpec{0.9, 0.1, 0.0, 0}.validate()), Error);
}
