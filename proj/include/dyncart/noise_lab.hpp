#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dyncart/dataset.hpp"

namespace dyncart {

// 2-D two-class mixture of Gaussian blobs, two moons and concentric circles,
// roughly two negatives per positive. n >= 100.
Dataset gen_binary_synthetic(std::size_t n, std::uint64_t seed);

// 2-D four-class mixture with strictly decreasing class counts (40/30/20/10 %).
Dataset gen_multiclass_synthetic(std::size_t n, std::uint64_t seed);

// Noise completely at random: exactly round(rate * n) labels changed. Binary
// labels are flipped; multiclass labels move to another uniformly chosen class
// while the strict descending order of class counts is kept.
Dataset inject_ncar(const Dataset& ds, double rate, std::uint64_t seed);

struct NnarOptions {
    double rate = 0.1;
    int k = 10;
    double swap_probability = 0.5;
    std::uint64_t seed = 0;
    int max_passes = 100;
};

struct NnarResult {
    Dataset dataset;
    // (instance, partner) row indices; partner was among the instance's k
    // nearest neighbors and had a different original label.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

// Noise not at random: labels exchanged between nearby differently-labeled
// pairs until the (even) target count round(rate * n) is reached. Distances
// are Euclidean over `space` (defaults to ds.X).
NnarResult inject_nnar(const Dataset& ds, const NnarOptions& opts,
                       const FeatureMatrix* space = nullptr);

// Exact k nearest neighbors (self excluded), ordered by distance then index.
std::vector<std::vector<std::uint32_t>> knn_table(const FeatureMatrix& X, int k);

struct SplitSpec {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitParts {
    Dataset train;
    Dataset validation;
    Dataset test;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> validation_rows;
    std::vector<std::size_t> test_rows;
};

// Per-class largest-remainder allocation; every part keeps ascending row order.
SplitParts stratified_split(const Dataset& ds, const SplitSpec& spec);

}  // namespace dyncart
