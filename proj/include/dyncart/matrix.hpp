#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dyncart {

// Dense row-major n x d grid of finite reals.
class FeatureMatrix {
  public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols);
    // Throws if values.size() != rows * cols or any value is non-finite.
    FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0; }

    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        return {values_.data() + r * cols_, cols_};
    }
    std::span<const double> values() const { return values_; }

    FeatureMatrix select_rows(std::span<const std::size_t> indices) const;

    bool operator==(const FeatureMatrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

// Row-major n x K probability (or score) table.
struct ProbabilityMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

// Row-major T x n table indexed (iteration, instance).
template <typename T>
struct StagedTable {
    std::size_t iterations = 0;
    std::size_t instances = 0;
    std::vector<T> values;

    T operator()(std::size_t i, std::size_t j) const { return values[i * instances + j]; }
    std::span<const T> iteration(std::size_t i) const {
        return {values.data() + i * instances, instances};
    }
};

}  // namespace dyncart
