#include "dyncart/matrix.hpp"

#include <cmath>
#include <string>

#include "dyncart/error.hpp"

namespace dyncart {

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw Error("shape mismatch: " + std::to_string(values_.size()) + " values for " +
                    std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw Error("non-finite feature value at row " + std::to_string(i / cols_) +
                        " column " + std::to_string(i % cols_));
        }
    }
}

FeatureMatrix FeatureMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw Error("shape mismatch: ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return FeatureMatrix(rows.size(), cols, std::move(flat));
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> indices) const {
    std::vector<double> out;
    out.reserve(indices.size() * cols_);
    for (std::size_t r : indices) {
        auto src = row(r);
        out.insert(out.end(), src.begin(), src.end());
    }
    FeatureMatrix m;
    m.rows_ = indices.size();
    m.cols_ = cols_;
    m.values_ = std::move(out);
    return m;
}

}  // namespace dyncart
