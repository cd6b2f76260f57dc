#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyncart/gbdt.hpp"
#include "dyncart/matrix.hpp"

namespace dyncart {

enum class ColumnKind { numeric, categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<std::string> categories;  // categorical only, in encoding order

    bool operator==(const ColumnSpec&) const = default;
};

struct ColumnSchema {
    std::vector<ColumnSpec> columns;  // feature columns, target excluded
    std::string target = "label";
    std::vector<std::string> classes;  // label index -> class name
    int positive_class = 1;

    // Throws on duplicate names, target among features, or duplicate categories.
    void validate() const;
    int class_index(const std::string& name) const;  // -1 when unknown
    bool operator==(const ColumnSchema&) const = default;
};

// Feature matrix plus labels. Categorical columns hold the category index as a
// real; encoding turns them into one-hot groups.
struct Dataset {
    FeatureMatrix X;
    LabelVector y;
    int num_classes = 0;
    ColumnSchema schema;
    std::vector<std::int64_t> ids;
    std::optional<std::vector<bool>> noise_mask;  // true = label corrupted
    nlohmann::json provenance = nlohmann::json::object();

    std::size_t size() const { return y.size(); }
    std::vector<std::size_t> class_counts() const;
    std::size_t noisy_count() const;
    // Rows in the given order; mask and ids follow.
    Dataset subset(std::span<const std::size_t> rows) const;
    // Throws on any length or range inconsistency.
    void validate() const;
};

// Standard schema for all-numeric data: columns x0..x{d-1}, classes "0".."K-1".
ColumnSchema numeric_schema(std::size_t num_features, int num_classes);

}  // namespace dyncart
