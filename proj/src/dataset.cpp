#include "dyncart/dataset.hpp"

#include <set>

#include "dyncart/error.hpp"

namespace dyncart {

void ColumnSchema::validate() const {
    std::set<std::string> names;
    for (const auto& c : columns) {
        if (c.name.empty()) throw Error("schema mismatch: empty column name");
        if (!names.insert(c.name).second) throw Error("schema mismatch: duplicate column " + c.name);
        if (c.name == target) throw Error("schema mismatch: target column listed as feature");
        std::set<std::string> cats(c.categories.begin(), c.categories.end());
        if (cats.size() != c.categories.size()) {
            throw Error("schema mismatch: duplicate category in column " + c.name);
        }
        if (c.kind == ColumnKind::categorical && c.categories.empty()) {
            throw Error("schema mismatch: categorical column " + c.name + " has no categories");
        }
    }
    std::set<std::string> cls(classes.begin(), classes.end());
    if (cls.size() != classes.size()) throw Error("schema mismatch: duplicate class name");
}

int ColumnSchema::class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == name) return static_cast<int>(i);
    }
    return -1;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
    for (int label : y) ++counts.at(static_cast<std::size_t>(label));
    return counts;
}

std::size_t Dataset::noisy_count() const {
    if (!noise_mask) return 0;
    std::size_t c = 0;
    for (bool b : *noise_mask) c += b ? 1 : 0;
    return c;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.X = X.select_rows(rows);
    out.num_classes = num_classes;
    out.schema = schema;
    out.provenance = provenance;
    out.y.reserve(rows.size());
    out.ids.reserve(rows.size());
    if (noise_mask) out.noise_mask.emplace();
    for (std::size_t r : rows) {
        out.y.push_back(y[r]);
        out.ids.push_back(ids[r]);
        if (noise_mask) out.noise_mask->push_back((*noise_mask)[r]);
    }
    return out;
}

void Dataset::validate() const {
    const std::size_t n = y.size();
    if (X.rows() != n) throw Error("shape mismatch: X rows differ from labels");
    if (ids.size() != n) throw Error("shape mismatch: ids differ from labels");
    if (noise_mask && noise_mask->size() != n) throw Error("shape mismatch: noise_mask length differs");
    if (X.cols() != schema.columns.size()) throw Error("schema mismatch: column count differs");
    for (int label : y) {
        if (label < 0 || label >= num_classes) throw Error("invalid label: out of range");
    }
    std::set<std::int64_t> seen(ids.begin(), ids.end());
    if (seen.size() != n) throw Error("duplicate instance id");
}

ColumnSchema numeric_schema(std::size_t num_features, int num_classes) {
    ColumnSchema s;
    for (std::size_t f = 0; f < num_features; ++f) s.columns.push_back({"x" + std::to_string(f), ColumnKind::numeric, {}});
    for (int c = 0; c < num_classes; ++c) s.classes.push_back(std::to_string(c));
    s.positive_class = num_classes == 2 ? 1 : 0;
    return s;
}

}  // namespace dyncart
