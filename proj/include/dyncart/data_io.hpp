#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dyncart/cartography.hpp"
#include "dyncart/dataset.hpp"
#include "dyncart/detection.hpp"

namespace dyncart {

namespace fs = std::filesystem;

// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);  // throws on trailing garbage

// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const fs::path& path, std::string_view content);
std::string read_file(const fs::path& path);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

nlohmann::json schema_to_json(const ColumnSchema& schema);
ColumnSchema schema_from_json(const nlohmann::json& j);

// Parses a header-first CSV. The header must contain every schema column and
// the target; extra columns are an error. Ids are the 0-based data row index.
Dataset load_csv(const fs::path& path, const ColumnSchema& schema);

struct EncodedColumn {
    std::string source;
    std::optional<std::string> category;  // set for one-hot columns

    bool operator==(const EncodedColumn&) const = default;
};

struct ColumnScaling {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    double min = 0.0;
    double max = 0.0;
    bool constant = false;
    std::vector<std::string> categories;

    bool operator==(const ColumnScaling&) const = default;
};

struct EncodingParams {
    std::vector<ColumnScaling> columns;
    std::int64_t fitted_rows = 0;

    nlohmann::json to_json() const;
    bool operator==(const EncodingParams&) const = default;
};

struct EncodedView {
    FeatureMatrix X;
    std::vector<EncodedColumn> columns;
    EncodingParams params;
};

// Min-max scaling for numerics (constant columns map to 0), one-hot groups in
// schema category order. Apply clamps to [0, 1]; unknown categories give an
// all-zero group.
EncodedView fit_encoding(const Dataset& ds);
EncodedView apply_encoding(const EncodingParams& params, const Dataset& ds);

// The dataset with X replaced by the encoded matrix and an all-numeric schema
// named after the encoded columns.
Dataset with_encoding(const Dataset& ds, const EncodedView& view);

// Dataset files: "<stem>.csv" plus the sidecar "<stem>.meta.json".
struct DatasetPaths {
    fs::path csv;
    fs::path meta;
};
// Accepts "dir/name", "dir/name.csv" or "dir/name.meta.json".
DatasetPaths dataset_paths(const fs::path& stem);

void save_dataset(const Dataset& ds, const fs::path& stem);
// A missing sidecar infers a numeric schema from the header (target "label")
// and sets provenance["warning"].
Dataset load_dataset(const fs::path& stem);
// CSV text exactly as save_dataset writes it.
std::string dataset_csv(const Dataset& ds);

nlohmann::json report_to_json(const CartographyReport& report);
CartographyReport report_from_json(const nlohmann::json& j);
void write_report(const CartographyReport& report, const fs::path& path);
CartographyReport read_report(const fs::path& path);

// Flags persist as "<path>" (id,score,flag rows) plus a JSON header next to
// it with the extension replaced by ".json".
struct FlagsFile {
    DetectionResult result;
    std::vector<std::int64_t> ids;
    std::string config_digest;
};
fs::path flags_header_path(const fs::path& csv_path);
std::string flags_csv(const DetectionResult& result, const std::vector<std::int64_t>& ids);
void write_flags(const DetectionResult& result, const std::vector<std::int64_t>& ids,
                 const fs::path& csv_path, const std::string& config_digest);
FlagsFile read_flags(const fs::path& csv_path);

}  // namespace dyncart
