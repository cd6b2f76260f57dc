#include "dyncart/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

#include "dyncart/error.hpp"

namespace dyncart {

namespace {

constexpr int kDatasetFormat = 1;
constexpr int kReportFormat = 1;

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    out.push_back(std::move(field));
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t");
    return std::string(s.substr(a, b - a + 1));
}

// Lines without their terminators; a trailing empty line is dropped.
std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = end + 1;
    }
    return lines;
}

bool is_missing(const std::string& s) { return s.empty() || s == "?" || s == "NA" || s == "NaN" || s == "nan"; }

bool all_integers(const std::set<std::string>& values) {
    for (const auto& v : values) {
        long long x = 0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || p != v.data() + v.size()) return false;
    }
    return true;
}

std::vector<std::string> infer_classes(const std::set<std::string>& values) {
    std::vector<std::string> classes(values.begin(), values.end());
    if (all_integers(values)) {
        std::sort(classes.begin(), classes.end(),
                  [](const std::string& a, const std::string& b) { return std::stoll(a) < std::stoll(b); });
    }
    return classes;
}

Dataset parse_rows(const std::vector<std::string>& lines, const ColumnSchema& schema_in,
                   const std::string& where) {
    if (lines.empty()) throw Error("schema mismatch: " + where + " has no header");
    ColumnSchema schema = schema_in;
    schema.validate();
    const auto header = split_csv_line(lines[0]);
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = trim(header[i]);
        if (!pos.emplace(name, i).second) throw Error("schema mismatch: duplicate header column " + name);
    }
    std::vector<std::size_t> col_pos;
    for (const auto& c : schema.columns) {
        const auto it = pos.find(c.name);
        if (it == pos.end()) throw Error("schema mismatch: missing column " + c.name);
        col_pos.push_back(it->second);
    }
    const auto tit = pos.find(schema.target);
    if (tit == pos.end()) throw Error("schema mismatch: missing target column " + schema.target);
    if (header.size() != schema.columns.size() + 1) {
        for (const auto& [name, i] : pos) {
            const bool known = name == schema.target ||
                               std::any_of(schema.columns.begin(), schema.columns.end(),
                                           [&](const ColumnSpec& c) { return c.name == name; });
            if (!known) throw Error("schema mismatch: unexpected column " + name);
        }
    }
    const std::size_t target_pos = tit->second;
    const std::size_t d = schema.columns.size();

    std::vector<std::map<std::string, int>> cat_index(d);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t k = 0; k < schema.columns[c].categories.size(); ++k) {
            cat_index[c][schema.columns[c].categories[k]] = static_cast<int>(k);
        }
    }

    std::vector<double> values;
    std::vector<std::string> raw_labels;
    std::size_t rows = 0;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto fields = split_csv_line(lines[li]);
        const std::string at = " at row " + std::to_string(rows + 1) + " (line " + std::to_string(li + 1) + ")";
        if (fields.size() != header.size()) {
            throw Error("schema mismatch: expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()) + at);
        }
        for (std::size_t c = 0; c < d; ++c) {
            const std::string tok = trim(fields[col_pos[c]]);
            const auto& spec = schema.columns[c];
            if (is_missing(tok)) throw Error("missing value" + at + ", column " + spec.name);
            if (spec.kind == ColumnKind::numeric) {
                double v = 0.0;
                try {
                    v = parse_double(tok);
                } catch (const Error&) {
                    throw Error("non-numeric value '" + tok + "'" + at + ", column " + spec.name);
                }
                if (!std::isfinite(v)) throw Error("non-finite value" + at + ", column " + spec.name);
                values.push_back(v);
            } else {
                const auto it = cat_index[c].find(tok);
                if (it == cat_index[c].end()) {
                    throw Error("unknown category '" + tok + "'" + at + ", column " + spec.name);
                }
                values.push_back(static_cast<double>(it->second));
            }
        }
        const std::string label = trim(fields[target_pos]);
        if (label.empty()) throw Error("missing value" + at + ", column " + schema.target);
        raw_labels.push_back(label);
        ++rows;
    }

    if (schema.classes.empty()) {
        schema.classes = infer_classes(std::set<std::string>(raw_labels.begin(), raw_labels.end()));
        if (schema.classes.size() <= 2) schema.positive_class = 1;
    }
    Dataset ds;
    ds.schema = schema;
    ds.num_classes = static_cast<int>(schema.classes.size());
    ds.y.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const int label = schema.class_index(raw_labels[r]);
        if (label < 0) {
            throw Error("unknown class '" + raw_labels[r] + "' at row " + std::to_string(r + 1) + ", column " +
                        schema.target);
        }
        ds.y.push_back(label);
    }
    ds.X = FeatureMatrix(rows, d, std::move(values));
    ds.ids.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) ds.ids[r] = static_cast<std::int64_t>(r);
    return ds;
}

ColumnSchema infer_schema(const std::string& header_line) {
    ColumnSchema s;
    bool has_target = false;
    for (const auto& raw : split_csv_line(header_line)) {
        const std::string name = trim(raw);
        if (name == s.target) {
            has_target = true;
            continue;
        }
        s.columns.push_back({name, ColumnKind::numeric, {}});
    }
    if (!has_target) throw Error("schema mismatch: no sidecar and no '" + s.target + "' column");
    return s;
}

const char* kind_name(ColumnKind k) { return k == ColumnKind::numeric ? "numeric" : "categorical"; }

ColumnKind kind_from_name(const std::string& s) {
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "categorical") return ColumnKind::categorical;
    throw Error("schema mismatch: unknown column kind " + s);
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("corrupt " + what + ": " + e.what());
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    const auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last || first == last) {
        throw Error("invalid number: '" + std::string(text) + "'");
    }
    return v;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("I/O failure: cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("I/O failure: short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("I/O failure: cannot rename onto " + path.string());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("I/O failure: cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json schema_to_json(const ColumnSchema& schema) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : schema.columns) {
        nlohmann::json jc = {{"name", c.name}, {"kind", kind_name(c.kind)}};
        if (c.kind == ColumnKind::categorical) jc["categories"] = c.categories;
        cols.push_back(std::move(jc));
    }
    return {{"columns", std::move(cols)},
            {"target", schema.target},
            {"classes", schema.classes},
            {"positive_class", schema.positive_class}};
}

ColumnSchema schema_from_json(const nlohmann::json& j) {
    try {
        ColumnSchema s;
        for (const auto& jc : j.at("columns")) {
            ColumnSpec c;
            c.name = jc.at("name").get<std::string>();
            c.kind = kind_from_name(jc.value("kind", std::string("numeric")));
            if (jc.contains("categories")) c.categories = jc.at("categories").get<std::vector<std::string>>();
            s.columns.push_back(std::move(c));
        }
        s.target = j.value("target", std::string("label"));
        if (j.contains("classes")) s.classes = j.at("classes").get<std::vector<std::string>>();
        s.positive_class = j.value("positive_class", 1);
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("schema mismatch: ") + e.what());
    }
}

Dataset load_csv(const fs::path& path, const ColumnSchema& schema) {
    auto ds = parse_rows(split_lines(read_file(path)), schema, path.string());
    ds.provenance["source"] = path.filename().string();
    return ds;
}

nlohmann::json EncodingParams::to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns) {
        nlohmann::json jc = {{"name", c.name}, {"kind", kind_name(c.kind)}};
        if (c.kind == ColumnKind::numeric) {
            jc["min"] = c.min;
            jc["max"] = c.max;
            if (c.constant) jc["constant"] = true;
        } else {
            jc["categories"] = c.categories;
        }
        cols.push_back(std::move(jc));
    }
    return {{"fitted_rows", fitted_rows}, {"columns", std::move(cols)}};
}

EncodedView fit_encoding(const Dataset& ds) {
    EncodingParams params;
    params.fitted_rows = static_cast<std::int64_t>(ds.size());
    for (std::size_t c = 0; c < ds.schema.columns.size(); ++c) {
        const auto& spec = ds.schema.columns[c];
        ColumnScaling sc;
        sc.name = spec.name;
        sc.kind = spec.kind;
        if (spec.kind == ColumnKind::numeric) {
            if (ds.size() > 0) {
                sc.min = sc.max = ds.X(0, c);
                for (std::size_t r = 1; r < ds.size(); ++r) {
                    sc.min = std::min(sc.min, ds.X(r, c));
                    sc.max = std::max(sc.max, ds.X(r, c));
                }
            }
            sc.constant = !(sc.max > sc.min);
        } else {
            sc.categories = spec.categories;
        }
        params.columns.push_back(std::move(sc));
    }
    return apply_encoding(params, ds);
}

EncodedView apply_encoding(const EncodingParams& params, const Dataset& ds) {
    EncodedView view;
    view.params = params;
    std::vector<std::size_t> src;
    for (const auto& sc : params.columns) {
        const auto& cols = ds.schema.columns;
        const auto it = std::find_if(cols.begin(), cols.end(), [&](const ColumnSpec& c) { return c.name == sc.name; });
        if (it == cols.end()) throw Error("schema mismatch: encoding column " + sc.name + " absent from dataset");
        if (it->kind != sc.kind) throw Error("schema mismatch: column " + sc.name + " changed kind");
        src.push_back(static_cast<std::size_t>(it - cols.begin()));
        if (sc.kind == ColumnKind::numeric) {
            view.columns.push_back({sc.name, std::nullopt});
        } else {
            for (const auto& cat : sc.categories) view.columns.push_back({sc.name, cat});
        }
    }
    const std::size_t n = ds.size();
    const std::size_t width = view.columns.size();
    std::vector<double> out(n * width, 0.0);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < params.columns.size(); ++k) {
        const auto& sc = params.columns[k];
        const std::size_t c = src[k];
        if (sc.kind == ColumnKind::numeric) {
            for (std::size_t r = 0; r < n; ++r) {
                out[r * width + offset] =
                    sc.constant ? 0.0 : std::clamp((ds.X(r, c) - sc.min) / (sc.max - sc.min), 0.0, 1.0);
            }
            ++offset;
        } else {
            // Dataset category indices refer to the dataset's own schema; match by name.
            const auto& own = ds.schema.columns[c].categories;
            std::vector<int> remap(own.size(), -1);
            for (std::size_t i = 0; i < own.size(); ++i) {
                const auto it = std::find(sc.categories.begin(), sc.categories.end(), own[i]);
                if (it != sc.categories.end()) remap[i] = static_cast<int>(it - sc.categories.begin());
            }
            for (std::size_t r = 0; r < n; ++r) {
                const auto idx = static_cast<std::size_t>(ds.X(r, c));
                if (idx < remap.size() && remap[idx] >= 0) out[r * width + offset + remap[idx]] = 1.0;
            }
            offset += sc.categories.size();
        }
    }
    view.X = FeatureMatrix(n, width, std::move(out));
    return view;
}

Dataset with_encoding(const Dataset& ds, const EncodedView& view) {
    Dataset out = ds;
    out.X = view.X;
    out.schema.columns.clear();
    for (const auto& c : view.columns) {
        out.schema.columns.push_back({c.category ? c.source + "=" + *c.category : c.source, ColumnKind::numeric, {}});
    }
    out.provenance["encoding"] = view.params.to_json();
    return out;
}

DatasetPaths dataset_paths(const fs::path& stem) {
    std::string s = stem.string();
    for (const std::string suffix : {".meta.json", ".csv"}) {
        if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
            s.resize(s.size() - suffix.size());
            break;
        }
    }
    return {fs::path(s + ".csv"), fs::path(s + ".meta.json")};
}

std::string dataset_csv(const Dataset& ds) {
    std::string out;
    for (const auto& c : ds.schema.columns) {
        out += csv_field(c.name);
        out += ',';
    }
    out += csv_field(ds.schema.target);
    out += '\n';
    const std::size_t d = ds.schema.columns.size();
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const auto& spec = ds.schema.columns[c];
            if (spec.kind == ColumnKind::numeric) {
                out += format_double(ds.X(r, c));
            } else {
                out += csv_field(spec.categories.at(static_cast<std::size_t>(ds.X(r, c))));
            }
            out += ',';
        }
        out += csv_field(ds.schema.classes.at(static_cast<std::size_t>(ds.y[r])));
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& ds, const fs::path& stem) {
    ds.validate();
    if (ds.schema.classes.size() != static_cast<std::size_t>(ds.num_classes)) {
        throw Error("schema mismatch: class names do not cover the labels");
    }
    const auto paths = dataset_paths(stem);
    nlohmann::json meta = {{"format_version", kDatasetFormat},
                           {"rows", ds.size()},
                           {"schema", schema_to_json(ds.schema)},
                           {"ids", ds.ids},
                           {"provenance", ds.provenance}};
    if (ds.noise_mask) {
        std::vector<int> mask(ds.noise_mask->begin(), ds.noise_mask->end());
        meta["noise_mask"] = mask;
    } else {
        meta["noise_mask"] = nullptr;
    }
    write_file_atomic(paths.csv, dataset_csv(ds));
    write_file_atomic(paths.meta, meta.dump(1) + "\n");
}

Dataset load_dataset(const fs::path& stem) {
    const auto paths = dataset_paths(stem);
    const auto lines = split_lines(read_file(paths.csv));
    if (!fs::exists(paths.meta)) {
        if (lines.empty()) throw Error("schema mismatch: " + paths.csv.string() + " has no header");
        Dataset ds = parse_rows(lines, infer_schema(lines[0]), paths.csv.string());
        ds.provenance["source"] = paths.csv.filename().string();
        ds.provenance["warning"] = "sidecar missing: schema inferred, no noise mask";
        return ds;
    }
    const auto meta = parse_json(read_file(paths.meta), "dataset sidecar " + paths.meta.string());
    if (meta.value("format_version", 0) != kDatasetFormat) {
        throw Error("unsupported dataset format_version in " + paths.meta.string());
    }
    Dataset ds = parse_rows(lines, schema_from_json(meta.at("schema")), paths.csv.string());
    try {
        const auto ids = meta.at("ids").get<std::vector<std::int64_t>>();
        if (ids.size() != ds.size()) {
            throw Error("row-count mismatch: sidecar lists " + std::to_string(ids.size()) + " ids, CSV has " +
                        std::to_string(ds.size()) + " rows");
        }
        ds.ids = ids;
        if (!meta.at("noise_mask").is_null()) {
            const auto mask = meta.at("noise_mask").get<std::vector<int>>();
            if (mask.size() != ds.size()) {
                throw Error("shape mismatch: noise_mask length " + std::to_string(mask.size()) + " != " +
                            std::to_string(ds.size()) + " rows");
            }
            ds.noise_mask = std::vector<bool>(mask.begin(), mask.end());
        }
        ds.provenance = meta.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("corrupt dataset sidecar: ") + e.what());
    }
    ds.validate();
    return ds;
}

nlohmann::json report_to_json(const CartographyReport& report) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : report.points) {
        nlohmann::json jp = {{"id", p.id},
                             {"mu", p.mu},
                             {"sigma", p.sigma},
                             {"correctness", p.correctness},
                             {"product", p.product},
                             {"label", p.label}};
        if (p.weight) jp["weight"] = *p.weight;
        if (p.flagged) jp["flagged"] = *p.flagged;
        if (p.noisy) jp["noisy"] = *p.noisy;
        pts.push_back(std::move(jp));
    }
    return {{"format_version", report.format_version},
            {"dataset_id", report.dataset_id},
            {"iterations", report.iterations},
            {"points", std::move(pts)}};
}

CartographyReport report_from_json(const nlohmann::json& j) {
    try {
        CartographyReport r;
        r.format_version = j.at("format_version").get<int>();
        if (r.format_version != kReportFormat) {
            throw Error("unsupported report version " + std::to_string(r.format_version) + " (expected " +
                        std::to_string(kReportFormat) + ")");
        }
        r.dataset_id = j.value("dataset_id", std::string());
        r.iterations = j.at("iterations").get<int>();
        for (const auto& jp : j.at("points")) {
            CartographyPoint p;
            p.id = jp.at("id").get<std::int64_t>();
            p.mu = jp.at("mu").get<double>();
            p.sigma = jp.at("sigma").get<double>();
            p.correctness = jp.at("correctness").get<double>();
            p.product = jp.at("product").get<double>();
            p.label = jp.at("label").get<std::string>();
            if (jp.contains("weight")) p.weight = jp.at("weight").get<double>();
            if (jp.contains("flagged")) p.flagged = jp.at("flagged").get<bool>();
            if (jp.contains("noisy")) p.noisy = jp.at("noisy").get<bool>();
            r.points.push_back(std::move(p));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("corrupt report: ") + e.what());
    }
}

void write_report(const CartographyReport& report, const fs::path& path) {
    write_file_atomic(path, report_to_json(report).dump() + "\n");
}

CartographyReport read_report(const fs::path& path) {
    return report_from_json(parse_json(read_file(path), "report " + path.string()));
}

fs::path flags_header_path(const fs::path& csv_path) {
    fs::path p = csv_path;
    p.replace_extension(".json");
    if (p == csv_path) p += ".json";
    return p;
}

std::string flags_csv(const DetectionResult& result, const std::vector<std::int64_t>& ids) {
    if (ids.size() != result.flags.size()) throw Error("shape mismatch: ids and flags differ");
    std::string out = "id,score,flag\n";
    for (std::size_t j = 0; j < ids.size(); ++j) {
        out += std::to_string(ids[j]);
        out += ',';
        out += format_double(result.scores[j]);
        out += result.flags[j] ? ",1\n" : ",0\n";
    }
    return out;
}

void write_flags(const DetectionResult& result, const std::vector<std::int64_t>& ids, const fs::path& csv_path,
                 const std::string& config_digest) {
    const nlohmann::json header = {{"score_name", result.score_name},
                                   {"threshold", result.threshold},
                                   {"direction", to_string(result.direction)},
                                   {"n", result.flags.size()},
                                   {"flagged_count", result.flagged_count()},
                                   {"config_digest", config_digest}};
    write_file_atomic(csv_path, flags_csv(result, ids));
    write_file_atomic(flags_header_path(csv_path), header.dump(1) + "\n");
}

FlagsFile read_flags(const fs::path& csv_path) {
    const auto header = parse_json(read_file(flags_header_path(csv_path)), "flags header");
    FlagsFile f;
    std::vector<double> scores;
    std::vector<bool> flags;
    const auto lines = split_lines(read_file(csv_path));
    if (lines.empty() || lines[0] != "id,score,flag") throw Error("corrupt flags file: bad header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto fields = split_csv_line(lines[i]);
        if (fields.size() != 3 || (fields[2] != "0" && fields[2] != "1")) {
            throw Error("corrupt flags file: line " + std::to_string(i + 1));
        }
        f.ids.push_back(std::stoll(fields[0]));
        scores.push_back(parse_double(fields[1]));
        flags.push_back(fields[2] == "1");
    }
    try {
        f.result.score_name = header.at("score_name").get<std::string>();
        f.result.threshold = header.at("threshold").get<double>();
        f.result.direction = direction_from_string(header.at("direction").get<std::string>());
        f.config_digest = header.value("config_digest", std::string());
        if (header.at("n").get<std::size_t>() != flags.size()) throw Error("corrupt flags file: row count differs from header");
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("corrupt flags file: ") + e.what());
    }
    f.result.scores = std::move(scores);
    f.result.flags = std::move(flags);
    if (!f.result.consistent()) throw Error("corrupt flags file: flags disagree with scores and threshold");
    return f;
}

}  // namespace dyncart
