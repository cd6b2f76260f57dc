#include "server.hpp"

#include <httplib.h>

#include <map>

#include "dyncart/data_io.hpp"
#include "dyncart/error.hpp"

namespace dyncart::cli {

namespace {

constexpr std::size_t kSampleIds = 20;

constexpr const char* kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>dyncart report server</title></head>
<body>
<h1>dyncart report server</h1>
<p>No UI bundle configured (start with <code>--ui-dir</code>). JSON endpoints:</p>
<ul>
<li><a href="/api/report">GET /api/report</a></li>
<li>GET /api/preview?score=product|weight&amp;threshold=x|auto</li>
<li>POST /api/export {"score": ..., "threshold": ...}</li>
</ul>
</body></html>
)";

struct BadRequest : Error {
    using Error::Error;
};

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const BadRequest& e) {
        send_json(res, 400, {{"error", e.what()}});
    } catch (const Error& e) {
        send_json(res, 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
    }
}

std::vector<std::string> raw_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        end = end == std::string::npos ? text.size() : end + 1;
        lines.push_back(text.substr(start, end - start));
        start = end;
    }
    return lines;
}

}  // namespace

std::vector<double> report_scores(const CartographyReport& report, const std::string& score) {
    std::vector<double> s;
    s.reserve(report.points.size());
    if (score == "product") {
        for (const auto& p : report.points) s.push_back(p.product);
    } else if (score == "weight") {
        if (!report.has_weights()) throw BadRequest("report carries no weights; use score=product");
        for (const auto& p : report.points) s.push_back(*p.weight);
    } else {
        throw BadRequest("invalid score: expected product or weight, got '" + score + "'");
    }
    return s;
}

std::vector<std::int64_t> report_ids(const CartographyReport& report) {
    std::vector<std::int64_t> ids;
    ids.reserve(report.points.size());
    for (const auto& p : report.points) ids.push_back(p.id);
    return ids;
}

double resolve_threshold(const CartographyReport& report, const std::string& score, const std::string& threshold) {
    if (threshold == "auto") return auto_valley_threshold(report_scores(report, score)).threshold;
    double t = 0.0;
    try {
        t = parse_double(threshold);
    } catch (const Error&) {
        throw BadRequest("invalid threshold: '" + threshold + "'");
    }
    if (!(t >= 0.0 && t <= 1.0)) throw BadRequest("invalid threshold: must be in [0, 1]");
    return t;
}

DetectionResult report_detection(const CartographyReport& report, const std::string& score, double threshold) {
    return DetectionResult::from_scores(score, report_scores(report, score), threshold, Direction::flag_if_below);
}

nlohmann::json preview(const CartographyReport& report, const std::string& score, const std::string& threshold) {
    const double t = resolve_threshold(report, score, threshold);
    const auto det = report_detection(report, score, t);
    std::map<std::string, std::size_t> per_class;
    for (const auto& p : report.points) per_class.emplace(p.label, 0);
    std::vector<std::int64_t> sample;
    for (std::size_t j = 0; j < det.flags.size(); ++j) {
        if (!det.flags[j]) continue;
        ++per_class[report.points[j].label];
        if (sample.size() < kSampleIds) sample.push_back(report.points[j].id);
    }
    return {{"score", score},
            {"threshold", t},
            {"n", det.flags.size()},
            {"flagged_count", det.flagged_count()},
            {"per_class_flagged", per_class},
            {"flagged_ids_sample", sample}};
}

std::size_t clean_dataset_files(const fs::path& data, const std::vector<std::int64_t>& ids,
                                const std::vector<bool>& flags, const fs::path& out) {
    const auto src = dataset_paths(data);
    const auto dst = dataset_paths(out);
    std::map<std::int64_t, bool> flag_of;
    for (std::size_t i = 0; i < ids.size(); ++i) flag_of[ids[i]] = flags[i];

    const auto lines = raw_lines(read_file(src.csv));
    if (lines.empty()) throw Error("schema mismatch: " + src.csv.string() + " has no header");
    const std::size_t rows = lines.size() - 1;

    const bool has_meta = fs::exists(src.meta);
    nlohmann::json meta;
    std::vector<std::int64_t> row_ids(rows);
    if (has_meta) {
        meta = nlohmann::json::parse(read_file(src.meta));
        row_ids = meta.at("ids").get<std::vector<std::int64_t>>();
        if (row_ids.size() != rows) throw Error("row-count mismatch: sidecar ids differ from CSV rows");
    } else {
        for (std::size_t r = 0; r < rows; ++r) row_ids[r] = static_cast<std::int64_t>(r);
    }

    std::string body = lines[0];
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto it = flag_of.find(row_ids[r]);
        if (it == flag_of.end()) throw Error("flags do not cover id " + std::to_string(row_ids[r]));
        if (it->second) continue;
        body += lines[r + 1];
        kept.push_back(r);
    }
    write_file_atomic(dst.csv, body);
    if (has_meta) {
        std::vector<std::int64_t> new_ids;
        for (auto r : kept) new_ids.push_back(row_ids[r]);
        meta["ids"] = new_ids;
        meta["rows"] = kept.size();
        if (!meta.at("noise_mask").is_null()) {
            const auto mask = meta.at("noise_mask").get<std::vector<int>>();
            std::vector<int> new_mask;
            for (auto r : kept) new_mask.push_back(mask.at(r));
            meta["noise_mask"] = new_mask;
        }
        meta["provenance"]["cleaned"] = {{"source", src.csv.filename().string()}, {"removed", rows - kept.size()}};
        write_file_atomic(dst.meta, meta.dump(1) + "\n");
    }
    return kept.size();
}

nlohmann::json export_selection(const CartographyReport& report, const ServeOptions& opts, const std::string& score,
                                const std::string& threshold) {
    const double t = resolve_threshold(report, score, threshold);
    const auto det = report_detection(report, score, t);
    const auto ids = report_ids(report);
    const std::string tag = score + "-" + format_double(t);
    const fs::path flags_path = opts.out_dir / ("flags-" + tag + ".csv");
    const std::string digest = fnv1a_hex("report=" + report.dataset_id + ";score=" + score + ";threshold=" + format_double(t));
    write_flags(det, ids, flags_path, digest);
    nlohmann::json res = {{"score", score},
                          {"threshold", t},
                          {"flagged_count", det.flagged_count()},
                          {"flags", flags_path.string()},
                          {"flags_header", flags_header_path(flags_path).string()}};
    if (opts.data) {
        const fs::path stem = opts.out_dir / ("cleaned-" + tag);
        const std::size_t kept = clean_dataset_files(*opts.data, ids, det.flags, stem);
        const auto paths = dataset_paths(stem);
        res["cleaned"] = {paths.csv.string()};
        if (fs::exists(paths.meta)) res["cleaned"].push_back(paths.meta.string());
        res["cleaned_rows"] = kept;
    }
    return res;
}

ReportServer::ReportServer(ServeOptions opts)
    : opts_(std::move(opts)), report_(read_report(opts_.report)), http_(std::make_unique<httplib::Server>()) {
    report_body_ = report_to_json(report_).dump();
    install_routes();
}

ReportServer::~ReportServer() { stop(); }

void ReportServer::install_routes() {
    auto& s = *http_;
    s.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(report_body_, "application/json");
    });
    s.Get("/api/preview", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string score = req.has_param("score") ? req.get_param_value("score") : "product";
            if (!req.has_param("threshold")) throw BadRequest("missing parameter: threshold");
            send_json(res, 200, preview(report_, score, req.get_param_value("threshold")));
        });
    });
    s.Post("/api/export", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception&) {
                throw BadRequest("invalid JSON body");
            }
            if (!body.is_object() || !body.contains("threshold")) throw BadRequest("missing field: threshold");
            const std::string score = body.value("score", std::string("product"));
            const auto& jt = body.at("threshold");
            const std::string threshold = jt.is_number() ? format_double(jt.get<double>()) : jt.get<std::string>();
            send_json(res, 200, export_selection(report_, opts_, score, threshold));
        });
    });
    if (opts_.ui_dir) {
        if (!s.set_mount_point("/", opts_.ui_dir->string())) {
            throw Error("I/O failure: UI directory " + opts_.ui_dir->string() + " not found");
        }
    } else {
        s.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kFallbackPage, "text/html"); });
    }
    s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (req.path.rfind("/api/", 0) == 0 && res.body.empty()) {
            send_json(res, res.status, {{"error", "not found: " + req.path}});
        }
    });
}

int ReportServer::bind_any(const std::string& host) { return http_->bind_to_any_port(host); }

bool ReportServer::bind(const std::string& host, int port) { return http_->bind_to_port(host, port); }

bool ReportServer::listen_after_bind() { return http_->listen_after_bind(); }

void ReportServer::stop() {
    if (http_) http_->stop();
}

}  // namespace dyncart::cli
