#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "dyncart/cartography.hpp"
#include "dyncart/detection.hpp"

namespace httplib {
class Server;
}

namespace dyncart::cli {

namespace fs = std::filesystem;

struct ServeOptions {
    fs::path report;
    std::optional<fs::path> data;  // dataset stem; enables cleaned-dataset export
    fs::path out_dir = "exports";
    std::optional<fs::path> ui_dir;
};

// Score column of a report: "product" or "weight". Throws when the report
// carries no weights and "weight" is requested.
std::vector<double> report_scores(const CartographyReport& report, const std::string& score);
std::vector<std::int64_t> report_ids(const CartographyReport& report);

// threshold is a number in [0, 1] or "auto" (valley of the score column).
double resolve_threshold(const CartographyReport& report, const std::string& score, const std::string& threshold);
DetectionResult report_detection(const CartographyReport& report, const std::string& score, double threshold);

nlohmann::json preview(const CartographyReport& report, const std::string& score, const std::string& threshold);

// Writes flags (and the cleaned dataset when a data stem is configured) into
// out_dir; returns the written paths.
nlohmann::json export_selection(const CartographyReport& report, const ServeOptions& opts, const std::string& score,
                                const std::string& threshold);

// Rows of `data` whose id is not flagged, keeping the retained CSV lines byte
// for byte; writes "<out>.csv" and "<out>.meta.json". Returns rows kept.
std::size_t clean_dataset_files(const fs::path& data, const std::vector<std::int64_t>& ids,
                                const std::vector<bool>& flags, const fs::path& out);

class ReportServer {
  public:
    explicit ReportServer(ServeOptions opts);
    ~ReportServer();

    // Binds to an ephemeral port and returns it.
    int bind_any(const std::string& host = "127.0.0.1");
    bool bind(const std::string& host, int port);
    // Blocks until stop().
    bool listen_after_bind();
    void stop();
    const CartographyReport& report() const { return report_; }

  private:
    void install_routes();

    ServeOptions opts_;
    CartographyReport report_;
    std::string report_body_;
    std::unique_ptr<httplib::Server> http_;
};

}  // namespace dyncart::cli
