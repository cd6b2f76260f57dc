#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace dyncart::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Runs one command line (args excludes the program name). Returns the exit
// code: 0 success, 1 runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Record written next to every command's primary output.
struct RunManifest {
    std::string command;
    std::vector<std::string> args;  // fully resolved, replayable without config files
    nlohmann::json resolved = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version = kToolVersion;
    double duration_seconds = 0.0;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

}  // namespace dyncart::cli
