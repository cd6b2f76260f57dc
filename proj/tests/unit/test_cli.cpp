#include <doctest.h>

#include <sstream>

#include "cli.hpp"
#include "dyncart/data_io.hpp"
#include "oracles.hpp"

using namespace dyncart;
using namespace dyncart::testing;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string s(const fs::path& p) { return p.string(); }

// generate + inject on a small binary set; returns the noisy stem.
fs::path noisy_binary(const fs::path& dir, std::size_t n = 2000) {
    REQUIRE(run({"generate", "binary", "--n", std::to_string(n), "--seed", "7", "--out", s(dir / "bin")}).code == 0);
    REQUIRE(run({"inject", "--in", s(dir / "bin"), "--noise", "ncar", "--rate", "0.1", "--seed", "3", "--out",
                 s(dir / "noisy")})
                .code == 0);
    return dir / "noisy";
}

double header_threshold(const fs::path& flags) {
    return nlohmann::json::parse(read_file(flags_header_path(flags))).at("threshold").get<double>();
}

}  // namespace

TEST_CASE("generate writes the dataset and a summary") {
    const auto dir = scratch_dir("cli-generate");
    const auto r = run({"generate", "binary", "--n", "15100", "--seed", "7", "--out", s(dir / "bin")});
    CHECK(r.code == 0);
    CHECK(r.out == "15100 × 2, 2 classes\n");
    CHECK(fs::exists(dir / "bin.csv"));
    CHECK(fs::exists(dir / "bin.meta.json"));
    CHECK(fs::exists(dir / "bin.manifest.json"));
    const auto first = read_file(dir / "bin.csv");
    REQUIRE(run({"generate", "binary", "--n", "15100", "--seed", "7", "--out", s(dir / "again")}).code == 0);
    CHECK(read_file(dir / "again.csv") == first);

    const auto small = run({"generate", "binary", "--n", "10", "--out", s(dir / "tiny")});
    CHECK(small.code == 2);
    CHECK(small.err.find("too small") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"generate", "binary"}).code == 2);
    CHECK(run({"generate", "triangles", "--out", "x"}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("inject corrupts the requested share of labels") {
    const auto dir = scratch_dir("cli-inject");
    REQUIRE(run({"generate", "binary", "--n", "15100", "--seed", "7", "--out", s(dir / "bin")}).code == 0);
    const auto ncar = run({"inject", "--in", s(dir / "bin"), "--noise", "ncar", "--rate", "0.1", "--out", s(dir / "n")});
    CHECK(ncar.code == 0);
    CHECK(ncar.out == "1510 labels corrupted\n");
    CHECK(load_dataset(dir / "n").noisy_count() == 1510);

    const auto nnar = run({"inject", "--in", s(dir / "bin"), "--noise", "nnar", "--rate", "0.2", "--k", "10", "--p",
                           "0.5", "--out", s(dir / "m")});
    CHECK(nnar.code == 0);
    const auto count = load_dataset(dir / "m").noisy_count();
    CHECK(count % 2 == 0);
    CHECK(count >= 3018);
    CHECK(count <= 3020);

    CHECK(run({"inject", "--in", s(dir / "bin"), "--rate", "0.7", "--out", s(dir / "bad")}).code == 2);
    CHECK(run({"inject", "--in", s(dir / "missing"), "--rate", "0.1", "--out", s(dir / "bad")}).code == 1);
}

TEST_CASE("detect with auto threshold equals detect at the valley value") {
    const auto dir = scratch_dir("cli-detect");
    const auto noisy = noisy_binary(dir);
    const auto a = run({"detect", "--in", s(noisy), "--method", "weights", "--threshold", "auto", "--out",
                        s(dir / "auto.csv")});
    REQUIRE(a.code == 0);
    const double v = header_threshold(dir / "auto.csv");
    const auto b = run({"detect", "--in", s(noisy), "--method", "weights", "--threshold", format_double(v), "--out",
                        s(dir / "fixed.csv")});
    REQUIRE(b.code == 0);
    CHECK(read_file(dir / "auto.csv") == read_file(dir / "fixed.csv"));

    CHECK(run({"detect", "--in", s(noisy), "--threshold", "1.5", "--out", s(dir / "x.csv")}).code == 2);
    CHECK(run({"detect", "--out", s(dir / "x.csv")}).code == 2);
}

TEST_CASE("clean removes exactly the flagged rows") {
    const auto dir = scratch_dir("cli-clean");
    const auto noisy = noisy_binary(dir);
    REQUIRE(run({"detect", "--in", s(noisy), "--method", "product", "--threshold", "0.5", "--out", s(dir / "f.csv")})
                .code == 0);
    const auto flags = read_flags(dir / "f.csv");
    REQUIRE(run({"clean", "--in", s(noisy), "--flags", s(dir / "f.csv"), "--out", s(dir / "clean")}).code == 0);
    const auto cleaned = load_dataset(dir / "clean");
    CHECK(cleaned.size() == 2000 - flags.result.flagged_count());
    for (std::size_t i = 0; i < flags.ids.size(); ++i) {
        const bool kept = std::find(cleaned.ids.begin(), cleaned.ids.end(), flags.ids[i]) != cleaned.ids.end();
        CHECK(kept == !flags.result.flags[i]);
    }
}

TEST_CASE("full pipeline runs end to end") {
    const auto dir = scratch_dir("cli-pipeline");
    const auto noisy = noisy_binary(dir);
    REQUIRE(run({"detect", "--in", s(noisy), "--method", "weights", "--out", s(dir / "flags.csv"), "--report-out",
                 s(dir / "report.json")})
                .code == 0);
    REQUIRE(run({"clean", "--in", s(noisy), "--flags", s(dir / "flags.csv"), "--out", s(dir / "clean")}).code == 0);
    const auto t = run({"train", "--in", s(dir / "clean"), "--iterations", "30", "--out", s(dir / "model.json")});
    REQUIRE(t.code == 0);
    const auto m = run({"map", "--in", s(dir / "clean"), "--model", s(dir / "model.json"), "--out", s(dir / "map.json")});
    REQUIRE(m.code == 0);
    CHECK(read_report(dir / "map.json").iterations == 30);
    const auto e = run({"evaluate", "--dataset", s(dir / "bin"), "--noise", "ncar", "--rates", "0.1", "--methods",
                        "weight_threshold", "--tune-budget", "1", "--out", s(dir / "eval")});
    CHECK(e.code == 0);
    CHECK(fs::exists(dir / "eval.json"));
    CHECK(fs::exists(dir / "eval.csv"));
    const auto report = read_report(dir / "report.json");
    CHECK(report.has_weights());
    CHECK(report.points.size() == 2000);
}

TEST_CASE("config files fill unset flags and flags win") {
    const auto dir = scratch_dir("cli-config");
    write_file_atomic(dir / "gen.conf", "# generator\nn = 300\nseed = 5\n");
    REQUIRE(run({"generate", "binary", "--config", s(dir / "gen.conf"), "--out", s(dir / "a")}).code == 0);
    CHECK(load_dataset(dir / "a").size() == 300);
    REQUIRE(run({"generate", "binary", "--config", s(dir / "gen.conf"), "--n", "400", "--out", s(dir / "b")}).code == 0);
    CHECK(load_dataset(dir / "b").size() == 400);
    const auto manifest = nlohmann::json::parse(read_file(dir / "b.manifest.json"));
    CHECK(manifest.at("resolved").at("n") == "400");
    CHECK(manifest.at("resolved").at("seed") == "5");
    CHECK(run({"generate", "binary", "--config", s(dir / "missing.conf"), "--out", s(dir / "c")}).code == 2);
}

TEST_CASE("rerunning manifests reproduces every output byte for byte") {
    const auto dir = scratch_dir("cli-rerun");
    const auto noisy = noisy_binary(dir, 1500);
    REQUIRE(run({"detect", "--in", s(noisy), "--method", "weights", "--out", s(dir / "flags.csv"), "--report-out",
                 s(dir / "report.json")})
                .code == 0);
    REQUIRE(run({"train", "--in", s(noisy), "--iterations", "20", "--out", s(dir / "model.json")}).code == 0);
    REQUIRE(run({"map", "--in", s(noisy), "--model", s(dir / "model.json"), "--out", s(dir / "map.json")}).code == 0);

    for (const std::string stem : {"bin", "noisy", "flags", "model", "map"}) {
        const auto manifest_path = dir / (stem + ".manifest.json");
        const auto manifest = cli::RunManifest::from_json(nlohmann::json::parse(read_file(manifest_path)));
        std::map<std::string, std::string> before;
        for (const auto& o : manifest.outputs) before[o] = read_file(o);
        for (const auto& o : manifest.outputs) fs::remove(o);
        const auto r = run({"rerun", s(manifest_path)});
        INFO(stem, ": ", r.err);
        CHECK(r.code == 0);
        for (const auto& [path, bytes] : before) CHECK(read_file(path) == bytes);
    }
}
