#include <doctest.h>

#include <cmath>
#include <limits>

#include "dyncart/data_io.hpp"
#include "dyncart/error.hpp"
#include "dyncart/noise_lab.hpp"
#include "oracles.hpp"

using namespace dyncart;
using namespace dyncart::testing;

namespace {

ColumnSchema mixed_schema() {
    ColumnSchema s;
    s.columns = {{"age", ColumnKind::numeric, {}}, {"color", ColumnKind::categorical, {"red", "blue"}}};
    s.target = "income";
    s.classes = {"low", "high"};
    return s;
}

fs::path write_text(const fs::path& dir, const std::string& name, const std::string& text) {
    const auto p = dir / name;
    write_file_atomic(p, text);
    return p;
}

}  // namespace

TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.0}) CHECK(parse_double(format_double(v)) == v);
    CHECK(format_double(0.5) == "0.5");
    CHECK_THROWS_WITH_AS(parse_double("1.5x"), doctest::Contains("invalid number"), Error);
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("load_csv parses numeric, categorical and target columns") {
    const auto dir = scratch_dir("load-csv");
    const auto p = write_text(dir, "a.csv", "color,age,income\nred,2,low\n\"blue\",4,high\nblue,6,low\n");
    const auto ds = load_csv(p, mixed_schema());
    CHECK(ds.size() == 3);
    CHECK(ds.X(1, 0) == 4.0);
    CHECK(ds.X(1, 1) == 1.0);
    CHECK(ds.y == LabelVector{0, 1, 0});
    CHECK(ds.ids == std::vector<std::int64_t>{0, 1, 2});
    CHECK(ds.num_classes == 2);
}

TEST_CASE("load_csv error messages name row and column") {
    const auto dir = scratch_dir("load-csv-errors");
    const auto schema = mixed_schema();
    CHECK_THROWS_WITH_AS(load_csv(write_text(dir, "a.csv", "age,color,income\n2,red,low\nabc,red,low\n"), schema),
                         doctest::Contains("non-numeric value 'abc' at row 2"), Error);
    CHECK_THROWS_WITH_AS(load_csv(write_text(dir, "b.csv", "age,color,income\n2,red,low\n3,?,low\n"), schema),
                         doctest::Contains("column color"), Error);
    CHECK_THROWS_WITH_AS(load_csv(write_text(dir, "c.csv", "age,color,income\n2,green,low\n"), schema),
                         doctest::Contains("unknown category 'green'"), Error);
    CHECK_THROWS_WITH_AS(load_csv(write_text(dir, "d.csv", "age,income\n2,low\n"), schema),
                         doctest::Contains("missing column color"), Error);
    CHECK_THROWS_WITH_AS(load_csv(write_text(dir, "e.csv", "age,color,extra,income\n2,red,1,low\n"), schema),
                         doctest::Contains("unexpected column extra"), Error);
    CHECK_THROWS_WITH_AS(load_csv(write_text(dir, "f.csv", "age,color,income\n2,red\n"), schema),
                         doctest::Contains("expected 3 fields"), Error);
}

TEST_CASE("min-max and one-hot encoding") {
    const auto dir = scratch_dir("encoding");
    const auto train = load_csv(write_text(dir, "t.csv", "age,color,income\n2,red,low\n4,blue,high\n6,red,low\n"),
                                mixed_schema());
    const auto view = fit_encoding(train);
    REQUIRE(view.X.cols() == 3);
    CHECK(view.X(0, 0) == 0.0);
    CHECK(view.X(1, 0) == 0.5);
    CHECK(view.X(2, 0) == 1.0);
    CHECK(view.X(1, 1) == 0.0);
    CHECK(view.X(1, 2) == 1.0);
    CHECK(view.columns[2] == EncodedColumn{"color", std::string("blue")});

    auto schema = mixed_schema();
    schema.columns[1].categories = {"blue", "green"};
    const auto test = load_csv(write_text(dir, "u.csv", "age,color,income\n8,green,low\n0,blue,high\n"), schema);
    const auto applied = apply_encoding(view.params, test);
    CHECK(applied.X(0, 0) == 1.0);
    CHECK(applied.X(1, 0) == 0.0);
    CHECK(applied.X(0, 1) == 0.0);
    CHECK(applied.X(0, 2) == 0.0);
    CHECK(applied.X(1, 2) == 1.0);

    const auto enc = with_encoding(train, view);
    CHECK(enc.schema.columns.size() == 3);
    CHECK(enc.schema.columns[2].name == "color=blue");
    CHECK(enc.provenance.contains("encoding"));
}

TEST_CASE("constant numeric columns encode to zero") {
    Rng rng(1);
    const auto ds = make_dataset(FeatureMatrix::from_rows({{3.0}, {3.0}, {3.0}}), {0, 1, 0}, 2);
    const auto view = fit_encoding(ds);
    for (double v : view.X.values()) CHECK(v == 0.0);
    CHECK(view.params.columns[0].constant);
}

TEST_CASE("dataset save and load round-trip") {
    const auto dir = scratch_dir("dataset-io");
    const auto ds = inject_ncar(gen_binary_synthetic(500, 3), 0.1, 2);
    save_dataset(ds, dir / "bin");
    CHECK(fs::exists(dir / "bin.csv"));
    CHECK(fs::exists(dir / "bin.meta.json"));
    const auto back = load_dataset(dir / "bin.meta.json");
    CHECK(back.X == ds.X);
    CHECK(back.y == ds.y);
    CHECK(back.ids == ds.ids);
    CHECK(back.noise_mask == ds.noise_mask);
    CHECK(back.schema == ds.schema);
    CHECK(dataset_csv(back) == read_file(dir / "bin.csv"));

    const auto again = dir / "again";
    save_dataset(back, again);
    CHECK(read_file(dir / "again.csv") == read_file(dir / "bin.csv"));
}

TEST_CASE("dataset without sidecar loads with a warning") {
    const auto dir = scratch_dir("no-sidecar");
    write_text(dir, "plain.csv", "x0,x1,label\n0.5,1,0\n2,3,1\n");
    const auto ds = load_dataset(dir / "plain");
    CHECK(ds.size() == 2);
    CHECK_FALSE(ds.noise_mask.has_value());
    CHECK(ds.provenance.contains("warning"));
}

TEST_CASE("dataset sidecar inconsistencies are rejected") {
    const auto dir = scratch_dir("bad-sidecar");
    const auto ds = inject_ncar(gen_binary_synthetic(200, 1), 0.1, 1);
    save_dataset(ds, dir / "d");
    auto meta = nlohmann::json::parse(read_file(dir / "d.meta.json"));
    auto bad_mask = meta;
    bad_mask["noise_mask"] = std::vector<int>(5, 0);
    write_file_atomic(dir / "d.meta.json", bad_mask.dump());
    CHECK_THROWS_WITH_AS(load_dataset(dir / "d"), doctest::Contains("noise_mask length"), Error);
    auto bad_ids = meta;
    bad_ids["ids"] = std::vector<int>{1, 2};
    write_file_atomic(dir / "d.meta.json", bad_ids.dump());
    CHECK_THROWS_WITH_AS(load_dataset(dir / "d"), doctest::Contains("row-count mismatch"), Error);
}

TEST_CASE("report write and read identity") {
    const auto dir = scratch_dir("report-io");
    CartographyReport r;
    r.dataset_id = "toy";
    r.iterations = 7;
    r.points.push_back({4, 1.0 / 3.0, 0.1, 0.5, 1.0 / 6.0, 0.75, "a", std::nullopt, std::nullopt});
    r.points.push_back({9, 0.9, 0.0, 1.0, 0.9, 0.25, "b", true, false});
    write_report(r, dir / "r.json");
    const auto back = read_report(dir / "r.json");
    CHECK(back == r);
    CHECK(back.has_weights());

    CartographyReport plain = r;
    for (auto& p : plain.points) p.weight.reset();
    const auto plain_back = report_from_json(report_to_json(plain));
    CHECK(plain_back == plain);
    CHECK_FALSE(plain_back.has_weights());

    auto j = report_to_json(r);
    j["format_version"] = 99;
    CHECK_THROWS_WITH_AS(report_from_json(j), doctest::Contains("unsupported report version 99"), Error);
}

TEST_CASE("flags files round-trip and stay consistent") {
    const auto dir = scratch_dir("flags-io");
    const auto det = DetectionResult::from_scores("weight", {0.1, 0.9, 0.4}, 0.5, Direction::flag_if_below);
    write_flags(det, {5, 6, 7}, dir / "f.csv", "abc");
    CHECK(read_file(dir / "f.csv") == flags_csv(det, {5, 6, 7}));
    CHECK(fs::exists(dir / "f.json"));
    const auto f = read_flags(dir / "f.csv");
    CHECK(f.ids == std::vector<std::int64_t>{5, 6, 7});
    CHECK(f.result.flags == det.flags);
    CHECK(f.result.threshold == 0.5);
    CHECK(f.config_digest == "abc");

    write_file_atomic(dir / "f.csv", "id,score,flag\n5,0.1,0\n6,0.9,0\n7,0.4,1\n");
    CHECK_THROWS_WITH_AS(read_flags(dir / "f.csv"), doctest::Contains("corrupt flags file"), Error);
}
