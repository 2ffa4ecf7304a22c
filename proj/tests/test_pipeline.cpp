#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvdisagg/csv.hpp"
#include "pvdisagg/errors.hpp"
#include "pvdisagg/pipeline.hpp"
#include "pvdisagg/synth.hpp"
#include "pvdisagg/timeseries.hpp"

using namespace pvdisagg;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    fs::path dir;
    synth::Scenario scenario;
    pipeline::RunConfig config;
};

// Writes a small scenario to disk and points a run configuration at it.
Fixture make_fixture(const std::string& name, bool with_actuals) {
    synth::ScenarioConfig sc;
    sc.cp_count = 30;
    sc.cg_count = 3;
    sc.cn_count = 4;
    sc.months = 6;
    sc.seed = 77;
    sc.composition = synth::ScenarioConfig::Composition::exact_mix;

    Fixture f{fs::temp_directory_path() / ("pvdisagg_pipe_" + name),
              synth::generate_scenario(sc),
              {}};
    fs::remove_all(f.dir);
    synth::write_scenario(f.scenario, f.dir.string());

    f.config.cp_csv = (f.dir / "cp_native.csv").string();
    f.config.exemplar_csv = (f.dir / "exemplars.csv").string();
    f.config.cn_csv = (f.dir / "cn_net.csv").string();
    f.config.out_dir = (f.dir / "out").string();
    f.config.gmm_candidates = {1, 2, 3};
    f.config.gmm_restarts = 2;
    f.config.seed = 3;
    if (with_actuals) {
        f.config.gen_actual_csv = (f.dir / "cn_gen_actual.csv").string();
        f.config.native_actual_csv = (f.dir / "cn_native_actual.csv").string();
    }
    return f;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(read_file(path)); }

}  // namespace

TEST_CASE("a run writes the full artifact set") {
    auto f = make_fixture("full", true);
    const auto result = pipeline::run_pipeline(f.config);

    REQUIRE(result.customers.size() == 4);
    REQUIRE(result.report.has_value());
    for (std::size_t i = 1; i < result.customers.size(); ++i)
        CHECK(result.customers[i - 1].customer_id < result.customers[i].customer_id);

    const fs::path out(f.config.out_dir);
    const auto model = read_json(out / "model.json");
    for (const char* key : {"gmm", "partition", "fit_report", "exemplars", "samples", "seed"})
        CHECK(model.contains(key));
    CHECK(model["samples"].get<std::size_t>() == 30u * 6u);
    CHECK(model["seed"].get<std::uint64_t>() == 3u);

    const auto summary = read_json(out / "summary.json");
    CHECK(summary["counts"]["customers"].get<int>() == 4);
    CHECK(summary["counts"]["exemplars"].get<int>() == 3);
    REQUIRE(summary["customers"].size() == 4);
    for (const auto& row : summary["customers"]) {
        for (const char* key : {"customer_id", "omega", "objective", "converged", "iterations",
                                "kkt_residual", "negative_native_count", "lambda"})
            CHECK(row.contains(key));
        CHECK(row["omega"].size() == 3);
        CHECK_FALSE(row.contains("sweep"));  // sweep was not requested
    }

    CHECK(fs::exists(out / "metrics.json"));
    CHECK(fs::exists(out / "metrics.csv"));

    for (const auto& r : result.customers) {
        const fs::path base = out / "customers" / r.customer_id;
        CHECK(fs::exists(base.string() + ".json"));
        const auto est = load_customer_estimate_csv(base.string() + ".csv", r.customer_id);
        REQUIRE(est.net.size() == r.net.size());
        for (std::size_t t = 0; t < est.net.size(); ++t) {
            CHECK(est.net.value(t) == doctest::Approx(r.net.value(t)).epsilon(1e-9));
            CHECK(est.generation.value(t) <= 0.0);
            CHECK(est.native.value(t) ==
                  doctest::Approx(r.solution.native.value(t)).epsilon(1e-9));
        }
    }
    fs::remove_all(f.dir);
}

TEST_CASE("repeated runs are byte-identical") {
    auto f = make_fixture("bytes", true);
    auto config_b = f.config;
    config_b.out_dir = (f.dir / "out_b").string();
    pipeline::run_pipeline(f.config);
    pipeline::run_pipeline(config_b);

    const std::string first_id = f.scenario.truths[0].customer_id;
    for (const std::string name :
         {std::string("model.json"), std::string("summary.json"), std::string("metrics.json"),
          std::string("metrics.csv"), "customers/" + first_id + ".csv",
          "customers/" + first_id + ".json"}) {
        CAPTURE(name);
        CHECK(read_file(fs::path(f.config.out_dir) / name) ==
              read_file(fs::path(config_b.out_dir) / name));
    }
    fs::remove_all(f.dir);
}

TEST_CASE("fitting and solving separately equals one run") {
    auto f = make_fixture("split", true);
    pipeline::run_pipeline(f.config);

    auto split_config = f.config;
    split_config.out_dir = (f.dir / "out_split").string();
    const auto stage = pipeline::fit_stage(split_config);
    const auto as_json = pipeline::fit_stage_json(stage);
    const auto reloaded = pipeline::fit_stage_from_json(as_json, split_config);
    const auto customers = pipeline::solve_stage(reloaded, split_config);
    const auto report = pipeline::eval_stage(customers, split_config);
    pipeline::write_outputs(split_config, reloaded, customers, report);

    const std::string first_id = f.scenario.truths[0].customer_id;
    for (const std::string name :
         {std::string("model.json"), std::string("summary.json"), std::string("metrics.json"),
          "customers/" + first_id + ".csv"}) {
        CAPTURE(name);
        CHECK(read_file(fs::path(f.config.out_dir) / name) ==
              read_file(fs::path(split_config.out_dir) / name));
    }
    fs::remove_all(f.dir);
}

TEST_CASE("the solve stage can be skipped entirely") {
    auto f = make_fixture("fitonly", true);
    f.config.cn_csv.clear();
    const auto result = pipeline::run_pipeline(f.config);
    CHECK(result.customers.empty());
    CHECK_FALSE(result.report.has_value());
    const fs::path out(f.config.out_dir);
    CHECK(fs::exists(out / "model.json"));
    CHECK(fs::exists(out / "summary.json"));
    CHECK_FALSE(fs::exists(out / "customers"));
    CHECK_FALSE(fs::exists(out / "metrics.json"));
    CHECK(read_json(out / "summary.json")["counts"]["customers"].get<int>() == 0);
    fs::remove_all(f.dir);
}

TEST_CASE("worker count does not change the results") {
    auto f = make_fixture("workers", false);
    const auto stage = pipeline::fit_stage(f.config);

    auto serial = f.config;
    serial.workers = 1;
    auto parallel = f.config;
    parallel.workers = 4;
    const auto a = pipeline::solve_stage(stage, serial);
    const auto b = pipeline::solve_stage(stage, parallel);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].customer_id == b[i].customer_id);
        CHECK(a[i].solution.weights == b[i].solution.weights);
        CHECK(a[i].solution.objective == b[i].solution.objective);
        CHECK(a[i].solution.iterations == b[i].solution.iterations);
    }
    fs::remove_all(f.dir);
}

TEST_CASE("sweep requests add a ladder to each summary row") {
    auto f = make_fixture("sweep", false);
    f.config.sweep = true;
    f.config.gmm_candidates = {1};
    const auto result = pipeline::run_pipeline(f.config);
    const auto summary = read_json(fs::path(f.config.out_dir) / "summary.json");
    for (const auto& row : summary["customers"]) {
        REQUIRE(row.contains("sweep"));
        REQUIRE(row["sweep"].size() == 4);
        CHECK(row["sweep"][0]["lambda"].get<double>() == 0.1);
        CHECK(row["sweep"][3]["lambda"].get<double>() == 100.0);
    }
    REQUIRE(result.customers.size() == 4);
    CHECK(result.customers[0].sweep.size() == 4);
    fs::remove_all(f.dir);
}

TEST_CASE("component candidates shrink with the sample count") {
    auto f = make_fixture("clamp", false);
    f.config.cn_csv.clear();
    f.config.gmm_candidates = {1, 99};  // 99 would need 990 monthly samples
    const auto stage = pipeline::fit_stage(f.config);
    REQUIRE(stage.report.bic.size() == 1);
    CHECK(stage.report.bic[0].requested_components == 1);
    CHECK(stage.model.component_count() == 1);
    fs::remove_all(f.dir);
}

TEST_CASE("broken inputs surface as ingestion errors") {
    auto f = make_fixture("broken", false);

    auto missing = f.config;
    missing.cp_csv = (f.dir / "nope.csv").string();
    CHECK_THROWS_AS(pipeline::fit_stage(missing), IngestError);

    auto unset = f.config;
    unset.cp_csv.clear();
    CHECK_THROWS_WITH_AS(pipeline::fit_stage(unset), doctest::Contains("no C_P demand file"),
                         IngestError);

    const fs::path bad = f.dir / "bad.csv";
    {
        std::ofstream out(bad);
        out << "customer_id,timestamp,kwh,role\n";
        out << "C1,2022-01-01T00:00:00,1.5,native\n";
        out << "C1,2022-01-01T01:00:00,oops,native\n";
    }
    auto corrupt = f.config;
    corrupt.cp_csv = bad.string();
    CHECK_THROWS_WITH_AS(pipeline::fit_stage(corrupt), doctest::Contains(":3:"), IngestError);
    fs::remove_all(f.dir);
}

TEST_CASE("run configuration reads from json with defaults") {
    const pipeline::RunConfig defaults;
    const auto empty = pipeline::RunConfig::from_json(nlohmann::json::object());
    CHECK(empty.lambda == defaults.lambda);
    CHECK(empty.gmm_candidates == defaults.gmm_candidates);
    CHECK(empty.partition.derived);
    CHECK(empty.out_dir == defaults.out_dir);

    const nlohmann::json j = {{"cp_csv", "a.csv"},
                              {"exemplar_csv", "b.csv"},
                              {"cn_csv", "c.csv"},
                              {"out_dir", "results"},
                              {"partition",
                               {{"derived", false}, {"fixed_day_start", 6}, {"fixed_day_end", 20}}},
                              {"gmm_candidates", {2, 3}},
                              {"lambda", 4.5},
                              {"sweep", true},
                              {"workers", 2},
                              {"seed", 99}};
    const auto c = pipeline::RunConfig::from_json(j);
    CHECK(c.cp_csv == "a.csv");
    CHECK(c.exemplar_csv == "b.csv");
    CHECK(c.cn_csv == "c.csv");
    CHECK(c.out_dir == "results");
    CHECK_FALSE(c.partition.derived);
    CHECK(c.partition.fixed_day_start == 6);
    CHECK(c.partition.fixed_day_end == 20);
    CHECK(c.gmm_candidates == std::vector<int>{2, 3});
    CHECK(c.lambda == 4.5);
    CHECK(c.sweep);
    CHECK(c.workers == 2);
    CHECK(c.seed == 99);
    CHECK(c.gmm_tol == defaults.gmm_tol);  // untouched keys keep their defaults
}
