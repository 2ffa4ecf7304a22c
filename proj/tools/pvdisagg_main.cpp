#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pvdisagg/csv.hpp"
#include "pvdisagg/errors.hpp"
#include "pvdisagg/metrics.hpp"
#include "pvdisagg/pipeline.hpp"
#include "pvdisagg/synth.hpp"

namespace {

namespace fs = std::filesystem;
using pvdisagg::pipeline::RunConfig;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pvdisagg::IngestError("cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return j;
}

void add_common_run_options(CLI::App* cmd, RunConfig& config, std::string& config_path) {
    cmd->add_option("--config", config_path, "JSON config file; explicit flags override it");
    cmd->add_option("--out-dir", config.out_dir, "Output directory");
    cmd->add_option("--seed", config.seed, "Master seed");
    cmd->add_option("--workers", config.workers, "Worker threads (0 = hardware)");
}

void add_fit_options(CLI::App* cmd, RunConfig& config) {
    cmd->add_option("--cp", config.cp_csv, "CSV with native demand of customers without PV");
    cmd->add_option("--exemplars", config.exemplar_csv, "CSV with metered PV generation");
    cmd->add_option("--gmm-candidates", config.gmm_candidates, "Component counts to try");
    cmd->add_option("--gmm-restarts", config.gmm_restarts, "Seeded restarts per count");
    cmd->add_option("--gmm-tol", config.gmm_tol, "EM relative log-likelihood tolerance");
    cmd->add_option("--gmm-max-iter", config.gmm_max_iter, "EM iteration cap");
    cmd->add_option("--partition-threshold", config.partition.threshold,
                    "Diurnal threshold as fraction of the peak hour");
    auto* fixed = cmd->add_option_group("fixed-window");
    fixed->add_option("--day-start", config.partition.fixed_day_start, "Fixed diurnal start hour");
    fixed->add_option("--day-end", config.partition.fixed_day_end, "Fixed diurnal end hour");
    cmd->add_flag_callback(
        "--fixed-window", [&config]() { config.partition.derived = false; },
        "Use the fixed day window instead of deriving the partition");
}

void add_solve_options(CLI::App* cmd, RunConfig& config) {
    cmd->add_option("--cn", config.cn_csv, "CSV with net demand of customers to disaggregate");
    cmd->add_option("--lambda", config.lambda, "Penalty weight on negative native estimates");
    cmd->add_flag("--sweep", config.sweep, "Also run the lambda diagnostic ladder");
    cmd->add_option("--solver-starts", config.solver_starts, "Multi-start count");
    cmd->add_option("--solver-tol", config.solver_tol, "Projected-gradient tolerance");
    cmd->add_option("--solver-max-iter", config.solver_max_iter, "Iteration cap per start");
    cmd->add_option("--distinctness-floor", config.distinctness_floor,
                    "Minimum pairwise exemplar profile distance");
    cmd->add_option("--gen-actual", config.gen_actual_csv, "Actual generation CSV for eval");
    cmd->add_option("--native-actual", config.native_actual_csv, "Actual native CSV for eval");
}

// Flags the user typed override values coming from --config.
RunConfig merge_config(const CLI::App* cmd, const RunConfig& flags, const std::string& config_path) {
    if (config_path.empty()) return flags;
    RunConfig merged = RunConfig::from_json(read_json_file(config_path));
    const std::map<std::string, std::function<void(RunConfig&, const RunConfig&)>> overrides = {
        {"--cp", [](RunConfig& m, const RunConfig& f) { m.cp_csv = f.cp_csv; }},
        {"--exemplars", [](RunConfig& m, const RunConfig& f) { m.exemplar_csv = f.exemplar_csv; }},
        {"--cn", [](RunConfig& m, const RunConfig& f) { m.cn_csv = f.cn_csv; }},
        {"--out-dir", [](RunConfig& m, const RunConfig& f) { m.out_dir = f.out_dir; }},
        {"--seed", [](RunConfig& m, const RunConfig& f) { m.seed = f.seed; }},
        {"--workers", [](RunConfig& m, const RunConfig& f) { m.workers = f.workers; }},
        {"--gmm-candidates",
         [](RunConfig& m, const RunConfig& f) { m.gmm_candidates = f.gmm_candidates; }},
        {"--gmm-restarts", [](RunConfig& m, const RunConfig& f) { m.gmm_restarts = f.gmm_restarts; }},
        {"--gmm-tol", [](RunConfig& m, const RunConfig& f) { m.gmm_tol = f.gmm_tol; }},
        {"--gmm-max-iter", [](RunConfig& m, const RunConfig& f) { m.gmm_max_iter = f.gmm_max_iter; }},
        {"--partition-threshold",
         [](RunConfig& m, const RunConfig& f) { m.partition.threshold = f.partition.threshold; }},
        {"--day-start",
         [](RunConfig& m, const RunConfig& f) {
             m.partition.fixed_day_start = f.partition.fixed_day_start;
         }},
        {"--day-end",
         [](RunConfig& m, const RunConfig& f) {
             m.partition.fixed_day_end = f.partition.fixed_day_end;
         }},
        {"--fixed-window",
         [](RunConfig& m, const RunConfig& f) { m.partition.derived = f.partition.derived; }},
        {"--lambda", [](RunConfig& m, const RunConfig& f) { m.lambda = f.lambda; }},
        {"--sweep", [](RunConfig& m, const RunConfig& f) { m.sweep = f.sweep; }},
        {"--solver-starts",
         [](RunConfig& m, const RunConfig& f) { m.solver_starts = f.solver_starts; }},
        {"--solver-tol", [](RunConfig& m, const RunConfig& f) { m.solver_tol = f.solver_tol; }},
        {"--solver-max-iter",
         [](RunConfig& m, const RunConfig& f) { m.solver_max_iter = f.solver_max_iter; }},
        {"--distinctness-floor",
         [](RunConfig& m, const RunConfig& f) { m.distinctness_floor = f.distinctness_floor; }},
        {"--gen-actual",
         [](RunConfig& m, const RunConfig& f) { m.gen_actual_csv = f.gen_actual_csv; }},
        {"--native-actual",
         [](RunConfig& m, const RunConfig& f) { m.native_actual_csv = f.native_actual_csv; }},
    };
    for (const auto& [name, apply] : overrides) {
        const auto* opt = cmd->get_option_no_throw(name);
        if (opt != nullptr && opt->count() > 0) apply(merged, flags);
    }
    return merged;
}

void add_synth_options(CLI::App* cmd, pvdisagg::synth::ScenarioConfig& sc, std::string& out_dir,
                       std::string& composition) {
    cmd->add_option("--out-dir", out_dir, "Directory for the scenario files")->required();
    cmd->add_option("--seed", sc.seed, "Scenario seed");
    cmd->add_option("--cp", sc.cp_count, "Customers without PV");
    cmd->add_option("--cg", sc.cg_count, "Customers with metered PV (exemplars)");
    cmd->add_option("--cn", sc.cn_count, "Net-metered customers");
    cmd->add_option("--months", sc.months, "Horizon in months");
    cmd->add_option("--start-year", sc.start_year, "First calendar year");
    cmd->add_option("--start-month", sc.start_month, "First calendar month");
    cmd->add_option("--annual-kwh", sc.load.annual_kwh, "Average annual energy per customer");
    cmd->add_option("--seasonal", sc.load.seasonal_amplitude, "Seasonal budget amplitude");
    cmd->add_option("--noise", sc.load.noise, "Master noise knob");
    cmd->add_option("--heterogeneity", sc.load.heterogeneity, "Customer scale spread");
    cmd->add_option("--nocturnal-share", sc.load.nocturnal_share, "Base nocturnal fraction");
    cmd->add_option("--capacity-min", sc.solar.capacity_min_kw, "Minimum PV capacity (kW)");
    cmd->add_option("--capacity-max", sc.solar.capacity_max_kw, "Maximum PV capacity (kW)");
    cmd->add_option("--skew", sc.solar.skew, "Orientation peak-shift magnitude");
    cmd->add_option("--weather", sc.solar.weather_volatility, "Shared day-factor sigma");
    cmd->add_option("--composition", composition, "exact_mix or own_pv");
    cmd->add_option("--zero-pv-fraction", sc.zero_pv_fraction,
                    "Trailing share of net customers without PV");
    cmd->add_option("--anomaly-count", sc.anomalies.count, "Failure hours per affected exemplar");
    cmd->add_option("--anomaly-exemplars", sc.anomalies.exemplar_indices,
                    "Zero-based exemplar indices to corrupt");
    cmd->add_option("--anomaly-scale", sc.anomalies.scale, "Surviving fraction at failure hours");
}

int run_eval(const std::string& estimates_dir, const RunConfig& config) {
    const fs::path dir = fs::path(estimates_dir) / "customers";
    if (!fs::is_directory(dir))
        throw pvdisagg::IngestError("no customers directory under '" + estimates_dir + "'");
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".csv") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw pvdisagg::IngestError("no customer estimates in '" + estimates_dir + "'");

    std::map<std::string, pvdisagg::HourlySeries> gen_actual, native_actual;
    for (auto& l : pvdisagg::load_series_csv(config.gen_actual_csv,
                                             {pvdisagg::Role::generation}))
        gen_actual.emplace(l.series.customer_id(), std::move(l.series));
    for (auto& l :
         pvdisagg::load_series_csv(config.native_actual_csv, {pvdisagg::Role::native}))
        native_actual.emplace(l.series.customer_id(), std::move(l.series));

    std::vector<pvdisagg::metrics::CustomerSeriesSet> sets;
    for (const auto& id : ids) {
        const auto g = gen_actual.find(id);
        const auto n = native_actual.find(id);
        if (g == gen_actual.end() || n == native_actual.end()) continue;
        auto est = pvdisagg::load_customer_estimate_csv((dir / (id + ".csv")).string(), id);
        sets.push_back(pvdisagg::metrics::CustomerSeriesSet{
            g->second, std::move(est.generation), n->second, std::move(est.native)});
    }
    if (sets.empty())
        throw pvdisagg::IngestError("no estimate/actual customer overlap to evaluate");

    const auto report = pvdisagg::metrics::build_error_report(sets);
    fs::create_directories(config.out_dir);
    {
        std::ofstream out(fs::path(config.out_dir) / "metrics.json");
        if (!out) throw pvdisagg::IngestError("cannot write metrics.json");
        out << report.to_json().dump(2) << '\n';
    }
    {
        std::ofstream out(fs::path(config.out_dir) / "metrics.csv");
        if (!out) throw pvdisagg::IngestError("cannot write metrics.csv");
        pvdisagg::metrics::write_customer_metrics_csv(report, out);
    }
    std::cerr << "evaluated " << sets.size() << " customers\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Disaggregates behind-the-meter PV generation and native demand "
                 "from net smart-meter data"};
    app.require_subcommand(1);

    RunConfig flags;
    std::string config_path;
    std::string model_path;
    std::string estimates_dir;
    pvdisagg::synth::ScenarioConfig scenario;
    std::string scenario_out;
    std::string composition = "own_pv";

    auto* run = app.add_subcommand("run", "Fit, solve and report end to end");
    add_common_run_options(run, flags, config_path);
    add_fit_options(run, flags);
    add_solve_options(run, flags);

    auto* fit = app.add_subcommand("fit", "Fit the mixture model only");
    add_common_run_options(fit, flags, config_path);
    add_fit_options(fit, flags);

    auto* solve = app.add_subcommand("solve", "Solve customers against a saved model");
    add_common_run_options(solve, flags, config_path);
    solve->add_option("--model", model_path, "model.json from a previous fit")->required();
    solve->add_option("--exemplars", flags.exemplar_csv, "CSV with metered PV generation");
    add_solve_options(solve, flags);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic feeder scenario");
    add_synth_options(synth, scenario, scenario_out, composition);

    auto* eval = app.add_subcommand("eval", "Score saved estimates against ground truth");
    add_common_run_options(eval, flags, config_path);
    eval->add_option("--estimates-dir", estimates_dir, "Output directory of a previous run")
        ->required();
    eval->add_option("--gen-actual", flags.gen_actual_csv, "Actual generation CSV")->required();
    eval->add_option("--native-actual", flags.native_actual_csv, "Actual native CSV")->required();

    auto* sweep = app.add_subcommand("sweep-lambda", "Run the lambda diagnostic ladder");
    add_common_run_options(sweep, flags, config_path);
    sweep->add_option("--model", model_path, "model.json from a previous fit")->required();
    sweep->add_option("--exemplars", flags.exemplar_csv, "CSV with metered PV generation");
    add_solve_options(sweep, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const RunConfig config = merge_config(run, flags, config_path);
            const auto result = pvdisagg::pipeline::run_pipeline(config);
            std::cerr << "fitted " << result.fit.model.component_count() << " components on "
                      << result.fit.sample_count << " customer-months; solved "
                      << result.customers.size() << " customers\n";
        } else if (fit->parsed()) {
            const RunConfig config = merge_config(fit, flags, config_path);
            const auto stage = pvdisagg::pipeline::fit_stage(config);
            fs::create_directories(config.out_dir);
            std::ofstream out(fs::path(config.out_dir) / "model.json");
            if (!out) throw pvdisagg::IngestError("cannot write model.json");
            out << pvdisagg::pipeline::fit_stage_json(stage).dump(2) << '\n';
            std::cerr << "fitted " << stage.model.component_count() << " components on "
                      << stage.sample_count << " customer-months\n";
        } else if (solve->parsed() || sweep->parsed()) {
            CLI::App* cmd = solve->parsed() ? solve : sweep;
            RunConfig config = merge_config(cmd, flags, config_path);
            if (sweep->parsed()) config.sweep = true;
            const auto stage = pvdisagg::pipeline::fit_stage_from_json(
                read_json_file(model_path), config);
            const auto results = pvdisagg::pipeline::solve_stage(stage, config);
            std::optional<pvdisagg::metrics::ErrorReport> report;
            if (!results.empty() && !config.gen_actual_csv.empty() &&
                !config.native_actual_csv.empty()) {
                report = pvdisagg::pipeline::eval_stage(results, config);
            }
            pvdisagg::pipeline::write_outputs(config, stage, results, report);
            std::cerr << "solved " << results.size() << " customers\n";
        } else if (synth->parsed()) {
            if (composition == "exact_mix") {
                scenario.composition = pvdisagg::synth::ScenarioConfig::Composition::exact_mix;
            } else if (composition == "own_pv") {
                scenario.composition = pvdisagg::synth::ScenarioConfig::Composition::own_pv;
            } else {
                throw CLI::ValidationError("--composition must be exact_mix or own_pv");
            }
            const auto s = pvdisagg::synth::generate_scenario(scenario);
            pvdisagg::synth::write_scenario(s, scenario_out);
            std::cerr << "wrote scenario with " << s.cp_native.size() << " C_P, "
                      << s.exemplars_clean.size() << " exemplars, " << s.cn_net.size()
                      << " C_N customers\n";
        } else if (eval->parsed()) {
            const RunConfig config = merge_config(eval, flags, config_path);
            return run_eval(estimates_dir, config);
        }
    } catch (const pvdisagg::IngestError& e) {
        std::cerr << "ingestion error: " << e.what() << '\n';
        return 2;
    } catch (const pvdisagg::FitError& e) {
        std::cerr << "fit error: " << e.what() << '\n';
        return 3;
    } catch (const pvdisagg::SolveError& e) {
        std::cerr << "solve error: " << e.what() << '\n';
        return 4;
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
