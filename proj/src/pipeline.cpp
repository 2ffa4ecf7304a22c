#include "pvdisagg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "pvdisagg/csv.hpp"
#include "pvdisagg/errors.hpp"
#include "pvdisagg/rng.hpp"

namespace pvdisagg::pipeline {
namespace {

namespace fs = std::filesystem;

void dump_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IngestError("write failed for '" + path.string() + "'");
}

nlohmann::json partition_json(const DayNightPartition& partition) {
    auto months = nlohmann::json::array();
    for (unsigned m = 1; m <= 12; ++m) {
        nlohmann::json entry;
        entry["month"] = m;
        entry["defined"] = partition.defined_for(m);
        if (partition.defined_for(m)) entry["diurnal_hours"] = partition.diurnal_hours(m);
        months.push_back(std::move(entry));
    }
    return months;
}

DayNightPartition partition_from_json(const nlohmann::json& j) {
    std::array<std::uint32_t, 12> masks{};
    std::array<bool, 12> defined{};
    for (const auto& entry : j) {
        const unsigned m = entry.at("month").get<unsigned>();
        if (m < 1 || m > 12) throw IngestError("partition month out of range");
        defined[m - 1] = entry.at("defined").get<bool>();
        if (!defined[m - 1]) continue;
        for (unsigned h : entry.at("diurnal_hours").get<std::vector<unsigned>>()) {
            if (h > 23) throw IngestError("partition hour out of range");
            masks[m - 1] |= 1u << h;
        }
    }
    return DayNightPartition(masks, defined);
}

nlohmann::json report_json(const gmm::FitReport& report) {
    auto bic = nlohmann::json::array();
    for (const auto& e : report.bic) {
        bic.push_back({{"requested_components", e.requested_components},
                       {"fitted_components", e.fitted_components},
                       {"log_likelihood", e.log_likelihood},
                       {"bic", e.bic}});
    }
    return {{"log_likelihood", report.log_likelihood},
            {"iterations", report.iterations},
            {"converged", report.converged},
            {"restarts", report.restarts},
            {"bic", std::move(bic)},
            {"warnings", report.warnings}};
}

gmm::FitReport report_from_json(const nlohmann::json& j) {
    gmm::FitReport report;
    report.log_likelihood = j.at("log_likelihood").get<double>();
    report.iterations = j.at("iterations").get<int>();
    report.converged = j.at("converged").get<bool>();
    report.restarts = j.at("restarts").get<int>();
    report.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& e : j.at("bic")) {
        report.bic.push_back({e.at("requested_components").get<int>(),
                              e.at("fitted_components").get<int>(),
                              e.at("log_likelihood").get<double>(),
                              e.at("bic").get<double>()});
    }
    return report;
}

disagg::ExemplarSet load_exemplars(const RunConfig& config, const DayNightPartition* partition) {
    const auto loaded = load_series_csv(config.exemplar_csv, {Role::generation});
    std::vector<HourlySeries> series;
    series.reserve(loaded.size());
    for (const auto& l : loaded) series.push_back(l.series);

    DayNightPartition effective =
        partition != nullptr
            ? *partition
            : (config.partition.derived
                   ? derive_partition(series, config.partition.threshold)
                   : DayNightPartition::fixed_window(config.partition.fixed_day_start,
                                                     config.partition.fixed_day_end));
    disagg::ExemplarSet set =
        disagg::make_exemplar_set(series, {}, effective, config.distinctness_floor);
    return set;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.cp_csv = j.value("cp_csv", c.cp_csv);
    c.exemplar_csv = j.value("exemplar_csv", c.exemplar_csv);
    c.cn_csv = j.value("cn_csv", c.cn_csv);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        c.partition.derived = p.value("derived", c.partition.derived);
        c.partition.threshold = p.value("threshold", c.partition.threshold);
        c.partition.fixed_day_start = p.value("fixed_day_start", c.partition.fixed_day_start);
        c.partition.fixed_day_end = p.value("fixed_day_end", c.partition.fixed_day_end);
    }
    c.gmm_candidates = j.value("gmm_candidates", c.gmm_candidates);
    c.gmm_restarts = j.value("gmm_restarts", c.gmm_restarts);
    c.gmm_tol = j.value("gmm_tol", c.gmm_tol);
    c.gmm_max_iter = j.value("gmm_max_iter", c.gmm_max_iter);
    c.lambda = j.value("lambda", c.lambda);
    c.sweep = j.value("sweep", c.sweep);
    c.solver_starts = j.value("solver_starts", c.solver_starts);
    c.solver_tol = j.value("solver_tol", c.solver_tol);
    c.solver_max_iter = j.value("solver_max_iter", c.solver_max_iter);
    c.distinctness_floor = j.value("distinctness_floor", c.distinctness_floor);
    c.workers = j.value("workers", c.workers);
    c.seed = j.value("seed", c.seed);
    c.gen_actual_csv = j.value("gen_actual_csv", c.gen_actual_csv);
    c.native_actual_csv = j.value("native_actual_csv", c.native_actual_csv);
    return c;
}

FitStage fit_stage(const RunConfig& config) {
    if (config.cp_csv.empty()) throw IngestError("no C_P demand file configured");
    if (config.exemplar_csv.empty()) throw IngestError("no exemplar file configured");

    const auto cp = load_series_csv(config.cp_csv, {Role::native});
    disagg::ExemplarSet exemplars = load_exemplars(config, nullptr);
    DayNightPartition partition =
        config.partition.derived
            ? derive_partition(exemplars.series, config.partition.threshold)
            : DayNightPartition::fixed_window(config.partition.fixed_day_start,
                                              config.partition.fixed_day_end);

    std::vector<MonthlyPair> samples;
    for (const auto& l : cp) {
        const MonthlyAggregate agg = aggregate_monthly(l.series, partition);
        samples.insert(samples.end(), agg.pairs.begin(), agg.pairs.end());
    }

    gmm::SelectOptions options;
    options.candidates.clear();
    for (int s : config.gmm_candidates)
        if (static_cast<std::size_t>(10 * s) <= samples.size()) options.candidates.push_back(s);
    if (options.candidates.empty() && !config.gmm_candidates.empty()) {
        options.candidates.push_back(
            *std::min_element(config.gmm_candidates.begin(), config.gmm_candidates.end()));
    }
    options.restarts = config.gmm_restarts;
    options.fit.tol = config.gmm_tol;
    options.fit.max_iter = config.gmm_max_iter;
    options.fit.seed = mix_seed(config.seed, fnv1a64("gmm"));

    auto [model, report] = gmm::fit_select(samples, options);
    return FitStage{std::move(partition), std::move(exemplars), std::move(model),
                    std::move(report), samples.size(), config.seed};
}

nlohmann::json fit_stage_json(const FitStage& stage) {
    nlohmann::json j;
    j["gmm"] = stage.model.to_json();
    j["partition"] = partition_json(stage.partition);
    j["fit_report"] = report_json(stage.report);
    std::vector<std::string> ids;
    for (const auto& s : stage.exemplars.series) ids.push_back(s.customer_id());
    j["exemplars"] = {{"ids", ids},
                      {"distinctness_floor", stage.exemplars.distinctness_floor},
                      {"min_pairwise_distance", stage.exemplars.min_pairwise_distance}};
    j["samples"] = stage.sample_count;
    j["seed"] = stage.seed;
    return j;
}

FitStage fit_stage_from_json(const nlohmann::json& j, const RunConfig& config) {
    DayNightPartition partition = partition_from_json(j.at("partition"));
    disagg::ExemplarSet exemplars = load_exemplars(config, &partition);

    const auto ids = j.at("exemplars").at("ids").get<std::vector<std::string>>();
    if (ids.size() != exemplars.series.size())
        throw IngestError("exemplar file does not match the fitted model");
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (exemplars.series[i].customer_id() != ids[i])
            throw IngestError("exemplar file does not match the fitted model");

    return FitStage{std::move(partition),
                    std::move(exemplars),
                    gmm::Model::from_json(j.at("gmm")),
                    report_from_json(j.at("fit_report")),
                    j.at("samples").get<std::size_t>(),
                    j.at("seed").get<std::uint64_t>()};
}

std::vector<CustomerResult> solve_stage(const FitStage& stage, const RunConfig& config) {
    if (config.cn_csv.empty()) return {};
    auto loaded = load_series_csv(config.cn_csv, {Role::net});
    std::sort(loaded.begin(), loaded.end(), [](const LoadedSeries& a, const LoadedSeries& b) {
        return a.series.customer_id() < b.series.customer_id();
    });

    std::vector<std::optional<CustomerResult>> slots(loaded.size());
    std::vector<std::exception_ptr> failures(loaded.size());
    std::atomic<std::size_t> cursor{0};

    const auto worker = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= loaded.size()) break;
            const HourlySeries& net = loaded[i].series;
            try {
                disagg::DisaggProblem problem = disagg::make_problem(
                    net, stage.exemplars, stage.model, stage.partition, config.lambda);
                disagg::SolveConfig solver;
                solver.starts = config.solver_starts;
                solver.tol = config.solver_tol;
                solver.max_iter = config.solver_max_iter;
                solver.seed = mix_seed(stage.seed, fnv1a64(net.customer_id()));
                CustomerResult r{net.customer_id(), net, disagg::solve(problem, solver), {}};
                if (config.sweep) r.sweep = disagg::sweep_lambda(problem, solver);
                slots[i] = std::move(r);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };

    int workers = config.workers > 0 ? config.workers
                                     : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, static_cast<int>(loaded.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (failures[i]) {
            try {
                std::rethrow_exception(failures[i]);
            } catch (const SolveError& e) {
                throw SolveError(loaded[i].series.customer_id() + ": " + e.what());
            }
        }
    }
    std::vector<CustomerResult> results;
    results.reserve(slots.size());
    for (auto& s : slots) results.push_back(std::move(*s));
    return results;
}

nlohmann::json summary_json(const RunConfig& config, const FitStage& stage,
                            const std::vector<CustomerResult>& results) {
    nlohmann::json j;
    j["seed"] = stage.seed;
    j["lambda"] = config.lambda;
    j["model_file"] = "model.json";
    j["counts"] = {{"gmm_samples", stage.sample_count},
                   {"exemplars", stage.exemplars.series.size()},
                   {"customers", results.size()}};
    auto rows = nlohmann::json::array();
    for (const auto& r : results) {
        nlohmann::json row = {{"customer_id", r.customer_id},
                              {"omega", r.solution.weights},
                              {"objective", r.solution.objective},
                              {"converged", r.solution.converged},
                              {"iterations", r.solution.iterations},
                              {"kkt_residual", r.solution.kkt_residual},
                              {"negative_native_count", r.solution.negative_native_count},
                              {"lambda", r.solution.lambda}};
        if (!r.sweep.empty()) {
            auto sweep = nlohmann::json::array();
            for (const auto& e : r.sweep) {
                sweep.push_back({{"lambda", e.lambda},
                                 {"negative_native_count", e.negative_native_count},
                                 {"objective", e.objective},
                                 {"omega", e.weights}});
            }
            row["sweep"] = std::move(sweep);
        }
        rows.push_back(std::move(row));
    }
    j["customers"] = std::move(rows);
    return j;
}

metrics::ErrorReport eval_stage(const std::vector<CustomerResult>& results,
                                const RunConfig& config) {
    if (config.gen_actual_csv.empty() || config.native_actual_csv.empty())
        throw IngestError("evaluation needs both generation and native actual files");
    std::map<std::string, HourlySeries> gen_actual, native_actual;
    for (auto& l : load_series_csv(config.gen_actual_csv, {Role::generation}))
        gen_actual.emplace(l.series.customer_id(), std::move(l.series));
    for (auto& l : load_series_csv(config.native_actual_csv, {Role::native}))
        native_actual.emplace(l.series.customer_id(), std::move(l.series));

    std::vector<metrics::CustomerSeriesSet> sets;
    for (const auto& r : results) {
        const auto g = gen_actual.find(r.customer_id);
        const auto n = native_actual.find(r.customer_id);
        if (g == gen_actual.end() || n == native_actual.end()) continue;
        sets.push_back(metrics::CustomerSeriesSet{g->second, r.solution.generation, n->second,
                                                  r.solution.native});
    }
    return metrics::build_error_report(sets);
}

void write_outputs(const RunConfig& config, const FitStage& stage,
                   const std::vector<CustomerResult>& results,
                   const std::optional<metrics::ErrorReport>& report) {
    const fs::path out(config.out_dir);
    fs::create_directories(out);
    dump_json(fit_stage_json(stage), out / "model.json");

    if (!results.empty()) {
        fs::create_directories(out / "customers");
        for (const auto& r : results) {
            const auto base = (out / "customers" / r.customer_id).string();
            write_customer_estimate_csv(base + ".csv", r.net, r.solution.generation,
                                        r.solution.native);
            dump_json({{"omega", r.solution.weights},
                       {"objective", r.solution.objective},
                       {"converged", r.solution.converged},
                       {"iterations", r.solution.iterations},
                       {"negative_native_count", r.solution.negative_native_count},
                       {"lambda", r.solution.lambda}},
                      base + ".json");
        }
    }

    dump_json(summary_json(config, stage, results), out / "summary.json");
    if (report) {
        dump_json(report->to_json(), out / "metrics.json");
        std::ofstream csv(out / "metrics.csv");
        if (!csv) throw IngestError("cannot write metrics.csv");
        metrics::write_customer_metrics_csv(*report, csv);
    }
}

PipelineResult run_pipeline(const RunConfig& config) {
    PipelineResult result{fit_stage(config), {}, std::nullopt};
    result.customers = solve_stage(result.fit, config);
    if (!result.customers.empty() && !config.gen_actual_csv.empty() &&
        !config.native_actual_csv.empty()) {
        result.report = eval_stage(result.customers, config);
    }
    write_outputs(config, result.fit, result.customers, result.report);
    return result;
}

}  // namespace pvdisagg::pipeline
