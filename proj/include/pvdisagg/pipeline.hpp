#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pvdisagg/disagg.hpp"
#include "pvdisagg/gmm.hpp"
#include "pvdisagg/metrics.hpp"
#include "pvdisagg/timeseries.hpp"

namespace pvdisagg::pipeline {

struct PartitionConfig {
    bool derived = true;  // derive day/night from exemplar generation support
    double threshold = 0.01;
    unsigned fixed_day_start = 7;  // used when derived == false
    unsigned fixed_day_end = 19;
};

struct RunConfig {
    std::string cp_csv;        // native demand of customers without PV
    std::string exemplar_csv;  // metered PV generation (raw positive)
    std::string cn_csv;        // net demand of customers to disaggregate; may be empty
    std::string out_dir = ".";
    PartitionConfig partition;
    std::vector<int> gmm_candidates = {1, 2, 3, 4, 5, 6, 7, 8};
    int gmm_restarts = 4;
    double gmm_tol = 1e-8;
    int gmm_max_iter = 500;
    double lambda = 1.0;
    bool sweep = false;  // also run the lambda ladder per customer
    int solver_starts = 8;
    double solver_tol = 1e-6;
    int solver_max_iter = 500;
    double distinctness_floor = 0.01;
    int workers = 0;  // 0 = hardware concurrency
    std::uint64_t seed = 0;
    // Optional ground truth for the evaluation stage.
    std::string gen_actual_csv;
    std::string native_actual_csv;

    static RunConfig from_json(const nlohmann::json& j);
};

struct FitStage {
    DayNightPartition partition;
    disagg::ExemplarSet exemplars;
    gmm::Model model;
    gmm::FitReport report;
    std::size_t sample_count = 0;
    std::uint64_t seed = 0;
};

// Ingest C_P and exemplar files, derive the partition, aggregate monthly
// pairs and fit the mixture. Candidate component counts that the sample
// count cannot support are dropped (with at least one kept).
FitStage fit_stage(const RunConfig& config);

nlohmann::json fit_stage_json(const FitStage& stage);
// Rebuilds a fit stage from model.json; exemplars are re-ingested from the
// configured CSV so `fit` + `solve` equals a single `run` exactly.
FitStage fit_stage_from_json(const nlohmann::json& j, const RunConfig& config);

struct CustomerResult {
    std::string customer_id;
    HourlySeries net;
    disagg::Solution solution;
    std::vector<disagg::LambdaSweepEntry> sweep;  // filled when config.sweep
};

// Solves every customer in cn_csv against the fitted stage, in parallel,
// merged in customer-id order. Each customer's solver seed depends only on
// the master seed and the customer id.
std::vector<CustomerResult> solve_stage(const FitStage& stage, const RunConfig& config);

nlohmann::json summary_json(const RunConfig& config, const FitStage& stage,
                            const std::vector<CustomerResult>& results);

// Joins solver outputs with actual series by customer id and computes the
// error report. Customers without actuals are skipped.
metrics::ErrorReport eval_stage(const std::vector<CustomerResult>& results,
                                const RunConfig& config);

struct PipelineResult {
    FitStage fit;
    std::vector<CustomerResult> customers;
    std::optional<metrics::ErrorReport> report;
};

// Full end-to-end run: fit, solve, optional eval; writes model.json,
// summary.json and per-customer artifacts under out_dir.
PipelineResult run_pipeline(const RunConfig& config);

void write_outputs(const RunConfig& config, const FitStage& stage,
                   const std::vector<CustomerResult>& results,
                   const std::optional<metrics::ErrorReport>& report);

}  // namespace pvdisagg::pipeline
