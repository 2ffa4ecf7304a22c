#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pvdisagg/timeseries.hpp"

namespace pvdisagg::metrics {

// Hours that enter the error metrics: for generation series the hours where
// the actual value is non-zero, for everything else every hour.
std::vector<bool> qualifying_hours(const HourlySeries& actual);

// Mean absolute error normalized by the mean absolute actual value over the
// qualifying hours, in percent.
double mape(const HourlySeries& actual, const HourlySeries& estimate);
double mape(const HourlySeries& actual, const HourlySeries& estimate,
            const std::vector<bool>& qualify);

double rmse(const HourlySeries& actual, const HourlySeries& estimate);
double rmse(const HourlySeries& actual, const HourlySeries& estimate,
            const std::vector<bool>& qualify);

// Lower empirical quantile: for each probability p the smallest value v with
// fraction(values <= v) >= p.
std::vector<double> empirical_cdf(std::vector<double> values,
                                  std::span<const double> probabilities);

struct TimescaleCorrelations {
    std::optional<double> hourly;
    std::optional<double> daily;
    std::optional<double> weekly;
    std::optional<double> monthly;
};

// Pearson correlation between nocturnal and diurnal energy aggregated per
// day-paired hour, day, consecutive 7-day block, and complete calendar month.
// Absent entries mean the bucket had zero variance (or too few points).
TimescaleCorrelations timescale_correlation(const HourlySeries& series,
                                            const DayNightPartition& partition);

// Same correlations over the pooled pairs of a whole customer population.
TimescaleCorrelations timescale_correlation_population(std::span<const HourlySeries> series,
                                                       const DayNightPartition& partition);

struct CustomerSeriesSet {
    HourlySeries actual_generation;
    HourlySeries estimated_generation;
    HourlySeries actual_native;
    HourlySeries estimated_native;
};

struct CustomerError {
    std::string customer_id;
    std::optional<double> generation_mape;
    std::optional<double> generation_rmse;
    std::optional<double> native_mape;
    std::optional<double> native_rmse;
};

struct ErrorReport {
    std::vector<CustomerError> customers;
    std::vector<double> probabilities;
    std::vector<double> generation_mape_cdf;
    std::vector<double> generation_rmse_cdf;
    std::vector<double> native_mape_cdf;
    std::vector<double> native_rmse_cdf;
    std::optional<double> mean_generation_mape;
    std::optional<double> mean_generation_rmse;
    std::optional<double> mean_native_mape;
    std::optional<double> mean_native_rmse;
    // Native metrics reuse the generation qualifying hours so both rows of the
    // report cover identical hours; recorded here because it is a choice.
    bool shared_qualifying_set = true;

    nlohmann::json to_json() const;
};

// Per-customer generation/native errors plus population CDF tables at
// probabilities {0.2, 0.4, 0.6, 0.8, 1.0}. Customers whose metrics are
// undefined (all-zero actuals) get absent entries and are excluded from the
// population tables.
ErrorReport build_error_report(std::span<const CustomerSeriesSet> customers);

void write_customer_metrics_csv(const ErrorReport& report, std::ostream& out);

}  // namespace pvdisagg::metrics
