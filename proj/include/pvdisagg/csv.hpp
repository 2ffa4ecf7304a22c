#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvdisagg/timeseries.hpp"

namespace pvdisagg {

// Input schema: header `customer_id,timestamp,kwh` with an optional `role`
// column. Timestamps are ISO-8601 at hour resolution. Generation files carry
// raw non-negative values and are flipped to the internal sign on load.
struct CsvLoadOptions {
    // Role applied to every row; when the file also has a role column the two
    // must agree.
    std::optional<Role> forced_role;
    // Fill gaps of at most max_gap_hours by linear interpolation instead of
    // rejecting the file.
    bool fill_gaps = false;
    int max_gap_hours = 3;
};

struct LoadedSeries {
    HourlySeries series;
    std::vector<HourStamp> filled;  // hours synthesized by gap filling
};

// Loads every customer found in the file, in order of first appearance.
std::vector<LoadedSeries> load_series_csv(const std::string& path, const CsvLoadOptions& options = {});

// Writes `customer_id,timestamp,kwh,role` rows. Generation series are
// emitted in raw meter convention (positive) when raw_generation_sign is set.
void write_series_csv(const std::string& path, std::span<const HourlySeries> series,
                      bool raw_generation_sign = true);

// Per-customer estimate file: `timestamp,net_kwh,gen_est_kwh,native_est_kwh`,
// generation emitted in positive meter convention.
void write_customer_estimate_csv(const std::string& path, const HourlySeries& net,
                                 const HourlySeries& gen_estimate,
                                 const HourlySeries& native_estimate);

struct CustomerEstimate {
    HourlySeries net;
    HourlySeries generation;  // internal non-positive convention
    HourlySeries native;
};

// Reads back a file produced by write_customer_estimate_csv.
CustomerEstimate load_customer_estimate_csv(const std::string& path,
                                            const std::string& customer_id);

std::string format_kwh(double v);

}  // namespace pvdisagg
