#include "pvdisagg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "pvdisagg/errors.hpp"

namespace pvdisagg::metrics {
namespace {

void check_aligned(const HourlySeries& actual, const HourlySeries& estimate) {
    if (actual.size() != estimate.size() || actual.start() != estimate.start())
        throw std::invalid_argument("actual and estimate series must cover the same hours");
}

std::size_t count_true(const std::vector<bool>& mask) {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::optional<double> pearson(const std::vector<std::pair<double, double>>& pairs) {
    const std::size_t n = pairs.size();
    if (n < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pairs) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& [x, y] : pairs) {
        const double dx = x - mx;
        const double dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

struct PairSets {
    std::vector<std::pair<double, double>> hourly;
    std::vector<std::pair<double, double>> daily;
    std::vector<std::pair<double, double>> weekly;
    std::vector<std::pair<double, double>> monthly;
};

std::int64_t floor_div24(std::int64_t h) {
    return h >= 0 ? h / 24 : -((-h + 23) / 24);
}

// Nocturnal/diurnal sums at each timescale for one series. Days and weeks use
// only fully covered calendar days; months come from the complete-month
// aggregation. The hourly pairing matches every diurnal hour value with the
// same day's nocturnal sum spread evenly over that day's diurnal hours.
void collect_pairs(const HourlySeries& series, const DayNightPartition& partition,
                   PairSets& out) {
    if (series.size() < 8 * 7 * 24)
        throw std::invalid_argument("timescale correlation needs at least 8 weeks of data");

    const std::int64_t start = series.start().count();
    const std::int64_t end = series.end().count();
    std::int64_t first_day = floor_div24(start);
    if (first_day * 24 < start) ++first_day;
    const std::int64_t day_count = floor_div24(end) - first_day;

    std::vector<std::pair<double, double>> day_sums;
    day_sums.reserve(static_cast<std::size_t>(std::max<std::int64_t>(day_count, 0)));
    for (std::int64_t d = 0; d < day_count; ++d) {
        const std::int64_t day_start = (first_day + d) * 24;
        const unsigned month = HourStamp(day_start).month().month;
        double noct = 0.0;
        double diur = 0.0;
        int diur_hours = 0;
        for (unsigned h = 0; h < 24; ++h) {
            const auto idx = static_cast<std::size_t>(day_start + h - start);
            const double v = series.value(idx);
            if (partition.is_diurnal(month, h)) {
                diur += v;
                ++diur_hours;
            } else {
                noct += v;
            }
        }
        day_sums.emplace_back(noct, diur);
        out.daily.emplace_back(noct, diur);
        if (diur_hours > 0) {
            const double share = noct / diur_hours;
            for (unsigned h = 0; h < 24; ++h) {
                if (!partition.is_diurnal(month, h)) continue;
                const auto idx = static_cast<std::size_t>(day_start + h - start);
                out.hourly.emplace_back(share, series.value(idx));
            }
        }
    }

    for (std::size_t w = 0; w + 7 <= day_sums.size(); w += 7) {
        double noct = 0.0;
        double diur = 0.0;
        for (std::size_t d = w; d < w + 7; ++d) {
            noct += day_sums[d].first;
            diur += day_sums[d].second;
        }
        out.weekly.emplace_back(noct, diur);
    }

    try {
        const MonthlyAggregate agg = aggregate_monthly(series, partition);
        for (const auto& p : agg.pairs) out.monthly.emplace_back(p.nocturnal, p.diurnal);
    } catch (const IngestError&) {
        // Horizon without a complete month: the monthly bucket stays empty.
    }
}

TimescaleCorrelations correlations_from(const PairSets& sets) {
    TimescaleCorrelations c;
    c.hourly = pearson(sets.hourly);
    c.daily = pearson(sets.daily);
    c.weekly = pearson(sets.weekly);
    c.monthly = pearson(sets.monthly);
    return c;
}

std::optional<double> mean_of(const std::vector<double>& values) {
    if (values.empty()) return std::nullopt;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

nlohmann::json cdf_json(const std::vector<double>& probabilities,
                        const std::vector<double>& cdf) {
    auto arr = nlohmann::json::array();
    for (std::size_t i = 0; i < cdf.size(); ++i)
        arr.push_back({{"p", probabilities[i]}, {"value", cdf[i]}});
    return arr;
}

nlohmann::json opt_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

}  // namespace

std::vector<bool> qualifying_hours(const HourlySeries& actual) {
    std::vector<bool> mask(actual.size(), true);
    if (actual.role() == Role::generation) {
        for (std::size_t i = 0; i < actual.size(); ++i) mask[i] = actual.value(i) != 0.0;
    }
    return mask;
}

double mape(const HourlySeries& actual, const HourlySeries& estimate) {
    return mape(actual, estimate, qualifying_hours(actual));
}

double mape(const HourlySeries& actual, const HourlySeries& estimate,
            const std::vector<bool>& qualify) {
    check_aligned(actual, estimate);
    if (qualify.size() != actual.size())
        throw std::invalid_argument("qualifying mask length mismatch");
    if (count_true(qualify) == 0) throw std::invalid_argument("empty qualifying set");
    double abs_err = 0.0;
    double abs_actual = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!qualify[i]) continue;
        abs_err += std::abs(estimate.value(i) - actual.value(i));
        abs_actual += std::abs(actual.value(i));
    }
    if (abs_actual == 0.0) throw std::domain_error("undefined MAPE: actual is zero everywhere");
    return 100.0 * abs_err / abs_actual;
}

double rmse(const HourlySeries& actual, const HourlySeries& estimate) {
    return rmse(actual, estimate, qualifying_hours(actual));
}

double rmse(const HourlySeries& actual, const HourlySeries& estimate,
            const std::vector<bool>& qualify) {
    check_aligned(actual, estimate);
    if (qualify.size() != actual.size())
        throw std::invalid_argument("qualifying mask length mismatch");
    const std::size_t n = count_true(qualify);
    if (n == 0) throw std::invalid_argument("empty qualifying set");
    double sq = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!qualify[i]) continue;
        const double d = estimate.value(i) - actual.value(i);
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(n));
}

std::vector<double> empirical_cdf(std::vector<double> values,
                                  std::span<const double> probabilities) {
    if (values.empty()) throw std::invalid_argument("empirical_cdf needs values");
    for (double p : probabilities)
        if (!(p > 0.0 && p <= 1.0))
            throw std::invalid_argument("probabilities must lie in (0, 1]");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    std::vector<double> out;
    out.reserve(probabilities.size());
    for (double p : probabilities) {
        std::size_t rank = 1;
        while (static_cast<double>(rank) / n < p) ++rank;
        out.push_back(values[rank - 1]);
    }
    return out;
}

TimescaleCorrelations timescale_correlation(const HourlySeries& series,
                                            const DayNightPartition& partition) {
    PairSets sets;
    collect_pairs(series, partition, sets);
    return correlations_from(sets);
}

TimescaleCorrelations timescale_correlation_population(std::span<const HourlySeries> series,
                                                       const DayNightPartition& partition) {
    if (series.empty()) throw std::invalid_argument("population correlation needs series");
    PairSets sets;
    for (const auto& s : series) collect_pairs(s, partition, sets);
    return correlations_from(sets);
}

ErrorReport build_error_report(std::span<const CustomerSeriesSet> customers) {
    ErrorReport report;
    report.probabilities = {0.2, 0.4, 0.6, 0.8, 1.0};

    std::vector<double> gm, gr, nm, nr;
    for (const auto& c : customers) {
        CustomerError row;
        row.customer_id = c.actual_generation.customer_id();
        const std::vector<bool> qualify = qualifying_hours(c.actual_generation);
        try {
            row.generation_mape = mape(c.actual_generation, c.estimated_generation, qualify);
            row.generation_rmse = rmse(c.actual_generation, c.estimated_generation, qualify);
        } catch (const std::exception&) {
        }
        try {
            row.native_mape = mape(c.actual_native, c.estimated_native, qualify);
            row.native_rmse = rmse(c.actual_native, c.estimated_native, qualify);
        } catch (const std::exception&) {
        }
        if (row.generation_mape) gm.push_back(*row.generation_mape);
        if (row.generation_rmse) gr.push_back(*row.generation_rmse);
        if (row.native_mape) nm.push_back(*row.native_mape);
        if (row.native_rmse) nr.push_back(*row.native_rmse);
        report.customers.push_back(std::move(row));
    }
    std::sort(report.customers.begin(), report.customers.end(),
              [](const CustomerError& a, const CustomerError& b) {
                  return a.customer_id < b.customer_id;
              });

    if (!gm.empty()) report.generation_mape_cdf = empirical_cdf(gm, report.probabilities);
    if (!gr.empty()) report.generation_rmse_cdf = empirical_cdf(gr, report.probabilities);
    if (!nm.empty()) report.native_mape_cdf = empirical_cdf(nm, report.probabilities);
    if (!nr.empty()) report.native_rmse_cdf = empirical_cdf(nr, report.probabilities);
    report.mean_generation_mape = mean_of(gm);
    report.mean_generation_rmse = mean_of(gr);
    report.mean_native_mape = mean_of(nm);
    report.mean_native_rmse = mean_of(nr);
    return report;
}

nlohmann::json ErrorReport::to_json() const {
    nlohmann::json j;
    auto rows = nlohmann::json::array();
    for (const auto& c : customers) {
        rows.push_back({{"customer_id", c.customer_id},
                        {"generation_mape", opt_json(c.generation_mape)},
                        {"generation_rmse", opt_json(c.generation_rmse)},
                        {"native_mape", opt_json(c.native_mape)},
                        {"native_rmse", opt_json(c.native_rmse)}});
    }
    j["customers"] = std::move(rows);
    j["cdf"] = {{"generation_mape", cdf_json(probabilities, generation_mape_cdf)},
                {"generation_rmse", cdf_json(probabilities, generation_rmse_cdf)},
                {"native_mape", cdf_json(probabilities, native_mape_cdf)},
                {"native_rmse", cdf_json(probabilities, native_rmse_cdf)}};
    j["mean"] = {{"generation_mape", opt_json(mean_generation_mape)},
                 {"generation_rmse", opt_json(mean_generation_rmse)},
                 {"native_mape", opt_json(mean_native_mape)},
                 {"native_rmse", opt_json(mean_native_rmse)}};
    j["native_qualifying_set"] =
        shared_qualifying_set ? "generation_nonzero_hours" : "all_hours";
    return j;
}

void write_customer_metrics_csv(const ErrorReport& report, std::ostream& out) {
    out << "customer_id,generation_mape,generation_rmse,native_mape,native_rmse\n";
    char buf[64];
    auto field = [&](const std::optional<double>& v) -> std::string {
        if (!v) return "";
        std::snprintf(buf, sizeof(buf), "%.12g", *v);
        return buf;
    };
    for (const auto& c : report.customers) {
        out << c.customer_id << ',' << field(c.generation_mape) << ','
            << field(c.generation_rmse) << ',' << field(c.native_mape) << ','
            << field(c.native_rmse) << '\n';
    }
}

}  // namespace pvdisagg::metrics
