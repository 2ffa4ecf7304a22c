#include "pvdisagg/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pvdisagg/errors.hpp"

namespace pvdisagg {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

const char* to_string(Role role) {
    switch (role) {
        case Role::native: return "native";
        case Role::net: return "net";
        case Role::generation: return "generation";
    }
    return "?";
}

std::optional<Role> role_from_string(std::string_view text) {
    if (text == "native") return Role::native;
    if (text == "net") return Role::net;
    if (text == "generation") return Role::generation;
    return std::nullopt;
}

const char* to_string(Orientation o) {
    switch (o) {
        case Orientation::east: return "east";
        case Orientation::south: return "south";
        case Orientation::west: return "west";
        case Orientation::unknown: return "unknown";
    }
    return "?";
}

std::optional<Orientation> orientation_from_string(std::string_view text) {
    if (text == "east") return Orientation::east;
    if (text == "south") return Orientation::south;
    if (text == "west") return Orientation::west;
    if (text == "unknown") return Orientation::unknown;
    return std::nullopt;
}

MonthKey next_month(MonthKey key) {
    if (key.month == 12) return {key.year + 1, 1};
    return {key.year, key.month + 1};
}

int days_in_month(int year, unsigned month) {
    using namespace std::chrono;
    const year_month_day_last last{std::chrono::year{year} / std::chrono::month{month} / std::chrono::last};
    return static_cast<int>(static_cast<unsigned>(last.day()));
}

HourStamp HourStamp::from_civil(int year, unsigned month, unsigned day, unsigned hour) {
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
    if (hour > 23) throw std::invalid_argument("hour out of range");
    const sys_days sd{ymd};
    return HourStamp(static_cast<std::int64_t>(sd.time_since_epoch().count()) * 24 + hour);
}

std::optional<HourStamp> HourStamp::parse(std::string_view iso) {
    // YYYY-MM-DD[T ]HH:MM[:SS]
    auto read = [](std::string_view s, std::size_t pos, std::size_t len, int& out) -> bool {
        if (pos + len > s.size()) return false;
        auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
        return ec == std::errc{} && p == s.data() + pos + len;
    };
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    if (iso.size() < 16) return std::nullopt;
    if (!read(iso, 0, 4, y) || iso[4] != '-' || !read(iso, 5, 2, mo) || iso[7] != '-' ||
        !read(iso, 8, 2, d))
        return std::nullopt;
    if (iso[10] != 'T' && iso[10] != ' ') return std::nullopt;
    if (!read(iso, 11, 2, h) || iso[13] != ':' || !read(iso, 14, 2, mi)) return std::nullopt;
    if (iso.size() > 16) {
        if (iso.size() != 19 || iso[16] != ':' || !read(iso, 17, 2, se)) return std::nullopt;
    }
    if (mo < 1 || mo > 12 || d < 1 || h > 23 || mi != 0 || se != 0) return std::nullopt;
    if (d > days_in_month(y, static_cast<unsigned>(mo))) return std::nullopt;
    return from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), static_cast<unsigned>(h));
}

unsigned HourStamp::hour_of_day() const {
    const std::int64_t h = hours_ - floor_div(hours_, 24) * 24;
    return static_cast<unsigned>(h);
}

MonthKey HourStamp::month() const {
    using namespace std::chrono;
    const sys_days sd{days{floor_div(hours_, 24)}};
    const year_month_day ymd{sd};
    return {static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month())};
}

std::string HourStamp::to_string() const {
    using namespace std::chrono;
    const sys_days sd{days{floor_div(hours_, 24)}};
    const year_month_day ymd{sd};
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02u:00:00", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  hour_of_day());
    return buf;
}

HourlySeries::HourlySeries(std::string customer_id, HourStamp start, std::vector<double> values,
                           Role role)
    : customer_id_(std::move(customer_id)), start_(start), values_(std::move(values)), role_(role) {
    if (values_.empty()) throw IngestError("series '" + customer_id_ + "' has no readings");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw IngestError("series '" + customer_id_ + "' has a non-finite reading at " +
                              stamp(i).to_string());
        }
    }
}

HourlySeries HourlySeries::with_values(std::vector<double> values, std::optional<Role> role) const {
    return HourlySeries(customer_id_, start_, std::move(values), role.value_or(role_));
}

DayNightPartition::DayNightPartition(std::array<std::uint32_t, 12> diurnal_masks,
                                     std::array<bool, 12> defined)
    : diurnal_(diurnal_masks), defined_(defined) {
    for (unsigned m = 0; m < 12; ++m) {
        if (defined_[m] && (diurnal_[m] & 0x00ffffffu) == 0) {
            throw std::invalid_argument("partition has an empty diurnal set for month " +
                                        std::to_string(m + 1));
        }
    }
}

DayNightPartition DayNightPartition::fixed_window(unsigned day_start, unsigned day_end) {
    std::array<std::array<unsigned, 2>, 12> windows{};
    windows.fill({day_start, day_end});
    return fixed_windows(windows);
}

DayNightPartition DayNightPartition::fixed_windows(
    const std::array<std::array<unsigned, 2>, 12>& windows) {
    std::array<std::uint32_t, 12> masks{};
    std::array<bool, 12> defined{};
    for (unsigned m = 0; m < 12; ++m) {
        const auto [lo, hi] = windows[m];
        if (lo >= hi || hi > 24) throw std::invalid_argument("fixed window must satisfy 0 <= start < end <= 24");
        for (unsigned h = lo; h < hi; ++h) masks[m] |= (1u << h);
        defined[m] = true;
    }
    return DayNightPartition(masks, defined);
}

bool DayNightPartition::defined_for(unsigned month_of_year) const {
    if (month_of_year < 1 || month_of_year > 12) return false;
    return defined_[month_of_year - 1];
}

bool DayNightPartition::is_diurnal(unsigned month_of_year, unsigned hour_of_day) const {
    if (month_of_year < 1 || month_of_year > 12 || hour_of_day > 23)
        throw std::invalid_argument("month/hour out of range");
    if (!defined_[month_of_year - 1])
        throw std::invalid_argument("partition undefined for month " + std::to_string(month_of_year));
    return (diurnal_[month_of_year - 1] >> hour_of_day) & 1u;
}

int DayNightPartition::diurnal_count(unsigned month_of_year) const {
    int n = 0;
    for (unsigned h = 0; h < 24; ++h)
        if (is_diurnal(month_of_year, h)) ++n;
    return n;
}

std::vector<unsigned> DayNightPartition::diurnal_hours(unsigned month_of_year) const {
    std::vector<unsigned> hours;
    for (unsigned h = 0; h < 24; ++h)
        if (is_diurnal(month_of_year, h)) hours.push_back(h);
    return hours;
}

MonthlyAggregate aggregate_monthly(const HourlySeries& series, const DayNightPartition& partition) {
    MonthlyAggregate out;
    MonthKey key = series.start().month();
    const MonthKey last = (series.end() + (-1)).month();
    while (key <= last) {
        const HourStamp month_start = HourStamp::from_civil(key.year, key.month, 1, 0);
        const std::int64_t len = static_cast<std::int64_t>(days_in_month(key.year, key.month)) * 24;
        if (series.start() <= month_start && month_start + len <= series.end()) {
            if (!partition.defined_for(key.month)) {
                throw IngestError("partition undefined for month " + std::to_string(key.month) +
                                  " needed by series '" + series.customer_id() + "'");
            }
            double nocturnal = 0.0, diurnal = 0.0;
            const std::size_t base = static_cast<std::size_t>(month_start - series.start());
            for (std::int64_t t = 0; t < len; ++t) {
                const double v = series.value(base + static_cast<std::size_t>(t));
                const unsigned h = static_cast<unsigned>(t % 24);
                if (partition.is_diurnal(key.month, h))
                    diurnal += v;
                else
                    nocturnal += v;
            }
            MonthlyPair pair;
            pair.customer_id = series.customer_id();
            pair.index = static_cast<int>(out.pairs.size()) + 1;
            pair.month = key;
            pair.nocturnal = nocturnal;
            pair.diurnal = diurnal;
            out.pairs.push_back(std::move(pair));
        } else {
            out.dropped_partial.push_back(key);
        }
        key = next_month(key);
    }
    if (out.pairs.empty()) {
        throw IngestError("no complete months in series '" + series.customer_id() + "' (" +
                          series.start().to_string() + " .. " + series.end().to_string() + ")");
    }
    return out;
}

DayNightPartition derive_partition(std::span<const HourlySeries> exemplars,
                                   double threshold_fraction) {
    if (exemplars.empty()) throw std::invalid_argument("derive_partition needs at least one exemplar");
    if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
        throw std::invalid_argument("threshold_fraction must lie in (0, 1)");
    const HourStamp start = exemplars[0].start();
    const std::size_t n = exemplars[0].size();
    for (const auto& e : exemplars) {
        if (e.start() != start || e.size() != n)
            throw IngestError("exemplars must share start and length to derive a partition");
    }

    std::array<std::array<double, 24>, 12> sum{};
    std::array<std::array<std::int64_t, 24>, 12> count{};
    for (std::size_t t = 0; t < n; ++t) {
        double total = 0.0;
        for (const auto& e : exemplars) total += std::abs(e.value(t));
        const HourStamp at = start + static_cast<std::int64_t>(t);
        const unsigned m = at.month().month - 1;
        const unsigned h = at.hour_of_day();
        sum[m][h] += total;
        ++count[m][h];
    }

    std::array<std::uint32_t, 12> masks{};
    std::array<bool, 12> defined{};
    for (unsigned m = 0; m < 12; ++m) {
        bool touched = false;
        std::array<double, 24> avg{};
        double peak = 0.0;
        for (unsigned h = 0; h < 24; ++h) {
            if (count[m][h] == 0) continue;
            touched = true;
            avg[h] = sum[m][h] / static_cast<double>(count[m][h]);
            peak = std::max(peak, avg[h]);
        }
        if (!touched) continue;
        if (peak == 0.0) {
            throw IngestError("cannot derive partition for month " + std::to_string(m + 1) +
                              ": exemplar generation is all zero; supply fixed windows");
        }
        for (unsigned h = 0; h < 24; ++h)
            if (avg[h] > threshold_fraction * peak) masks[m] |= (1u << h);
        defined[m] = true;
    }
    return DayNightPartition(masks, defined);
}

HourlySeries negate_generation(const HourlySeries& series) {
    if (series.role() != Role::generation)
        throw std::invalid_argument("negate_generation expects a generation series");
    std::vector<double> flipped(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double v = series.value(i);
        if (v < 0.0) {
            throw IngestError("generation series '" + series.customer_id() +
                              "' has a negative raw reading at " + series.stamp(i).to_string() +
                              "; sign convention is ambiguous");
        }
        flipped[i] = v == 0.0 ? 0.0 : -v;
    }
    return series.with_values(std::move(flipped));
}

}  // namespace pvdisagg
