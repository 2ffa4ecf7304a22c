#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pvdisagg {

enum class Role { native, net, generation };

const char* to_string(Role role);
std::optional<Role> role_from_string(std::string_view text);

enum class Orientation { east, south, west, unknown };

const char* to_string(Orientation o);
std::optional<Orientation> orientation_from_string(std::string_view text);

// Calendar (year, month) pair, month in 1..12.
struct MonthKey {
    int year = 0;
    unsigned month = 1;
    auto operator<=>(const MonthKey&) const = default;
};

MonthKey next_month(MonthKey key);
int days_in_month(int year, unsigned month);

// Whole hours since 1970-01-01T00:00 on the series' local clock. No time
// zone handling beyond the hour labels themselves.
class HourStamp {
public:
    HourStamp() = default;
    explicit HourStamp(std::int64_t hours_since_epoch) : hours_(hours_since_epoch) {}

    static HourStamp from_civil(int year, unsigned month, unsigned day, unsigned hour);
    // Accepts "YYYY-MM-DDTHH:MM[:SS]" with 'T' or ' ' as the separator;
    // minutes and seconds must be zero.
    static std::optional<HourStamp> parse(std::string_view iso);

    std::int64_t count() const { return hours_; }
    unsigned hour_of_day() const;
    MonthKey month() const;
    std::string to_string() const;  // YYYY-MM-DDTHH:00:00

    auto operator<=>(const HourStamp&) const = default;
    HourStamp operator+(std::int64_t h) const { return HourStamp(hours_ + h); }
    std::int64_t operator-(HourStamp other) const { return hours_ - other.hours_; }

private:
    std::int64_t hours_ = 0;
};

// One customer's contiguous hourly energy readings. Values are kWh per hour.
// Generation series are kept non-positive internally; meter-convention
// (positive) generation is negated exactly once at ingestion.
class HourlySeries {
public:
    HourlySeries(std::string customer_id, HourStamp start, std::vector<double> values, Role role);

    const std::string& customer_id() const { return customer_id_; }
    HourStamp start() const { return start_; }
    HourStamp end() const { return start_ + static_cast<std::int64_t>(values_.size()); }
    Role role() const { return role_; }
    std::size_t size() const { return values_.size(); }
    double value(std::size_t i) const { return values_[i]; }
    std::span<const double> values() const { return values_; }
    HourStamp stamp(std::size_t i) const { return start_ + static_cast<std::int64_t>(i); }

    HourlySeries with_values(std::vector<double> values, std::optional<Role> role = std::nullopt) const;

private:
    std::string customer_id_;
    HourStamp start_;
    std::vector<double> values_;
    Role role_;
};

// Assigns every hour-of-day of every month-of-year to day or night. Months
// may be left undefined when the deriving horizon never touches them; the
// aggregation fails loudly if it hits an undefined month.
class DayNightPartition {
public:
    static DayNightPartition fixed_window(unsigned day_start, unsigned day_end);
    static DayNightPartition fixed_windows(const std::array<std::array<unsigned, 2>, 12>& windows);
    DayNightPartition(std::array<std::uint32_t, 12> diurnal_masks, std::array<bool, 12> defined);

    bool defined_for(unsigned month_of_year) const;
    bool is_diurnal(unsigned month_of_year, unsigned hour_of_day) const;
    int diurnal_count(unsigned month_of_year) const;
    std::vector<unsigned> diurnal_hours(unsigned month_of_year) const;

    bool operator==(const DayNightPartition&) const = default;

private:
    std::array<std::uint32_t, 12> diurnal_;  // bit h set = hour h is diurnal
    std::array<bool, 12> defined_;
};

struct MonthlyPair {
    std::string customer_id;
    int index = 0;  // 1-based position among the complete months
    MonthKey month;
    double nocturnal = 0.0;  // kWh
    double diurnal = 0.0;    // kWh
};

struct MonthlyAggregate {
    std::vector<MonthlyPair> pairs;
    std::vector<MonthKey> dropped_partial;  // months touched but not fully covered
};

// Sums a series into per-month (nocturnal, diurnal) kWh pairs. Only complete
// calendar months are kept; partial edge months are reported in
// dropped_partial. Throws IngestError when no complete month exists.
MonthlyAggregate aggregate_monthly(const HourlySeries& series, const DayNightPartition& partition);

// Derives the day/night split from exemplar generation: an hour-of-day is
// diurnal for a month when its month-averaged total generation magnitude
// exceeds threshold_fraction of that month's peak hour. All exemplars must
// share start and length.
DayNightPartition derive_partition(std::span<const HourlySeries> exemplars, double threshold_fraction);

// Flips a raw meter-convention generation series (values >= 0) to the
// internal non-positive convention. Apply exactly once; negative inputs are
// rejected as sign-ambiguous.
HourlySeries negate_generation(const HourlySeries& series);

}  // namespace pvdisagg
