#include "pvdisagg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "pvdisagg/csv.hpp"
#include "pvdisagg/rng.hpp"

namespace pvdisagg::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct OrientationShape {
    double direction;  // -1 east, 0 south, +1 west
    double seasonal_amplitude;
    double seasonal_peak_month;
};

// The seasonal yield differs by azimuth (east arrays peak earlier in the
// year, west later, south swings least); this is also what makes the
// exemplars' monthly sums linearly independent. The east/west amplitudes
// must stay well clear of south's so that a blend of the two cannot imitate
// a south array's year profile.
OrientationShape orientation_shape(Orientation o) {
    switch (o) {
        case Orientation::east: return {-1.0, 0.55, 5.5};
        case Orientation::south: return {0.0, 0.15, 6.5};
        case Orientation::west: return {1.0, 0.55, 7.5};
        default: throw std::invalid_argument("solar orientation must be east, south or west");
    }
}

std::int64_t floor_div24(std::int64_t h) {
    return h >= 0 ? h / 24 : -((-h + 23) / 24);
}

double residential_shape(unsigned hour) {
    const double morning = 0.30 * std::exp(-0.5 * std::pow((hour + 0.5 - 7.5) / 2.0, 2));
    const double evening = 0.50 * std::exp(-0.5 * std::pow((hour + 0.5 - 19.0) / 2.5, 2));
    return 0.50 + morning + evening;
}

std::vector<MonthKey> horizon_months(const ScenarioConfig& config) {
    std::vector<MonthKey> months;
    MonthKey key{config.start_year, config.start_month};
    for (int m = 0; m < config.months; ++m) {
        months.push_back(key);
        key = next_month(key);
    }
    return months;
}

std::string padded_id(const char* prefix, int number, int width) {
    std::string digits = std::to_string(number);
    std::string out = prefix;
    for (int i = static_cast<int>(digits.size()); i < width; ++i) out += '0';
    return out + digits;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (cp_count < 0 || cg_count < 0 || cn_count < 0)
        throw std::invalid_argument("customer counts must be non-negative");
    if (months < 2) throw std::invalid_argument("horizon must cover at least 2 months");
    if (start_month < 1 || start_month > 12)
        throw std::invalid_argument("start month must lie in 1..12");
    if (load.annual_kwh <= 0.0) throw std::invalid_argument("annual kWh must be positive");
    if (load.seasonal_amplitude < 0.0 || load.seasonal_amplitude >= 1.0)
        throw std::invalid_argument("seasonal amplitude must lie in [0, 1)");
    if (load.noise < 0.0) throw std::invalid_argument("noise level must be non-negative");
    if (load.heterogeneity < 0.0)
        throw std::invalid_argument("heterogeneity must be non-negative");
    if (load.nocturnal_share <= 0.05 || load.nocturnal_share >= 0.95)
        throw std::invalid_argument("nocturnal share must lie in (0.05, 0.95)");
    if (solar.capacity_min_kw <= 0.0 || solar.capacity_max_kw < solar.capacity_min_kw)
        throw std::invalid_argument("capacity range must satisfy 0 < min <= max");
    double mix = 0.0;
    for (double p : solar.orientation_mix) {
        if (p < 0.0) throw std::invalid_argument("orientation mix entries must be non-negative");
        mix += p;
    }
    if (std::abs(mix - 1.0) > 1e-9)
        throw std::invalid_argument("orientation mix must sum to 1");
    if (solar.day_length_amplitude < 0.0 || solar.day_length_amplitude > 5.0)
        throw std::invalid_argument("day-length amplitude must lie in [0, 5] hours");
    if (solar.weather_volatility < 0.0)
        throw std::invalid_argument("weather volatility must be non-negative");
    if (zero_pv_fraction < 0.0 || zero_pv_fraction > 1.0)
        throw std::invalid_argument("zero-PV fraction must lie in [0, 1]");
    if (anomalies.scale < 0.0 || anomalies.scale >= 1.0)
        throw std::invalid_argument("anomaly scale must lie in [0, 1)");
    if (anomalies.count < 0) throw std::invalid_argument("anomaly count must be non-negative");
}

double daylight_hours(const ScenarioConfig& config, unsigned month_of_year) {
    return 12.0 + config.solar.day_length_amplitude *
                      std::cos(kTwoPi * (static_cast<double>(month_of_year) - 6.0) / 12.0);
}

bool synth_diurnal(const ScenarioConfig& config, unsigned month_of_year, unsigned hour_of_day) {
    // Open interval on both sides, matching the solar kernel's support so a
    // partition derived from exemplars reproduces these buckets exactly.
    const double half = 0.5 * daylight_hours(config, month_of_year);
    const double center = hour_of_day + 0.5;
    return center > 12.0 - half && center < 12.0 + half;
}

double weather_factor(const ScenarioConfig& config, std::int64_t absolute_day) {
    Rng rng(mix_seed(mix_seed(config.seed, fnv1a64("weather")),
                     static_cast<std::uint64_t>(absolute_day)));
    return rng.unit_lognormal(config.solar.weather_volatility);
}

HourlySeries gen_native(const ScenarioConfig& config, int index, const std::string& customer_id) {
    config.validate();
    const auto months = horizon_months(config);
    const HourStamp start = HourStamp::from_civil(config.start_year, config.start_month, 1, 0);
    const double noise = config.load.noise;
    const double sigma_hour = noise;
    const double sigma_day = 0.5 * noise;
    const double sigma_split = 0.05 * noise;

    Rng rng(mix_seed(mix_seed(config.seed, fnv1a64("native")),
                     static_cast<std::uint64_t>(index)));
    const double customer_scale = rng.unit_lognormal(config.load.heterogeneity);
    const double split_offset = rng.normal();

    std::vector<double> values;
    for (const MonthKey& month : months) {
        const double season =
            1.0 + config.load.seasonal_amplitude *
                      std::cos(kTwoPi * (static_cast<double>(month.month) - 1.0) / 12.0);
        const double budget = config.load.annual_kwh / 12.0 * season * customer_scale;
        const double ratio =
            std::clamp(config.load.nocturnal_share +
                           sigma_split * (split_offset + 0.5 * rng.normal()),
                       0.05, 0.95);
        const double target_nocturnal = ratio * budget;
        const double target_diurnal = (1.0 - ratio) * budget;

        std::vector<double> month_values;
        std::vector<bool> diurnal_mask;
        double raw_nocturnal = 0.0;
        double raw_diurnal = 0.0;
        const int days = days_in_month(month.year, month.month);
        for (int day = 0; day < days; ++day) {
            const double day_nocturnal = rng.unit_lognormal(sigma_day);
            const double day_diurnal = rng.unit_lognormal(sigma_day);
            for (unsigned h = 0; h < 24; ++h) {
                const bool diurnal = synth_diurnal(config, month.month, h);
                const double v = residential_shape(h) *
                                 (diurnal ? day_diurnal : day_nocturnal) *
                                 rng.unit_lognormal(sigma_hour);
                month_values.push_back(v);
                diurnal_mask.push_back(diurnal);
                (diurnal ? raw_diurnal : raw_nocturnal) += v;
            }
        }
        const double scale_nocturnal = target_nocturnal / raw_nocturnal;
        const double scale_diurnal = target_diurnal / raw_diurnal;
        for (std::size_t i = 0; i < month_values.size(); ++i)
            values.push_back(month_values[i] * (diurnal_mask[i] ? scale_diurnal : scale_nocturnal));
    }
    return HourlySeries(customer_id, start, std::move(values), Role::native);
}

HourlySeries gen_solar(const ScenarioConfig& config, Orientation orientation, double capacity_kw,
                       std::uint64_t salt, const std::string& customer_id) {
    config.validate();
    if (capacity_kw <= 0.0) throw std::invalid_argument("capacity must be positive");
    const OrientationShape shape = orientation_shape(orientation);

    Rng shape_rng(mix_seed(mix_seed(config.seed, fnv1a64("solar-shape")), salt));
    const double jitter = shape_rng.normal();
    const double warp = std::exp(config.solar.skew * shape.direction *
                                 (1.0 + config.solar.orientation_jitter * jitter));

    const auto months = horizon_months(config);
    const HourStamp start = HourStamp::from_civil(config.start_year, config.start_month, 1, 0);
    std::int64_t absolute_day = floor_div24(start.count());

    std::vector<double> values;
    for (const MonthKey& month : months) {
        const double daylight = daylight_hours(config, month.month);
        const double window_start = 12.0 - 0.5 * daylight;
        const double yield =
            1.0 + shape.seasonal_amplitude *
                      std::cos(kTwoPi * (static_cast<double>(month.month) -
                                         shape.seasonal_peak_month) / 12.0);
        const int days = days_in_month(month.year, month.month);
        for (int day = 0; day < days; ++day, ++absolute_day) {
            const double weather = weather_factor(config, absolute_day);
            for (unsigned h = 0; h < 24; ++h) {
                const double u = (h + 0.5 - window_start) / daylight;
                double v = 0.0;
                if (u > 0.0 && u < 1.0) {
                    const double bell = std::pow(std::sin(std::numbers::pi * std::pow(u, warp)), 1.6);
                    v = capacity_kw * weather * yield * std::max(bell, 0.03);
                }
                values.push_back(v);
            }
        }
    }
    return HourlySeries(customer_id, start, std::move(values), Role::generation);
}

std::pair<HourlySeries, std::vector<double>> compose_net(
    const HourlySeries& native, std::span<const double> weights,
    std::span<const HourlySeries> exemplars) {
    if (weights.size() != exemplars.size())
        throw std::invalid_argument("one weight per exemplar required");
    for (double w : weights)
        if (!std::isfinite(w) || w < 0.0)
            throw std::invalid_argument("weights must be finite and non-negative");
    for (const auto& e : exemplars) {
        if (e.start() != native.start() || e.size() != native.size())
            throw std::invalid_argument("exemplar not aligned with the native series");
    }
    std::vector<double> values(native.values().begin(), native.values().end());
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        for (std::size_t t = 0; t < values.size(); ++t)
            values[t] -= weights[i] * std::abs(exemplars[i].value(t));
    }
    return {HourlySeries(native.customer_id(), native.start(), std::move(values), Role::net),
            std::vector<double>(weights.begin(), weights.end())};
}

AnomalyResult inject_anomaly(const HourlySeries& exemplar, const AnomalySpec& spec) {
    std::vector<double> values(exemplar.values().begin(), exemplar.values().end());
    AnomalyResult result{exemplar, {}, {}};

    if (!spec.hours.empty()) {
        for (std::size_t hour : spec.hours) {
            if (hour >= values.size())
                throw std::invalid_argument("anomaly hour outside the series horizon");
            if (values[hour] == 0.0) {
                result.warnings.push_back("anomaly hour " + std::to_string(hour) +
                                          " has no generation; skipped");
                continue;
            }
            values[hour] *= spec.scale;
            result.positions.push_back(hour);
        }
    } else if (spec.count > 0) {
        double peak = 0.0;
        for (double v : values) peak = std::max(peak, std::abs(v));
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < values.size(); ++i)
            if (std::abs(values[i]) >= 0.5 * peak && values[i] != 0.0) candidates.push_back(i);
        int wanted = spec.count;
        if (static_cast<std::size_t>(wanted) > candidates.size()) {
            result.warnings.push_back("only " + std::to_string(candidates.size()) +
                                      " strong daytime hours available for anomalies");
            wanted = static_cast<int>(candidates.size());
        }
        Rng rng(mix_seed(spec.seed, fnv1a64(exemplar.customer_id())));
        for (int k = 0; k < wanted; ++k) {
            const std::size_t pick = rng.index(candidates.size());
            const std::size_t hour = candidates[pick];
            candidates[pick] = candidates.back();
            candidates.pop_back();
            values[hour] *= spec.scale;
            result.positions.push_back(hour);
        }
        std::sort(result.positions.begin(), result.positions.end());
    }

    result.series = exemplar.with_values(std::move(values));
    return result;
}

Scenario generate_scenario(const ScenarioConfig& config) {
    config.validate();
    if (config.cp_count > 9999 || config.cn_count > 9999 || config.cg_count > 99)
        throw std::invalid_argument("customer counts exceed the id scheme");
    for (int idx : config.anomalies.exemplar_indices)
        if (idx < 0 || idx >= config.cg_count)
            throw std::invalid_argument("anomaly exemplar index out of range");

    Scenario s;
    s.config = config;
    s.start = HourStamp::from_civil(config.start_year, config.start_month, 1, 0);

    for (int i = 0; i < config.cp_count; ++i)
        s.cp_native.push_back(gen_native(config, i, padded_id("CP", i + 1, 4)));

    Rng cap_rng(mix_seed(config.seed, fnv1a64("exemplar-cap")));
    const Orientation cycle[3] = {Orientation::east, Orientation::south, Orientation::west};
    for (int i = 0; i < config.cg_count; ++i) {
        const Orientation o = cycle[i % 3];
        const double cap = cap_rng.uniform(config.solar.capacity_min_kw, config.solar.capacity_max_kw);
        s.exemplar_orientations.push_back(o);
        s.exemplar_capacities.push_back(cap);
        s.exemplars_clean.push_back(
            gen_solar(config, o, cap, static_cast<std::uint64_t>(i), padded_id("E", i + 1, 2)));
    }
    s.exemplars_observed = s.exemplars_clean;
    s.anomaly_positions.assign(static_cast<std::size_t>(config.cg_count), {});
    for (int idx : config.anomalies.exemplar_indices) {
        AnomalySpec spec = config.anomalies;
        spec.seed = mix_seed(mix_seed(config.seed ^ config.anomalies.seed, fnv1a64("anomaly")),
                             static_cast<std::uint64_t>(idx));
        AnomalyResult res = inject_anomaly(s.exemplars_observed[static_cast<std::size_t>(idx)], spec);
        s.exemplars_observed[static_cast<std::size_t>(idx)] = std::move(res.series);
        s.anomaly_positions[static_cast<std::size_t>(idx)] = std::move(res.positions);
        for (auto& w : res.warnings)
            s.warnings.push_back(padded_id("E", idx + 1, 2) + ": " + w);
    }

    const int zero_pv =
        static_cast<int>(std::lround(config.zero_pv_fraction * config.cn_count));
    for (int j = 0; j < config.cn_count; ++j) {
        const std::string id = padded_id("CN", j + 1, 4);
        HourlySeries native = gen_native(config, config.cp_count + j, id);
        Rng rng(mix_seed(mix_seed(config.seed, fnv1a64("cn")), static_cast<std::uint64_t>(j)));
        const bool has_pv = j < config.cn_count - zero_pv;

        CustomerTruth truth;
        truth.customer_id = id;
        truth.omega.assign(static_cast<std::size_t>(config.cg_count), 0.0);

        if (config.composition == ScenarioConfig::Composition::exact_mix && config.cg_count > 0) {
            if (has_pv) {
                const bool two = config.cg_count >= 2 && rng.uniform() < 0.3;
                if (two) {
                    const std::size_t e1 = rng.index(static_cast<std::size_t>(config.cg_count));
                    const std::size_t e2 =
                        (e1 + 1 + rng.index(static_cast<std::size_t>(config.cg_count - 1))) %
                        static_cast<std::size_t>(config.cg_count);
                    truth.omega[e1] = rng.uniform(0.3, 0.9);
                    truth.omega[e2] = rng.uniform(0.3, 0.9);
                } else {
                    const std::size_t e = rng.index(static_cast<std::size_t>(config.cg_count));
                    truth.omega[e] = rng.uniform(0.4, 1.5);
                }
            }
            auto [net, omega] = compose_net(native, truth.omega, s.exemplars_clean);
            std::vector<double> gen(native.size(), 0.0);
            for (std::size_t e = 0; e < truth.omega.size(); ++e)
                for (std::size_t t = 0; t < gen.size(); ++t)
                    gen[t] += truth.omega[e] * s.exemplars_clean[e].value(t);
            double best = 0.0;
            for (std::size_t e = 0; e < truth.omega.size(); ++e) {
                if (truth.omega[e] > best) {
                    best = truth.omega[e];
                    truth.orientation = s.exemplar_orientations[e];
                }
                truth.capacity_kw += truth.omega[e] * s.exemplar_capacities[e];
            }
            s.cn_net.push_back(std::move(net));
            s.cn_generation_actual.push_back(
                HourlySeries(id, s.start, std::move(gen), Role::generation));
        } else {
            std::vector<double> net(native.values().begin(), native.values().end());
            std::vector<double> gen(native.size(), 0.0);
            if (has_pv) {
                const double u = rng.uniform();
                const auto& mix = config.solar.orientation_mix;
                truth.orientation = u < mix[0]                ? Orientation::east
                                    : u < mix[0] + mix[1] ? Orientation::south
                                                          : Orientation::west;
                truth.capacity_kw =
                    rng.uniform(config.solar.capacity_min_kw, config.solar.capacity_max_kw);
                HourlySeries own =
                    gen_solar(config, truth.orientation, truth.capacity_kw, fnv1a64(id), id);
                for (std::size_t t = 0; t < net.size(); ++t) {
                    net[t] -= own.value(t);
                    gen[t] = own.value(t);
                }
                for (std::size_t e = 0; e < s.exemplar_orientations.size(); ++e) {
                    if (s.exemplar_orientations[e] == truth.orientation) {
                        truth.omega[e] = truth.capacity_kw / s.exemplar_capacities[e];
                        break;
                    }
                }
            }
            s.cn_net.push_back(HourlySeries(id, s.start, std::move(net), Role::net));
            s.cn_generation_actual.push_back(
                HourlySeries(id, s.start, std::move(gen), Role::generation));
        }
        s.cn_native_actual.push_back(std::move(native));
        s.truths.push_back(std::move(truth));
    }
    return s;
}

void write_scenario(const Scenario& s, const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    const auto path = [&](const char* name) { return (fs::path(directory) / name).string(); };

    write_series_csv(path("cp_native.csv"), s.cp_native, false);
    write_series_csv(path("exemplars.csv"), s.exemplars_observed, false);
    write_series_csv(path("cn_net.csv"), s.cn_net, false);
    write_series_csv(path("cn_native_actual.csv"), s.cn_native_actual, false);
    write_series_csv(path("cn_gen_actual.csv"), s.cn_generation_actual, false);

    nlohmann::json truth;
    truth["composition"] =
        s.config.composition == ScenarioConfig::Composition::exact_mix ? "exact_mix" : "own_pv";
    auto customers = nlohmann::json::array();
    for (const auto& t : s.truths) {
        customers.push_back({{"customer_id", t.customer_id},
                             {"omega", t.omega},
                             {"orientation", to_string(t.orientation)},
                             {"capacity_kw", t.capacity_kw}});
    }
    truth["customers"] = std::move(customers);
    auto anomalies = nlohmann::json::array();
    for (std::size_t e = 0; e < s.anomaly_positions.size(); ++e) {
        if (s.anomaly_positions[e].empty()) continue;
        anomalies.push_back({{"exemplar_id", s.exemplars_observed[e].customer_id()},
                             {"exemplar_index", e},
                             {"positions", s.anomaly_positions[e]}});
    }
    truth["anomalies"] = std::move(anomalies);
    truth["warnings"] = s.warnings;

    std::ofstream out(path("truth.json"));
    if (!out) throw std::runtime_error("cannot write " + path("truth.json"));
    out << truth.dump(2) << '\n';
}

}  // namespace pvdisagg::synth
