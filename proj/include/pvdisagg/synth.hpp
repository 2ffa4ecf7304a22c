#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pvdisagg/timeseries.hpp"

namespace pvdisagg::synth {

struct LoadParams {
    double annual_kwh = 9000.0;        // population-average annual energy
    double seasonal_amplitude = 0.25;  // winter/summer swing of the monthly budget
    double noise = 0.3;                // master noise knob; 0 = fully deterministic shape
    double heterogeneity = 0.35;       // lognormal sigma of the per-customer scale
    double nocturnal_share = 0.42;     // base nocturnal fraction of the monthly budget
};

struct SolarParams {
    double capacity_min_kw = 3.0;
    double capacity_max_kw = 8.0;
    // Sampling probabilities for east/south/west when customers own their PV.
    std::array<double, 3> orientation_mix = {0.25, 0.5, 0.25};
    double skew = 0.35;                // peak shift magnitude for east/west arrays
    double day_length_amplitude = 3.0; // summer-minus-mean daylight hours
    double weather_volatility = 0.25;  // sigma of the shared day-level factor
    double orientation_jitter = 0.05;  // per-PV variation of the skew warp
};

// Exemplar failure hours: `count` seeded picks among strong daytime hours, or
// the explicit `hours` list; affected values are multiplied by `scale`.
struct AnomalySpec {
    int count = 0;
    std::vector<std::size_t> hours;
    double scale = 0.0;
    std::uint64_t seed = 0;
    std::vector<int> exemplar_indices;
};

struct ScenarioConfig {
    int cp_count = 120;  // customers without PV
    int cg_count = 3;    // customers with metered PV (the exemplars)
    int cn_count = 60;   // customers with net metering only
    int months = 24;
    int start_year = 2022;
    unsigned start_month = 1;
    std::uint64_t seed = 1;
    LoadParams load;
    SolarParams solar;
    AnomalySpec anomalies;
    // exact_mix nets are composed from the exemplars themselves with known
    // weights; own_pv customers get an independent array whose best exemplar
    // representation is only approximate.
    enum class Composition { exact_mix, own_pv };
    Composition composition = Composition::own_pv;
    double zero_pv_fraction = 0.0;  // trailing share of C_N customers without PV

    void validate() const;
};

// Daylight window the generator itself uses for a calendar month: length in
// hours, centered on hour 12. Solar output is zero outside it.
double daylight_hours(const ScenarioConfig& config, unsigned month_of_year);
bool synth_diurnal(const ScenarioConfig& config, unsigned month_of_year, unsigned hour_of_day);

// Shared day-level weather factor (mean-1 lognormal), identical for every PV
// in the scenario.
double weather_factor(const ScenarioConfig& config, std::int64_t absolute_day);

// Native demand for customer `index` (index space shared across classes).
// Monthly nocturnal/diurnal energies hit their budgets exactly; noise lives
// at the hourly and daily level plus a small monthly jitter of the split.
HourlySeries gen_native(const ScenarioConfig& config, int index, const std::string& customer_id);

// Rooftop PV output in raw positive meter convention. `salt` feeds the
// per-array shape jitter stream.
HourlySeries gen_solar(const ScenarioConfig& config, Orientation orientation, double capacity_kw,
                       std::uint64_t salt, const std::string& customer_id);

// net = native − Σ_i weights_i · exemplar_i, exemplars in raw positive
// convention. Echoes the ground-truth weights.
std::pair<HourlySeries, std::vector<double>> compose_net(
    const HourlySeries& native, std::span<const double> weights,
    std::span<const HourlySeries> exemplars);

struct AnomalyResult {
    HourlySeries series;
    std::vector<std::size_t> positions;
    std::vector<std::string> warnings;
};

AnomalyResult inject_anomaly(const HourlySeries& exemplar, const AnomalySpec& spec);

struct CustomerTruth {
    std::string customer_id;
    std::vector<double> omega;  // one weight per exemplar
    Orientation orientation = Orientation::unknown;
    double capacity_kw = 0.0;
};

struct Scenario {
    ScenarioConfig config;
    HourStamp start;
    std::vector<HourlySeries> cp_native;
    std::vector<HourlySeries> exemplars_clean;     // raw positive
    std::vector<HourlySeries> exemplars_observed;  // clean plus injected anomalies
    std::vector<Orientation> exemplar_orientations;
    std::vector<double> exemplar_capacities;
    std::vector<HourlySeries> cn_net;
    std::vector<HourlySeries> cn_native_actual;
    std::vector<HourlySeries> cn_generation_actual;  // raw positive
    std::vector<CustomerTruth> truths;
    std::vector<std::vector<std::size_t>> anomaly_positions;  // per exemplar
    std::vector<std::string> warnings;
};

Scenario generate_scenario(const ScenarioConfig& config);

// Writes cp_native.csv, exemplars.csv, cn_net.csv, cn_native_actual.csv,
// cn_gen_actual.csv and truth.json under `directory`.
void write_scenario(const Scenario& scenario, const std::string& directory);

}  // namespace pvdisagg::synth
