#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvdisagg/metrics.hpp"
#include "pvdisagg/rng.hpp"
#include "pvdisagg/timeseries.hpp"
#include "support.hpp"

using namespace pvdisagg;
using namespace pvdisagg::metrics;
using testsup::constant_series;
using testsup::make_series;

namespace {

const HourStamp kStart = HourStamp::from_civil(2022, 1, 1, 0);

HourlySeries native_series(std::vector<double> v) {
    return make_series("c", kStart, std::move(v), Role::native);
}

HourlySeries generation_series(std::vector<double> v) {
    return make_series("c", kStart, std::move(v), Role::generation);
}

}  // namespace

TEST_CASE("a perfect estimate has zero error") {
    const auto a = native_series({1.0, 2.0, 3.0});
    CHECK(mape(a, a) == doctest::Approx(0.0));
    CHECK(rmse(a, a) == doctest::Approx(0.0));
}

TEST_CASE("uniform 10 percent overestimation gives 10 percent error") {
    const auto a = native_series({1.0, 1.0});
    const auto e = native_series({1.1, 1.1});
    CHECK(mape(a, e) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("error of [3,4] against zero actual is sqrt(12.5)") {
    const auto a = native_series({0.0, 0.0});
    const auto e = native_series({3.0, 4.0});
    CHECK(rmse(a, e) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
}

TEST_CASE("errors match a direct loop oracle on random series") {
    Rng rng(21);
    std::vector<double> av, ev;
    for (int i = 0; i < 200; ++i) {
        av.push_back(rng.uniform(0.1, 4.0));
        ev.push_back(rng.uniform(0.1, 4.0));
    }
    const auto a = native_series(av);
    const auto e = native_series(ev);

    double abs_err = 0.0, abs_act = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        abs_err += std::abs(ev[i] - av[i]);
        abs_act += std::abs(av[i]);
        sq += (ev[i] - av[i]) * (ev[i] - av[i]);
    }
    CHECK(mape(a, e) == doctest::Approx(100.0 * abs_err / abs_act).epsilon(1e-12));
    CHECK(rmse(a, e) ==
          doctest::Approx(std::sqrt(sq / static_cast<double>(av.size()))).epsilon(1e-12));
}

TEST_CASE("generation metrics only count hours with actual production") {
    const auto a = generation_series({0.0, -2.0, 0.0, -4.0});
    const auto e = generation_series({-0.5, -2.5, 0.0, -3.0});
    // Qualifying hours are 1 and 3: errors 0.5 and 1.0 against mean |actual| 3.
    CHECK(mape(a, e) == doctest::Approx(100.0 * 1.5 / 6.0).epsilon(1e-12));
    CHECK(rmse(a, e) == doctest::Approx(std::sqrt((0.25 + 1.0) / 2.0)).epsilon(1e-12));

    const auto q = qualifying_hours(a);
    CHECK(q == std::vector<bool>{false, true, false, true});
}

TEST_CASE("degenerate qualifying sets are rejected") {
    const auto zero_gen = generation_series({0.0, 0.0});
    CHECK_THROWS_WITH(mape(zero_gen, zero_gen), doctest::Contains("empty qualifying"));
    const auto zero_native = native_series({0.0, 0.0});
    CHECK_THROWS_WITH(mape(zero_native, zero_native), doctest::Contains("undefined MAPE"));
    CHECK_NOTHROW(rmse(zero_native, zero_native));
}

TEST_CASE("errors are invariant under a shared hour permutation") {
    Rng rng(33);
    std::vector<double> av, ev;
    for (int i = 0; i < 64; ++i) {
        av.push_back(rng.uniform(0.1, 3.0));
        ev.push_back(rng.uniform(0.1, 3.0));
    }
    std::vector<std::size_t> perm(av.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.index(i)]);

    std::vector<double> ap(av.size()), ep(ev.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        ap[i] = av[perm[i]];
        ep[i] = ev[perm[i]];
    }
    CHECK(mape(native_series(av), native_series(ev)) ==
          doctest::Approx(mape(native_series(ap), native_series(ep))).epsilon(1e-12));
    CHECK(rmse(native_series(av), native_series(ev)) ==
          doctest::Approx(rmse(native_series(ap), native_series(ep))).epsilon(1e-12));
}

TEST_CASE("rmse is symmetric in its arguments but mape is not") {
    const auto a = native_series({1.0, 1.0});
    const auto e = native_series({2.0, 2.0});
    CHECK(rmse(a, e) == doctest::Approx(rmse(e, a)).epsilon(1e-12));
    CHECK(mape(a, e) == doctest::Approx(100.0));
    CHECK(mape(e, a) == doctest::Approx(50.0));
}

TEST_CASE("empirical quantiles count from the sorted sample") {
    std::vector<double> values = {10, 1, 7, 3, 5, 2, 9, 4, 8, 6};
    const std::vector<double> probs = {0.2, 0.55, 1.0};
    const auto cdf = empirical_cdf(values, probs);
    REQUIRE(cdf.size() == 3);
    CHECK(cdf[0] == doctest::Approx(2.0));
    CHECK(cdf[1] == doctest::Approx(6.0));
    CHECK(cdf[2] == doctest::Approx(10.0));

    CHECK_THROWS(empirical_cdf(values, std::vector<double>{0.0}));
    CHECK_THROWS(empirical_cdf(values, std::vector<double>{1.5}));
    CHECK_THROWS(empirical_cdf({}, probs));
}

TEST_CASE("empirical quantiles match a sort-and-index oracle on random data") {
    Rng rng(8);
    std::vector<double> values;
    for (int i = 0; i < 37; ++i) values.push_back(static_cast<double>(rng.index(12)));
    std::vector<double> probs;
    for (int i = 1; i <= 10; ++i) probs.push_back(0.1 * i);

    const auto cdf = empirical_cdf(values, probs);
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto rank = static_cast<std::size_t>(
            std::ceil(probs[i] * static_cast<double>(sorted.size()) - 1e-9));
        CHECK(cdf[i] == sorted[rank - 1]);
        if (i > 0) CHECK(cdf[i] >= cdf[i - 1]);
    }
}

namespace {

// Every hour of day d carries level[d] / 24, so nocturnal and diurnal sums
// coincide at every aggregation scale.
HourlySeries day_leveled_series(const std::vector<double>& day_levels) {
    std::vector<double> values;
    for (double level : day_levels)
        for (int h = 0; h < 24; ++h) values.push_back(level / 24.0);
    return make_series("c", kStart, std::move(values), Role::native);
}

}  // namespace

TEST_CASE("proportional day levels give perfect correlation at every timescale") {
    std::vector<double> levels;
    for (int d = 0; d < 70; ++d) levels.push_back(10.0 + 3.0 * std::sin(0.37 * d));
    const auto s = day_leveled_series(levels);
    const auto c = timescale_correlation(s, DayNightPartition::fixed_window(7, 19));
    REQUIRE(c.hourly.has_value());
    REQUIRE(c.daily.has_value());
    REQUIRE(c.weekly.has_value());
    REQUIRE(c.monthly.has_value());
    CHECK(*c.hourly == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(*c.daily == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(*c.weekly == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(*c.monthly == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("white noise decorrelates monthly sums over a long horizon") {
    // Zero-mean noise: a nonzero mean would correlate the sums through the
    // varying number of days per month.
    Rng rng(99);
    std::vector<double> values;
    for (int i = 0; i < 24 * 365 * 10; ++i) values.push_back(rng.uniform(-1.0, 1.0));
    const auto s = make_series("c", HourStamp::from_civil(2015, 1, 1, 0), std::move(values),
                               Role::native);
    const auto c = timescale_correlation(s, DayNightPartition::fixed_window(7, 19));
    REQUIRE(c.monthly.has_value());
    CHECK(std::abs(*c.monthly) <= 0.2);
}

TEST_CASE("flat series report undefined sub-monthly correlations") {
    const auto s = constant_series("c", kStart, 24 * 70, 0.5, Role::native);
    const auto c = timescale_correlation(s, DayNightPartition::fixed_window(7, 19));
    CHECK_FALSE(c.hourly.has_value());
    CHECK_FALSE(c.daily.has_value());
    CHECK_FALSE(c.weekly.has_value());
    // January and February have different lengths, so the two monthly points
    // still sit on a line.
    REQUIRE(c.monthly.has_value());
    CHECK(*c.monthly == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("correlation analysis needs at least eight weeks") {
    const auto s = constant_series("c", kStart, 24 * 35, 0.5, Role::native);
    CHECK_THROWS_WITH(timescale_correlation(s, DayNightPartition::fixed_window(7, 19)),
                      doctest::Contains("8 weeks"));
}

TEST_CASE("population correlations pool pairs across customers") {
    std::vector<double> levels;
    for (int d = 0; d < 70; ++d) levels.push_back(10.0 + 3.0 * std::sin(0.41 * d));
    const std::vector<HourlySeries> pop = {day_leveled_series(levels), day_leveled_series(levels)};
    const auto c = timescale_correlation_population(pop, DayNightPartition::fixed_window(7, 19));
    REQUIRE(c.monthly.has_value());
    CHECK(*c.monthly == doctest::Approx(1.0).epsilon(1e-9));
}

namespace {

CustomerSeriesSet customer_set(const std::string& id, Rng& rng) {
    std::vector<double> gen, est_gen, native, est_native;
    for (int i = 0; i < 96; ++i) {
        const bool day = (i % 24) >= 8 && (i % 24) <= 16;
        const double g = day ? -rng.uniform(0.5, 2.0) : 0.0;
        gen.push_back(g);
        est_gen.push_back(g * rng.uniform(0.8, 1.2));
        native.push_back(rng.uniform(0.3, 1.5));
        est_native.push_back(native.back() * rng.uniform(0.9, 1.1));
    }
    return CustomerSeriesSet{make_series(id, kStart, gen, Role::generation),
                             make_series(id, kStart, est_gen, Role::generation),
                             make_series(id, kStart, native, Role::native),
                             make_series(id, kStart, est_native, Role::native)};
}

}  // namespace

TEST_CASE("error reports aggregate per-customer metrics into CDF tables") {
    Rng rng(55);
    std::vector<CustomerSeriesSet> sets;
    sets.push_back(customer_set("b", rng));
    sets.push_back(customer_set("a", rng));
    sets.push_back(customer_set("c", rng));

    const auto report = build_error_report(sets);
    REQUIRE(report.customers.size() == 3);
    CHECK(report.customers[0].customer_id == "a");
    CHECK(report.customers[1].customer_id == "b");
    CHECK(report.customers[2].customer_id == "c");

    // Rows agree with direct metric calls under the shared qualifying set.
    const auto& set = sets[0];  // customer "b" before sorting
    const auto q = qualifying_hours(set.actual_generation);
    const auto& row = report.customers[1];
    REQUIRE(row.generation_mape.has_value());
    CHECK(*row.generation_mape ==
          doctest::Approx(mape(set.actual_generation, set.estimated_generation)).epsilon(1e-12));
    REQUIRE(row.native_mape.has_value());
    CHECK(*row.native_mape ==
          doctest::Approx(mape(set.actual_native, set.estimated_native, q)).epsilon(1e-12));

    REQUIRE(report.probabilities.size() == 5);
    REQUIRE(report.generation_mape_cdf.size() == 5);
    for (std::size_t i = 1; i < 5; ++i)
        CHECK(report.generation_mape_cdf[i] >= report.generation_mape_cdf[i - 1]);
    CHECK(report.mean_generation_mape.has_value());

    const auto j = report.to_json();
    CHECK(j.contains("customers"));
    REQUIRE(j.contains("cdf"));
    CHECK(j["cdf"].contains("generation_mape"));
    CHECK(j.contains("native_qualifying_set"));

    std::ostringstream csv;
    write_customer_metrics_csv(report, csv);
    const std::string text = csv.str();
    CHECK(text.rfind("customer_id,generation_mape,generation_rmse,native_mape,native_rmse\n", 0) ==
          0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("customers without production keep undefined metric slots") {
    Rng rng(56);
    auto with_pv = customer_set("p", rng);
    auto no_pv = customer_set("z", rng);
    no_pv.actual_generation =
        constant_series("z", kStart, no_pv.actual_generation.size(), 0.0, Role::generation);

    const auto report = build_error_report(std::vector<CustomerSeriesSet>{with_pv, no_pv});
    REQUIRE(report.customers.size() == 2);
    CHECK(report.customers[0].generation_mape.has_value());
    CHECK_FALSE(report.customers[1].generation_mape.has_value());
    CHECK_FALSE(report.customers[1].native_mape.has_value());
    CHECK(report.mean_generation_mape.has_value());
}
