#pragma once

// Helpers shared by the test binaries: series builders, an independent
// mixture sampler, random model generation for derivative checks, and a
// grid-search oracle for the weight solver.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pvdisagg/disagg.hpp"
#include "pvdisagg/gmm.hpp"
#include "pvdisagg/rng.hpp"
#include "pvdisagg/timeseries.hpp"

namespace testsup {

inline pvdisagg::HourlySeries make_series(std::string id, pvdisagg::HourStamp start,
                                          std::vector<double> values, pvdisagg::Role role) {
    return pvdisagg::HourlySeries(std::move(id), start, std::move(values), role);
}

inline pvdisagg::HourlySeries constant_series(std::string id, pvdisagg::HourStamp start,
                                              std::size_t hours, double value,
                                              pvdisagg::Role role) {
    return make_series(std::move(id), start, std::vector<double>(hours, value), role);
}

// Draws (nocturnal, diurnal) samples from a mixture without going through any
// library code path under test: component by cumulative weight, then a
// Cholesky-style bivariate normal draw.
inline std::vector<pvdisagg::MonthlyPair> sample_mixture(const pvdisagg::gmm::Model& model,
                                                         std::size_t n, std::uint64_t seed) {
    pvdisagg::Rng rng(seed);
    std::vector<pvdisagg::MonthlyPair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        double acc = 0.0;
        const pvdisagg::gmm::Component* c = &model.component(model.component_count() - 1);
        for (int k = 0; k < model.component_count(); ++k) {
            acc += model.component(k).weight;
            if (u < acc) {
                c = &model.component(k);
                break;
            }
        }
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        pvdisagg::MonthlyPair p;
        p.customer_id = "S" + std::to_string(i);
        p.index = 1;
        p.month = pvdisagg::MonthKey{2022, 1};
        p.nocturnal = c->mean_nocturnal + c->sigma_nocturnal * z1;
        p.diurnal = c->mean_diurnal +
                    c->sigma_diurnal * (c->rho * z1 + std::sqrt(1.0 - c->rho * c->rho) * z2);
        out.push_back(std::move(p));
    }
    return out;
}

// Random well-conditioned mixture for derivative and normalization checks.
inline pvdisagg::gmm::Model random_model(std::uint64_t seed, int components) {
    pvdisagg::Rng rng(seed);
    std::vector<pvdisagg::gmm::Component> cs;
    std::vector<double> w;
    double wsum = 0.0;
    for (int k = 0; k < components; ++k) {
        w.push_back(rng.uniform(0.2, 1.0));
        wsum += w.back();
    }
    for (int k = 0; k < components; ++k) {
        pvdisagg::gmm::Component c;
        c.weight = w[static_cast<std::size_t>(k)] / wsum;
        c.mean_nocturnal = rng.uniform(-5.0, 5.0);
        c.mean_diurnal = rng.uniform(-5.0, 5.0);
        c.sigma_nocturnal = rng.uniform(0.5, 3.0);
        c.sigma_diurnal = rng.uniform(0.5, 3.0);
        c.rho = rng.uniform(-0.85, 0.85);
        cs.push_back(c);
    }
    // Feed the weights through the same normalization the ctor expects.
    double total = 0.0;
    for (const auto& c : cs) total += c.weight;
    cs.back().weight += 1.0 - total;
    return pvdisagg::gmm::Model(std::move(cs));
}

// Small random disaggregation instance: a 48 or 72 hour horizon with one or
// two bump-shaped exemplars, a net series that dips below zero in the middle
// of the day, and two hand-filled pseudo-months. The single-component model
// keeps the objective concave, so a grid search finds the global optimum.
inline pvdisagg::disagg::DisaggProblem tiny_instance(std::uint64_t seed, int n_ex,
                                                     double lambda) {
    using namespace pvdisagg;
    Rng rng(seed);
    const std::size_t hours = rng.index(2) == 0 ? 48 : 72;
    const HourStamp start = HourStamp::from_civil(2022, 3, 1, 0);

    std::vector<HourlySeries> exemplars;
    for (int e = 0; e < n_ex; ++e) {
        std::vector<double> v(hours, 0.0);
        const double peak = 10.0 + 3.0 * e;
        for (std::size_t t = 0; t < hours; ++t) {
            const double h = static_cast<double>(t % 24) + 0.5;
            if (h > 7.0 && h < 18.0) {
                const double bump = std::exp(-0.18 * (h - peak) * (h - peak));
                v[t] = -(0.6 + rng.uniform(0.0, 0.8)) * bump;
            }
        }
        exemplars.emplace_back("E" + std::to_string(e), start, std::move(v), Role::generation);
    }

    std::vector<double> w_true;
    for (int e = 0; e < n_ex; ++e) w_true.push_back(rng.uniform(0.3, 1.2));
    std::vector<double> net(hours, 0.0);
    for (std::size_t t = 0; t < hours; ++t) {
        double g = 0.0;
        for (int e = 0; e < n_ex; ++e)
            g += w_true[static_cast<std::size_t>(e)] * exemplars[static_cast<std::size_t>(e)].value(t);
        net[t] = rng.uniform(0.05, 0.5) + g;
    }

    gmm::Component c;
    c.weight = 1.0;
    c.mean_nocturnal = 10.0;
    c.mean_diurnal = 12.0;
    c.sigma_nocturnal = 2.0;
    c.sigma_diurnal = 3.0;
    c.rho = 0.4;
    gmm::Model model({c});

    disagg::ExemplarSet set;
    set.series = exemplars;
    set.orientations.assign(static_cast<std::size_t>(n_ex), Orientation::unknown);
    set.months = {MonthKey{2022, 3}, MonthKey{2022, 4}};
    for (int m = 0; m < 2; ++m) {
        std::vector<double> row;
        for (int e = 0; e < n_ex; ++e) row.push_back(-rng.uniform(3.0, 9.0));
        set.monthly_diurnal.push_back(std::move(row));
    }

    pvdisagg::disagg::DisaggProblem problem{
        HourlySeries("C1", start, std::move(net), Role::net), {}, {}, std::move(set),
        std::move(model), lambda};
    for (int m = 0; m < 2; ++m) {
        const double n_m = rng.uniform(6.0, 14.0);
        problem.monthly_nocturnal.push_back(n_m);
        double p_d = problem.model.conditional_mean_diurnal(n_m) + rng.uniform(-1.0, 1.0);
        for (int e = 0; e < n_ex; ++e)
            p_d += w_true[static_cast<std::size_t>(e)] *
                   problem.exemplars.monthly_diurnal[static_cast<std::size_t>(m)]
                                                    [static_cast<std::size_t>(e)];
        problem.monthly_net_diurnal.push_back(p_d);
    }
    problem.validate();
    return problem;
}

// Full-program objective at fixed weights with the per-hour slack chosen by
// grid refinement over its feasible interval instead of in closed form.
inline double slack_grid_value(const pvdisagg::disagg::DisaggProblem& problem,
                               std::span<const double> omega) {
    double value = 0.0;
    for (std::size_t m = 0; m < problem.monthly_nocturnal.size(); ++m) {
        double d = problem.monthly_net_diurnal[m];
        for (std::size_t e = 0; e < omega.size(); ++e)
            d -= omega[e] * problem.exemplars.monthly_diurnal[m][e];
        value += problem.model.log_pdf_and_grad_d(problem.monthly_nocturnal[m], d).log_density;
    }
    if (problem.lambda <= 0.0) return value;

    for (std::size_t t = 0; t < problem.net.size(); ++t) {
        double phat = problem.net.value(t);
        for (std::size_t e = 0; e < omega.size(); ++e)
            phat -= omega[e] * problem.exemplars.series[e].value(t);
        if (phat >= 0.0) continue;  // slack 0 is feasible and dominates
        double lo = phat - 1.0;
        double hi = 0.0;
        double best = -std::numeric_limits<double>::infinity();
        double best_b = lo;
        for (int pass = 0; pass < 4; ++pass) {
            const double step = (hi - lo) / 200.0;
            for (int i = 0; i <= 200; ++i) {
                const double b = lo + step * static_cast<double>(i);
                if (b > 0.0 || b > phat) continue;
                const double v = -0.5 * problem.lambda * b * b;
                if (v > best) {
                    best = v;
                    best_b = b;
                }
            }
            lo = best_b - step;
            hi = std::min(best_b + step, phat);
        }
        value += best;
    }
    return value;
}

// Refined grid search over the weight box [0, omega_hi]^n for n in {1, 2},
// maximizing the slack-grid objective above.
inline double grid_max_value(const pvdisagg::disagg::DisaggProblem& problem, double omega_hi) {
    const std::size_t n = problem.exemplars.series.size();
    double best = -std::numeric_limits<double>::infinity();
    if (n == 1) {
        double lo = 0.0, hi = omega_hi, best_w = 0.0;
        int points = 300;
        for (int pass = 0; pass < 4; ++pass) {
            const double step = (hi - lo) / points;
            for (int i = 0; i <= points; ++i) {
                const double w = lo + step * static_cast<double>(i);
                if (w < 0.0) continue;
                const double v = slack_grid_value(problem, std::span<const double>(&w, 1));
                if (v > best) {
                    best = v;
                    best_w = w;
                }
            }
            lo = std::max(0.0, best_w - step);
            hi = best_w + step;
            points = 200;
        }
        return best;
    }

    // The refinement boxes keep a three-step margin around the running best;
    // a one-step margin can slide off a narrow diagonal ridge of the
    // objective and stall short of the true peak.
    double lo0 = 0.0, hi0 = omega_hi, lo1 = 0.0, hi1 = omega_hi;
    double b0 = 0.0, b1 = 0.0;
    int points = 60;
    for (int pass = 0; pass < 6; ++pass) {
        const double s0 = (hi0 - lo0) / points;
        const double s1 = (hi1 - lo1) / points;
        for (int i = 0; i <= points; ++i) {
            for (int j = 0; j <= points; ++j) {
                const double w[2] = {lo0 + s0 * static_cast<double>(i),
                                     lo1 + s1 * static_cast<double>(j)};
                if (w[0] < 0.0 || w[1] < 0.0) continue;
                const double v = slack_grid_value(problem, std::span<const double>(w, 2));
                if (v > best) {
                    best = v;
                    b0 = w[0];
                    b1 = w[1];
                }
            }
        }
        lo0 = std::max(0.0, b0 - 3.0 * s0);
        hi0 = b0 + 3.0 * s0;
        lo1 = std::max(0.0, b1 - 3.0 * s1);
        hi1 = b1 + 3.0 * s1;
        points = 40;
    }
    return best;
}

}  // namespace testsup
