#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pvdisagg/timeseries.hpp"

namespace pvdisagg::gmm {

// One bivariate normal component over (nocturnal, diurnal) monthly kWh,
// parameterized by per-axis sigmas and the correlation.
struct Component {
    double weight = 1.0;
    double mean_nocturnal = 0.0;
    double mean_diurnal = 0.0;
    double sigma_nocturnal = 1.0;
    double sigma_diurnal = 1.0;
    double rho = 0.0;
};

struct LogDensity {
    double log_density = 0.0;
    double grad_diurnal = 0.0;
    // Set when every component underflowed to log-density -inf at an extreme
    // argument; log_density is then a large negative floor and the gradient 0.
    bool floored = false;
};

class Model {
public:
    explicit Model(std::vector<Component> components);

    int component_count() const { return static_cast<int>(components_.size()); }
    const Component& component(int k) const { return components_[static_cast<std::size_t>(k)]; }
    const std::vector<Component>& components() const { return components_; }

    double pdf(double nocturnal, double diurnal) const;
    LogDensity log_pdf_and_grad_d(double nocturnal, double diurnal) const;

    // Mean of the diurnal coordinate conditional on the nocturnal one.
    double conditional_mean_diurnal(double nocturnal) const;

    nlohmann::json to_json() const;
    static Model from_json(const nlohmann::json& j);

private:
    std::vector<Component> components_;
};

struct FitOptions {
    double tol = 1e-8;   // relative log-likelihood change per iteration
    int max_iter = 500;
    std::uint64_t seed = 0;
};

struct BicEntry {
    int requested_components = 0;
    int fitted_components = 0;
    double log_likelihood = 0.0;
    double bic = 0.0;
};

struct FitReport {
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> ll_trace;  // one entry per EM iteration, non-decreasing
    std::vector<BicEntry> bic;     // filled by fit_select
    int restarts = 1;
    std::vector<std::string> warnings;
};

// Expectation-maximization fit with a fixed component count. Seeding is
// k-means++ style on the 2-D samples. Collapsed components (fewer than two
// effective samples) trigger a refit with one component less.
std::pair<Model, FitReport> fit_em(std::span<const MonthlyPair> samples, int components,
                                   const FitOptions& options = {});

struct SelectOptions {
    std::vector<int> candidates = {1, 2, 3, 4, 5, 6, 7, 8};
    int restarts = 4;
    FitOptions fit;
};

// Runs fit_em over every candidate component count with several seeded
// restarts and keeps the minimum-BIC model (ties go to the smaller count).
std::pair<Model, FitReport> fit_select(std::span<const MonthlyPair> samples,
                                       const SelectOptions& options = {});

}  // namespace pvdisagg::gmm
