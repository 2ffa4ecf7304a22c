#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pvdisagg/gmm.hpp"
#include "pvdisagg/timeseries.hpp"

namespace pvdisagg::disagg {

// Aligned exemplar generation series in the internal non-positive sign
// convention, plus their per-month diurnal sums.
struct ExemplarSet {
    std::vector<HourlySeries> series;
    std::vector<Orientation> orientations;
    std::vector<MonthKey> months;  // complete months of the shared horizon
    // monthly_diurnal[m][i] = diurnal sum of exemplar i in months[m], <= 0
    std::vector<std::vector<double>> monthly_diurnal;
    double min_pairwise_distance = 1.0;  // 1 - cosine similarity over hours
    double distinctness_floor = 0.01;
};

// Validates roles, sign and alignment, aggregates the monthly sums, and
// rejects exemplar pairs whose hourly profiles are nearly proportional
// (distance below the floor), which would make the weights unidentifiable.
ExemplarSet make_exemplar_set(std::span<const HourlySeries> series,
                              std::span<const Orientation> orientations,
                              const DayNightPartition& partition,
                              double distinctness_floor = 0.01);

// One customer's disaggregation instance. Tests may fill the monthly fields
// directly; validate() is called on every solver entry.
struct DisaggProblem {
    HourlySeries net;
    std::vector<double> monthly_nocturnal;    // P_m,n from nighttime net readings
    std::vector<double> monthly_net_diurnal;  // P'_m,d
    ExemplarSet exemplars;
    gmm::Model model;
    double lambda = 1.0;  // weight of the squared hinge on negative natives

    void validate() const;
};

DisaggProblem make_problem(const HourlySeries& net, const ExemplarSet& exemplars,
                           const gmm::Model& model, const DayNightPartition& partition,
                           double lambda = 1.0);

struct ObjectiveEval {
    double value = 0.0;
    std::vector<double> gradient;
};

// Penalized log-likelihood of the weights:
//   sum_m log f(P_m,n, P'_m,d - omega . G_m)  -  (lambda/2) sum_tau min(0, Phat(tau))^2
// with Phat(tau) = net(tau) - omega . G_h(tau). The per-hour slack beta is
// eliminated analytically (optimal beta_tau = min(0, Phat(tau))), leaving a
// C^1 objective; the gradient uses the one-sided derivative at the kink.
ObjectiveEval objective(const DisaggProblem& problem, std::span<const double> omega);

struct SolveConfig {
    int starts = 8;         // omega = 0 plus seeded deficit-scaled points
    double tol = 1e-6;      // projected-gradient infinity norm
    int max_iter = 500;     // per start
    std::uint64_t seed = 0;
};

struct Solution {
    std::vector<double> weights;
    HourlySeries generation;   // non-positive internal convention
    HourlySeries native;
    std::vector<double> beta;  // min(0, native) per hour, all <= 0
    double objective = 0.0;
    int iterations = 0;        // summed over starts
    bool converged = false;
    double kkt_residual = 0.0;  // projected-gradient infinity norm at the optimum
    // Hours with native estimate below -1e-6 kWh; the lambda tuning rule
    // compares this against the expected number of exemplar anomalies.
    int negative_native_count = 0;
    double lambda = 0.0;
    bool hard_constrained = false;
};

// Maximizes the penalized objective over omega >= 0 by projected
// quasi-Newton ascent with multi-start; returns the best stationary point,
// flagged converged=false when no start meets the tolerance.
Solution solve(const DisaggProblem& problem, const SolveConfig& config = {});

// Ablation with the hard constraint Phat >= 0 instead of the penalty,
// approached by quadratic-penalty continuation. Errors with
// "hard-constrained variant infeasible" when some negative net hour has no
// exemplar generation at all.
Solution solve_unpenalized(const DisaggProblem& problem, const SolveConfig& config = {});

// Ghat(tau) = omega . G_h(tau) (role generation, non-positive) and
// Phat = net - Ghat (role native).
std::pair<HourlySeries, HourlySeries> reconstruct(const DisaggProblem& problem,
                                                  std::span<const double> omega);

struct LambdaSweepEntry {
    double lambda = 0.0;
    int negative_native_count = 0;
    double objective = 0.0;
    std::vector<double> weights;
};

// Diagnostic sweep over a lambda ladder: pick the smallest lambda whose
// negative-native count levels off near the known anomaly budget.
std::vector<LambdaSweepEntry> sweep_lambda(const DisaggProblem& problem,
                                           const SolveConfig& config = {},
                                           std::span<const double> lambdas = {});

}  // namespace pvdisagg::disagg
