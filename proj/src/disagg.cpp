#include "pvdisagg/disagg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "pvdisagg/errors.hpp"
#include "pvdisagg/rng.hpp"

namespace pvdisagg::disagg {
namespace {

double cosine_distance(const HourlySeries& a, const HourlySeries& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        dot += a.value(t) * b.value(t);
        na += a.value(t) * a.value(t);
        nb += b.value(t) * b.value(t);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;  // a zero profile is indistinct from anything
    return 1.0 - dot / std::sqrt(na * nb);
}

double min_pairwise(std::span<const HourlySeries> series) {
    double best = 1.0;
    for (std::size_t i = 0; i < series.size(); ++i)
        for (std::size_t j = i + 1; j < series.size(); ++j)
            best = std::min(best, cosine_distance(series[i], series[j]));
    return best;
}

void check_omega(const DisaggProblem& problem, std::span<const double> omega) {
    if (omega.size() != problem.exemplars.series.size())
        throw std::invalid_argument("one weight per exemplar required");
    for (double w : omega)
        if (!std::isfinite(w) || w < 0.0)
            throw std::invalid_argument("weights must be finite and non-negative");
}

struct RunResult {
    Eigen::VectorXd x;
    double value = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    double kkt = std::numeric_limits<double>::infinity();
};

ObjectiveEval eval_at(const DisaggProblem& problem, const Eigen::VectorXd& x) {
    return objective(problem, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

// Projected BFGS ascent over omega >= 0. The inverse-Hessian estimate is
// reset whenever the active set changes or the direction stops being an
// ascent direction.
RunResult run_bfgs(const DisaggProblem& problem, const Eigen::VectorXd& start,
                   const SolveConfig& config) {
    const auto n = start.size();
    RunResult res;
    res.x = start.cwiseMax(0.0);

    ObjectiveEval cur = eval_at(problem, res.x);
    Eigen::Map<const Eigen::VectorXd> g0(cur.gradient.data(), n);
    Eigen::VectorXd g = g0;
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool h_unscaled = true;
    std::vector<bool> active(static_cast<std::size_t>(n), false);
    // Improvements at the double-precision floor of the objective count as
    // convergence even when the gradient tolerance is out of reach.
    const double ftol = 100.0 * std::numeric_limits<double>::epsilon();
    int small_steps = 0;

    for (int iter = 0; iter < config.max_iter; ++iter) {
        ++res.iterations;
        double kkt = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double pg = res.x[i] > 0.0 ? g[i] : std::max(g[i], 0.0);
            kkt = std::max(kkt, std::abs(pg));
        }
        res.kkt = kkt;
        if (kkt <= config.tol || small_steps >= 2) {
            res.converged = true;
            break;
        }

        std::vector<bool> now(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            now[static_cast<std::size_t>(i)] = res.x[i] <= 0.0 && g[i] <= 0.0;
        if (now != active) {
            h.setIdentity();
            h_unscaled = true;
            active = now;
        }

        Eigen::VectorXd d = h * g;
        for (Eigen::Index i = 0; i < n; ++i)
            if (active[static_cast<std::size_t>(i)]) d[i] = 0.0;
        if (d.dot(g) <= 0.0) {
            h.setIdentity();
            h_unscaled = true;
            for (Eigen::Index i = 0; i < n; ++i)
                d[i] = active[static_cast<std::size_t>(i)] ? 0.0 : g[i];
        }
        if (d.lpNorm<Eigen::Infinity>() == 0.0) break;

        double alpha = 1.0;
        bool accepted = false;
        Eigen::VectorXd xn;
        ObjectiveEval next;
        for (int ls = 0; ls < 50; ++ls) {
            xn = (res.x + alpha * d).cwiseMax(0.0);
            const Eigen::VectorXd step = xn - res.x;
            if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
            next = eval_at(problem, xn);
            if (next.value >= cur.value + 1e-4 * g.dot(step)) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;

        Eigen::Map<const Eigen::VectorXd> gn(next.gradient.data(), n);
        const Eigen::VectorXd s = xn - res.x;
        const Eigen::VectorXd y = g - gn;  // curvature pair for the negated problem
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (h_unscaled) {
                h *= sy / y.squaredNorm();
                h_unscaled = false;
            }
            const Eigen::MatrixXd left =
                Eigen::MatrixXd::Identity(n, n) - (s * y.transpose()) / sy;
            h = left * h * left.transpose() + (s * s.transpose()) / sy;
        } else {
            h.setIdentity();
            h_unscaled = true;
        }
        const double gain = next.value - cur.value;
        small_steps = gain <= ftol * std::max(1.0, std::abs(cur.value)) ? small_steps + 1 : 0;
        res.x = xn;
        cur = std::move(next);
        g = Eigen::Map<const Eigen::VectorXd>(cur.gradient.data(), n);
    }
    res.value = cur.value;
    return res;
}

std::vector<Eigen::VectorXd> build_starts(const DisaggProblem& problem,
                                          const SolveConfig& config) {
    const auto n = static_cast<Eigen::Index>(problem.exemplars.series.size());
    const std::size_t m = problem.monthly_nocturnal.size();

    double total_deficit = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double expected =
            problem.model.conditional_mean_diurnal(problem.monthly_nocturnal[i]);
        total_deficit += std::max(0.0, expected - problem.monthly_net_diurnal[i]);
    }
    Eigen::VectorXd colsum = Eigen::VectorXd::Zero(n);
    double net_scale = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (Eigen::Index e = 0; e < n; ++e)
            colsum[e] -= problem.exemplars.monthly_diurnal[i][static_cast<std::size_t>(e)];
        net_scale += std::abs(problem.monthly_net_diurnal[i]);
    }

    std::vector<Eigen::VectorXd> starts;
    starts.push_back(Eigen::VectorXd::Zero(n));
    for (int s = 1; s < std::max(config.starts, 1); ++s) {
        Rng rng(mix_seed(mix_seed(config.seed, fnv1a64("start")),
                         static_cast<std::uint64_t>(s)));
        Eigen::VectorXd w(n);
        for (Eigen::Index e = 0; e < n; ++e) w[e] = rng.uniform(0.1, 1.0);
        const double target = total_deficit > 0.0 ? rng.uniform(0.5, 1.5) * total_deficit
                                                  : 0.05 * net_scale;
        const double denom = w.dot(colsum);
        if (denom > 0.0 && target > 0.0) w *= target / denom;
        starts.push_back(std::move(w));
    }
    return starts;
}

Solution assemble(const DisaggProblem& problem, const RunResult& best, double lambda,
                  bool hard_constrained, int total_iterations) {
    std::span<const double> omega(best.x.data(), static_cast<std::size_t>(best.x.size()));
    auto [gen, native] = reconstruct(problem, omega);

    Solution sol{std::vector<double>(omega.begin(), omega.end()),
                 std::move(gen),
                 std::move(native),
                 {},
                 best.value,
                 total_iterations,
                 best.converged,
                 best.kkt,
                 0,
                 lambda,
                 hard_constrained};
    sol.beta.reserve(sol.native.size());
    for (std::size_t t = 0; t < sol.native.size(); ++t) {
        const double v = sol.native.value(t);
        sol.beta.push_back(std::min(0.0, v));
        if (v < -1e-6) ++sol.negative_native_count;
    }
    return sol;
}

void check_distinct(const DisaggProblem& problem) {
    if (problem.exemplars.series.size() < 2) return;
    const double d = min_pairwise(problem.exemplars.series);
    if (d < problem.exemplars.distinctness_floor) {
        throw SolveError("exemplar profiles are not distinguishable (distance " +
                         std::to_string(d) + " below floor " +
                         std::to_string(problem.exemplars.distinctness_floor) + ")");
    }
}

}  // namespace

ExemplarSet make_exemplar_set(std::span<const HourlySeries> series,
                              std::span<const Orientation> orientations,
                              const DayNightPartition& partition,
                              double distinctness_floor) {
    if (series.empty()) throw SolveError("at least one exemplar required");
    if (!orientations.empty() && orientations.size() != series.size())
        throw SolveError("orientation labels must match the exemplar count");

    ExemplarSet set;
    set.distinctness_floor = distinctness_floor;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        if (s.role() != Role::generation)
            throw SolveError("exemplar " + s.customer_id() + " does not have generation role");
        for (std::size_t t = 0; t < s.size(); ++t)
            if (s.value(t) > 0.0)
                throw SolveError("exemplar " + s.customer_id() +
                                 " has positive values; negate raw generation first");
        if (s.start() != series[0].start() || s.size() != series[0].size())
            throw SolveError("exemplar series are not aligned");
        set.series.push_back(s);
        set.orientations.push_back(orientations.empty() ? Orientation::unknown
                                                        : orientations[i]);
    }

    for (std::size_t i = 0; i < set.series.size(); ++i) {
        const MonthlyAggregate agg = aggregate_monthly(set.series[i], partition);
        if (i == 0) {
            set.months.reserve(agg.pairs.size());
            for (const auto& p : agg.pairs) set.months.push_back(p.month);
            set.monthly_diurnal.assign(agg.pairs.size(),
                                       std::vector<double>(set.series.size(), 0.0));
        }
        for (std::size_t m = 0; m < agg.pairs.size(); ++m)
            set.monthly_diurnal[m][i] = agg.pairs[m].diurnal;
    }

    set.min_pairwise_distance = min_pairwise(set.series);
    if (set.series.size() >= 2 && set.min_pairwise_distance < distinctness_floor) {
        throw SolveError("exemplar profiles are not distinguishable (distance " +
                         std::to_string(set.min_pairwise_distance) + " below floor " +
                         std::to_string(distinctness_floor) + ")");
    }
    return set;
}

void DisaggProblem::validate() const {
    const std::size_t m = monthly_nocturnal.size();
    const std::size_t n = exemplars.series.size();
    if (net.role() != Role::net) throw SolveError("problem series must have net role");
    if (m < 2) throw SolveError("need at least 2 complete months, have " + std::to_string(m));
    if (monthly_net_diurnal.size() != m)
        throw SolveError("monthly nocturnal/diurnal vectors disagree in length");
    if (n == 0) throw SolveError("no exemplars in problem");
    if (exemplars.monthly_diurnal.size() != m)
        throw SolveError("exemplar monthly sums do not cover the problem months");
    for (const auto& row : exemplars.monthly_diurnal) {
        if (row.size() != n) throw SolveError("exemplar monthly sum row has wrong width");
        for (double v : row)
            if (!(v <= 0.0)) throw SolveError("exemplar monthly sums must be non-positive");
    }
    for (const auto& s : exemplars.series)
        if (s.start() != net.start() || s.size() != net.size())
            throw SolveError("exemplar horizon does not match the net series");
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw SolveError("lambda must be finite and non-negative");
    for (double v : monthly_nocturnal)
        if (!std::isfinite(v)) throw SolveError("non-finite monthly nocturnal sum");
    for (double v : monthly_net_diurnal)
        if (!std::isfinite(v)) throw SolveError("non-finite monthly diurnal sum");
}

DisaggProblem make_problem(const HourlySeries& net, const ExemplarSet& exemplars,
                           const gmm::Model& model, const DayNightPartition& partition,
                           double lambda) {
    if (net.role() != Role::net) throw SolveError("customer series must have net role");
    const MonthlyAggregate agg = aggregate_monthly(net, partition);
    if (agg.pairs.size() != exemplars.months.size())
        throw SolveError("net series months do not match the exemplar months");
    for (std::size_t m = 0; m < agg.pairs.size(); ++m)
        if (agg.pairs[m].month != exemplars.months[m])
            throw SolveError("net series months do not match the exemplar months");

    DisaggProblem problem{net, {}, {}, exemplars, model, lambda};
    for (const auto& p : agg.pairs) {
        problem.monthly_nocturnal.push_back(p.nocturnal);
        problem.monthly_net_diurnal.push_back(p.diurnal);
    }
    problem.validate();
    return problem;
}

ObjectiveEval objective(const DisaggProblem& problem, std::span<const double> omega) {
    check_omega(problem, omega);
    const std::size_t n = omega.size();
    const std::size_t m = problem.monthly_nocturnal.size();

    ObjectiveEval out;
    out.gradient.assign(n, 0.0);

    for (std::size_t i = 0; i < m; ++i) {
        double d = problem.monthly_net_diurnal[i];
        for (std::size_t e = 0; e < n; ++e)
            d -= omega[e] * problem.exemplars.monthly_diurnal[i][e];
        if (!std::isfinite(d))
            throw SolveError("non-finite diurnal estimate at month index " + std::to_string(i));
        const gmm::LogDensity ld =
            problem.model.log_pdf_and_grad_d(problem.monthly_nocturnal[i], d);
        out.value += ld.log_density;
        for (std::size_t e = 0; e < n; ++e)
            out.gradient[e] -= ld.grad_diurnal * problem.exemplars.monthly_diurnal[i][e];
    }

    if (problem.lambda > 0.0) {
        const HourlySeries& net = problem.net;
        for (std::size_t t = 0; t < net.size(); ++t) {
            double phat = net.value(t);
            for (std::size_t e = 0; e < n; ++e)
                phat -= omega[e] * problem.exemplars.series[e].value(t);
            if (!std::isfinite(phat))
                throw SolveError("non-finite native estimate at hour index " + std::to_string(t));
            if (phat < 0.0) {
                out.value -= 0.5 * problem.lambda * phat * phat;
                for (std::size_t e = 0; e < n; ++e)
                    out.gradient[e] +=
                        problem.lambda * phat * problem.exemplars.series[e].value(t);
            }
        }
    }

    if (!std::isfinite(out.value)) throw SolveError("non-finite objective value");
    for (double gv : out.gradient)
        if (!std::isfinite(gv)) throw SolveError("non-finite objective gradient");
    return out;
}

Solution solve(const DisaggProblem& problem, const SolveConfig& config) {
    problem.validate();
    check_distinct(problem);

    const auto starts = build_starts(problem, config);
    RunResult best;
    int total_iterations = 0;
    for (const auto& s : starts) {
        RunResult run = run_bfgs(problem, s, config);
        total_iterations += run.iterations;
        if (best.x.size() == 0 || run.value > best.value ||
            (run.value == best.value && run.converged && !best.converged)) {
            best = std::move(run);
        }
    }
    return assemble(problem, best, problem.lambda, false, total_iterations);
}

Solution solve_unpenalized(const DisaggProblem& problem, const SolveConfig& config) {
    problem.validate();
    check_distinct(problem);

    for (std::size_t t = 0; t < problem.net.size(); ++t) {
        if (problem.net.value(t) >= 0.0) continue;
        bool covered = false;
        for (const auto& e : problem.exemplars.series)
            if (e.value(t) != 0.0) covered = true;
        if (!covered)
            throw SolveError("hard-constrained variant infeasible: negative net at hour " +
                             std::to_string(t) + " has no exemplar generation");
    }

    DisaggProblem penalized = problem;
    Eigen::VectorXd x;
    RunResult last;
    int total_iterations = 0;
    const double ladder[] = {1e2, 1e4, 1e6, 1e8, 1e10};
    for (std::size_t stage = 0; stage < std::size(ladder); ++stage) {
        penalized.lambda = ladder[stage];
        if (stage == 0) {
            const auto starts = build_starts(penalized, config);
            RunResult best;
            for (const auto& s : starts) {
                RunResult run = run_bfgs(penalized, s, config);
                total_iterations += run.iterations;
                if (best.x.size() == 0 || run.value > best.value) best = std::move(run);
            }
            last = std::move(best);
        } else {
            last = run_bfgs(penalized, x, config);
            total_iterations += last.iterations;
        }
        x = last.x;
    }

    Solution sol = assemble(problem, last, 0.0, true, total_iterations);
    // Report the pure likelihood; the continuation penalty is an internal tool.
    DisaggProblem plain = problem;
    plain.lambda = 0.0;
    sol.objective =
        objective(plain, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())))
            .value;
    double violation = 0.0;
    for (std::size_t t = 0; t < sol.native.size(); ++t)
        violation = std::max(violation, -sol.native.value(t));
    if (violation > 1e-6) sol.converged = false;
    return sol;
}

std::pair<HourlySeries, HourlySeries> reconstruct(const DisaggProblem& problem,
                                                  std::span<const double> omega) {
    check_omega(problem, omega);
    const HourlySeries& net = problem.net;
    std::vector<double> gen(net.size(), 0.0);
    std::vector<double> native(net.size(), 0.0);
    for (std::size_t t = 0; t < net.size(); ++t) {
        double g = 0.0;
        for (std::size_t e = 0; e < omega.size(); ++e)
            g += omega[e] * problem.exemplars.series[e].value(t);
        gen[t] = g;
        native[t] = net.value(t) - g;
    }
    return {HourlySeries(net.customer_id(), net.start(), std::move(gen), Role::generation),
            HourlySeries(net.customer_id(), net.start(), std::move(native), Role::native)};
}

std::vector<LambdaSweepEntry> sweep_lambda(const DisaggProblem& problem,
                                           const SolveConfig& config,
                                           std::span<const double> lambdas) {
    static const double kDefault[] = {0.1, 1.0, 10.0, 100.0};
    if (lambdas.empty()) lambdas = kDefault;
    std::vector<LambdaSweepEntry> entries;
    for (double lambda : lambdas) {
        if (!std::isfinite(lambda) || lambda < 0.0)
            throw SolveError("sweep lambda values must be finite and non-negative");
        DisaggProblem p = problem;
        p.lambda = lambda;
        Solution sol = solve(p, config);
        entries.push_back({lambda, sol.negative_native_count, sol.objective,
                           std::move(sol.weights)});
    }
    return entries;
}

}  // namespace pvdisagg::disagg
