#include "pvdisagg/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pvdisagg/errors.hpp"
#include "pvdisagg/rng.hpp"

namespace pvdisagg::gmm {
namespace {

constexpr double kLogFloor = -1e300;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate_components(const std::vector<Component>& components) {
    if (components.empty()) throw std::invalid_argument("model needs at least one component");
    double total = 0.0;
    for (const auto& c : components) {
        if (!std::isfinite(c.weight) || !std::isfinite(c.mean_nocturnal) ||
            !std::isfinite(c.mean_diurnal) || !std::isfinite(c.sigma_nocturnal) ||
            !std::isfinite(c.sigma_diurnal) || !std::isfinite(c.rho)) {
            throw std::invalid_argument("component parameters must be finite");
        }
        if (c.weight < 0.0 || c.weight > 1.0)
            throw std::invalid_argument("component weight outside [0, 1]");
        if (c.sigma_nocturnal <= 0.0 || c.sigma_diurnal <= 0.0)
            throw std::invalid_argument("component sigmas must be positive");
        if (std::abs(c.rho) >= 1.0)
            throw std::invalid_argument("component correlation must lie strictly inside (-1, 1)");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("component weights must sum to 1");
}

// log N((n, d); component) plus the partial derivative of the log-density in d.
struct ComponentLog {
    double log_density;
    double dlog_dd;
};

ComponentLog component_log(const Component& c, double n, double d) {
    const double dn = (n - c.mean_nocturnal) / c.sigma_nocturnal;
    const double dd = (d - c.mean_diurnal) / c.sigma_diurnal;
    const double one_minus_r2 = 1.0 - c.rho * c.rho;
    const double q = 1.0 / one_minus_r2;
    const double quad = q * (dn * dn + dd * dd - 2.0 * c.rho * dn * dd);
    const double log_norm = std::log(2.0 * std::numbers::pi * c.sigma_nocturnal *
                                     c.sigma_diurnal * std::sqrt(one_minus_r2));
    const double dlog_dd = -q * (dd - c.rho * dn) / c.sigma_diurnal;
    return {-log_norm - 0.5 * quad, dlog_dd};
}

void check_finite_point(double nocturnal, double diurnal) {
    if (!std::isfinite(nocturnal) || !std::isfinite(diurnal))
        throw std::invalid_argument("density arguments must be finite");
}

struct Point {
    double n;
    double d;
};

std::vector<Point> to_points(std::span<const MonthlyPair> samples) {
    std::vector<Point> pts;
    pts.reserve(samples.size());
    for (const auto& s : samples) {
        if (!std::isfinite(s.nocturnal) || !std::isfinite(s.diurnal))
            throw FitError("non-finite monthly sample for customer " + s.customer_id);
        pts.push_back({s.nocturnal, s.diurnal});
    }
    return pts;
}

double dist2(const Point& a, const Point& b) {
    const double dn = a.n - b.n;
    const double dd = a.d - b.d;
    return dn * dn + dd * dd;
}

// k-means++ seeding followed by a handful of Lloyd rounds; returns hard labels.
std::vector<int> kmeans_labels(const std::vector<Point>& pts, int k, Rng& rng) {
    const std::size_t n = pts.size();
    std::vector<Point> centers;
    centers.reserve(static_cast<std::size_t>(k));
    centers.push_back(pts[rng.index(n)]);
    std::vector<double> best_d2(n, std::numeric_limits<double>::max());
    while (centers.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            best_d2[i] = std::min(best_d2[i], dist2(pts[i], centers.back()));
            total += best_d2[i];
        }
        if (total <= 0.0) {
            centers.push_back(pts[rng.index(n)]);
            continue;
        }
        double r = rng.uniform() * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            r -= best_d2[i];
            if (r <= 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[pick]);
    }

    std::vector<int> labels(n, 0);
    for (int round = 0; round < 10; ++round) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_dist = std::numeric_limits<double>::max();
            for (int c = 0; c < k; ++c) {
                const double d = dist2(pts[i], centers[static_cast<std::size_t>(c)]);
                if (d < best_dist) {
                    best_dist = d;
                    best = c;
                }
            }
            if (labels[i] != best) {
                labels[i] = best;
                changed = true;
            }
        }
        std::vector<Point> sums(static_cast<std::size_t>(k), {0.0, 0.0});
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[static_cast<std::size_t>(labels[i])].n += pts[i].n;
            sums[static_cast<std::size_t>(labels[i])].d += pts[i].d;
            ++counts[static_cast<std::size_t>(labels[i])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) {
                // Revive an empty cluster at the point farthest from its center.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d =
                        dist2(pts[i], centers[static_cast<std::size_t>(labels[i])]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centers[static_cast<std::size_t>(c)] = pts[far];
                labels[far] = c;
                changed = true;
            } else {
                centers[static_cast<std::size_t>(c)] = {
                    sums[static_cast<std::size_t>(c)].n / counts[static_cast<std::size_t>(c)],
                    sums[static_cast<std::size_t>(c)].d / counts[static_cast<std::size_t>(c)]};
            }
        }
        if (!changed && round > 0) break;
    }
    return labels;
}

struct Moments {
    double mean_n = 0.0;
    double mean_d = 0.0;
    double var_n = 0.0;
    double var_d = 0.0;
    double cov = 0.0;
};

Moments weighted_moments(const std::vector<Point>& pts, const std::vector<double>& w,
                         double wsum) {
    Moments m;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        m.mean_n += w[i] * pts[i].n;
        m.mean_d += w[i] * pts[i].d;
    }
    m.mean_n /= wsum;
    m.mean_d /= wsum;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double dn = pts[i].n - m.mean_n;
        const double dd = pts[i].d - m.mean_d;
        m.var_n += w[i] * dn * dn;
        m.var_d += w[i] * dd * dd;
        m.cov += w[i] * dn * dd;
    }
    m.var_n /= wsum;
    m.var_d /= wsum;
    m.cov /= wsum;
    return m;
}

double min_eigenvalue(double var_n, double var_d, double cov) {
    const double mid = 0.5 * (var_n + var_d);
    const double half_diff = 0.5 * (var_n - var_d);
    return mid - std::sqrt(half_diff * half_diff + cov * cov);
}

// Covariance regularization scale derived from the pooled sample covariance.
double floor_epsilon(const std::vector<Point>& pts) {
    std::vector<double> w(pts.size(), 1.0);
    const Moments m = weighted_moments(pts, w, static_cast<double>(pts.size()));
    const double scale = 0.5 * (m.var_n + m.var_d);
    if (scale <= 0.0)
        throw FitError("monthly samples have zero variance; cannot fit a mixture");
    return 1e-6 * scale;
}

Component component_from_moments(const Moments& m, double weight, double eps) {
    Moments adj = m;
    // Regularize only covariances that are (near-)singular so that healthy
    // fits keep their exact maximum-likelihood moments.
    if (min_eigenvalue(adj.var_n, adj.var_d, adj.cov) < eps) {
        adj.var_n += eps;
        adj.var_d += eps;
    }
    Component c;
    c.weight = weight;
    c.mean_nocturnal = adj.mean_n;
    c.mean_diurnal = adj.mean_d;
    c.sigma_nocturnal = std::sqrt(adj.var_n);
    c.sigma_diurnal = std::sqrt(adj.var_d);
    c.rho = adj.cov / (c.sigma_nocturnal * c.sigma_diurnal);
    const double rho_cap = 1.0 - 1e-12;
    c.rho = std::clamp(c.rho, -rho_cap, rho_cap);
    return c;
}

void sort_components(std::vector<Component>& components) {
    std::sort(components.begin(), components.end(), [](const Component& a, const Component& b) {
        if (a.mean_nocturnal != b.mean_nocturnal) return a.mean_nocturnal < b.mean_nocturnal;
        if (a.mean_diurnal != b.mean_diurnal) return a.mean_diurnal < b.mean_diurnal;
        return a.weight > b.weight;
    });
}

// One EM run at a fixed component count. Returns nullopt when a component
// collapses below two effective samples, so the caller can retry with fewer.
std::optional<std::pair<Model, FitReport>> try_fit(const std::vector<Point>& pts, int k,
                                                   const FitOptions& options, double eps,
                                                   std::vector<std::string> warnings) {
    const std::size_t n = pts.size();
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(k)));
    const std::vector<int> labels = kmeans_labels(pts, k, rng);

    std::vector<Component> components(static_cast<std::size_t>(k));
    {
        std::vector<double> w(n);
        for (int c = 0; c < k; ++c) {
            double wsum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                w[i] = labels[i] == c ? 1.0 : 0.0;
                wsum += w[i];
            }
            const Moments m = weighted_moments(pts, w, wsum);
            components[static_cast<std::size_t>(c)] =
                component_from_moments(m, wsum / static_cast<double>(n), eps);
        }
    }

    FitReport report;
    report.warnings = std::move(warnings);
    std::vector<std::vector<double>> resp(static_cast<std::size_t>(k),
                                          std::vector<double>(n, 0.0));
    std::vector<double> lg(static_cast<std::size_t>(k));
    double prev_ll = kNegInf;
    bool converged = false;

    for (int iter = 0;; ++iter) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double max_lg = kNegInf;
            for (int c = 0; c < k; ++c) {
                const auto& comp = components[static_cast<std::size_t>(c)];
                lg[static_cast<std::size_t>(c)] =
                    std::log(comp.weight) + component_log(comp, pts[i].n, pts[i].d).log_density;
                max_lg = std::max(max_lg, lg[static_cast<std::size_t>(c)]);
            }
            if (max_lg == kNegInf)
                return std::nullopt;  // every component vanished at this sample
            double z = 0.0;
            for (int c = 0; c < k; ++c)
                z += std::exp(lg[static_cast<std::size_t>(c)] - max_lg);
            for (int c = 0; c < k; ++c)
                resp[static_cast<std::size_t>(c)][i] =
                    std::exp(lg[static_cast<std::size_t>(c)] - max_lg) / z;
            ll += max_lg + std::log(z);
        }
        if (!std::isfinite(ll)) throw FitError("log-likelihood diverged during EM");
        report.ll_trace.push_back(ll);

        if (iter > 0 && std::abs(ll - prev_ll) <= options.tol * std::max(1.0, std::abs(prev_ll))) {
            converged = true;
            break;
        }
        if (iter + 1 >= options.max_iter) break;
        prev_ll = ll;

        for (int c = 0; c < k; ++c) {
            double wsum = 0.0;
            for (std::size_t i = 0; i < n; ++i) wsum += resp[static_cast<std::size_t>(c)][i];
            if (wsum < 2.0) return std::nullopt;
            const Moments m = weighted_moments(pts, resp[static_cast<std::size_t>(c)], wsum);
            components[static_cast<std::size_t>(c)] =
                component_from_moments(m, wsum / static_cast<double>(n), eps);
        }
    }

    sort_components(components);
    report.log_likelihood = report.ll_trace.back();
    report.iterations = static_cast<int>(report.ll_trace.size());
    report.converged = converged;
    return std::make_pair(Model(std::move(components)), std::move(report));
}

}  // namespace

// Weights are stored exactly as given (the sum-to-one check allows 1e-9 of
// slack) so that serialize/parse cycles reproduce the same doubles.
Model::Model(std::vector<Component> components) : components_(std::move(components)) {
    validate_components(components_);
}

double Model::pdf(double nocturnal, double diurnal) const {
    check_finite_point(nocturnal, diurnal);
    return std::exp(log_pdf_and_grad_d(nocturnal, diurnal).log_density);
}

LogDensity Model::log_pdf_and_grad_d(double nocturnal, double diurnal) const {
    check_finite_point(nocturnal, diurnal);
    double max_lg = kNegInf;
    struct Term {
        double lg;
        double dlog_dd;
    };
    std::vector<Term> terms;
    terms.reserve(components_.size());
    for (const auto& c : components_) {
        const ComponentLog cl = component_log(c, nocturnal, diurnal);
        terms.push_back({std::log(c.weight) + cl.log_density, cl.dlog_dd});
        max_lg = std::max(max_lg, terms.back().lg);
    }
    if (max_lg == kNegInf) return {kLogFloor, 0.0, true};
    double z = 0.0;
    double grad = 0.0;
    for (const auto& t : terms) {
        const double w = std::exp(t.lg - max_lg);
        z += w;
        grad += w * t.dlog_dd;
    }
    return {max_lg + std::log(z), grad / z, false};
}

double Model::conditional_mean_diurnal(double nocturnal) const {
    if (!std::isfinite(nocturnal))
        throw std::invalid_argument("conditional mean argument must be finite");
    double max_lg = kNegInf;
    std::vector<double> lg(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& c = components_[k];
        const double dn = (nocturnal - c.mean_nocturnal) / c.sigma_nocturnal;
        lg[k] = std::log(c.weight) - std::log(c.sigma_nocturnal) - 0.5 * dn * dn;
        max_lg = std::max(max_lg, lg[k]);
    }
    double z = 0.0;
    double mean = 0.0;
    if (max_lg == kNegInf) {
        // Arbitrarily far argument: fall back to the nearest component line.
        std::size_t best = 0;
        double best_dn = std::numeric_limits<double>::max();
        for (std::size_t k = 0; k < components_.size(); ++k) {
            const auto& c = components_[k];
            const double dn = std::abs(nocturnal - c.mean_nocturnal) / c.sigma_nocturnal;
            if (dn < best_dn) {
                best_dn = dn;
                best = k;
            }
        }
        const auto& c = components_[best];
        return c.mean_diurnal +
               c.rho * c.sigma_diurnal * (nocturnal - c.mean_nocturnal) / c.sigma_nocturnal;
    }
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& c = components_[k];
        const double w = std::exp(lg[k] - max_lg);
        const double line = c.mean_diurnal + c.rho * c.sigma_diurnal *
                                                 (nocturnal - c.mean_nocturnal) /
                                                 c.sigma_nocturnal;
        z += w;
        mean += w * line;
    }
    return mean / z;
}

nlohmann::json Model::to_json() const {
    nlohmann::json j;
    j["components"] = component_count();
    auto weights = nlohmann::json::array();
    auto means = nlohmann::json::array();
    auto covariances = nlohmann::json::array();
    for (const auto& c : components_) {
        weights.push_back(c.weight);
        means.push_back({c.mean_nocturnal, c.mean_diurnal});
        covariances.push_back({c.sigma_nocturnal, c.sigma_diurnal, c.rho});
    }
    j["weights"] = std::move(weights);
    j["means"] = std::move(means);
    j["covariances"] = std::move(covariances);
    return j;
}

Model Model::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("components") || !j.contains("weights") ||
        !j.contains("means") || !j.contains("covariances")) {
        throw std::invalid_argument("model JSON missing required fields");
    }
    const int s = j.at("components").get<int>();
    const auto& weights = j.at("weights");
    const auto& means = j.at("means");
    const auto& covariances = j.at("covariances");
    if (s <= 0 || static_cast<int>(weights.size()) != s || static_cast<int>(means.size()) != s ||
        static_cast<int>(covariances.size()) != s) {
        throw std::invalid_argument("model JSON arrays disagree with the component count");
    }
    std::vector<Component> components(static_cast<std::size_t>(s));
    for (int k = 0; k < s; ++k) {
        auto& c = components[static_cast<std::size_t>(k)];
        const auto& m = means.at(static_cast<std::size_t>(k));
        const auto& cv = covariances.at(static_cast<std::size_t>(k));
        if (m.size() != 2 || cv.size() != 3)
            throw std::invalid_argument("model JSON mean/covariance entries malformed");
        c.weight = weights.at(static_cast<std::size_t>(k)).get<double>();
        c.mean_nocturnal = m.at(0).get<double>();
        c.mean_diurnal = m.at(1).get<double>();
        c.sigma_nocturnal = cv.at(0).get<double>();
        c.sigma_diurnal = cv.at(1).get<double>();
        c.rho = cv.at(2).get<double>();
    }
    return Model(std::move(components));
}

std::pair<Model, FitReport> fit_em(std::span<const MonthlyPair> samples, int components,
                                   const FitOptions& options) {
    if (components < 1) throw FitError("component count must be at least 1");
    if (options.tol <= 0.0 || options.max_iter < 1)
        throw FitError("EM tolerance and iteration cap must be positive");
    const std::vector<Point> pts = to_points(samples);
    if (pts.size() < static_cast<std::size_t>(10 * components)) {
        throw FitError("need at least " + std::to_string(10 * components) +
                       " monthly samples to fit " + std::to_string(components) +
                       " components, have " + std::to_string(pts.size()));
    }
    const double eps = floor_epsilon(pts);
    std::vector<std::string> warnings;
    for (int k = components; k >= 1; --k) {
        auto result = try_fit(pts, k, options, eps, warnings);
        if (result) return std::move(*result);
        warnings.push_back("component collapsed at " + std::to_string(k) +
                           " components; refitting with " + std::to_string(k - 1));
    }
    throw FitError("mixture fit collapsed even with a single component");
}

std::pair<Model, FitReport> fit_select(std::span<const MonthlyPair> samples,
                                       const SelectOptions& options) {
    if (options.candidates.empty()) throw FitError("no candidate component counts");
    if (options.restarts < 1) throw FitError("restart count must be at least 1");
    std::vector<int> candidates = options.candidates;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const double n = static_cast<double>(samples.size());
    std::vector<BicEntry> table;
    std::optional<std::pair<Model, FitReport>> best;
    double best_bic = std::numeric_limits<double>::max();

    for (int s : candidates) {
        std::optional<std::pair<Model, FitReport>> best_for_s;
        for (int r = 0; r < options.restarts; ++r) {
            FitOptions fit = options.fit;
            fit.seed = mix_seed(options.fit.seed,
                                static_cast<std::uint64_t>(s) * 1000003ULL +
                                    static_cast<std::uint64_t>(r));
            auto run = fit_em(samples, s, fit);
            if (!best_for_s || run.second.log_likelihood > best_for_s->second.log_likelihood)
                best_for_s = std::move(run);
        }
        const int fitted = best_for_s->first.component_count();
        const double ll = best_for_s->second.log_likelihood;
        const double bic = -2.0 * ll + (6.0 * fitted - 1.0) * std::log(n);
        table.push_back({s, fitted, ll, bic});
        if (bic < best_bic) {
            best_bic = bic;
            best = std::move(best_for_s);
        }
    }

    best->second.bic = std::move(table);
    best->second.restarts = options.restarts;
    return std::move(*best);
}

}  // namespace pvdisagg::gmm
