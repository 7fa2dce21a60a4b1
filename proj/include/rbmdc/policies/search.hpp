#pragma once

#include "rbmdc/core/types.hpp"
#include "rbmdc/policies/evaluate.hpp"
#include "rbmdc/policies/policy.hpp"
#include "rbmdc/problems/problem.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace rbmdc {

enum class BenchmarkFamily { LinearBoundary, AffineRate };

inline BenchmarkFamily parse_family(const std::string& s) {
    if (s == "linear-boundary") return BenchmarkFamily::LinearBoundary;
    if (s == "affine-rate") return BenchmarkFamily::AffineRate;
    throw ConfigError("unknown benchmark family '" + s + "'");
}

inline const char* family_name(BenchmarkFamily f) {
    return f == BenchmarkFamily::LinearBoundary ? "linear-boundary" : "affine-rate";
}

/// Coefficient matrix (row k = beta_k) of the symmetric parametrization:
///   beta_0 = (phi1, phi2, ..., phi2)
///   beta_i = (phi3, phi4, ..., phi5 at position i+1, ..., phi4).
/// K = 0 takes a single parameter, beta_0 = (phi1).
inline Matrix expand_symmetric(const std::vector<double>& phi, Eigen::Index k_count) {
    require(k_count >= 0, "K must be nonnegative");
    for (double v : phi) require(std::isfinite(v), "symmetric parameters must be finite");
    const Eigen::Index d = k_count + 1;
    Matrix beta(d, d);
    if (k_count == 0) {
        require(phi.size() == 1, "one-dimensional problems take one parameter");
        beta(0, 0) = phi[0];
        return beta;
    }
    require(phi.size() == 5, "the symmetric parametrization takes five parameters");
    beta(0, 0) = phi[0];
    beta.row(0).tail(k_count).setConstant(phi[1]);
    for (Eigen::Index i = 1; i < d; ++i) {
        beta(i, 0) = phi[2];
        beta.row(i).tail(k_count).setConstant(phi[3]);
        beta(i, i) = phi[4];
    }
    return beta;
}

inline Policy family_policy(const ProblemSpec& spec, BenchmarkFamily family, const Matrix& beta) {
    return family == BenchmarkFamily::LinearBoundary ? linear_boundary_policy(spec, beta)
                                                     : affine_rate_policy(spec, beta);
}

inline Policy symmetric_policy(const ProblemSpec& spec, BenchmarkFamily family, const std::vector<double>& phi) {
    return family_policy(spec, family, expand_symmetric(phi, spec.dim() - 1));
}

/// Values lo, lo + step, ..., up to hi (inclusive within a small tolerance).
inline std::vector<double> grid_axis(double lo, double hi, double step) {
    require(std::isfinite(lo) && std::isfinite(hi) && hi >= lo, "grid axis needs lo <= hi");
    if (hi == lo) return {lo};
    require(step > 0.0, "grid step must be positive");
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    std::vector<double> out;
    for (long i = 0; i <= count; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

/// Default axes: {0, 0.2, ..., 3.0} / c for each parameter.
inline std::vector<std::vector<double>> default_symmetric_axes(const ProblemSpec& spec) {
    const double c = spec.cost().kind == CostKind::Linear ? spec.cost().price(0) : 1.0;
    std::vector<double> axis = grid_axis(0.0, 3.0, 0.2);
    for (double& v : axis) v /= c;
    return std::vector<std::vector<double>>(spec.dim() == 1 ? 1 : 5, axis);
}

struct SearchResult {
    std::vector<double> phi;
    EvalReport report;
    Eigen::Index evaluated = 0;
};

using PolicyFactory = std::function<Policy(const std::vector<double>&)>;

/// Evaluates every point of the Cartesian grid with the same evaluation seed
/// and returns the one with the lowest mean cost (first found on ties).
inline SearchResult grid_search(const ProblemSpec& spec, const PolicyFactory& factory,
                                const std::vector<std::vector<double>>& axes, const EvalSettings& settings) {
    require(!axes.empty(), "grid search needs at least one axis");
    for (const auto& a : axes) require(!a.empty(), "grid axes must be nonempty");
    SearchResult best;
    bool found = false;
    std::vector<std::size_t> idx(axes.size(), 0);
    std::vector<double> phi(axes.size());
    while (true) {
        for (std::size_t j = 0; j < axes.size(); ++j) phi[j] = axes[j][idx[j]];
        EvalReport rep = evaluate_policy(spec, factory(phi), settings);
        ++best.evaluated;
        if (!found || rep.mean < best.report.mean) {
            best.phi = phi;
            best.report = std::move(rep);
            found = true;
        }
        std::size_t j = axes.size();
        while (j > 0) {
            --j;
            if (++idx[j] < axes[j].size()) break;
            idx[j] = 0;
            if (j == 0) return best;
        }
    }
}

/// Axes spanning one coarse step either side of the incumbent at spacing
/// step/factor, kept inside each original axis range.
inline std::vector<std::vector<double>> refine_axes(const std::vector<std::vector<double>>& axes,
                                                    const std::vector<double>& incumbent, int factor = 5) {
    require(factor >= 1, "refinement factor must be positive");
    std::vector<std::vector<double>> out;
    for (std::size_t j = 0; j < axes.size(); ++j) {
        const auto& a = axes[j];
        if (a.size() < 2) {
            out.push_back({incumbent[j]});
            continue;
        }
        const double step = (a.back() - a.front()) / static_cast<double>(a.size() - 1);
        const double lo = *std::min_element(a.begin(), a.end());
        const double hi = *std::max_element(a.begin(), a.end());
        std::vector<double> ref;
        for (int k = -factor; k <= factor; ++k) {
            const double v = k == 0 ? incumbent[j] : incumbent[j] + step * k / factor;
            if (v >= lo - 1e-12 && v <= hi + 1e-12) ref.push_back(v);
        }
        out.push_back(ref);
    }
    return out;
}

/// Coarse grid search followed by one refinement around the incumbent. The
/// refined grid contains the incumbent, so the result never gets worse.
inline SearchResult two_stage_search(const ProblemSpec& spec, const PolicyFactory& factory,
                                     const std::vector<std::vector<double>>& axes, const EvalSettings& settings,
                                     int factor = 5) {
    SearchResult coarse = grid_search(spec, factory, axes, settings);
    SearchResult fine = grid_search(spec, factory, refine_axes(axes, coarse.phi, factor), settings);
    fine.evaluated += coarse.evaluated;
    if (coarse.report.mean < fine.report.mean) {
        coarse.evaluated = fine.evaluated;
        return coarse;
    }
    return fine;
}

struct HeuristicResult {
    Matrix beta;
    Policy policy;
    EvalReport report;
    std::vector<SearchResult> subnetworks;
    SearchResult first_row;
};

/// Routing probabilities read off a feed-forward reflection matrix.
inline Vector routing_from_reflection(const ProblemSpec& spec) {
    const Matrix& r = spec.reflection().matrix();
    const Eigen::Index d = spec.dim();
    require(d >= 2, "feed-forward problem needs K >= 1");
    Matrix expected = Matrix::Identity(d, d);
    expected.block(1, 0, d - 1, 1) = r.block(1, 0, d - 1, 1);
    require((r - expected).cwiseAbs().maxCoeff() == 0.0, "reflection matrix is not of feed-forward form");
    return -r.block(1, 0, d - 1, 1);
}

/// Two-buffer subnetwork made of server 0 and downstream buffer k.
inline ProblemSpec tandem_subnetwork(const ProblemSpec& spec, Eigen::Index k) {
    const Vector p = routing_from_reflection(spec);
    const std::vector<Eigen::Index> keep{0, k};
    Matrix r2{{1.0, 0.0}, {-p(k - 1), 1.0}};
    Matrix a2(2, 2);
    Vector lo(2), hi(2), hold(2), second(2), third(2);
    const CostSpec& c = spec.cost();
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) a2(i, j) = spec.covariance().matrix()(keep[i], keep[j]);
        lo(i) = spec.actions().lower()(keep[i]);
        hi(i) = spec.actions().upper()(keep[i]);
        hold(i) = c.holding(keep[i]);
        second(i) = c.kind == CostKind::Linear ? c.price(keep[i]) : c.alpha(keep[i]);
        third(i) = c.kind == CostKind::Linear ? 0.0 : c.nominal(keep[i]);
    }
    const CostSpec sub_cost = c.kind == CostKind::Linear ? CostSpec::linear(hold, second)
                                                         : CostSpec::quadratic(hold, second, third);
    return ProblemSpec(spec.name() + "-sub" + std::to_string(k), r2, a2, ActionBox(lo, hi), sub_cost,
                       spec.objective());
}

/// Benchmark for feed-forward networks with unequal routing: tune each
/// two-buffer subnetwork over four parameters, keep the downstream rows
/// (nonzero only at 0 and k), then tune the first row on the full network with
/// one parameter for buffer 0 and one per group of equal routing probability.
inline HeuristicResult heuristic_asymmetric(const ProblemSpec& spec, const std::vector<std::vector<double>>& sub_axes,
                                            const std::vector<double>& first_row_axis, const EvalSettings& settings,
                                            BenchmarkFamily family = BenchmarkFamily::LinearBoundary) {
    require(sub_axes.size() == 4, "subnetwork search takes four axes");
    const Vector p = routing_from_reflection(spec);
    const Eigen::Index d = spec.dim();
    Matrix beta = Matrix::Zero(d, d);
    std::vector<SearchResult> subs;
    for (Eigen::Index k = 1; k < d; ++k) {
        const ProblemSpec sub = tandem_subnetwork(spec, k);
        auto factory = [&](const std::vector<double>& phi) {
            const Matrix b2{{phi[0], phi[1]}, {phi[2], phi[3]}};
            return family_policy(sub, family, b2);
        };
        SearchResult res = two_stage_search(sub, factory, sub_axes, settings);
        beta(k, 0) = res.phi[2];
        beta(k, k) = res.phi[3];
        subs.push_back(std::move(res));
    }
    std::vector<Eigen::Index> group(static_cast<std::size_t>(d - 1));
    std::vector<double> distinct;
    for (Eigen::Index k = 0; k < d - 1; ++k) {
        auto it = std::find_if(distinct.begin(), distinct.end(), [&](double v) { return std::abs(v - p(k)) < 1e-12; });
        if (it == distinct.end()) {
            distinct.push_back(p(k));
            it = distinct.end() - 1;
        }
        group[static_cast<std::size_t>(k)] = it - distinct.begin();
    }
    auto with_first_row = [&](const std::vector<double>& phi) {
        Matrix b = beta;
        b(0, 0) = phi[0];
        for (Eigen::Index k = 1; k < d; ++k) b(0, k) = phi[static_cast<std::size_t>(group[k - 1]) + 1];
        return b;
    };
    const std::vector<std::vector<double>> axes(distinct.size() + 1, first_row_axis);
    SearchResult row = two_stage_search(
        spec, [&](const std::vector<double>& phi) { return family_policy(spec, family, with_first_row(phi)); }, axes,
        settings);
    Matrix final_beta = with_first_row(row.phi);
    Policy policy = family_policy(spec, family, final_beta);
    return HeuristicResult{final_beta, std::move(policy), row.report, std::move(subs), std::move(row)};
}

}  // namespace rbmdc
