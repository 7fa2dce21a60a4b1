#pragma once

#include "rbmdc/core/types.hpp"
#include "rbmdc/problems/problem.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace rbmdc {

/// Reflection matrix of the feed-forward network: server 0 routes a fraction
/// p_k of its output to buffer k, so column 0 is (1, -p_1, ..., -p_K).
inline Matrix feedforward_reflection(const Vector& p) {
    const Eigen::Index d = p.size() + 1;
    Matrix r = Matrix::Identity(d, d);
    r.block(1, 0, p.size(), 1) = -p;
    return r;
}

/// Heavy-traffic covariance of the feed-forward network with squared
/// coefficients of variation s0_sq (server 0), arrival_sq (arrivals) and
/// s_sq[k] (downstream servers), at arrival rate mu0.
inline Matrix feedforward_covariance(const Vector& p, double s0_sq, double arrival_sq, const Vector& s_sq, double mu0) {
    const Eigen::Index k_count = p.size();
    require(s_sq.size() == k_count, "feedforward covariance: need one scv per downstream server");
    Matrix a(k_count + 1, k_count + 1);
    a(0, 0) = mu0 * (s0_sq + arrival_sq);
    for (Eigen::Index k = 1; k <= k_count; ++k) {
        const double pk = p(k - 1);
        a(0, k) = a(k, 0) = -mu0 * pk * s0_sq;
        a(k, k) = mu0 * (pk * (1.0 - pk) + pk * pk * s0_sq + pk * s_sq(k - 1));
        for (Eigen::Index l = k + 1; l <= k_count; ++l) {
            a(k, l) = a(l, k) = mu0 * pk * p(l - 1) * (s0_sq - 1.0);
        }
    }
    return a;
}

inline void check_routing(const Vector& p) {
    require(p.size() >= 1, "feed-forward network needs at least one downstream buffer");
    require(p.allFinite() && p.minCoeff() > 0.0, "routing probabilities must be positive");
    require(std::abs(p.sum() - 1.0) < 1e-12, "routing probabilities must sum to one");
}

/// Feed-forward test problem with K downstream buffers (d = K + 1).
inline ProblemSpec build_feedforward(const Vector& p, const CostSpec& cost, const ActionBox& actions, double s0_sq,
                                     double arrival_sq, const Vector& s_sq, double mu0,
                                     Objective objective = Objective::ergodic()) {
    check_routing(p);
    Matrix a = feedforward_covariance(p, s0_sq, arrival_sq, s_sq, mu0);
    if (Eigen::LLT<Matrix>(a).info() != Eigen::Success) {
        throw ConfigError("feed-forward covariance is not positive definite for these parameters");
    }
    return ProblemSpec("feedforward", feedforward_reflection(p), a, actions, cost, objective);
}

/// Downstream scv making the covariance diagonal equal to one when server 0
/// is deterministic and arrivals have unit scv.
inline Vector unit_diagonal_scv(const Vector& p) {
    return ((1.0 - (p.array() * (1.0 - p.array()))) / p.array()).matrix();
}

/// Holding costs used throughout the experiments: 2 for the first buffer and
/// 1.9 for the others.
inline Vector experiment_holding_costs(Eigen::Index d) {
    Vector h = Vector::Constant(d, 1.9);
    h(0) = 2.0;
    return h;
}

enum class PresetCost { Linear, Quadratic };

/// Default upper drift limit for quadratic-cost presets. The nominal drift is
/// 1, and the optimal rate stays far below this in the visited region.
inline constexpr double kQuadraticUpperDefault = 10.0;

inline CostSpec experiment_cost(Eigen::Index d, PresetCost kind) {
    if (kind == PresetCost::Linear) return CostSpec::linear(experiment_holding_costs(d), Vector::Ones(d));
    return CostSpec::quadratic(experiment_holding_costs(d), Vector::Ones(d), Vector::Ones(d));
}

inline ActionBox experiment_box(Eigen::Index d, PresetCost kind, double b) {
    if (kind == PresetCost::Linear) return ActionBox::uniform(d, 0.0, b);
    return ActionBox::uniform(d, 1.0, b);
}

/// Symmetric feed-forward problem of the main experiments: R has -1/K below the
/// diagonal in column 0, A has unit diagonal and -1/K^2 between distinct
/// downstream buffers. K = 0 gives the one-dimensional problem.
inline ProblemSpec main_test_problem(Eigen::Index k_count, double b, Objective objective,
                                     PresetCost kind = PresetCost::Linear) {
    require(k_count >= 0, "K must be nonnegative");
    const Eigen::Index d = k_count + 1;
    Matrix r = Matrix::Identity(d, d);
    Matrix a = Matrix::Identity(d, d);
    if (k_count > 0) {
        const double kd = static_cast<double>(k_count);
        r.block(1, 0, k_count, 1).setConstant(-1.0 / kd);
        a.block(1, 1, k_count, k_count).setConstant(-1.0 / (kd * kd));
        for (Eigen::Index i = 1; i < d; ++i) a(i, i) = 1.0;
    }
    const std::string name = kind == PresetCost::Linear ? "ff-linear" : "ff-quadratic";
    return ProblemSpec(name, r, a, experiment_box(d, kind, b), experiment_cost(d, kind), objective);
}

inline Vector asymmetric_routing() {
    Vector p(5);
    p << 0.3, 0.3, 0.2, 0.1, 0.1;
    return p;
}

/// Six-dimensional feed-forward problem with routing (0.3, 0.3, 0.2, 0.1, 0.1).
inline ProblemSpec asymmetric_problem(double b, Objective objective, PresetCost kind = PresetCost::Linear) {
    const Vector p = asymmetric_routing();
    const Eigen::Index d = p.size() + 1;
    ProblemSpec base = build_feedforward(p, experiment_cost(d, kind), experiment_box(d, kind, b), 0.0, 1.0,
                                         unit_diagonal_scv(p), 1.0, objective);
    return ProblemSpec("ff-asymmetric", base.reflection().matrix(), base.covariance().matrix(), base.actions(),
                       base.cost(), objective);
}

/// K independent single-server queues: R = A = I.
inline ProblemSpec build_parallel(Eigen::Index k_count, const CostSpec& cost, const ActionBox& actions,
                                  Objective objective = Objective::ergodic()) {
    require(k_count >= 1, "parallel-server problem needs K >= 1");
    const Matrix eye = Matrix::Identity(k_count, k_count);
    return ProblemSpec("parallel", eye, eye, actions, cost, objective);
}

inline ProblemSpec parallel_problem(Eigen::Index k_count, double b, Objective objective,
                                    PresetCost kind = PresetCost::Linear) {
    const ProblemSpec base = build_parallel(k_count, experiment_cost(k_count, kind),
                                            experiment_box(k_count, kind, b), objective);
    return ProblemSpec(kind == PresetCost::Linear ? "parallel-linear" : "parallel-quadratic",
                       base.reflection().matrix(), base.covariance().matrix(), base.actions(), base.cost(),
                       objective);
}

// ---------------------------------------------------------------------------
// Named presets and custom problems
// ---------------------------------------------------------------------------

struct PresetParams {
    Eigen::Index k = 0;  // downstream buffers (feed-forward) or queues (parallel)
    std::optional<double> b;  // upper drift limit; defaults: 2 (linear), 10 (quadratic)
    Objective objective = Objective::ergodic();
    std::string custom_path;  // JSON problem file for the "custom" preset
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"ff-linear",         "ff-quadratic", "ff-asymmetric",
                                                "parallel-linear",   "parallel-quadratic", "custom"};
    return names;
}

namespace detail {

inline Vector json_vector(const nlohmann::json& j, const std::string& key) {
    require(j.contains(key) && j.at(key).is_array(), "custom problem: missing array '" + key + "'");
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Matrix json_matrix(const nlohmann::json& j, const std::string& key) {
    require(j.contains(key) && j.at(key).is_array(), "custom problem: missing matrix '" + key + "'");
    const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
    require(!rows.empty(), "custom problem: empty matrix '" + key + "'");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == rows.front().size(), "custom problem: ragged matrix '" + key + "'");
        for (std::size_t j2 = 0; j2 < rows[i].size(); ++j2) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j2)) = rows[i][j2];
        }
    }
    return m;
}

}  // namespace detail

/// Custom problem from JSON:
///   { "R": [[...]], "A": [[...]],
///     "box": {"lower": [...], "upper": [...]},
///     "cost": {"kind": "linear", "h": [...], "c": [...]}
///          or {"kind": "quadratic", "h": [...], "alpha": [...], "nominal": [...]},
///     "kappa": [...], "reference_drift": [...],            (optional)
///     "objective": "ergodic" | "discounted", "r": 0.1 }    (objective optional)
inline ProblemSpec problem_from_json(const nlohmann::json& j, std::optional<Objective> objective_override = {}) {
    try {
        const Matrix r = detail::json_matrix(j, "R");
        const Matrix a = detail::json_matrix(j, "A");
        require(j.contains("box"), "custom problem: missing 'box'");
        ActionBox box(detail::json_vector(j.at("box"), "lower"), detail::json_vector(j.at("box"), "upper"));
        require(j.contains("cost"), "custom problem: missing 'cost'");
        const auto& cj = j.at("cost");
        const std::string kind = cj.value("kind", "linear");
        CostSpec cost;
        if (kind == "linear") {
            cost = CostSpec::linear(detail::json_vector(cj, "h"), detail::json_vector(cj, "c"));
        } else if (kind == "quadratic") {
            cost = CostSpec::quadratic(detail::json_vector(cj, "h"), detail::json_vector(cj, "alpha"),
                                       detail::json_vector(cj, "nominal"));
        } else {
            throw ConfigError("custom problem: unknown cost kind '" + kind + "'");
        }
        Objective objective = Objective::ergodic();
        if (objective_override) {
            objective = *objective_override;
        } else if (j.value("objective", "ergodic") == "discounted") {
            objective = Objective::discounted(j.value("r", 0.1));
        }
        std::optional<Vector> theta_ref;
        std::optional<Vector> kappa;
        if (j.contains("reference_drift")) theta_ref = detail::json_vector(j, "reference_drift");
        if (j.contains("kappa")) kappa = detail::json_vector(j, "kappa");
        return ProblemSpec("custom", r, a, box, cost, objective, theta_ref, kappa);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("custom problem: ") + e.what());
    }
}

inline ProblemSpec load_custom_problem(const std::string& path, std::optional<Objective> objective_override = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open custom problem file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed custom problem file '" + path + "': " + e.what());
    }
    return problem_from_json(j, objective_override);
}

inline ProblemSpec make_preset(const std::string& name, const PresetParams& params) {
    if (name == "ff-linear") return main_test_problem(params.k, params.b.value_or(2.0), params.objective);
    if (name == "ff-quadratic") {
        return main_test_problem(params.k, params.b.value_or(kQuadraticUpperDefault), params.objective,
                                 PresetCost::Quadratic);
    }
    if (name == "ff-asymmetric") return asymmetric_problem(params.b.value_or(2.0), params.objective);
    if (name == "parallel-linear") {
        return parallel_problem(std::max<Eigen::Index>(params.k, 1), params.b.value_or(2.0), params.objective);
    }
    if (name == "parallel-quadratic") {
        return parallel_problem(std::max<Eigen::Index>(params.k, 1), params.b.value_or(kQuadraticUpperDefault),
                                params.objective, PresetCost::Quadratic);
    }
    if (name == "custom") {
        require(!params.custom_path.empty(), "preset 'custom' needs a problem file");
        return load_custom_problem(params.custom_path, params.objective);
    }
    throw ConfigError("unknown problem preset '" + name + "'");
}

}  // namespace rbmdc
