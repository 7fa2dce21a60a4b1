#pragma once

#include "rbmdc/analytic/oned.hpp"
#include "rbmdc/core/types.hpp"
#include "rbmdc/neural/mlp.hpp"
#include "rbmdc/problems/problem.hpp"

#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace rbmdc {

/// theta(z) = theta for every state.
struct ConstantRule {
    Vector theta;
};

/// theta_k = upper_k if beta_k . z >= threshold_k else lower_k; row k of beta
/// is beta_k.
struct LinearBoundaryRule {
    Matrix beta;
    Vector threshold;
    Vector lower;
    Vector upper;
};

/// theta_k = clip(lower_k + beta_k . z, lower_k, upper_k).
struct AffineRateRule {
    Matrix beta;
    Vector lower;
    Vector upper;
};

/// argmax over the action box against a network output: G(z), or grad V(z)
/// when `value_gradient` is set.
struct NetworkRule {
    std::shared_ptr<const Mlp> net;
    std::shared_ptr<const ProblemSpec> spec;
    bool value_gradient = false;
};

/// Coordinatewise one-dimensional optimal policies.
struct AnalyticRule {
    std::vector<std::shared_ptr<const Analytic1DSolution>> solutions;
    Vector lower;
    Vector upper;
};

class Policy {
public:
    using Rule = std::variant<ConstantRule, LinearBoundaryRule, AffineRateRule, NetworkRule, AnalyticRule>;

    Policy(std::string name, Eigen::Index dim, Rule rule) : name_(std::move(name)), dim_(dim), rule_(std::move(rule)) {}

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] Eigen::Index dim() const { return dim_; }
    [[nodiscard]] const Rule& rule() const { return rule_; }

    /// Actions for each column of `states` (d x n) written into `actions`.
    void act(const Matrix& states, Matrix& actions) const {
        require(states.rows() == dim_, "policy: state dimension mismatch");
        actions.resize(dim_, states.cols());
        std::visit([&](const auto& r) { apply(r, states, actions); }, rule_);
    }

    [[nodiscard]] Vector act(const Vector& z) const {
        Matrix out;
        act(Matrix(z), out);
        return out.col(0);
    }

private:
    static void apply(const ConstantRule& r, const Matrix& states, Matrix& actions) {
        actions = r.theta.replicate(1, states.cols());
    }
    static void apply(const LinearBoundaryRule& r, const Matrix& states, Matrix& actions) {
        actions.noalias() = r.beta * states;
        for (Eigen::Index j = 0; j < actions.cols(); ++j) {
            for (Eigen::Index k = 0; k < actions.rows(); ++k) {
                actions(k, j) = actions(k, j) >= r.threshold(k) ? r.upper(k) : r.lower(k);
            }
        }
    }
    static void apply(const AffineRateRule& r, const Matrix& states, Matrix& actions) {
        actions.noalias() = r.beta * states;
        actions.colwise() += r.lower;
        for (Eigen::Index j = 0; j < actions.cols(); ++j) {
            actions.col(j) = actions.col(j).cwiseMax(r.lower).cwiseMin(r.upper);
        }
    }
    static void apply(const NetworkRule& r, const Matrix& states, Matrix& actions) {
        const Matrix x = r.value_gradient ? r.net->input_gradient(states) : r.net->forward(states);
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            Vector theta(x.rows());
            argmax_policy_into(*r.spec, x.col(j), theta);
            actions.col(j) = theta;
        }
    }
    static void apply(const AnalyticRule& r, const Matrix& states, Matrix& actions) {
        for (Eigen::Index j = 0; j < states.cols(); ++j) {
            for (Eigen::Index k = 0; k < states.rows(); ++k) {
                actions(k, j) = r.solutions[static_cast<std::size_t>(k)]->policy(states(k, j), r.lower(k), r.upper(k));
            }
        }
    }

    std::string name_;
    Eigen::Index dim_;
    Rule rule_;
};

inline Policy constant_policy(const ProblemSpec& spec, const Vector& theta) {
    require(theta.size() == spec.dim(), "constant policy has the wrong dimension");
    require(spec.actions().contains(theta), "constant policy lies outside the action box");
    return Policy("constant", spec.dim(), ConstantRule{theta});
}

/// Linear-boundary benchmark: buffer k runs at its upper rate once beta_k . z
/// reaches its control price c_k.
inline Policy linear_boundary_policy(const ProblemSpec& spec, const Matrix& beta) {
    const Eigen::Index d = spec.dim();
    require(beta.rows() == d && beta.cols() == d, "boundary coefficients must be d x d");
    require(spec.cost().kind == CostKind::Linear, "linear-boundary policies need a linear cost");
    return Policy("linear-boundary", d,
                  LinearBoundaryRule{beta, spec.cost().price, spec.actions().lower(), spec.actions().upper()});
}

/// Affine-rate benchmark for quadratic cost: theta = clip(lower + beta z).
inline Policy affine_rate_policy(const ProblemSpec& spec, const Matrix& beta) {
    const Eigen::Index d = spec.dim();
    require(beta.rows() == d && beta.cols() == d, "rate coefficients must be d x d");
    return Policy("affine-rate", d, AffineRateRule{beta, spec.actions().lower(), spec.actions().upper()});
}

/// Policy from a trained network. With `value_gradient` the network must be
/// the scalar value network and its input gradient replaces G.
inline Policy learned_policy(const ProblemSpec& spec, const Mlp& net, bool value_gradient = false) {
    const Eigen::Index d = spec.dim();
    require(net.input_dim() == d, "network input dimension does not match the problem");
    require(value_gradient ? net.output_dim() == 1 : net.output_dim() == d, "network output has the wrong dimension");
    return Policy(value_gradient ? "learned-value-gradient" : "learned", d,
                  NetworkRule{std::make_shared<const Mlp>(net), std::make_shared<const ProblemSpec>(spec),
                              value_gradient});
}

/// Applies one-dimensional optimal policies coordinatewise (exact for d = 1 and
/// for independent parallel queues).
inline Policy analytic_policy(const ProblemSpec& spec, const std::vector<Analytic1DSolution>& solutions) {
    require(static_cast<Eigen::Index>(solutions.size()) == spec.dim(), "need one analytic solution per coordinate");
    AnalyticRule rule{{}, spec.actions().lower(), spec.actions().upper()};
    for (const auto& s : solutions) rule.solutions.push_back(std::make_shared<const Analytic1DSolution>(s));
    return Policy("analytic", spec.dim(), std::move(rule));
}

/// Analytic solution for one coordinate of a problem whose R and A are diagonal
/// in that coordinate; reads (a, b, c, h, r) or (a, alpha, nominal, h) off the
/// spec.
inline Analytic1DSolution analytic_solution_for(const ProblemSpec& spec, Eigen::Index k) {
    const double a = spec.covariance().matrix()(k, k);
    const double h = spec.cost().holding(k);
    const double lo = spec.actions().lower()(k);
    const double hi = spec.actions().upper()(k);
    if (spec.cost().kind == CostKind::Linear) {
        require(lo == 0.0, "analytic linear solutions assume a zero lower drift");
        const double c = spec.cost().price(k);
        if (spec.objective().is_discounted()) return discounted_linear_1d(a, hi, c, h, spec.objective().rate);
        return ergodic_linear_1d(a, hi, c, h);
    }
    require(!spec.objective().is_discounted(), "no analytic solution for discounted quadratic problems");
    require(std::abs(lo - spec.cost().nominal(k)) < 1e-12, "analytic quadratic solution assumes lower = nominal drift");
    return ergodic_quadratic_1d(a, spec.cost().alpha(k), spec.cost().nominal(k), h);
}

/// Benchmark for problems that decouple across coordinates (R and A diagonal).
inline Policy analytic_policy(const ProblemSpec& spec) {
    const Matrix& r = spec.reflection().matrix();
    const Matrix& a = spec.covariance().matrix();
    const Eigen::Index d = spec.dim();
    require((r - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() == 0.0 &&
                (a - Matrix(a.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0,
            "analytic policies need decoupled coordinates (R = I, diagonal A)");
    std::vector<Analytic1DSolution> sols;
    for (Eigen::Index k = 0; k < d; ++k) sols.push_back(analytic_solution_for(spec, k));
    return analytic_policy(spec, sols);
}

}  // namespace rbmdc
