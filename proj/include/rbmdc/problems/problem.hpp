#pragma once

#include "rbmdc/core/types.hpp"
#include "rbmdc/rbm/matrices.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace rbmdc {

/// Box of admissible drift rates, [lower_k, upper_k] per coordinate.
class ActionBox {
public:
    ActionBox(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
        require(lower_.size() == upper_.size() && lower_.size() > 0, "action box bounds differ in dimension");
        require(lower_.allFinite() && upper_.allFinite(), "action box must be bounded");
        require((lower_.array() <= upper_.array()).all(), "action box requires lower <= upper");
    }
    static ActionBox uniform(Eigen::Index d, double lower, double upper) {
        return {Vector::Constant(d, lower), Vector::Constant(d, upper)};
    }

    [[nodiscard]] Eigen::Index dim() const { return lower_.size(); }
    [[nodiscard]] const Vector& lower() const { return lower_; }
    [[nodiscard]] const Vector& upper() const { return upper_; }
    [[nodiscard]] bool contains(const Vector& theta, double tol = 1e-12) const {
        return theta.size() == dim() && (theta.array() >= lower_.array() - tol).all() &&
               (theta.array() <= upper_.array() + tol).all();
    }

private:
    Vector lower_;
    Vector upper_;
};

enum class CostKind { Linear, Quadratic };

/// Linear:    c(z, theta) = h.z + c.theta
/// Quadratic: c(z, theta) = sum_k alpha_k (theta_k - nominal_k)^2 + h.z
struct CostSpec {
    CostKind kind = CostKind::Linear;
    Vector holding;   // h >= 0
    Vector price;     // c >= 0 (linear)
    Vector alpha;     // alpha > 0 (quadratic)
    Vector nominal;   // nominal drift (quadratic)

    static CostSpec linear(Vector h, Vector c) {
        CostSpec s;
        s.kind = CostKind::Linear;
        s.holding = std::move(h);
        s.price = std::move(c);
        s.validate();
        return s;
    }
    static CostSpec quadratic(Vector h, Vector alpha, Vector nominal) {
        CostSpec s;
        s.kind = CostKind::Quadratic;
        s.holding = std::move(h);
        s.alpha = std::move(alpha);
        s.nominal = std::move(nominal);
        s.validate();
        return s;
    }

    [[nodiscard]] Eigen::Index dim() const { return holding.size(); }

    void validate() const {
        require(holding.size() > 0 && holding.allFinite() && holding.minCoeff() >= 0.0,
                "holding cost rates must be finite and nonnegative");
        if (kind == CostKind::Linear) {
            require(price.size() == holding.size() && price.allFinite() && price.minCoeff() >= 0.0,
                    "linear control prices must be finite, nonnegative and match the dimension");
        } else {
            require(alpha.size() == holding.size() && alpha.allFinite() && alpha.minCoeff() > 0.0,
                    "quadratic coefficients must be positive and match the dimension");
            require(nominal.size() == holding.size() && nominal.allFinite(),
                    "nominal drift must be finite and match the dimension");
        }
    }
};

enum class ObjectiveKind { Discounted, Ergodic };

struct Objective {
    ObjectiveKind kind = ObjectiveKind::Ergodic;
    double rate = 0.0;  // discount rate r > 0 when Discounted

    static Objective discounted(double r) {
        require(r > 0.0 && std::isfinite(r), "discount rate must be positive");
        return {ObjectiveKind::Discounted, r};
    }
    static Objective ergodic() { return {ObjectiveKind::Ergodic, 0.0}; }
    [[nodiscard]] bool is_discounted() const { return kind == ObjectiveKind::Discounted; }
};

/// A complete drift-control problem for RBM on the orthant.
class ProblemSpec {
public:
    ProblemSpec(std::string name, const Matrix& reflection, const Matrix& covariance, ActionBox actions,
                CostSpec cost, Objective objective, std::optional<Vector> reference_drift = std::nullopt,
                std::optional<Vector> boundary_penalty = std::nullopt)
        : name_(std::move(name)),
          r_(validate_reflection_matrix(reflection)),
          a_(covariance),
          actions_(std::move(actions)),
          cost_(std::move(cost)),
          objective_(objective) {
        const Eigen::Index d = r_.dim();
        require(a_.dim() == d, "covariance dimension does not match reflection matrix");
        require(actions_.dim() == d, "action box dimension does not match reflection matrix");
        require(cost_.dim() == d, "cost dimension does not match reflection matrix");
        cost_.validate();
        theta_ref_ = reference_drift.value_or(Vector::Ones(d));
        kappa_ = boundary_penalty.value_or(Vector::Zero(d));
        require(theta_ref_.size() == d && theta_ref_.allFinite(), "reference drift has the wrong dimension");
        require(kappa_.size() == d && kappa_.allFinite() && kappa_.minCoeff() >= 0.0,
                "boundary penalty rates must be nonnegative");
        if (objective_.kind == ObjectiveKind::Ergodic) {
            const Vector stable = r_.inverse() * theta_ref_;
            require(stable.minCoeff() > 0.0,
                    "ergodic problems need a stable reference drift (R^{-1} theta_ref > 0 componentwise)");
        } else {
            require(objective_.rate > 0.0, "discounted problems need r > 0");
        }
    }

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] Eigen::Index dim() const { return r_.dim(); }
    [[nodiscard]] const ReflectionMatrix& reflection() const { return r_; }
    [[nodiscard]] const CovarianceMatrix& covariance() const { return a_; }
    [[nodiscard]] const ActionBox& actions() const { return actions_; }
    [[nodiscard]] const CostSpec& cost() const { return cost_; }
    [[nodiscard]] const Objective& objective() const { return objective_; }
    [[nodiscard]] const Vector& reference_drift() const { return theta_ref_; }
    [[nodiscard]] const Vector& boundary_penalty() const { return kappa_; }

    [[nodiscard]] ProblemSpec with_objective(Objective objective) const {
        return ProblemSpec(name_, r_.matrix(), a_.matrix(), actions_, cost_, objective, theta_ref_, kappa_);
    }

private:
    std::string name_;
    ReflectionMatrix r_;
    CovarianceMatrix a_;
    ActionBox actions_;
    CostSpec cost_;
    Objective objective_;
    Vector theta_ref_;
    Vector kappa_;
};

// ---------------------------------------------------------------------------
// Cost, Hamiltonian maximizer and the F-function
// ---------------------------------------------------------------------------

/// Instantaneous cost rate c(z, theta).
inline double cost(const ProblemSpec& spec, const Eigen::Ref<const Vector>& z,
                   const Eigen::Ref<const Vector>& theta, bool check_box = true) {
    const CostSpec& c = spec.cost();
    if (check_box && !spec.actions().contains(theta)) throw ConfigError("cost: action outside the action box");
    const double holding = c.holding.dot(z);
    if (c.kind == CostKind::Linear) return holding + c.price.dot(theta);
    return holding + (c.alpha.array() * (theta - c.nominal).array().square()).sum();
}

/// Maximizer of theta.x - c(z, theta) over the action box. Linear cost gives
/// the bang-bang rule (upper bound when x_k >= c_k); quadratic cost gives
/// clip(nominal + x/(2 alpha)).
inline void argmax_policy_into(const ProblemSpec& spec, const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> theta) {
    const CostSpec& c = spec.cost();
    const Vector& lo = spec.actions().lower();
    const Vector& hi = spec.actions().upper();
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (c.kind == CostKind::Linear) {
            theta(k) = x(k) >= c.price(k) ? hi(k) : lo(k);
        } else {
            theta(k) = std::clamp(c.nominal(k) + x(k) / (2.0 * c.alpha(k)), lo(k), hi(k));
        }
    }
}

inline Vector argmax_policy(const ProblemSpec& spec, const Eigen::Ref<const Vector>& /*z*/,
                            const Eigen::Ref<const Vector>& x) {
    require(x.size() == spec.dim(), "argmax_policy: gradient has the wrong dimension");
    Vector theta(x.size());
    argmax_policy_into(spec, x, theta);
    return theta;
}

struct FValue {
    double value = 0.0;
    Vector dx;  // partial derivatives with respect to x
};

/// F(z, x) = theta_ref.x - max_theta {theta.x - c(z, theta)}, with the optional
/// decay term for linear cost: - b_decay * sum_k min(x_k - c_k, 0). The
/// derivative in x follows from the envelope theorem: theta_ref - theta*(x)
/// (minus b_decay on coordinates with x_k < c_k).
inline double f_function_with_gradient(const ProblemSpec& spec, const Eigen::Ref<const Vector>& z,
                                       const Eigen::Ref<const Vector>& x, double b_decay, Eigen::Ref<Vector> dx) {
    const CostSpec& c = spec.cost();
    const Vector& lo = spec.actions().lower();
    const Vector& hi = spec.actions().upper();
    const Vector& ref = spec.reference_drift();
    double value = c.holding.dot(z);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        double best = 0.0;
        double theta = 0.0;
        if (c.kind == CostKind::Linear) {
            const double slack = x(k) - c.price(k);
            theta = slack >= 0.0 ? hi(k) : lo(k);
            best = theta * slack;
            if (slack < 0.0) {
                value -= b_decay * slack;
                dx(k) = ref(k) - theta - b_decay;
            } else {
                dx(k) = ref(k) - theta;
            }
        } else {
            theta = std::clamp(c.nominal(k) + x(k) / (2.0 * c.alpha(k)), lo(k), hi(k));
            const double dev = theta - c.nominal(k);
            best = theta * x(k) - c.alpha(k) * dev * dev;
            dx(k) = ref(k) - theta;
        }
        value += ref(k) * x(k) - best;
    }
    return value;
}

inline double f_function(const ProblemSpec& spec, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& x,
                         double b_decay = 0.0) {
    require(x.size() == spec.dim() && z.size() == spec.dim(), "f_function: dimension mismatch");
    require(b_decay >= 0.0, "f_function: decay coefficient must be nonnegative");
    Vector dx(x.size());
    return f_function_with_gradient(spec, z, x, b_decay, dx);
}

inline FValue f_function_and_gradient(const ProblemSpec& spec, const Eigen::Ref<const Vector>& z,
                                      const Eigen::Ref<const Vector>& x, double b_decay = 0.0) {
    FValue out;
    out.dx.resize(x.size());
    out.value = f_function_with_gradient(spec, z, x, b_decay, out.dx);
    return out;
}

}  // namespace rbmdc
