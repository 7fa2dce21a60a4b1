#pragma once

#include "rbmdc/core/types.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <vector>

namespace rbmdc {

enum class Analytic1DKind { ErgodicLinear, DiscountedLinear, ErgodicQuadratic };

/// Parameters of a one-dimensional test problem: variance a, drift cap b,
/// control price c, holding rate h, discount rate r, and for quadratic cost
/// the coefficient alpha and nominal drift.
struct OneDimParams {
    double a = 1.0;
    double b = 2.0;
    double c = 1.0;
    double h = 2.0;
    double r = 0.0;
    double alpha = 1.0;
    double nominal = 1.0;
};

/// Trajectory of the Riccati ODE stored for cubic Hermite interpolation.
struct RiccatiTrajectory {
    std::vector<double> z;
    std::vector<double> f;
    std::vector<double> df;

    [[nodiscard]] double eval(double x) const {
        if (x <= z.front()) return f.front();
        if (x >= z.back()) return f.back();
        const auto it = std::upper_bound(z.begin(), z.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - z.begin()) - 1;
        const double dz = z[i + 1] - z[i];
        const double t = (x - z[i]) / dz;
        const double t2 = t * t;
        const double t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * f[i] + (t3 - 2 * t2 + t) * dz * df[i] + (-2 * t3 + 3 * t2) * f[i + 1] +
               (t3 - t2) * dz * df[i + 1];
    }
};

/// Closed-form or numerically solved optimum of a one-dimensional problem.
/// `derivative(z)` is v'(z) (ergodic) or V'(z) (discounted); for the quadratic
/// case it is f(z) = v'(z) from the Riccati equation.
class Analytic1DSolution {
public:
    Analytic1DKind kind = Analytic1DKind::ErgodicLinear;
    OneDimParams params;
    std::optional<double> threshold;     // z*
    std::optional<double> average_cost;  // xi*
    std::optional<double> c1;
    std::optional<double> c2;
    /// Quadratic case: f is taken from the integrated trajectory up to this
    /// point and from the quasi-steady branch beyond it.
    double reliable_until = std::numeric_limits<double>::infinity();

    [[nodiscard]] double derivative(double z) const {
        const OneDimParams& p = params;
        switch (kind) {
            case Analytic1DKind::ErgodicLinear: {
                const double root = ergodic_root(p);
                if (z < *threshold) return (2.0 / std::sqrt(p.a)) * root * z - (p.h / p.a) * z * z;
                return (p.h / p.b) * z + p.h * p.a / (2.0 * p.b * p.b) - (std::sqrt(p.a) / p.b) * root + p.c;
            }
            case Analytic1DKind::DiscountedLinear: {
                const double s = std::sqrt(2.0 * p.r / p.a);
                if (!threshold || z < *threshold) {
                    return -(p.h / p.r) * std::exp(-s * z) + p.h / p.r + 2.0 * c1.value_or(0.0) * s * std::sinh(s * z);
                }
                const double lam = discounted_exponent(p);
                return p.h / p.r + *c2 * lam * std::exp(lam * z);
            }
            case Analytic1DKind::ErgodicQuadratic: {
                if (z <= reliable_until) return trajectory_->eval(z);
                return quasi_steady(z) + tail_offset_;
            }
        }
        return 0.0;
    }

    [[nodiscard]] double second_derivative(double z) const {
        const OneDimParams& p = params;
        switch (kind) {
            case Analytic1DKind::ErgodicLinear: {
                if (z < *threshold) return (2.0 / std::sqrt(p.a)) * ergodic_root(p) - 2.0 * (p.h / p.a) * z;
                return p.h / p.b;
            }
            case Analytic1DKind::DiscountedLinear: {
                const double s = std::sqrt(2.0 * p.r / p.a);
                if (!threshold || z < *threshold) {
                    return (p.h * s / p.r) * std::exp(-s * z) + 2.0 * c1.value_or(0.0) * s * s * std::cosh(s * z);
                }
                const double lam = discounted_exponent(p);
                return *c2 * lam * lam * std::exp(lam * z);
            }
            case Analytic1DKind::ErgodicQuadratic: {
                const double f = derivative(z);
                return (2.0 / p.a) * (*average_cost - p.h * z + f * f / (4.0 * p.alpha) + p.nominal * f);
            }
        }
        return 0.0;
    }

    /// Discounted value V(z); only defined for the discounted linear case.
    [[nodiscard]] double value(double z) const {
        require(kind == Analytic1DKind::DiscountedLinear, "value(z) is only available for discounted problems");
        const OneDimParams& p = params;
        const double s = std::sqrt(2.0 * p.r / p.a);
        if (!threshold || z < *threshold) {
            return (p.h / (p.r * s)) * std::exp(-s * z) + p.h * z / p.r + 2.0 * c1.value_or(0.0) * std::cosh(s * z);
        }
        const double lam = discounted_exponent(p);
        return (-p.b * p.h + p.b * p.r * p.c + p.h * p.r * z) / (p.r * p.r) + *c2 * std::exp(lam * z);
    }

    /// Optimal drift in state z, clipped to [lower, upper].
    [[nodiscard]] double policy(double z, double lower, double upper) const {
        if (kind == Analytic1DKind::ErgodicQuadratic) {
            return std::clamp(params.nominal + derivative(z) / (2.0 * params.alpha), lower, upper);
        }
        return (threshold && z >= *threshold) ? upper : lower;
    }

    static double ergodic_root(const OneDimParams& p) {
        return std::sqrt(p.c * p.h + p.a * p.h * p.h / (4.0 * p.b * p.b));
    }
    static double discounted_exponent(const OneDimParams& p) {
        return (p.b - std::sqrt(p.b * p.b + 2.0 * p.r * p.a)) / p.a;
    }

    [[nodiscard]] double quasi_steady(double z) const {
        const OneDimParams& p = params;
        const double inner = std::max(p.h * z - *average_cost + p.alpha * p.nominal * p.nominal, 0.0);
        return -2.0 * p.alpha * p.nominal + 2.0 * std::sqrt(p.alpha * inner);
    }

    std::shared_ptr<const RiccatiTrajectory> trajectory_;
    double tail_offset_ = 0.0;
};

inline void check_positive(std::initializer_list<double> values, const char* what) {
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + ": parameters must be positive");
    }
}

/// Ergodic problem, linear cost, Theta = [0, b]:
///   xi* = sqrt(a (c h + a h^2 / 4b^2)),  z* = xi*/h - a/(2b).
inline Analytic1DSolution ergodic_linear_1d(double a, double b, double c, double h) {
    check_positive({a, b, c, h}, "ergodic_linear_1d");
    Analytic1DSolution sol;
    sol.kind = Analytic1DKind::ErgodicLinear;
    sol.params = {a, b, c, h, 0.0, 1.0, 0.0};
    const double xi = std::sqrt(a) * Analytic1DSolution::ergodic_root(sol.params);
    sol.average_cost = xi;
    sol.threshold = xi / h - a / (2.0 * b);
    return sol;
}

namespace detail {

/// Residuals of V1'(z) = c and V1''(z) = K in the unknowns (C1, z).
struct PastingSystem {
    double a, b, c, h, r, s, k_target;

    [[nodiscard]] std::array<double, 2> residual(double c1, double z) const {
        const double e = std::exp(-s * z);
        return {-(h / r) * e + h / r + 2.0 * c1 * s * std::sinh(s * z) - c,
                (h * s / r) * e + 2.0 * c1 * s * s * std::cosh(s * z) - k_target};
    }
    [[nodiscard]] std::array<double, 4> jacobian(double c1, double z) const {
        const double e = std::exp(-s * z);
        return {2.0 * s * std::sinh(s * z), (h * s / r) * e + 2.0 * c1 * s * s * std::cosh(s * z),
                2.0 * s * s * std::cosh(s * z), -(h * s * s / r) * e + 2.0 * c1 * s * s * s * std::sinh(s * z)};
    }
    /// C1 eliminated through V1'(z) = c.
    [[nodiscard]] double c1_for(double z) const {
        return (c - h / r + (h / r) * std::exp(-s * z)) / (2.0 * s * std::sinh(s * z));
    }
    [[nodiscard]] double reduced(double z) const { return residual(c1_for(z), z)[1]; }
};

inline std::optional<std::array<double, 2>> pasting_newton(const PastingSystem& sys, double z0) {
    double c1 = 0.0;
    double z = z0;
    auto norm = [](const std::array<double, 2>& f) { return std::hypot(f[0], f[1]); };
    auto f = sys.residual(c1, z);
    for (int it = 0; it < 100; ++it) {
        if (norm(f) < 1e-14 * std::max(1.0, sys.c + sys.k_target)) return std::array<double, 2>{c1, z};
        const auto j = sys.jacobian(c1, z);
        const double det = j[0] * j[3] - j[1] * j[2];
        if (det == 0.0 || !std::isfinite(det)) return std::nullopt;
        const double dc1 = (f[0] * j[3] - f[1] * j[1]) / det;
        const double dz = (j[0] * f[1] - j[2] * f[0]) / det;
        double step = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
            const double nz = z - step * dz;
            if (nz <= 0.0) continue;
            const double nc1 = c1 - step * dc1;
            const auto nf = sys.residual(nc1, nz);
            if (std::isfinite(nf[0]) && std::isfinite(nf[1]) && norm(nf) < norm(f)) {
                c1 = nc1;
                z = nz;
                f = nf;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    if (norm(f) < 1e-10 * std::max(1.0, sys.c + sys.k_target)) return std::array<double, 2>{c1, z};
    return std::nullopt;
}

inline std::optional<double> pasting_bisection(const PastingSystem& sys) {
    // Scan for a sign change of the reduced equation, then bisect.
    double lo = 1e-9;
    double f_lo = sys.reduced(lo);
    for (double hi = 1e-3; hi < 1e4; hi *= 1.25) {
        const double f_hi = sys.reduced(hi);
        if (!std::isfinite(f_hi)) break;
        if ((f_lo < 0.0) != (f_hi < 0.0)) {
            for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double f_mid = sys.reduced(mid);
                if ((f_mid < 0.0) == (f_lo < 0.0)) {
                    lo = mid;
                    f_lo = f_mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        lo = hi;
        f_lo = f_hi;
    }
    return std::nullopt;
}

}  // namespace detail

/// Discounted problem, linear cost, Theta = [0, b]. When h <= r c the optimal
/// drift is identically 0; otherwise z* and C1 solve the smooth-pasting
/// conditions V1'(z*) = c, V1''(z*) = (h - rc)(sqrt(b^2 + 2ra) - b)/(ra), and
/// C2 follows from V2'(z*) = c.
inline Analytic1DSolution discounted_linear_1d(double a, double b, double c, double h, double r) {
    check_positive({a, b, c, h, r}, "discounted_linear_1d");
    Analytic1DSolution sol;
    sol.kind = Analytic1DKind::DiscountedLinear;
    sol.params = {a, b, c, h, r, 1.0, 0.0};
    if (h <= r * c) {
        sol.c1 = 0.0;
        return sol;
    }
    const double root = std::sqrt(b * b + 2.0 * r * a);
    detail::PastingSystem sys{a, b, c, h, r, std::sqrt(2.0 * r / a), (h - r * c) * (root - b) / (r * a)};
    const double z_guess = std::max(ergodic_linear_1d(a, b, c, h).threshold.value(), 1e-3);
    auto solved = detail::pasting_newton(sys, z_guess);
    if (!solved) {
        const auto z = detail::pasting_bisection(sys);
        if (!z) throw NumericalError("discounted_linear_1d: smooth-pasting system did not converge");
        solved = std::array<double, 2>{sys.c1_for(*z), *z};
    }
    const double z_star = (*solved)[1];
    const double lam = Analytic1DSolution::discounted_exponent(sol.params);
    sol.c1 = (*solved)[0];
    sol.threshold = z_star;
    sol.c2 = (c - h / r) / (lam * std::exp(lam * z_star));
    return sol;
}

namespace detail {

enum class RiccatiOutcome { Up, Down };

/// Integrates f' = (2/a)(xi - h z + f^2/(4 alpha) + nominal f), f(0) = 0 with
/// an adaptive Dormand-Prince stepper and classifies the trajectory by the
/// direction in which it leaves the polynomial-growth branch.
inline RiccatiOutcome integrate_riccati(const OneDimParams& p, double xi, double z_max,
                                        RiccatiTrajectory* record = nullptr) {
    using State = std::array<double, 1>;
    namespace odeint = boost::numeric::odeint;
    auto rhs = [&](const State& f, State& df, double z) {
        df[0] = (2.0 / p.a) * (xi - p.h * z + f[0] * f[0] / (4.0 * p.alpha) + p.nominal * f[0]);
    };
    auto stepper = odeint::make_controlled(1e-12, 1e-12, odeint::runge_kutta_dopri5<State>());
    const double up_limit = 10.0 * p.h * z_max;
    const double down_limit = -10.0;
    const double max_dz = 0.01;
    State f{0.0};
    double z = 0.0;
    double dz = 1e-4;
    auto push = [&](double zz, const State& ff) {
        if (!record) return;
        State d;
        rhs(ff, d, zz);
        record->z.push_back(zz);
        record->f.push_back(ff[0]);
        record->df.push_back(d[0]);
    };
    push(z, f);
    while (z < z_max) {
        dz = std::min({dz, max_dz, z_max - z});
        const double z_before = z;
        if (stepper.try_step(rhs, f, z, dz) == odeint::fail) {
            if (dz < 1e-14) throw NumericalError("Riccati integration step size underflow");
            continue;
        }
        if (z > z_before) push(z, f);
        if (!std::isfinite(f[0]) || f[0] > up_limit) return RiccatiOutcome::Up;
        if (f[0] < down_limit) return RiccatiOutcome::Down;
    }
    return RiccatiOutcome::Down;
}

}  // namespace detail

/// Ergodic problem with quadratic cost alpha (theta - nominal)^2 + h z and no
/// upper drift limit. Bisects on xi for the value at which the Riccati
/// trajectory switches from diverging down to diverging up.
inline Analytic1DSolution ergodic_quadratic_1d(double a, double alpha, double nominal, double h,
                                               double z_max = 50.0) {
    check_positive({a, alpha, nominal, h, z_max}, "ergodic_quadratic_1d");
    Analytic1DSolution sol;
    sol.kind = Analytic1DKind::ErgodicQuadratic;
    sol.params = {a, std::numeric_limits<double>::infinity(), 0.0, h, 0.0, alpha, nominal};
    const OneDimParams& p = sol.params;
    double lo = 0.0;
    double hi = 10.0 * std::sqrt(a * h * alpha) + h * z_max;
    if (detail::integrate_riccati(p, lo, z_max) != detail::RiccatiOutcome::Down ||
        detail::integrate_riccati(p, hi, z_max) != detail::RiccatiOutcome::Up) {
        std::ostringstream msg;
        msg << "ergodic_quadratic_1d: no bracket for xi in [" << lo << ", " << hi << "]";
        throw NumericalError(msg.str());
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::integrate_riccati(p, mid, z_max) == detail::RiccatiOutcome::Up) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    sol.average_cost = 0.5 * (lo + hi);

    auto upper = std::make_shared<RiccatiTrajectory>();
    RiccatiTrajectory lower;
    detail::integrate_riccati(p, hi, z_max, upper.get());
    detail::integrate_riccati(p, lo, z_max, &lower);
    // Trust the trajectory while the two bracketing solutions agree.
    double reliable = 0.0;
    for (std::size_t i = 0; i < upper->z.size(); ++i) {
        const double zz = upper->z[i];
        if (zz > lower.z.back()) break;
        if (std::abs(upper->f[i] - lower.eval(zz)) > 1e-7) break;
        reliable = zz;
    }
    sol.reliable_until = reliable;
    sol.trajectory_ = upper;
    sol.tail_offset_ = upper->eval(reliable) - sol.quasi_steady(reliable);
    return sol;
}

}  // namespace rbmdc
