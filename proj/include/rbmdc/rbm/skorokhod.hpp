#pragma once

#include "rbmdc/core/types.hpp"
#include "rbmdc/rbm/matrices.hpp"

#include <sstream>
#include <vector>

namespace rbmdc {

inline constexpr double kSkorokhodTolerance = 1e-8;

struct SkorokhodResult {
    Vector y;  // reflected point, y = x + R u
    Vector u;  // push applied on each face, u >= 0
    int iterations = 0;
};

/// Solves the one-step Skorokhod problem (a linear complementarity problem)
/// by the active-set iteration: while some y_i < -eps, take B = {i : y_i < eps},
/// solve R_BB L_B = -x_B and set y = x + R_{:,B} L_B. The pass always starts
/// from the original x, and B is recomputed from the latest y.
///
/// Writes y over `x` in place and the push into `u`. Returns the number of
/// active-set passes (0 when x is already feasible).
inline int reflect_in_place(Eigen::Ref<Vector> x, Eigen::Ref<Vector> u, const ReflectionMatrix& r,
                            double eps = kSkorokhodTolerance) {
    const Eigen::Index d = x.size();
    u.setZero();
    if (x.minCoeff() >= -eps) return 0;
    if (d == 1) {
        u(0) = -x(0);
        x(0) = 0.0;
        return 1;
    }

    const Matrix& rm = r.matrix();
    const Vector x0 = x;
    Vector y = x0;
    std::vector<Eigen::Index> active;
    Vector l_active;
    const int max_passes = 100 * static_cast<int>(d);
    int passes = 0;
    while (y.minCoeff() < -eps) {
        if (++passes > max_passes) {
            std::ostringstream msg;
            msg << "Skorokhod iteration did not converge after " << max_passes
                << " passes (ill-conditioned reflection matrix?)";
            throw NumericalError(msg.str());
        }
        active.clear();
        for (Eigen::Index i = 0; i < d; ++i) {
            if (y(i) < eps) active.push_back(i);
        }
        const auto m = static_cast<Eigen::Index>(active.size());
        Matrix r_bb(m, m);
        Vector rhs(m);
        for (Eigen::Index a = 0; a < m; ++a) {
            rhs(a) = -x0(active[static_cast<std::size_t>(a)]);
            for (Eigen::Index b = 0; b < m; ++b) {
                r_bb(a, b) = rm(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(b)]);
            }
        }
        Eigen::FullPivLU<Matrix> lu(r_bb);
        if (!lu.isInvertible()) throw NumericalError("singular active-set submatrix in Skorokhod iteration");
        l_active = lu.solve(rhs);
        y = x0;
        for (Eigen::Index b = 0; b < m; ++b) {
            y += rm.col(active[static_cast<std::size_t>(b)]) * l_active(b);
        }
    }
    for (std::size_t b = 0; b < active.size(); ++b) {
        u(active[b]) = l_active(static_cast<Eigen::Index>(b));
    }
    x = y;
    return passes;
}

inline SkorokhodResult solve_skorokhod(const Vector& x, const ReflectionMatrix& r,
                                       double eps = kSkorokhodTolerance) {
    require(x.size() == r.dim(), "solve_skorokhod: dimension mismatch");
    require(eps > 0.0, "solve_skorokhod: tolerance must be positive");
    SkorokhodResult out{x, Vector::Zero(x.size()), 0};
    out.iterations = reflect_in_place(out.y, out.u, r, eps);
    return out;
}

}  // namespace rbmdc
