#pragma once

#include "rbmdc/core/parallel.hpp"
#include "rbmdc/core/rng.hpp"
#include "rbmdc/core/types.hpp"
#include "rbmdc/rbm/matrices.hpp"
#include "rbmdc/rbm/skorokhod.hpp"

#include <cmath>
#include <sstream>

namespace rbmdc {

/// Number of Euler steps for horizon T and step h; T/h must be integral.
inline Eigen::Index step_count(double horizon, double step) {
    require(horizon > 0.0 && step > 0.0, "horizon and step must be positive");
    const double ratio = horizon / step;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg << "horizon " << horizon << " is not an integer multiple of step " << step;
        throw ConfigError(msg.str());
    }
    return static_cast<Eigen::Index>(rounded);
}

/// A batch of discretized reference paths. Column layout (one column per
/// d-vector, paths contiguous):
///   z:  path i, time n  -> column i*(N+1) + n,  n = 0..N
///   dy: path i, step n  -> column i*N + n,      n = 0..N-1
///   dw: path i, step n  -> column i*N + n
/// and z(n+1) = z(n) + dw(n) - theta_ref*h + R dy(n).
struct PathBatch {
    Eigen::Index batch = 0;
    Eigen::Index steps = 0;
    Eigen::Index dim = 0;
    double h = 0.0;
    Matrix z;
    Matrix dy;
    Matrix dw;

    [[nodiscard]] Eigen::Index state_col(Eigen::Index path, Eigen::Index n) const { return path * (steps + 1) + n; }
    [[nodiscard]] Eigen::Index step_col(Eigen::Index path, Eigen::Index n) const { return path * steps + n; }
    [[nodiscard]] auto state(Eigen::Index path, Eigen::Index n) const { return z.col(state_col(path, n)); }
    [[nodiscard]] auto push(Eigen::Index path, Eigen::Index n) const { return dy.col(step_col(path, n)); }
    [[nodiscard]] auto increment(Eigen::Index path, Eigen::Index n) const { return dw.col(step_col(path, n)); }
    [[nodiscard]] double horizon() const { return h * static_cast<double>(steps); }

    /// Terminal states as a d x B matrix.
    [[nodiscard]] Matrix terminal_states() const {
        Matrix out(dim, batch);
        for (Eigen::Index i = 0; i < batch; ++i) out.col(i) = state(i, steps);
        return out;
    }
    [[nodiscard]] Matrix initial_states() const {
        Matrix out(dim, batch);
        for (Eigen::Index i = 0; i < batch; ++i) out.col(i) = state(i, 0);
        return out;
    }
};

namespace detail {

inline void run_reference_path(PathBatch& out, Eigen::Index path, const ReflectionMatrix& r,
                               const Vector& drift_step, const Vector& start, double eps) {
    out.z.col(out.state_col(path, 0)) = start;
    Vector x(out.dim);
    Vector u(out.dim);
    for (Eigen::Index n = 0; n < out.steps; ++n) {
        x = out.z.col(out.state_col(path, n)) + out.dw.col(out.step_col(path, n)) - drift_step;
        reflect_in_place(x, u, r, eps);
        out.z.col(out.state_col(path, n + 1)) = x;
        out.dy.col(out.step_col(path, n)) = u;
    }
}

inline void check_starts(const Matrix& z0, Eigen::Index d) {
    require(z0.rows() == d, "starting states have the wrong dimension");
    require(z0.cols() >= 1, "at least one starting state is required");
    require(z0.allFinite() && z0.minCoeff() >= 0.0, "starting states must be finite and nonnegative");
}

}  // namespace detail

/// Runs the Euler/Skorokhod recursion with caller-supplied Brownian increments
/// `dw` (d x B*N, layout as in PathBatch). Used directly by tests that force
/// specific increments.
inline PathBatch simulate_with_increments(const ReflectionMatrix& r, const Vector& theta_ref, const Matrix& z0,
                                          double h, const Matrix& dw, double eps = kSkorokhodTolerance) {
    const Eigen::Index d = r.dim();
    detail::check_starts(z0, d);
    require(theta_ref.size() == d, "reference drift has the wrong dimension");
    require(dw.rows() == d && dw.cols() % z0.cols() == 0, "increment matrix has the wrong shape");
    PathBatch out;
    out.batch = z0.cols();
    out.steps = dw.cols() / z0.cols();
    out.dim = d;
    out.h = h;
    out.dw = dw;
    out.z.resize(d, out.batch * (out.steps + 1));
    out.dy.resize(d, out.batch * out.steps);
    const Vector drift_step = theta_ref * h;
    for (Eigen::Index i = 0; i < out.batch; ++i) detail::run_reference_path(out, i, r, drift_step, z0.col(i), eps);
    return out;
}

/// Simulates B reference paths under the constant drift -theta_ref. Path i
/// draws its Gaussian increments (covariance h*A, via the Cholesky factor)
/// from the substream {key.seed, key.purpose, key.block, i}.
inline PathBatch simulate_reference_paths(const ReflectionMatrix& r, const CovarianceMatrix& a,
                                          const Vector& theta_ref, const Matrix& z0, double horizon,
                                          double h, const StreamKey& key, unsigned workers = 1,
                                          double eps = kSkorokhodTolerance) {
    const Eigen::Index d = r.dim();
    require(a.dim() == d, "covariance and reflection matrices differ in dimension");
    require(theta_ref.size() == d, "reference drift has the wrong dimension");
    detail::check_starts(z0, d);
    PathBatch out;
    out.batch = z0.cols();
    out.steps = step_count(horizon, h);
    out.dim = d;
    out.h = h;
    out.z.resize(d, out.batch * (out.steps + 1));
    out.dy.resize(d, out.batch * out.steps);
    out.dw.resize(d, out.batch * out.steps);
    const Matrix scaled_chol = std::sqrt(h) * a.cholesky();
    const Vector drift_step = theta_ref * h;
    for_each_chunk(static_cast<std::size_t>(out.batch), 16, workers,
                   [&](std::size_t, std::size_t begin, std::size_t end) {
                       Vector normals(d);
                       for (std::size_t p = begin; p < end; ++p) {
                           const auto i = static_cast<Eigen::Index>(p);
                           RandomStream rng(StreamKey{key.seed, key.purpose, key.block, p});
                           for (Eigen::Index n = 0; n < out.steps; ++n) {
                               for (Eigen::Index k = 0; k < d; ++k) normals(k) = rng.normal();
                               out.dw.col(out.step_col(i, n)).noalias() =
                                   scaled_chol.triangularView<Eigen::Lower>() * normals;
                           }
                           detail::run_reference_path(out, i, r, drift_step, z0.col(i), eps);
                       }
                   });
    return out;
}

}  // namespace rbmdc
