#pragma once

#include "rbmdc/core/parallel.hpp"
#include "rbmdc/core/rng.hpp"
#include "rbmdc/core/types.hpp"
#include "rbmdc/policies/policy.hpp"
#include "rbmdc/problems/problem.hpp"
#include "rbmdc/rbm/paths.hpp"
#include "rbmdc/rbm/skorokhod.hpp"

#include <cmath>
#include <vector>

namespace rbmdc {

enum class EvalMode { ErgodicAverage, DiscountedFromZero };

inline const char* eval_mode_name(EvalMode m) {
    return m == EvalMode::ErgodicAverage ? "ergodic-average" : "discounted-from-zero";
}

struct EvalSettings {
    Eigen::Index paths = 64;
    double horizon = 1100.0;  // total simulated time per path
    double burn_in = 100.0;   // ergodic only: discarded prefix
    double step = 0.1 / 64;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    Eigen::Index chunk = 64;  // paths simulated together
};

struct EvalReport {
    EvalMode mode = EvalMode::ErgodicAverage;
    double mean = 0.0;
    double stderr_ = 0.0;
    Eigen::Index n_paths = 0;
    double horizon = 0.0;
    double burn_in = 0.0;
    double step = 0.0;
    std::uint64_t seed = 0;
    double tail_bound = 0.0;  // discounted: e^{-rT} * mean terminal cost rate / r
    Vector samples;           // one estimate per path
};

inline EvalMode eval_mode_for(const ProblemSpec& spec) {
    return spec.objective().is_discounted() ? EvalMode::DiscountedFromZero : EvalMode::ErgodicAverage;
}

/// Ergodic: replicated long paths of 1100 time units with the first 100
/// discarded. Discounted: paths from zero truncated at 15/r.
inline EvalSettings default_eval_settings(const ProblemSpec& spec, double step = 0.1 / 64) {
    EvalSettings s;
    s.step = step;
    if (spec.objective().is_discounted()) {
        s.paths = 2000;
        s.horizon = 15.0 / spec.objective().rate;
        s.burn_in = 0.0;
    }
    return s;
}

/// Simulates the controlled RBM under `policy` with the drift held fixed over
/// each step and returns the mean cost with its standard error across paths.
/// Path i uses the random substream {seed, evaluation, 0, i}, so two policies
/// evaluated with the same settings share their Brownian increments.
inline EvalReport evaluate_policy(const ProblemSpec& spec, const Policy& policy, const EvalSettings& settings) {
    const Eigen::Index d = spec.dim();
    require(policy.dim() == d, "policy dimension does not match the problem");
    require(settings.paths >= 1, "evaluation needs at least one path");
    require(settings.chunk >= 1, "chunk size must be positive");
    const EvalMode mode = eval_mode_for(spec);
    const bool discounted = mode == EvalMode::DiscountedFromZero;
    const double h = settings.step;
    const Eigen::Index steps = step_count(settings.horizon, h);
    Eigen::Index burn_steps = 0;
    if (!discounted) {
        require(settings.burn_in >= 0.0 && settings.burn_in < settings.horizon, "burn-in must be shorter than the horizon");
        burn_steps = settings.burn_in > 0.0 ? step_count(settings.burn_in, h) : 0;
    }
    const double r = discounted ? spec.objective().rate : 0.0;
    const double decay = std::exp(-r * h);
    const ReflectionMatrix& refl = spec.reflection();
    const Matrix chol = std::sqrt(h) * spec.covariance().cholesky();
    const bool diagonal = spec.covariance().is_diagonal();
    const Vector chol_diag = chol.diagonal();
    const Vector& kappa = spec.boundary_penalty();
    const bool has_kappa = kappa.any();

    EvalReport report;
    report.mode = mode;
    report.n_paths = settings.paths;
    report.horizon = settings.horizon;
    report.burn_in = discounted ? 0.0 : settings.burn_in;
    report.step = h;
    report.seed = settings.seed;
    report.samples.resize(settings.paths);
    Vector tails = Vector::Zero(settings.paths);

    for_each_chunk(
        static_cast<std::size_t>(settings.paths), static_cast<std::size_t>(settings.chunk), settings.workers,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            const auto m = static_cast<Eigen::Index>(end - begin);
            std::vector<RandomStream> rngs;
            rngs.reserve(static_cast<std::size_t>(m));
            for (std::size_t p = begin; p < end; ++p) {
                rngs.emplace_back(StreamKey{settings.seed, stream_purpose::evaluation, 0, p});
            }
            Matrix z = Matrix::Zero(d, m);
            Matrix theta;
            Vector acc = Vector::Zero(m);
            Vector x(d), u(d), normals(d);
            double weight = 1.0;
            for (Eigen::Index n = 0; n < steps; ++n) {
                policy.act(z, theta);
                const bool counted = discounted || n >= burn_steps;
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (counted) acc(i) += weight * h * cost(spec, z.col(i), theta.col(i), false);
                    for (Eigen::Index k = 0; k < d; ++k) normals(k) = rngs[static_cast<std::size_t>(i)].normal();
                    if (diagonal) {
                        x = z.col(i) + chol_diag.cwiseProduct(normals) - h * theta.col(i);
                    } else {
                        x.noalias() = chol.triangularView<Eigen::Lower>() * normals;
                        x += z.col(i) - h * theta.col(i);
                    }
                    reflect_in_place(x, u, refl, kSkorokhodTolerance);
                    z.col(i) = x;
                    if (has_kappa && counted) acc(i) += weight * kappa.dot(u);
                }
                if (discounted) weight *= decay;
            }
            if (discounted) {
                policy.act(z, theta);
                const double tail_factor = std::exp(-r * settings.horizon) / r;
                for (Eigen::Index i = 0; i < m; ++i) {
                    tails(static_cast<Eigen::Index>(begin) + i) = tail_factor * cost(spec, z.col(i), theta.col(i), false);
                }
            } else {
                acc /= settings.horizon - settings.burn_in;
            }
            report.samples.segment(static_cast<Eigen::Index>(begin), m) = acc;
        });

    const double n = static_cast<double>(settings.paths);
    report.mean = report.samples.mean();
    if (settings.paths >= 2) {
        const double var = (report.samples.array() - report.mean).square().sum() / (n - 1.0);
        report.stderr_ = std::sqrt(var / n);
    }
    report.tail_bound = discounted ? tails.mean() : 0.0;
    if (!std::isfinite(report.mean)) throw NumericalError("policy evaluation produced a non-finite cost");
    return report;
}

}  // namespace rbmdc
