#pragma once

#include "rbmdc/core/parallel.hpp"
#include "rbmdc/core/types.hpp"
#include "rbmdc/neural/mlp.hpp"
#include "rbmdc/problems/problem.hpp"
#include "rbmdc/rbm/paths.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace rbmdc {

enum class LossVariant { PlainDiscounted, VarianceDiscounted, ErgodicVariance };

inline const char* loss_variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::PlainDiscounted: return "plain-discounted";
        case LossVariant::VarianceDiscounted: return "variance-discounted";
        case LossVariant::ErgodicVariance: return "ergodic-variance";
    }
    return "?";
}

inline LossVariant parse_loss_variant(const std::string& s) {
    if (s == "plain-discounted" || s == "plain") return LossVariant::PlainDiscounted;
    if (s == "variance-discounted" || s == "variance") return LossVariant::VarianceDiscounted;
    if (s == "ergodic-variance" || s == "ergodic") return LossVariant::ErgodicVariance;
    throw ConfigError("unknown loss variant '" + s + "'");
}

/// Value network V: R^d -> R, gradient network G: R^d -> R^d, and the scalar
/// offset added to V under the plain discounted loss.
struct NetworkPair {
    Mlp value;
    Mlp gradient;
    double offset = 0.0;
};

struct LossOutput {
    double loss = 0.0;
    double mean = 0.0;      // average of the per-path residuals
    Vector residuals;       // X_i
    Vector grad_value;      // dLoss/d(value params)
    Vector grad_gradient;   // dLoss/d(gradient params)
    double grad_offset = 0.0;
};

struct LossOptions {
    double b_decay = 0.0;
    bool with_gradients = true;
    unsigned workers = 1;
    Eigen::Index chunk = 16;  // paths per chunk; fixes the reduction order
};

namespace detail {

struct LossChunk {
    Eigen::Index begin = 0;
    Eigen::Index end = 0;
    ForwardCache value_cache;     // columns: Z_0 then Z_N for each path
    ForwardCache gradient_cache;  // columns: Z_j, j < N, for each path
    Matrix dx_dg;                 // dX_i/dG(Z_ij), same columns as gradient_cache
    Vector grad_value;
    Vector grad_gradient;
};

inline void check_loss_inputs(LossVariant variant, const PathBatch& batch, const NetworkPair& nets,
                              const ProblemSpec& spec) {
    const Eigen::Index d = spec.dim();
    require(batch.dim == d, "path batch dimension does not match the problem");
    require(nets.value.input_dim() == d && nets.value.output_dim() == 1, "value network must map R^d to R");
    require(nets.gradient.input_dim() == d && nets.gradient.output_dim() == d, "gradient network must map R^d to R^d");
    const bool ergodic = !spec.objective().is_discounted();
    if (ergodic) {
        require(variant == LossVariant::ErgodicVariance, "ergodic problems use the ergodic loss");
    } else {
        require(variant != LossVariant::ErgodicVariance, "discounted problems need a discounted loss");
    }
    if (variant != LossVariant::PlainDiscounted) require(batch.batch >= 2, "variance losses need at least two paths");
}

}  // namespace detail

/// Empirical loss over a batch of reference paths. Path i contributes
///   X_i = e^{-rT} V(Z_N) - V(Z_0)
///         + sum_j e^{-r h j} [kappa.dY_j - G(Z_j).dW_j + F(Z_j, G(Z_j)) h]
/// (r = 0 for ergodic problems; V includes the offset under the plain loss).
/// The plain loss is the mean of X_i^2; the variance losses use the
/// population variance of the X_i.
inline LossOutput evaluate_loss(LossVariant variant, const PathBatch& batch, const NetworkPair& nets,
                                const ProblemSpec& spec, const LossOptions& options = {}) {
    detail::check_loss_inputs(variant, batch, nets, spec);
    require(options.b_decay >= 0.0, "decay coefficient must be nonnegative");
    require(options.chunk >= 1, "chunk size must be positive");
    const Eigen::Index d = spec.dim();
    const Eigen::Index n_paths = batch.batch;
    const Eigen::Index steps = batch.steps;
    const double h = batch.h;
    const double r = spec.objective().is_discounted() ? spec.objective().rate : 0.0;
    const double terminal_weight = std::exp(-r * batch.horizon());
    const bool plain = variant == LossVariant::PlainDiscounted;
    const double offset = plain ? nets.offset : 0.0;
    const Vector& kappa = spec.boundary_penalty();
    const bool has_kappa = kappa.any();
    Vector step_weight(steps);
    for (Eigen::Index j = 0; j < steps; ++j) step_weight(j) = std::exp(-r * h * static_cast<double>(j));

    const Eigen::Index n_chunks = (n_paths + options.chunk - 1) / options.chunk;
    std::vector<detail::LossChunk> chunks(static_cast<std::size_t>(n_chunks));
    LossOutput out;
    out.residuals.resize(n_paths);

    for_each_chunk(static_cast<std::size_t>(n_paths), static_cast<std::size_t>(options.chunk), options.workers,
                   [&](std::size_t c, std::size_t b, std::size_t e) {
                       detail::LossChunk& ch = chunks[c];
                       ch.begin = static_cast<Eigen::Index>(b);
                       ch.end = static_cast<Eigen::Index>(e);
                       const Eigen::Index m = ch.end - ch.begin;
                       Matrix ends(d, 2 * m);
                       Matrix states(d, m * steps);
                       for (Eigen::Index i = 0; i < m; ++i) {
                           const Eigen::Index p = ch.begin + i;
                           ends.col(2 * i) = batch.state(p, 0);
                           ends.col(2 * i + 1) = batch.state(p, steps);
                           states.middleCols(i * steps, steps) = batch.z.middleCols(batch.state_col(p, 0), steps);
                       }
                       ch.value_cache = nets.value.forward_cached(ends);
                       ch.gradient_cache = nets.gradient.forward_cached(states);
                       const Matrix& g = ch.gradient_cache.output;
                       if (options.with_gradients) ch.dx_dg.resize(d, m * steps);
                       Vector dfdx(d);
                       for (Eigen::Index i = 0; i < m; ++i) {
                           const Eigen::Index p = ch.begin + i;
                           double x = terminal_weight * (ch.value_cache.output(0, 2 * i + 1) + offset) -
                                      (ch.value_cache.output(0, 2 * i) + offset);
                           for (Eigen::Index j = 0; j < steps; ++j) {
                               const Eigen::Index col = i * steps + j;
                               const auto gz = g.col(col);
                               const auto dw = batch.increment(p, j);
                               const double f = f_function_with_gradient(spec, states.col(col), gz,
                                                                         options.b_decay, dfdx);
                               double term = -gz.dot(dw) + f * h;
                               if (has_kappa) term += kappa.dot(batch.push(p, j));
                               x += step_weight(j) * term;
                               if (options.with_gradients) {
                                   ch.dx_dg.col(col) = step_weight(j) * (h * dfdx - dw);
                               }
                           }
                           out.residuals(p) = x;
                       }
                   });

    const double bsize = static_cast<double>(n_paths);
    out.mean = out.residuals.mean();
    Vector dldx(n_paths);
    if (plain) {
        out.loss = out.residuals.squaredNorm() / bsize;
        dldx = 2.0 * out.residuals / bsize;
    } else {
        const Vector centered = out.residuals.array() - out.mean;
        out.loss = centered.squaredNorm() / bsize;
        dldx = 2.0 * centered / bsize;
    }
    if (!std::isfinite(out.loss)) throw NumericalError("loss evaluated to a non-finite value");
    if (!options.with_gradients) return out;

    for_each_chunk(static_cast<std::size_t>(n_paths), static_cast<std::size_t>(options.chunk), options.workers,
                   [&](std::size_t c, std::size_t, std::size_t) {
                       detail::LossChunk& ch = chunks[c];
                       const Eigen::Index m = ch.end - ch.begin;
                       Matrix up_v(1, 2 * m);
                       for (Eigen::Index i = 0; i < m; ++i) {
                           const double w = dldx(ch.begin + i);
                           up_v(0, 2 * i) = -w;
                           up_v(0, 2 * i + 1) = terminal_weight * w;
                           ch.dx_dg.middleCols(i * steps, steps) *= w;
                       }
                       ch.grad_value = Vector::Zero(nets.value.num_params());
                       ch.grad_gradient = Vector::Zero(nets.gradient.num_params());
                       nets.value.backward(ch.value_cache, up_v, ch.grad_value);
                       nets.gradient.backward(ch.gradient_cache, ch.dx_dg, ch.grad_gradient);
                       ch.value_cache = ForwardCache{};
                       ch.gradient_cache = ForwardCache{};
                   });

    out.grad_value = Vector::Zero(nets.value.num_params());
    out.grad_gradient = Vector::Zero(nets.gradient.num_params());
    for (const auto& ch : chunks) {
        out.grad_value += ch.grad_value;
        out.grad_gradient += ch.grad_gradient;
    }
    out.grad_offset = plain ? dldx.sum() * (terminal_weight - 1.0) : 0.0;
    return out;
}

/// Plain discounted loss: mean of X_i^2.
inline LossOutput discounted_loss(const PathBatch& batch, const NetworkPair& nets, const ProblemSpec& spec,
                                  double b_decay = 0.0) {
    return evaluate_loss(LossVariant::PlainDiscounted, batch, nets, spec, LossOptions{b_decay});
}

/// Discounted variance loss: population variance of the X_i.
inline LossOutput discounted_variance_loss(const PathBatch& batch, const NetworkPair& nets, const ProblemSpec& spec,
                                           double b_decay = 0.0) {
    return evaluate_loss(LossVariant::VarianceDiscounted, batch, nets, spec, LossOptions{b_decay});
}

/// Ergodic loss: population variance of the X_i, which removes the unknown
/// average cost times T.
inline LossOutput ergodic_loss(const PathBatch& batch, const NetworkPair& nets, const ProblemSpec& spec,
                               double b_decay = 0.0) {
    return evaluate_loss(LossVariant::ErgodicVariance, batch, nets, spec, LossOptions{b_decay});
}

/// Average-cost (or constant) estimate implied by a batch mean of X_i:
/// mean/T for ergodic problems, mean/(1 - e^{-rT}) for the discounted
/// variance loss.
inline double offset_estimate(LossVariant variant, double mean_residual, const ProblemSpec& spec, double horizon) {
    if (variant == LossVariant::ErgodicVariance) return mean_residual / horizon;
    const double r = spec.objective().rate;
    return mean_residual / (1.0 - std::exp(-r * horizon));
}

}  // namespace rbmdc
