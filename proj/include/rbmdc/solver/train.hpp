#pragma once

#include "rbmdc/core/rng.hpp"
#include "rbmdc/core/types.hpp"
#include "rbmdc/neural/adam.hpp"
#include "rbmdc/neural/mlp.hpp"
#include "rbmdc/policies/policy.hpp"
#include "rbmdc/problems/problem.hpp"
#include "rbmdc/rbm/paths.hpp"
#include "rbmdc/solver/losses.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rbmdc {

struct TrainConfig {
    long iterations = 6000;
    Eigen::Index batch = 256;
    double horizon = 0.1;
    double step = 0.1 / 64;
    LrSchedule schedule = LrSchedule::three_stage(2000, 4000);
    std::optional<LossVariant> loss;  // default chosen from the objective
    std::vector<Eigen::Index> value_hidden{50, 50, 50, 50};
    std::vector<Eigen::Index> gradient_hidden{50, 50, 50, 50};
    double decay_c0 = 0.0;  // b_decay(iter) = max(c0 - iter/c1, 0); 0 disables
    double decay_c1 = 1.0;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    Eigen::Index chunk = 16;
    Eigen::Index xi_multiplier = 10;  // paths in the final estimation pass = multiplier * batch
    long checkpoint_interval = 0;
    double divergence_threshold = 1e12;

    void validate() const {
        require(iterations >= 1, "iterations must be at least 1");
        require(batch >= 1, "batch size must be at least 1");
        step_count(horizon, step);
        require(decay_c0 >= 0.0 && decay_c1 > 0.0, "decay constants must be c0 >= 0 and c1 > 0");
        require(xi_multiplier >= 1, "estimation multiplier must be at least 1");
        require(!value_hidden.empty() && !gradient_hidden.empty(), "networks need at least one hidden layer");
        for (auto w : value_hidden) require(w >= 1, "hidden widths must be positive");
        for (auto w : gradient_hidden) require(w >= 1, "hidden widths must be positive");
    }

    [[nodiscard]] double decay_at(long iteration) const {
        if (decay_c0 <= 0.0) return 0.0;
        return std::max(decay_c0 - static_cast<double>(iteration) / decay_c1, 0.0);
    }

    /// Same run at a different iteration budget: learning-rate boundaries and
    /// the decay slope are stretched by the ratio of iteration counts.
    [[nodiscard]] TrainConfig rescaled(long new_iterations) const {
        require(new_iterations >= 1, "iterations must be at least 1");
        TrainConfig out = *this;
        const double factor = static_cast<double>(new_iterations) / static_cast<double>(iterations);
        out.iterations = new_iterations;
        out.schedule = schedule.scaled(factor);
        out.decay_c1 = decay_c1 * factor;
        return out;
    }
};

inline LossVariant default_loss_variant(const ProblemSpec& spec) {
    if (!spec.objective().is_discounted()) return LossVariant::ErgodicVariance;
    return spec.objective().rate <= 0.01 ? LossVariant::VarianceDiscounted : LossVariant::PlainDiscounted;
}

inline const std::vector<std::string>& training_profile_names() {
    static const std::vector<std::string> names{
        "linear-d1",      "linear-d1-b2",    "linear-d1-b10",  "linear-d2-b2",   "linear-d2-b10",
        "linear-d6-b2",   "linear-d6-b10",   "linear-d30-b2",  "linear-d30-b10", "quadratic-d1",
        "quadratic-d2",   "quadratic-d6",    "quadratic-d100"};
    return names;
}

/// Hyperparameter sets of the published experiments (batch 256, T = 0.1,
/// h = 0.1/64, rates 5e-4 / 3e-4 / 1e-4).
inline TrainConfig training_profile(const std::string& name) {
    TrainConfig c;
    auto widths = [](int layers, Eigen::Index w) { return std::vector<Eigen::Index>(static_cast<std::size_t>(layers), w); };
    auto set_arch = [&](int layers, Eigen::Index w) {
        c.value_hidden = widths(layers, w);
        c.gradient_hidden = widths(layers, w);
    };
    if (name == "linear-d1" || name == "linear-d1-b2" || name == "linear-d1-b10") {
        set_arch(4, 50);
        c.schedule = LrSchedule::three_stage(2000, 4000);
    } else if (name == "linear-d2-b2" || name == "linear-d2-b10" || name == "linear-d6-b2" || name == "linear-d6-b10") {
        set_arch(4, 50);
        c.schedule = LrSchedule::three_stage(3000, 6000);
        c.decay_c0 = name.ends_with("b10") ? 7.0 : 0.4;
        c.decay_c1 = name.starts_with("linear-d2") ? 800.0 : 2400.0;
    } else if (name == "linear-d30-b2" || name == "linear-d30-b10") {
        set_arch(3, 300);
        c.schedule = LrSchedule::three_stage(9500, 22000);
        c.decay_c0 = name.ends_with("b10") ? 7.0 : 0.4;
        c.decay_c1 = 4800.0;
    } else if (name == "quadratic-d1") {
        set_arch(3, 20);
        c.schedule = LrSchedule::three_stage(3000, 6000);
    } else if (name == "quadratic-d2" || name == "quadratic-d6") {
        set_arch(4, 50);
        c.schedule = LrSchedule::three_stage(3000, 6000);
    } else if (name == "quadratic-d100") {
        set_arch(3, 1000);
        c.iterations = 12000;
        c.schedule = LrSchedule::three_stage(9500, 22000);
    } else {
        throw ConfigError("unknown training profile '" + name + "'");
    }
    return c;
}

struct TrainProgress {
    long iteration = 0;
    double loss = 0.0;
    double lr = 0.0;
    double b_decay = 0.0;
    double elapsed = 0.0;
};

struct TrainCallbacks {
    std::function<void(const TrainProgress&)> progress;
    std::function<void(long iteration, const NetworkPair&)> checkpoint;
};

struct TrainResult {
    NetworkPair nets;
    LossVariant variant = LossVariant::ErgodicVariance;
    double xi_hat = 0.0;           // average cost (ergodic) or value offset (discounted)
    double value_at_origin = 0.0;  // V(0) including the offset; relative value for ergodic problems
    std::vector<double> loss_trace;
    double wall_seconds = 0.0;
    Matrix final_states;
};

inline std::vector<Eigen::Index> layer_chain(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out) {
    std::vector<Eigen::Index> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

inline NetworkPair initial_networks(const ProblemSpec& spec, const TrainConfig& config) {
    const Eigen::Index d = spec.dim();
    RandomStream value_rng(StreamKey{config.seed, stream_purpose::initialization, 0, 0});
    RandomStream gradient_rng(StreamKey{config.seed, stream_purpose::initialization, 1, 0});
    return NetworkPair{Mlp::initialized(layer_chain(d, config.value_hidden, 1), value_rng),
                       Mlp::initialized(layer_chain(d, config.gradient_hidden, d), gradient_rng), 0.0};
}

/// Runs the training loop: each iteration simulates `batch` reference paths
/// from the current start states, takes one Adam step on the chosen loss, and
/// continues the paths from their terminal states. A final pass over
/// xi_multiplier * batch fresh paths estimates the average cost or offset.
inline TrainResult train(const ProblemSpec& spec, const TrainConfig& config, const TrainCallbacks& callbacks = {}) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };
    const Eigen::Index d = spec.dim();
    const LossVariant variant = config.loss.value_or(default_loss_variant(spec));
    if (variant != LossVariant::PlainDiscounted) require(config.batch >= 2, "variance losses need a batch of at least 2");
    const bool use_decay = spec.cost().kind == CostKind::Linear;

    TrainResult result;
    result.variant = variant;
    result.nets = initial_networks(spec, config);
    NetworkPair& nets = result.nets;
    AdamState value_state(nets.value.num_params());
    AdamState gradient_state(nets.gradient.num_params());
    AdamState offset_state(1);
    Matrix starts = Matrix::Zero(d, config.batch);
    result.loss_trace.reserve(static_cast<std::size_t>(config.iterations));

    for (long it = 0; it < config.iterations; ++it) {
        const PathBatch batch = simulate_reference_paths(
            spec.reflection(), spec.covariance(), spec.reference_drift(), starts, config.horizon, config.step,
            StreamKey{config.seed, stream_purpose::training, static_cast<std::uint64_t>(it), 0}, config.workers);
        const double b_decay = use_decay ? config.decay_at(it) : 0.0;
        LossOutput out;
        try {
            out = evaluate_loss(variant, batch, nets, spec, LossOptions{b_decay, true, config.workers, config.chunk});
        } catch (const NumericalError& e) {
            throw NumericalError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
        }
        if (!std::isfinite(out.loss) || out.loss > config.divergence_threshold) {
            std::ostringstream msg;
            msg << "training diverged at iteration " << it << ": loss " << out.loss;
            throw NumericalError(msg.str());
        }
        const double lr = config.schedule.rate(it);
        adam_step(nets.value.mutable_params(), value_state, out.grad_value, lr);
        adam_step(nets.gradient.mutable_params(), gradient_state, out.grad_gradient, lr);
        if (variant == LossVariant::PlainDiscounted) {
            Vector off(1), g(1);
            off(0) = nets.offset;
            g(0) = out.grad_offset;
            adam_step(off, offset_state, g, lr);
            nets.offset = off(0);
        }
        starts = batch.terminal_states();
        result.loss_trace.push_back(out.loss);
        if (callbacks.progress) callbacks.progress(TrainProgress{it, out.loss, lr, b_decay, elapsed()});
        if (callbacks.checkpoint && config.checkpoint_interval > 0 && (it + 1) % config.checkpoint_interval == 0) {
            callbacks.checkpoint(it + 1, nets);
        }
    }
    result.final_states = starts;

    const Matrix eval_starts = starts.replicate(1, config.xi_multiplier);
    const PathBatch fresh = simulate_reference_paths(spec.reflection(), spec.covariance(), spec.reference_drift(),
                                                     eval_starts, config.horizon, config.step,
                                                     StreamKey{config.seed, stream_purpose::xi_estimate, 0, 0},
                                                     config.workers);
    const LossOutput est = evaluate_loss(variant, fresh, nets, spec, LossOptions{0.0, false, config.workers, config.chunk});
    const double v0 = nets.value.forward(Matrix::Zero(d, 1))(0, 0);
    if (variant == LossVariant::PlainDiscounted) {
        result.xi_hat = nets.offset;
        result.value_at_origin = v0 + nets.offset;
    } else {
        result.xi_hat = offset_estimate(variant, est.mean, spec, config.horizon);
        result.value_at_origin = variant == LossVariant::VarianceDiscounted ? v0 + result.xi_hat : v0;
    }
    result.wall_seconds = elapsed();
    return result;
}

/// Policy theta(z) = argmax over the action box against G(z); with
/// `use_value_gradient` the input gradient of V replaces G.
inline Policy extract_policy(const TrainResult& result, const ProblemSpec& spec, bool use_value_gradient = false) {
    return use_value_gradient ? learned_policy(spec, result.nets.value, true)
                              : learned_policy(spec, result.nets.gradient, false);
}

/// Smallest grid point z in [lo, hi] with G_k(z e_k) >= c_k, or nullopt when
/// the threshold is never reached.
inline std::optional<double> learned_threshold(const Mlp& gradient, const ProblemSpec& spec, Eigen::Index k = 0,
                                               double lo = 0.0, double hi = 5.0, double step = 1e-3) {
    require(spec.cost().kind == CostKind::Linear, "thresholds are defined for linear costs");
    const auto pts = static_cast<Eigen::Index>(std::floor((hi - lo) / step + 1e-9)) + 1;
    Matrix z = Matrix::Zero(spec.dim(), pts);
    for (Eigen::Index j = 0; j < pts; ++j) z(k, j) = lo + static_cast<double>(j) * step;
    const Matrix g = gradient.forward(z);
    for (Eigen::Index j = 0; j < pts; ++j) {
        if (g(k, j) >= spec.cost().price(k)) return z(k, j);
    }
    return std::nullopt;
}

}  // namespace rbmdc
