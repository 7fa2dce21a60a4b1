#include "rbmdc/core/rng.hpp"
#include "rbmdc/problems/presets.hpp"
#include "rbmdc/solver/losses.hpp"
#include "rbmdc/solver/train.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rbmdc;

namespace {

ProblemSpec linear_1d(Objective objective) {
    return ProblemSpec("t", Matrix::Identity(1, 1), Matrix::Identity(1, 1), ActionBox::uniform(1, 0.0, 2.0),
                       CostSpec::linear(Vector::Constant(1, 2.0), Vector::Ones(1)), objective);
}

NetworkPair zero_networks(Eigen::Index d) {
    return {Mlp(Mlp::architecture(d, 1, 3, 1)), Mlp(Mlp::architecture(d, 1, 3, d)), 0.0};
}

NetworkPair random_networks(Eigen::Index d, std::uint64_t seed) {
    RandomStream rng(StreamKey{seed, 0, 0, 0});
    NetworkPair nets{Mlp::initialized(Mlp::architecture(d, 2, 5, 1), rng),
                     Mlp::initialized(Mlp::architecture(d, 2, 5, d), rng), 0.3};
    for (Mlp* net : {&nets.value, &nets.gradient}) {
        for (Eigen::Index p = 0; p < net->num_params(); ++p) net->mutable_params()(p) += 0.2 * rng.normal();
    }
    return nets;
}

/// Paths held at the origin: each increment exactly cancels the drift.
PathBatch held_at_origin(const ProblemSpec& spec, Eigen::Index paths, Eigen::Index steps, double h) {
    const Matrix dw = Matrix::Constant(1, paths * steps, spec.reference_drift()(0) * h);
    return simulate_with_increments(spec.reflection(), spec.reference_drift(), Matrix::Zero(1, paths), h, dw);
}

/// One-step paths from given starts with zero increments.
PathBatch single_step(const ProblemSpec& spec, const Matrix& starts, double h) {
    return simulate_with_increments(spec.reflection(), spec.reference_drift(), starts, h,
                                    Matrix::Zero(spec.dim(), starts.cols()));
}

TrainConfig tiny_config(long iterations) {
    TrainConfig c;
    c.iterations = iterations;
    c.batch = 32;
    c.horizon = 0.1;
    c.step = 0.1 / 8;
    c.value_hidden = {6, 6};
    c.gradient_hidden = {6, 6};
    c.schedule = LrSchedule::three_stage(10, 20);
    c.xi_multiplier = 2;
    c.seed = 17;
    return c;
}

double fd_check(LossVariant variant, const PathBatch& batch, NetworkPair nets, const ProblemSpec& spec,
                double b_decay) {
    const LossOutput exact = evaluate_loss(variant, batch, nets, spec, LossOptions{b_decay});
    const double step = 1e-6;
    auto loss_at = [&](const NetworkPair& n) {
        return evaluate_loss(variant, batch, n, spec, LossOptions{b_decay, false}).loss;
    };
    double err = 0.0;
    double scale = 1e-12;
    for (Mlp NetworkPair::*member : {&NetworkPair::value, &NetworkPair::gradient}) {
        const Vector& analytic = member == &NetworkPair::value ? exact.grad_value : exact.grad_gradient;
        for (Eigen::Index p = 0; p < (nets.*member).num_params(); ++p) {
            const double saved = (nets.*member).params()(p);
            (nets.*member).mutable_params()(p) = saved + step;
            const double up = loss_at(nets);
            (nets.*member).mutable_params()(p) = saved - step;
            const double down = loss_at(nets);
            (nets.*member).mutable_params()(p) = saved;
            err = std::max(err, std::abs((up - down) / (2 * step) - analytic(p)));
            scale = std::max(scale, std::abs(analytic(p)));
        }
    }
    if (variant == LossVariant::PlainDiscounted) {
        NetworkPair up = nets;
        NetworkPair down = nets;
        up.offset += step;
        down.offset -= step;
        err = std::max(err, std::abs((loss_at(up) - loss_at(down)) / (2 * step) - exact.grad_offset));
        scale = std::max(scale, std::abs(exact.grad_offset));
    }
    return err / scale;
}

}  // namespace

TEST(Losses, VanishingTermsGiveZeroLoss) {
    const ProblemSpec spec = linear_1d(Objective::discounted(0.1));
    const PathBatch batch = held_at_origin(spec, 4, 8, 0.1 / 8);
    EXPECT_EQ(batch.z, Matrix::Zero(1, batch.z.cols()));
    EXPECT_EQ(discounted_loss(batch, zero_networks(1), spec).loss, 0.0);
}

TEST(Losses, ConstantValueNetwork) {
    const double r = 0.1;
    const double k = 3.7;
    const ProblemSpec spec = linear_1d(Objective::discounted(r));
    NetworkPair nets = zero_networks(1);
    nets.value.bias(1)(0) = k;
    const PathBatch batch = held_at_origin(spec, 4, 8, 0.1 / 8);
    const double expected = std::pow((std::exp(-r * 0.1) - 1.0) * k, 2);
    EXPECT_NEAR(discounted_loss(batch, nets, spec).loss, expected, 1e-15);
}

TEST(Losses, UndiscountedResidualIsAccumulatedF) {
    const ProblemSpec spec = linear_1d(Objective::ergodic());
    const PathBatch batch = simulate_reference_paths(spec.reflection(), spec.covariance(), spec.reference_drift(),
                                                     Matrix::Constant(1, 5, 0.5), 0.1, 0.1 / 16, StreamKey{1, 1, 0, 0});
    const LossOutput out = ergodic_loss(batch, zero_networks(1), spec);
    for (Eigen::Index i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < batch.steps; ++j) {
            sum += f_function(spec, batch.state(i, j), Vector::Zero(1)) * batch.h;
        }
        EXPECT_NEAR(out.residuals(i), sum, 1e-14);
    }
}

TEST(Losses, PopulationVarianceConvention) {
    const ProblemSpec ergodic = linear_1d(Objective::ergodic());
    // F(z, 0) = 2z, so with h = T = 1 the residual of each path is 2 z_0.
    const PathBatch a = single_step(ergodic, Matrix{{0.0, 1.0}}, 1.0);
    EXPECT_NEAR(ergodic_loss(a, zero_networks(1), ergodic).loss, 1.0, 1e-15);
    const PathBatch b = single_step(ergodic, Matrix{{0.5, 1.5}}, 1.0);
    EXPECT_NEAR(ergodic_loss(b, zero_networks(1), ergodic).loss, 1.0, 1e-15);
    const ProblemSpec disc = linear_1d(Objective::discounted(0.01));
    EXPECT_NEAR(discounted_variance_loss(a, zero_networks(1), disc).loss, 1.0, 1e-15);
}

TEST(Losses, ConstantResidualGivesZeroVariance) {
    const ProblemSpec spec = linear_1d(Objective::ergodic());
    const PathBatch batch = single_step(spec, Matrix::Constant(1, 6, 0.8), 1.0);
    EXPECT_NEAR(ergodic_loss(batch, zero_networks(1), spec).loss, 0.0, 1e-25);
}

TEST(Losses, VarianceLossesIgnoreValueShift) {
    const ProblemSpec ergodic = main_test_problem(1, 2.0, Objective::ergodic());
    const ProblemSpec disc = main_test_problem(1, 2.0, Objective::discounted(0.01));
    const PathBatch batch = simulate_reference_paths(ergodic.reflection(), ergodic.covariance(),
                                                     ergodic.reference_drift(), Matrix::Constant(2, 16, 0.3), 0.1,
                                                     0.1 / 16, StreamKey{2, 1, 0, 0});
    NetworkPair nets = random_networks(2, 3);
    NetworkPair shifted = nets;
    shifted.value.bias(shifted.value.num_layers() - 1)(0) += 12.5;
    EXPECT_NEAR(ergodic_loss(batch, nets, ergodic).loss, ergodic_loss(batch, shifted, ergodic).loss, 1e-10);
    // Discounting scales the shift by (e^{-rT} - 1), which the variance removes as well.
    EXPECT_NEAR(discounted_variance_loss(batch, nets, disc).loss, discounted_variance_loss(batch, shifted, disc).loss,
                1e-10);
}

TEST(Losses, SingleStepMatchesHandEvaluation) {
    const double r = 0.2;
    const double t = 0.05;
    const ProblemSpec spec("k", Matrix{{1.0, 0.0}, {-0.5, 1.0}}, Matrix{{1.0, 0.2}, {0.2, 1.0}},
                           ActionBox::uniform(2, 0.0, 2.0), CostSpec::linear(Vector{{2.0, 1.9}}, Vector::Ones(2)),
                           Objective::discounted(r), Vector::Ones(2), Vector{{0.7, 1.3}});
    const PathBatch batch = simulate_reference_paths(spec.reflection(), spec.covariance(), spec.reference_drift(),
                                                     Matrix::Constant(2, 10, 0.02), t, t, StreamKey{5, 1, 0, 0});
    ASSERT_GT(batch.dy.sum(), 0.0);
    const NetworkPair nets = random_networks(2, 4);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < 10; ++i) {
        const Vector z0 = batch.state(i, 0);
        const Vector z1 = batch.state(i, 1);
        const Vector g = nets.gradient.forward(z0);
        const double v0 = nets.value.forward(z0)(0, 0) + nets.offset;
        const double v1 = nets.value.forward(z1)(0, 0) + nets.offset;
        const double x = std::exp(-r * t) * v1 - v0 + spec.boundary_penalty().dot(batch.push(i, 0)) -
                         g.dot(batch.increment(i, 0)) + f_function(spec, z0, g, 0.3) * t;
        expected += x * x / 10.0;
    }
    EXPECT_NEAR(discounted_loss(batch, nets, spec, 0.3).loss, expected, 1e-10);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
    const ProblemSpec base = main_test_problem(1, 2.0, Objective::ergodic());
    const PathBatch batch = simulate_reference_paths(base.reflection(), base.covariance(), base.reference_drift(),
                                                     Matrix{{0.1, 0.4}, {0.3, 0.0}}, 0.2, 0.1, StreamKey{6, 1, 0, 0});
    ASSERT_EQ(batch.batch, 2);
    ASSERT_EQ(batch.steps, 2);
    const NetworkPair nets = random_networks(2, 7);
    EXPECT_LT(fd_check(LossVariant::ErgodicVariance, batch, nets, base, 0.0), 1e-5);
    EXPECT_LT(fd_check(LossVariant::ErgodicVariance, batch, nets, base, 0.4), 1e-5);
    const ProblemSpec disc = base.with_objective(Objective::discounted(0.1));
    EXPECT_LT(fd_check(LossVariant::PlainDiscounted, batch, nets, disc, 0.4), 1e-5);
    EXPECT_LT(fd_check(LossVariant::VarianceDiscounted, batch, nets, disc, 0.0), 1e-5);
    const ProblemSpec quad = main_test_problem(1, 10.0, Objective::discounted(0.1), PresetCost::Quadratic);
    EXPECT_LT(fd_check(LossVariant::PlainDiscounted, batch, nets, quad, 0.0), 1e-5);
}

TEST(Losses, WorkerCountDoesNotChangeResults) {
    const ProblemSpec spec = main_test_problem(1, 2.0, Objective::ergodic());
    const PathBatch batch = simulate_reference_paths(spec.reflection(), spec.covariance(), spec.reference_drift(),
                                                     Matrix::Constant(2, 50, 0.2), 0.1, 0.1 / 16, StreamKey{8, 1, 0, 0});
    const NetworkPair nets = random_networks(2, 9);
    const LossOutput one = evaluate_loss(LossVariant::ErgodicVariance, batch, nets, spec, LossOptions{0.1, true, 1, 8});
    const LossOutput four = evaluate_loss(LossVariant::ErgodicVariance, batch, nets, spec, LossOptions{0.1, true, 4, 8});
    EXPECT_EQ(one.loss, four.loss);
    EXPECT_EQ(one.grad_value, four.grad_value);
    EXPECT_EQ(one.grad_gradient, four.grad_gradient);
}

TEST(Losses, RejectsMismatchedVariantsAndBatches) {
    const ProblemSpec ergodic = linear_1d(Objective::ergodic());
    const ProblemSpec disc = linear_1d(Objective::discounted(0.1));
    const PathBatch two = single_step(ergodic, Matrix{{0.0, 1.0}}, 1.0);
    const PathBatch one = single_step(ergodic, Matrix{{0.0}}, 1.0);
    EXPECT_THROW(discounted_loss(two, zero_networks(1), ergodic), ConfigError);
    EXPECT_THROW(ergodic_loss(two, zero_networks(1), disc), ConfigError);
    EXPECT_THROW(ergodic_loss(one, zero_networks(1), ergodic), ConfigError);
    EXPECT_NO_THROW(discounted_loss(one, zero_networks(1), disc));
}

TEST(Losses, NonFiniteLossIsReported) {
    const ProblemSpec spec = linear_1d(Objective::ergodic());
    NetworkPair nets = zero_networks(1);
    nets.value.bias(1)(0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(ergodic_loss(single_step(spec, Matrix{{0.0, 1.0}}, 1.0), nets, spec), NumericalError);
}

TEST(Losses, OffsetEstimates) {
    const ProblemSpec ergodic = linear_1d(Objective::ergodic());
    const ProblemSpec disc = linear_1d(Objective::discounted(0.1));
    EXPECT_DOUBLE_EQ(offset_estimate(LossVariant::ErgodicVariance, 0.2, ergodic, 0.1), 2.0);
    EXPECT_DOUBLE_EQ(offset_estimate(LossVariant::VarianceDiscounted, 0.2, disc, 0.1), 0.2 / (1 - std::exp(-0.01)));
}

TEST(Train, DefaultLossVariant) {
    EXPECT_EQ(default_loss_variant(linear_1d(Objective::ergodic())), LossVariant::ErgodicVariance);
    EXPECT_EQ(default_loss_variant(linear_1d(Objective::discounted(0.01))), LossVariant::VarianceDiscounted);
    EXPECT_EQ(default_loss_variant(linear_1d(Objective::discounted(0.1))), LossVariant::PlainDiscounted);
    EXPECT_EQ(parse_loss_variant("plain"), LossVariant::PlainDiscounted);
    EXPECT_THROW(parse_loss_variant("other"), ConfigError);
}

TEST(Train, PublishedProfiles) {
    const TrainConfig d1 = training_profile("linear-d1");
    EXPECT_EQ(d1.value_hidden, (std::vector<Eigen::Index>{50, 50, 50, 50}));
    EXPECT_EQ(d1.schedule.rate(1999), 5e-4);
    EXPECT_EQ(d1.schedule.rate(2000), 3e-4);
    EXPECT_EQ(d1.schedule.rate(4000), 1e-4);
    EXPECT_EQ(d1.batch, 256);
    EXPECT_DOUBLE_EQ(d1.step, 0.1 / 64);
    const TrainConfig d2 = training_profile("linear-d2-b10");
    EXPECT_EQ(d2.decay_c0, 7.0);
    EXPECT_EQ(d2.decay_c1, 800.0);
    EXPECT_DOUBLE_EQ(d2.decay_at(0), 7.0);
    EXPECT_DOUBLE_EQ(d2.decay_at(800), 6.0);
    EXPECT_DOUBLE_EQ(d2.decay_at(10000), 0.0);
    EXPECT_EQ(training_profile("linear-d30-b2").gradient_hidden, (std::vector<Eigen::Index>(3, 300)));
    EXPECT_EQ(training_profile("quadratic-d100").value_hidden, (std::vector<Eigen::Index>(3, 1000)));
    EXPECT_EQ(training_profile("quadratic-d1").value_hidden, (std::vector<Eigen::Index>(3, 20)));
    for (const auto& name : training_profile_names()) EXPECT_NO_THROW(training_profile(name).validate()) << name;
    EXPECT_THROW(training_profile("nope"), ConfigError);
}

TEST(Train, RescaledStretchesScheduleAndDecay) {
    const TrainConfig c = training_profile("linear-d2-b2").rescaled(3000);
    EXPECT_EQ(c.iterations, 3000);
    EXPECT_EQ(c.schedule.segments()[0].end, 1500);
    EXPECT_DOUBLE_EQ(c.decay_c1, 400.0);
}

TEST(Train, SingleIterationContinuesPaths) {
    const ProblemSpec spec = linear_1d(Objective::ergodic());
    const TrainConfig cfg = tiny_config(1);
    const TrainResult res = train(spec, cfg);
    ASSERT_EQ(res.loss_trace.size(), 1u);
    const PathBatch first = simulate_reference_paths(spec.reflection(), spec.covariance(), spec.reference_drift(),
                                                     Matrix::Zero(1, cfg.batch), cfg.horizon, cfg.step,
                                                     StreamKey{cfg.seed, stream_purpose::training, 0, 0});
    EXPECT_EQ(res.final_states, first.terminal_states());
}

TEST(Train, StartStatesFollowTerminalStates) {
    const ProblemSpec spec = main_test_problem(1, 2.0, Objective::ergodic());
    const TrainConfig cfg = tiny_config(3);
    const TrainResult res = train(spec, cfg);
    Matrix starts = Matrix::Zero(2, cfg.batch);
    for (std::uint64_t it = 0; it < 3; ++it) {
        starts = simulate_reference_paths(spec.reflection(), spec.covariance(), spec.reference_drift(), starts,
                                          cfg.horizon, cfg.step, StreamKey{cfg.seed, stream_purpose::training, it, 0})
                     .terminal_states();
    }
    EXPECT_EQ(res.final_states, starts);
    for (double l : res.loss_trace) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, DeterministicAcrossWorkerCounts) {
    const ProblemSpec spec = main_test_problem(1, 2.0, Objective::discounted(0.1));
    TrainConfig cfg = tiny_config(5);
    cfg.chunk = 8;
    cfg.decay_c0 = 0.4;
    cfg.decay_c1 = 2.0;
    const TrainResult one = train(spec, cfg);
    cfg.workers = 3;
    const TrainResult three = train(spec, cfg);
    EXPECT_EQ(one.nets.value.params(), three.nets.value.params());
    EXPECT_EQ(one.nets.gradient.params(), three.nets.gradient.params());
    EXPECT_EQ(one.nets.offset, three.nets.offset);
    EXPECT_EQ(one.loss_trace, three.loss_trace);
    EXPECT_EQ(one.xi_hat, three.xi_hat);
}

TEST(Train, ProgressAndCheckpointCallbacks) {
    const ProblemSpec spec = linear_1d(Objective::ergodic());
    TrainConfig cfg = tiny_config(6);
    cfg.checkpoint_interval = 2;
    std::vector<long> seen;
    std::vector<long> saved;
    TrainCallbacks cb;
    cb.progress = [&](const TrainProgress& p) { seen.push_back(p.iteration); };
    cb.checkpoint = [&](long it, const NetworkPair&) { saved.push_back(it); };
    train(spec, cfg, cb);
    EXPECT_EQ(seen, (std::vector<long>{0, 1, 2, 3, 4, 5}));
    EXPECT_EQ(saved, (std::vector<long>{2, 4, 6}));
}

TEST(Train, DivergenceReportsIteration) {
    const ProblemSpec spec = linear_1d(Objective::ergodic());
    TrainConfig cfg = tiny_config(3);
    cfg.divergence_threshold = 1e-300;
    try {
        train(spec, cfg);
        FAIL() << "expected divergence";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos);
    }
}

TEST(Train, PlainLossTrainsOffset) {
    const ProblemSpec spec = linear_1d(Objective::discounted(0.1));
    const TrainResult res = train(spec, tiny_config(4));
    EXPECT_EQ(res.variant, LossVariant::PlainDiscounted);
    EXPECT_NE(res.nets.offset, 0.0);
    EXPECT_EQ(res.xi_hat, res.nets.offset);
}

TEST(ExtractPolicy, ZeroGradientNetworkGivesLowerBound) {
    const ProblemSpec spec = main_test_problem(1, 2.0, Objective::ergodic());
    TrainResult res;
    res.nets = zero_networks(2);
    const Policy p = extract_policy(res, spec);
    EXPECT_EQ(p.act(Vector{{0.5, 3.0}}), Vector::Zero(2));
}

TEST(ExtractPolicy, LargeGradientGivesUpperBound) {
    const ProblemSpec spec = main_test_problem(1, 2.0, Objective::ergodic());
    TrainResult res;
    res.nets = zero_networks(2);
    res.nets.gradient.bias(1).setConstant(5.0);
    EXPECT_EQ(extract_policy(res, spec).act(Vector{{0.5, 3.0}}), Vector::Constant(2, 2.0));
}

TEST(ExtractPolicy, QuadraticPolicyIsClippedAffine) {
    const ProblemSpec spec = main_test_problem(0, 10.0, Objective::ergodic(), PresetCost::Quadratic);
    TrainResult res;
    res.nets = zero_networks(1);
    // G(z) = elu(z), which is z on the nonnegative states used below.
    res.nets.gradient.weight(0)(0, 0) = 1.0;
    res.nets.gradient.weight(1)(0, 0) = 1.0;
    const Policy p = extract_policy(res, spec);
    EXPECT_DOUBLE_EQ(p.act(Vector::Constant(1, 1.0))(0), 1.5);
    EXPECT_DOUBLE_EQ(p.act(Vector::Constant(1, 4.0))(0), 3.0);
    EXPECT_DOUBLE_EQ(p.act(Vector::Constant(1, 40.0))(0), 10.0);
}

TEST(ExtractPolicy, LearnedThresholdOnGrid) {
    const ProblemSpec spec = linear_1d(Objective::ergodic());
    Mlp g(Mlp::architecture(1, 1, 1, 1));
    g.weight(0)(0, 0) = 1.0;
    g.weight(1)(0, 0) = 2.0;
    // G(z) = 2z reaches the price 1 at z = 0.5.
    const auto t = learned_threshold(g, spec);
    ASSERT_TRUE(t.has_value());
    EXPECT_NEAR(*t, 0.5, 1e-9);
    Mlp flat(Mlp::architecture(1, 1, 1, 1));
    EXPECT_FALSE(learned_threshold(flat, spec).has_value());
}
