#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "tiny.hpp"
#include "vlcl/error.hpp"
#include "vlcl/layers.hpp"
#include "vlcl/ops.hpp"
#include "vlcl/trainer.hpp"

using namespace vlcl;
using ag::Tensor;
namespace fs = std::filesystem;

namespace {

std::vector<double> flat(const ParamSet& p) { return p.flatten(); }

}  // namespace

TEST(Trainer, LearningRateSchedule) {
    trainer::TrainConfig c;
    c.lr = 0.1;
    c.milestones = {{3, 0.01}, {5, 0.001}};
    EXPECT_EQ(trainer::lr_schedule(0, c), 0.1);
    EXPECT_EQ(trainer::lr_schedule(2, c), 0.1);
    EXPECT_EQ(trainer::lr_schedule(3, c), 0.01);
    EXPECT_EQ(trainer::lr_schedule(9, c), 0.001);
}

TEST(Trainer, InnerStepMatchesHandComputedUpdate) {
    const auto model = tiny::model();
    auto cfg = tiny::train();
    cfg.momentum = 0.9;
    cfg.nesterov = true;
    cfg.weight_decay = 0.01;
    cfg.clip_norm = 0.0;
    const auto data = tiny::data();
    auto state = trainer::init_state(model, cfg);
    // Non-trivial velocity and a non-empty queue.
    std::vector<Tensor> vel;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 0.1);
    for (const auto& t : state.velocity.tensors()) {
        std::vector<double> v(t.numel());
        for (auto& x : v) x = n(rng);
        vel.push_back(Tensor::constant(t.shape(), v));
    }
    state.velocity = state.velocity.with_tensors(vel);
    std::vector<double> key(model.encoder.proj_dim, 0.0);
    key[0] = 1.0;
    state.queue.enqueue(Tensor::constant({1, model.encoder.proj_dim}, key));

    std::mt19937_64 ep_rng(4);
    const std::vector<datasets::Episode> eps{datasets::sample_episode(data, 3, 1, 2, ep_rng)};

    // Reference: same loss, gradient, then the momentum rule written out.
    auto rng_copy = state.augment_rng;
    const ParamSet theta = state.encoders.theta.as_parameters();
    const auto parts = trainer::total_loss(model, cfg.beta, theta, state.encoders.omega, state.gamma1, state.gamma2,
                                           state.queue, eps[0], rng_copy);
    const auto g = ag::grad(parts.total, theta.tensors());
    const auto t0 = flat(state.encoders.theta);
    const auto v0 = flat(state.velocity);
    std::vector<double> gflat;
    for (const auto& x : g) gflat.insert(gflat.end(), x.values().begin(), x.values().end());

    const double lr = 0.05;
    auto inner = trainer::inner_update(model, cfg, state, eps, lr);
    const auto t1 = flat(state.encoders.theta);
    const auto v1 = flat(state.velocity);
    ASSERT_EQ(t1.size(), t0.size());
    for (std::size_t j = 0; j < t0.size(); ++j) {
        const double d = gflat[j] + cfg.weight_decay * t0[j];
        const double v = cfg.momentum * v0[j] + d;
        EXPECT_NEAR(v1[j], v, 1e-12);
        EXPECT_NEAR(t1[j], t0[j] - lr * (d + cfg.momentum * v), 1e-12);
    }
    // The retained surrogate carries the same values as the real update.
    const auto surrogate = flat(inner.theta_next);
    for (std::size_t j = 0; j < t1.size(); ++j) EXPECT_NEAR(surrogate[j], t1[j], 1e-12);
    EXPECT_TRUE(inner.retained);
    EXPECT_NEAR(inner.total_loss, parts.total.item(), 1e-12);
    EXPECT_EQ(state.queue.fill(), 1u + eps[0].support_labels.size() + eps[0].query_labels.size());
}

TEST(Trainer, GradientClippingScalesTheStep) {
    const auto model = tiny::model();
    auto cfg = tiny::train();
    cfg.momentum = 0.0;
    cfg.nesterov = false;
    cfg.weight_decay = 0.0;
    cfg.clip_norm = 1e-3;
    const auto data = tiny::data();
    auto state = trainer::init_state(model, cfg);
    std::mt19937_64 ep_rng(4);
    const std::vector<datasets::Episode> eps{datasets::sample_episode(data, 3, 1, 2, ep_rng)};
    const auto t0 = flat(state.encoders.theta);
    const auto inner = trainer::inner_update(model, cfg, state, eps, 1.0);
    ASSERT_TRUE(inner.clipped);
    const auto t1 = flat(state.encoders.theta);
    double sq = 0.0;
    for (std::size_t j = 0; j < t0.size(); ++j) sq += (t1[j] - t0[j]) * (t1[j] - t0[j]);
    EXPECT_NEAR(std::sqrt(sq), 1e-3, 1e-12);
}

TEST(Trainer, OuterUpdateNeedsRetainedGraph) {
    const auto model = tiny::model();
    const auto cfg = tiny::train();
    auto state = trainer::init_state(model, cfg);
    trainer::InnerResult empty;
    EXPECT_THROW(trainer::outer_update(model, cfg, state, empty, {}), std::logic_error);
}

TEST(Trainer, OuterUpdateMovesGammaAlongTheMetaGradient) {
    const auto model = tiny::model();
    auto cfg = tiny::train();
    cfg.eta = 0.5;
    const auto data = tiny::data();
    auto state = trainer::init_state(model, cfg);
    std::vector<double> key(model.encoder.proj_dim, 0.0);
    key[1] = 1.0;
    state.queue.enqueue(Tensor::constant({1, model.encoder.proj_dim}, key));
    std::mt19937_64 ep_rng(4);
    const std::vector<datasets::Episode> eps{datasets::sample_episode(data, 3, 1, 2, ep_rng)};
    const auto g0 = flat(state.gamma2);
    auto inner = trainer::inner_update(model, cfg, state, eps, 0.1);
    const auto out = trainer::outer_update(model, cfg, state, inner, eps);
    EXPECT_FALSE(inner.retained);
    EXPECT_GT(out.gamma_grad_norm, 0.0);
    EXPECT_NE(flat(state.gamma2), g0);
    // The stage-two loss is the meta loss at the updated encoder.
    EXPECT_NEAR(out.meta_loss, trainer::episode_meta_loss(model, state.encoders.theta, eps[0]).item(), 1e-12);
}

TEST(Trainer, TwoMetaLossEvaluationsPerIteration) {
    const auto model = tiny::model();
    auto cfg = tiny::train();
    const auto data = tiny::data();
    auto state = trainer::init_state(model, cfg);
    for (std::size_t tasks : {1u, 2u}) {
        cfg.tasks_per_batch = tasks;
        const std::size_t before = protohead::meta_loss_call_count();
        trainer::train_step(model, cfg, state, data);
        EXPECT_EQ(protohead::meta_loss_call_count() - before, 2 * tasks);
    }
}

TEST(Trainer, BetaZeroMatchesStandalonePrototypicalNetwork) {
    const auto model = tiny::model();
    auto cfg = tiny::train();
    cfg.beta = 0.0;
    cfg.epochs = 1;
    cfg.iterations_per_epoch = 10;
    const auto data = tiny::data();
    const auto result = trainer::train(model, cfg, data);

    const auto pn = oracles::train_pn(model, cfg, data, 10);
    ASSERT_EQ(result.log.size(), 10u);
    for (std::size_t it = 0; it < 10; ++it) {
        EXPECT_NEAR(result.log[it].meta_loss, pn.losses[it], 1e-6) << "iteration " << it;
        EXPECT_EQ(result.log[it].total_loss, result.log[it].meta_loss);
    }
    const auto trained = result.state.encoders.theta.flatten();
    const auto ours = pn.theta.flatten();
    for (std::size_t j = 0; j < ours.size(); ++j) EXPECT_NEAR(trained[j], ours[j], 1e-9);
}

TEST(Trainer, BetaZeroLeavesViewModulesUntouched) {
    const auto model = tiny::model();
    auto cfg = tiny::train();
    cfg.beta = 0.0;
    const auto data = tiny::data();
    const auto init = trainer::init_state(model, cfg);
    const auto result = trainer::train(model, cfg, data);
    EXPECT_EQ(result.state.gamma1.flatten(), init.gamma1.flatten());
    EXPECT_EQ(result.state.gamma2.flatten(), init.gamma2.flatten());
}

TEST(Trainer, ResumeContinuesBitForBit) {
    const auto model = tiny::model();
    auto cfg = tiny::train();
    const auto data = tiny::data();
    const fs::path dir = fs::temp_directory_path() / "vlcl_resume_test";
    fs::remove_all(dir);

    const auto straight = trainer::train(model, cfg, data);

    auto first = cfg;
    first.epochs = 1;
    trainer::TrainOptions opts;
    opts.out_dir = dir;
    trainer::train(model, first, data, opts);
    ASSERT_TRUE(fs::exists(dir / "checkpoints" / "epoch_1"));
    opts.resume_from = dir / "checkpoints" / "epoch_1";
    const auto resumed = trainer::train(model, cfg, data, opts);

    EXPECT_EQ(resumed.state.encoders.theta.flatten(), straight.state.encoders.theta.flatten());
    EXPECT_EQ(resumed.state.encoders.omega.flatten(), straight.state.encoders.omega.flatten());
    EXPECT_EQ(resumed.state.gamma1.flatten(), straight.state.gamma1.flatten());
    EXPECT_EQ(resumed.state.gamma2.flatten(), straight.state.gamma2.flatten());
    EXPECT_EQ(resumed.state.queue.buffer(), straight.state.queue.buffer());
    EXPECT_EQ(resumed.state.iteration, straight.state.iteration);

    std::ifstream metrics(dir / "metrics.csv");
    std::size_t lines = 0;
    for (std::string line; std::getline(metrics, line);) ++lines;
    EXPECT_EQ(lines, 1 + cfg.epochs * cfg.iterations_per_epoch);
    fs::remove_all(dir);
}

TEST(Trainer, RejectsMismatchedImageSize) {
    auto model = tiny::model();
    const auto cfg = tiny::train();
    datasets::SyntheticSpec s;
    s.num_coarse_classes = 3;
    s.image_size = 24;
    EXPECT_THROW(trainer::train(model, cfg, datasets::generate_synthetic(s)), ConfigError);
}
