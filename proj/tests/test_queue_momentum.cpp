#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <random>
#include <vector>

#include "vlcl/contrast.hpp"
#include "vlcl/encoder.hpp"
#include "vlcl/error.hpp"

using namespace vlcl;
using ag::Tensor;

namespace {

std::vector<double> vals(const ag::Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<double> unit_row(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> r(dim);
    double sq = 0.0;
    for (auto& v : r) {
        v = n(rng);
        sq += v * v;
    }
    for (auto& v : r) v /= std::sqrt(sq);
    return r;
}

}  // namespace

TEST(NegativeQueue, MatchesListModelOverRandomSequences) {
    std::mt19937_64 rng(21);
    const std::size_t dim = 3;
    for (int seq = 0; seq < 1000; ++seq) {
        const std::size_t capacity = 1 + rng() % 9;
        contrast::NegativeQueue queue(capacity, dim);
        std::deque<std::vector<double>> model;
        const int pushes = 1 + static_cast<int>(rng() % 12);
        for (int p = 0; p < pushes; ++p) {
            const std::size_t batch = 1 + rng() % capacity;
            std::vector<double> flat;
            for (std::size_t b = 0; b < batch; ++b) {
                auto r = unit_row(dim, rng);
                flat.insert(flat.end(), r.begin(), r.end());
                model.push_back(std::move(r));
                if (model.size() > capacity) model.pop_front();
            }
            queue.enqueue(Tensor::constant({batch, dim}, flat));
            ASSERT_EQ(queue.fill(), model.size());
            for (std::size_t i = 0; i < model.size(); ++i) {
                const auto row = queue.row(i);
                for (std::size_t d = 0; d < dim; ++d) ASSERT_EQ(row[d], model[i][d]) << "sequence " << seq;
            }
        }
        const auto snap = vals(queue.snapshot());
        for (std::size_t i = 0; i < model.size(); ++i)
            for (std::size_t d = 0; d < dim; ++d) ASSERT_EQ(snap[i * dim + d], model[i][d]);
    }
}

TEST(NegativeQueue, RejectsOversizedBatchesAndNonUnitRows) {
    contrast::NegativeQueue queue(2, 2);
    EXPECT_THROW(queue.enqueue(Tensor::constant({3, 2}, {1, 0, 0, 1, 1, 0})), std::invalid_argument);
    EXPECT_THROW(queue.enqueue(Tensor::constant({1, 2}, {2.0, 0.0})), std::invalid_argument);
    EXPECT_THROW(queue.enqueue(Tensor::constant({1, 3}, {1.0, 0.0, 0.0})), std::invalid_argument);
    EXPECT_THROW(queue.row(0), std::out_of_range);
}

TEST(NegativeQueue, RestoreKeepsOrder) {
    std::mt19937_64 rng(22);
    contrast::NegativeQueue queue(3, 2);
    for (int i = 0; i < 5; ++i) {
        const auto r = unit_row(2, rng);
        queue.enqueue(Tensor::constant({1, 2}, r));
    }
    const auto copy = contrast::NegativeQueue::restore(3, 2, queue.buffer(), queue.head(), queue.fill());
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(copy.row(i)[0], queue.row(i)[0]);
        EXPECT_EQ(copy.row(i)[1], queue.row(i)[1]);
    }
}

TEST(Momentum, MixIsExactArithmetic) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> w(17), t(17);
    for (auto& v : w) v = u(rng);
    for (auto& v : t) v = u(rng);
    ParamSet omega, theta;
    omega.add("w", Tensor::constant({17}, w));
    theta.add("w", Tensor::constant({17}, t));
    for (double eps : {0.0, 0.5, 0.9, 0.999, 1.0}) {
        const auto mixed = vals(encoder::momentum_mix(omega, theta, eps).at("w"));
        for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(mixed[i], eps * w[i] + (1.0 - eps) * t[i]);
    }
    EXPECT_THROW(encoder::momentum_mix(omega, theta, 1.5), ConfigError);
    EXPECT_THROW(encoder::momentum_mix(omega, theta, -0.1), ConfigError);
}

TEST(Momentum, FrozenThetaIsReachedGeometrically) {
    std::mt19937_64 rng(24);
    encoder::EncoderConfig cfg;
    cfg.conv_channels = {4, 8};
    cfg.feature_dim = 8;
    cfg.proj_hidden = 8;
    cfg.proj_dim = 4;
    cfg.image_size = 8;
    encoder::EncoderState state = encoder::init_encoders(cfg, rng);
    state.omega = encoder::init_parameters(cfg, rng);  // start away from theta
    const auto start = state.omega.flatten();
    const auto target = state.theta.flatten();
    const double eps = 0.8;
    for (int i = 0; i < 100; ++i) state = encoder::momentum_update(state, eps);
    const auto end = state.omega.flatten();
    const double remaining = std::pow(eps, 100);
    for (std::size_t i = 0; i < end.size(); ++i) {
        EXPECT_NEAR(end[i], target[i], 1e-6);
        EXPECT_NEAR(end[i] - target[i], remaining * (start[i] - target[i]), 1e-12);
    }
    EXPECT_EQ(state.theta.flatten(), target);
}
