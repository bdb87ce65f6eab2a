#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "vlcl/autoview.hpp"
#include "vlcl/datasets.hpp"
#include "vlcl/ops.hpp"

using namespace vlcl;
using namespace vlcl::autoview;
using ag::Tensor;

namespace {

std::vector<double> vals(const ag::Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor random_images(std::size_t n, std::size_t size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n * size * size * 3);
    for (auto& x : v) x = u(rng);
    return Tensor::constant({n, size, size, 3}, std::move(v));
}

}  // namespace

TEST(Warp, IdentityReproducesSyntheticImages) {
    datasets::SyntheticSpec s;
    s.num_coarse_classes = 4;
    s.samples_per_subcat = 5;
    s.image_size = 16;
    const auto d = datasets::generate_synthetic(s);
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Tensor images = d.batch(idx);
    const auto out = vals(warp(images, identity_affine(d.size())));
    const auto in = images.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) worst = std::max(worst, std::abs(in[i] - out[i]));
    EXPECT_LE(worst, 1e-12);
}

TEST(Warp, HalfScaleReadsTheCentre) {
    // 4x4 ramp; scale 0.5 keeps the middle half of the pixel span.
    std::vector<double> ramp(16);
    for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i % 4);
    const Tensor img = Tensor::constant({1, 4, 4, 1}, ramp);
    const auto out = vals(warp(img, Tensor::constant({1, 4}, {0.5, 0.5, 0.0, 0.0})));
    EXPECT_NEAR(out[0], 0.75, 1e-12);
    EXPECT_NEAR(out[1], 1.25, 1e-12);
    EXPECT_NEAR(out[3], 2.25, 1e-12);
}

TEST(BoundAffine, ZeroRawGivesIdentityAndBoundsHold) {
    LocaliserConfig cfg;
    const auto id = vals(bound_affine(cfg, Tensor::zeros({1, 4})));
    EXPECT_EQ(std::vector<double>(id.begin(), id.end()), (std::vector<double>{1.0, 1.0, 0.0, 0.0}));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 3.0);
    std::vector<double> raw(400);
    for (auto& v : raw) v = n(rng);
    const auto p = vals(bound_affine(cfg, Tensor::constant({100, 4}, raw)));
    for (std::size_t i = 0; i < 100; ++i) {
        for (int a = 0; a < 2; ++a) {
            const double sc = p[i * 4 + a], tr = p[i * 4 + 2 + a];
            EXPECT_GE(sc, cfg.scale_min);
            EXPECT_LE(sc, cfg.scale_max);
            // The view never leaves the image.
            EXPECT_LE(std::abs(tr) + sc, 1.0 + 1e-12);
        }
    }
}

TEST(Localiser, IdentityInitMapsEveryImageToIdentity) {
    LocaliserConfig cfg;
    cfg.image_size = 8;
    std::mt19937_64 rng(2);
    const auto gamma = init_localiser(cfg, rng, true);
    const auto p = vals(localise(cfg, gamma, random_images(5, 8, rng)));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_DOUBLE_EQ(p[i * 4 + 0], 1.0);
        EXPECT_DOUBLE_EQ(p[i * 4 + 2], 0.0);
    }
}

TEST(Views, EachBranchDependsOnItsOwnModuleOnly) {
    LocaliserConfig cfg;
    cfg.image_size = 8;
    std::mt19937_64 rng(3);
    const auto g1 = init_localiser(cfg, rng, false).as_parameters();
    const auto g2 = init_localiser(cfg, rng, false).as_parameters();
    const auto v = make_views(cfg, ViewMode::learned, g1, g2, random_images(2, 8, rng), AugmentConfig{}, rng);
    EXPECT_TRUE(ag::depends_on(v.first, g1[0]));
    EXPECT_FALSE(ag::depends_on(v.first, g2[0]));
    EXPECT_TRUE(ag::depends_on(v.second, g2[0]));
    EXPECT_FALSE(ag::depends_on(v.second, g1[0]));
}

TEST(Views, RandomCropModeCarriesNoGraph) {
    LocaliserConfig cfg;
    cfg.image_size = 8;
    std::mt19937_64 rng(4);
    const auto g1 = init_localiser(cfg, rng).as_parameters();
    const auto g2 = init_localiser(cfg, rng).as_parameters();
    const auto v = make_views(cfg, ViewMode::random_crop, g1, g2, random_images(3, 8, rng), AugmentConfig{}, rng);
    EXPECT_FALSE(v.first.requires_grad());
    for (double s : v.affine_first.values()) EXPECT_LE(std::abs(s), 1.0);
}

TEST(Augment, DisabledIsIdentityAndOutputStaysInRange) {
    std::mt19937_64 rng(5);
    const Tensor img = random_images(4, 8, rng);
    const auto same = vals(pre_augment(img, AugmentConfig::disabled(), rng));
    EXPECT_TRUE(std::equal(same.begin(), same.end(), img.values().begin()));
    AugmentConfig strong;
    strong.brightness = strong.contrast = strong.saturation = 0.9;
    strong.jitter_prob = strong.blur_prob = 1.0;
    for (double v : vals(pre_augment(img, strong, rng))) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
    }
}

TEST(Augment, FlipTwiceAndBlurOfConstant) {
    std::mt19937_64 rng(6);
    const Tensor img = random_images(2, 6, rng);
    const auto twice = vals(flip_horizontal(flip_horizontal(img)));
    EXPECT_TRUE(std::equal(twice.begin(), twice.end(), img.values().begin()));
    const auto blurred = vals(gaussian_blur(Tensor::full({1, 5, 5, 3}, 0.3), 3, 1.0));
    for (double v : blurred) EXPECT_NEAR(v, 0.3, 1e-15);
}
