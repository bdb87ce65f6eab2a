#include <gtest/gtest.h>

#include "vlcl/gradcheck.hpp"
#include "vlcl/kernels.hpp"
#include "vlcl/ops.hpp"

using namespace vlcl;
using ag::Tensor;

namespace {

void expect_all_pass(const std::vector<gradcheck::CheckResult>& results) {
    ASSERT_FALSE(results.empty());
    for (const auto& r : results) {
        EXPECT_TRUE(r.passed()) << gradcheck::format(r);
        EXPECT_GT(r.comparisons, 0u) << r.name;
    }
}

}  // namespace

TEST(GradcheckHarness, RelativeErrorUsesFloor) {
    EXPECT_NEAR(gradcheck::relative_error(1.0, 1.1, 1e-7), 0.1 / 1.1, 1e-15);
    EXPECT_NEAR(gradcheck::relative_error(0.0, 1e-9, 1e-6), 1e-3, 1e-15);
}

TEST(GradcheckHarness, CatchesAWrongGradient) {
    // x^2 with a deliberately wrong backward rule.
    const gradcheck::ScalarFn broken = [](const std::vector<Tensor>& in) {
        const Tensor& x = in[0];
        const Tensor y = ag::make_op("broken_square", {}, {x.item() * x.item()}, {x},
                                     [x](const Tensor& g, const std::vector<bool>&) {
                                         return std::vector<Tensor>{ag::scale(g, 3.0 * x.item())};
                                     });
        return y;
    };
    const auto r = gradcheck::compare_gradients("broken", broken, {Tensor::scalar(0.7)}, 1e-5, 1e-4);
    EXPECT_FALSE(r.passed());
}

TEST(Gradcheck, BilinearSampler) {
    const auto r = gradcheck::check_bilinear(20, 1);
    EXPECT_TRUE(r.passed()) << gradcheck::format(r);
    EXPECT_LE(r.tolerance, 1e-3);
}

TEST(Gradcheck, BilinearSamplerScalarKernels) {
    kernels::ScopedIsa scalar(kernels::Isa::scalar);
    const auto r = gradcheck::check_bilinear(5, 9);
    EXPECT_TRUE(r.passed()) << gradcheck::format(r);
}

TEST(Gradcheck, EveryOpFirstOrder) { expect_all_pass(gradcheck::check_ops()); }

TEST(Gradcheck, EveryOpSecondOrder) { expect_all_pass(gradcheck::check_ops_second_order()); }

TEST(Gradcheck, EncoderAndMetaLoss) {
    const auto r = gradcheck::check_encoder();
    EXPECT_TRUE(r.passed()) << gradcheck::format(r);
}

TEST(Gradcheck, LocaliserAndWarp) {
    const auto r = gradcheck::check_localiser();
    EXPECT_TRUE(r.passed()) << gradcheck::format(r);
}

TEST(Gradcheck, TwoStageMetaGradient) {
    const auto r = gradcheck::check_two_stage(3, 200);
    EXPECT_TRUE(r.passed()) << gradcheck::format(r);
}
