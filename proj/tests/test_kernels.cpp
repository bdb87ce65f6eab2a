#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vlcl/kernels.hpp"

using namespace vlcl::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        ASSERT_LE(std::abs(a[i] - b[i]), tol * scale) << "index " << i;
    }
}

bool have_avx2() {
#if defined(VLCL_HAVE_AVX2)
    return cpu_supports(Isa::avx2);
#else
    return false;
#endif
}

}  // namespace

TEST(KernelDispatch, ParsesNames) {
    EXPECT_EQ(parse_isa("scalar"), Isa::scalar);
    EXPECT_EQ(parse_isa("avx2"), Isa::avx2);
    EXPECT_THROW(parse_isa("neon"), std::invalid_argument);
    EXPECT_EQ(isa_name(Isa::scalar), "scalar");
}

TEST(KernelDispatch, ScopedIsaRestores) {
    const Isa before = active_isa();
    {
        ScopedIsa s(Isa::scalar);
        EXPECT_EQ(active_isa(), Isa::scalar);
        EXPECT_STREQ(active().name, scalar_table().name);
    }
    EXPECT_EQ(active_isa(), before);
}

TEST(KernelScalar, GemmMatchesNaiveLoops) {
    std::mt19937_64 rng(1);
    const std::size_t m = 5, n = 7, k = 3;
    const auto a = random_vec(m * k, rng);
    const auto b = random_vec(k * n, rng);
    auto c = random_vec(m * n, rng);
    auto expected = c;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            expected[i * n + j] = 0.5 * s + 2.0 * expected[i * n + j];
        }
    scalar_table().gemm(false, false, m, n, k, 0.5, a.data(), k, b.data(), n, 2.0, c.data(), n);
    expect_close(c, expected, 1e-14);
}

TEST(KernelScalar, BilinearReadsPixelCentres) {
    // 2x2 single-channel image; corners of the normalized grid hit pixel centres.
    const BilinearShape s{1, 2, 2, 1, 1, 3};
    const std::vector<double> image{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> grid{-1.0, -1.0, 0.0, 0.0, 3.0, 0.0};
    std::vector<double> out(3);
    scalar_table().bilinear_forward(s, image.data(), grid.data(), out.data());
    EXPECT_DOUBLE_EQ(out[0], 1.0);
    EXPECT_DOUBLE_EQ(out[1], 2.5);
    EXPECT_DOUBLE_EQ(out[2], 0.0);  // outside -> zero padding
}

class Avx2Equivalence : public ::testing::Test {
protected:
    void SetUp() override {
        if (!have_avx2()) GTEST_SKIP() << "AVX2 variant not available on this build or CPU";
    }
#if defined(VLCL_HAVE_AVX2)
    const KernelTable& fast = avx2_table();
#else
    const KernelTable& fast = scalar_table();
#endif
    const KernelTable& ref = scalar_table();
};

TEST_F(Avx2Equivalence, GemmAllTransposesAndRaggedSizes) {
    std::mt19937_64 rng(2);
    const std::size_t sizes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 16}, {13, 17, 9}, {64, 33, 70}, {96, 128, 27}};
    for (const auto& sz : sizes) {
        const std::size_t m = sz[0], n = sz[1], k = sz[2];
        for (int ta = 0; ta < 2; ++ta)
            for (int tb = 0; tb < 2; ++tb) {
                const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
                const auto a = random_vec(m * k, rng);
                const auto b = random_vec(k * n, rng);
                auto c1 = random_vec(m * n, rng);
                auto c2 = c1;
                for (double beta : {0.0, 1.0, -0.5}) {
                    ref.gemm(ta, tb, m, n, k, 1.3, a.data(), lda, b.data(), ldb, beta, c1.data(), n);
                    fast.gemm(ta, tb, m, n, k, 1.3, a.data(), lda, b.data(), ldb, beta, c2.data(), n);
                    SCOPED_TRACE(testing::Message() << m << "x" << n << "x" << k << " ta=" << ta << " tb=" << tb
                                                    << " beta=" << beta);
                    expect_close(c1, c2, 1e-12);
                }
            }
    }
}

TEST_F(Avx2Equivalence, GemmIgnoresGarbageWhenBetaIsZero) {
    std::mt19937_64 rng(3);
    const std::size_t m = 6, n = 9, k = 4;
    const auto a = random_vec(m * k, rng);
    const auto b = random_vec(k * n, rng);
    std::vector<double> c1(m * n, std::nan("")), c2(m * n, std::nan(""));
    ref.gemm(false, false, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, c1.data(), n);
    fast.gemm(false, false, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, c2.data(), n);
    expect_close(c1, c2, 1e-12);
}

TEST_F(Avx2Equivalence, ElementwiseAndDot) {
    std::mt19937_64 rng(4);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 31u, 1000u}) {
        const auto x = random_vec(n, rng);
        const auto y = random_vec(n, rng);
        std::vector<double> r1(n), r2(n);
        ref.add(n, x.data(), y.data(), r1.data());
        fast.add(n, x.data(), y.data(), r2.data());
        expect_close(r1, r2, 0.0);
        ref.mul(n, x.data(), y.data(), r1.data());
        fast.mul(n, x.data(), y.data(), r2.data());
        expect_close(r1, r2, 0.0);
        auto y1 = y, y2 = y;
        ref.axpby(n, 0.7, x.data(), -1.1, y1.data());
        fast.axpby(n, 0.7, x.data(), -1.1, y2.data());
        expect_close(y1, y2, 1e-15);
        EXPECT_NEAR(ref.dot(n, x.data(), y.data()), fast.dot(n, x.data(), y.data()), 1e-12) << "n=" << n;
    }
}

TEST_F(Avx2Equivalence, ElementwiseAllowsAliasing) {
    std::mt19937_64 rng(5);
    const std::size_t n = 37;
    const auto x = random_vec(n, rng);
    auto y1 = random_vec(n, rng);
    auto y2 = y1;
    ref.add(n, x.data(), y1.data(), y1.data());
    fast.add(n, x.data(), y2.data(), y2.data());
    expect_close(y1, y2, 0.0);
}

TEST_F(Avx2Equivalence, BilinearForwardAndBackward) {
    std::mt19937_64 rng(6);
    for (std::size_t channels : {1u, 3u, 4u, 9u}) {
        const BilinearShape s{3, 7, 6, channels, 5, 8};
        const auto image = random_vec(s.batch * s.in_h * s.in_w * channels, rng);
        // Reach past the borders to exercise the zero padding.
        const auto grid = random_vec(s.batch * s.out_h * s.out_w * 2, rng, -1.3, 1.3);
        const std::size_t out_n = s.batch * s.out_h * s.out_w * channels;
        std::vector<double> o1(out_n), o2(out_n);
        ref.bilinear_forward(s, image.data(), grid.data(), o1.data());
        fast.bilinear_forward(s, image.data(), grid.data(), o2.data());
        expect_close(o1, o2, 1e-14);

        const auto g_out = random_vec(out_n, rng);
        std::vector<double> gi1(image.size()), gi2(image.size()), gg1(grid.size()), gg2(grid.size());
        ref.bilinear_backward(s, image.data(), grid.data(), g_out.data(), gi1.data(), gg1.data());
        fast.bilinear_backward(s, image.data(), grid.data(), g_out.data(), gi2.data(), gg2.data());
        expect_close(gi1, gi2, 1e-13);
        expect_close(gg1, gg2, 1e-13);

        std::vector<double> only_grid(grid.size());
        fast.bilinear_backward(s, image.data(), grid.data(), g_out.data(), nullptr, only_grid.data());
        expect_close(only_grid, gg1, 1e-13);
    }
}
