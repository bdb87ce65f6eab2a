// AVX2 + FMA kernel variants. This file is the only one compiled with
// -mavx2 -mfma; nothing here may be called unless cpu_supports(Isa::avx2).

#include <immintrin.h>

#include <cmath>

#include "bilinear_common.hpp"
#include "vlcl/kernels.hpp"

namespace vlcl::kernels {
namespace {

// C(m x n) = alpha * A(m x k) * B(k x n) + beta * C, both operands untransposed.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
             std::size_t ldc) {
    const __m256d valpha = _mm256_set1_pd(alpha);
    const __m256d vbeta = _mm256_set1_pd(beta);

    auto finish = [&](double* dst, __m256d acc) {
        acc = _mm256_mul_pd(acc, valpha);
        if (beta != 0.0) acc = _mm256_fmadd_pd(vbeta, _mm256_loadu_pd(dst), acc);
        _mm256_storeu_pd(dst, acc);
    };
    auto finish_scalar = [&](double* dst, double acc) {
        *dst = alpha * acc + (beta != 0.0 ? beta * *dst : 0.0);
    };

    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + (i + 0) * lda;
        const double* a1 = a + (i + 1) * lda;
        const double* a2 = a + (i + 2) * lda;
        const double* a3 = a + (i + 3) * lda;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
            __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
            __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
            __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = b + p * ldb + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + 4);
                __m256d av = _mm256_broadcast_sd(a0 + p);
                c00 = _mm256_fmadd_pd(av, b0, c00);
                c01 = _mm256_fmadd_pd(av, b1, c01);
                av = _mm256_broadcast_sd(a1 + p);
                c10 = _mm256_fmadd_pd(av, b0, c10);
                c11 = _mm256_fmadd_pd(av, b1, c11);
                av = _mm256_broadcast_sd(a2 + p);
                c20 = _mm256_fmadd_pd(av, b0, c20);
                c21 = _mm256_fmadd_pd(av, b1, c21);
                av = _mm256_broadcast_sd(a3 + p);
                c30 = _mm256_fmadd_pd(av, b0, c30);
                c31 = _mm256_fmadd_pd(av, b1, c31);
            }
            finish(c + (i + 0) * ldc + j, c00);
            finish(c + (i + 0) * ldc + j + 4, c01);
            finish(c + (i + 1) * ldc + j, c10);
            finish(c + (i + 1) * ldc + j + 4, c11);
            finish(c + (i + 2) * ldc + j, c20);
            finish(c + (i + 2) * ldc + j + 4, c21);
            finish(c + (i + 3) * ldc + j, c30);
            finish(c + (i + 3) * ldc + j + 4, c31);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
            __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d bv = _mm256_loadu_pd(b + p * ldb + j);
                c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a0 + p), bv, c0);
                c1 = _mm256_fmadd_pd(_mm256_broadcast_sd(a1 + p), bv, c1);
                c2 = _mm256_fmadd_pd(_mm256_broadcast_sd(a2 + p), bv, c2);
                c3 = _mm256_fmadd_pd(_mm256_broadcast_sd(a3 + p), bv, c3);
            }
            finish(c + (i + 0) * ldc + j, c0);
            finish(c + (i + 1) * ldc + j, c1);
            finish(c + (i + 2) * ldc + j, c2);
            finish(c + (i + 3) * ldc + j, c3);
        }
        for (; j < n; ++j) {
            double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            for (std::size_t p = 0; p < k; ++p) {
                const double bv = b[p * ldb + j];
                s0 += a0[p] * bv;
                s1 += a1[p] * bv;
                s2 += a2[p] * bv;
                s3 += a3[p] * bv;
            }
            finish_scalar(c + (i + 0) * ldc + j, s0);
            finish_scalar(c + (i + 1) * ldc + j, s1);
            finish_scalar(c + (i + 2) * ldc + j, s2);
            finish_scalar(c + (i + 3) * ldc + j, s3);
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + i * lda;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d acc = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p),
                                      _mm256_loadu_pd(b + p * ldb + j), acc);
            }
            finish(c + i * ldc + j, acc);
        }
        for (; j < n; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * ldb + j];
            finish_scalar(c + i * ldc + j, s);
        }
    }
}

// C(m x n) = alpha * A^T * B + beta * C with A stored k x m: reads A rows in
// place instead of transposing them first.
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
             std::size_t ldc) {
    const __m256d valpha = _mm256_set1_pd(alpha);
    const __m256d vbeta = _mm256_set1_pd(beta);
    auto finish = [&](double* dst, __m256d acc) {
        acc = _mm256_mul_pd(acc, valpha);
        if (beta != 0.0) acc = _mm256_fmadd_pd(vbeta, _mm256_loadu_pd(dst), acc);
        _mm256_storeu_pd(dst, acc);
    };
    auto finish_scalar = [&](double* dst, double acc) {
        *dst = alpha * acc + (beta != 0.0 ? beta * *dst : 0.0);
    };

    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
            __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
            __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
            __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                const double* arow = a + p * lda + i;
                const double* brow = b + p * ldb + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + 4);
                __m256d av = _mm256_broadcast_sd(arow);
                c00 = _mm256_fmadd_pd(av, b0, c00);
                c01 = _mm256_fmadd_pd(av, b1, c01);
                av = _mm256_broadcast_sd(arow + 1);
                c10 = _mm256_fmadd_pd(av, b0, c10);
                c11 = _mm256_fmadd_pd(av, b1, c11);
                av = _mm256_broadcast_sd(arow + 2);
                c20 = _mm256_fmadd_pd(av, b0, c20);
                c21 = _mm256_fmadd_pd(av, b1, c21);
                av = _mm256_broadcast_sd(arow + 3);
                c30 = _mm256_fmadd_pd(av, b0, c30);
                c31 = _mm256_fmadd_pd(av, b1, c31);
            }
            finish(c + (i + 0) * ldc + j, c00);
            finish(c + (i + 0) * ldc + j + 4, c01);
            finish(c + (i + 1) * ldc + j, c10);
            finish(c + (i + 1) * ldc + j + 4, c11);
            finish(c + (i + 2) * ldc + j, c20);
            finish(c + (i + 2) * ldc + j + 4, c21);
            finish(c + (i + 3) * ldc + j, c30);
            finish(c + (i + 3) * ldc + j + 4, c31);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
            __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                const double* arow = a + p * lda + i;
                const __m256d bv = _mm256_loadu_pd(b + p * ldb + j);
                c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(arow), bv, c0);
                c1 = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + 1), bv, c1);
                c2 = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + 2), bv, c2);
                c3 = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + 3), bv, c3);
            }
            finish(c + (i + 0) * ldc + j, c0);
            finish(c + (i + 1) * ldc + j, c1);
            finish(c + (i + 2) * ldc + j, c2);
            finish(c + (i + 3) * ldc + j, c3);
        }
        for (; j < n; ++j) {
            double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            for (std::size_t p = 0; p < k; ++p) {
                const double bv = b[p * ldb + j];
                const double* arow = a + p * lda + i;
                s0 += arow[0] * bv;
                s1 += arow[1] * bv;
                s2 += arow[2] * bv;
                s3 += arow[3] * bv;
            }
            finish_scalar(c + (i + 0) * ldc + j, s0);
            finish_scalar(c + (i + 1) * ldc + j, s1);
            finish_scalar(c + (i + 2) * ldc + j, s2);
            finish_scalar(c + (i + 3) * ldc + j, s3);
        }
    }
    for (; i < m; ++i) {
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d acc = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p * lda + i), _mm256_loadu_pd(b + p * ldb + j), acc);
            }
            finish(c + i * ldc + j, acc);
        }
        for (; j < n; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += a[p * lda + i] * b[p * ldb + j];
            finish_scalar(c + i * ldc + j, s);
        }
    }
}

// Plain heap buffer; std containers are avoided here so no template
// instantiation compiled for AVX2 can leak into the rest of the program.
struct Buffer {
    double* data = nullptr;
    ~Buffer() { delete[] data; }
};

void transpose_into(std::size_t rows, std::size_t cols, const double* src, std::size_t ld,
                    Buffer& dst) {
    dst.data = new double[rows * cols];
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst.data[c * rows + r] = src[r * ld + c];
}

void gemm_avx2(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
               double beta, double* c, std::size_t ldc) {
    if (m == 0 || n == 0) return;
    Buffer pb;
    if (trans_b) {
        transpose_into(n, k, b, ldb, pb);
        b = pb.data;
        ldb = n;
    }
    if (trans_a) {
        gemm_tn(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    } else {
        gemm_nn(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    }
}

void axpby_avx2(std::size_t n, double a, const double* x, double b, double* y) {
    const __m256d va = _mm256_set1_pd(a);
    const __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vy = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy));
    }
    for (; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void add_avx2(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_avx2(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

// Four grid points at once: coordinates, weights and gather indices for the
// four bilinear taps.
struct TapsX4 {
    __m256d wx0, wx1, wy0, wy1;
    __m256d w[4];
    __m256i idx[4];    // pixel offsets (row * in_w + col), 64-bit lanes
    __m256d valid[4];  // all-ones lanes where the tap lies inside the image
};

inline TapsX4 taps_x4(const BilinearShape& s, const double* grid4) {
    const __m256d g01 = _mm256_loadu_pd(grid4);
    const __m256d g23 = _mm256_loadu_pd(grid4 + 4);
    // unpack gives [x0 x2 x1 x3]; permute restores lane order
    const __m256d gx = _mm256_permute4x64_pd(_mm256_unpacklo_pd(g01, g23), 0xD8);
    const __m256d gy = _mm256_permute4x64_pd(_mm256_unpackhi_pd(g01, g23), 0xD8);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d px = _mm256_mul_pd(_mm256_add_pd(gx, one), _mm256_set1_pd(detail::coord_scale(s.in_w)));
    const __m256d py = _mm256_mul_pd(_mm256_add_pd(gy, one), _mm256_set1_pd(detail::coord_scale(s.in_h)));
    const __m256d fx = _mm256_floor_pd(px);
    const __m256d fy = _mm256_floor_pd(py);

    TapsX4 t;
    t.wx1 = _mm256_sub_pd(px, fx);
    t.wx0 = _mm256_sub_pd(one, t.wx1);
    t.wy1 = _mm256_sub_pd(py, fy);
    t.wy0 = _mm256_sub_pd(one, t.wy1);
    t.w[0] = _mm256_mul_pd(t.wx0, t.wy0);
    t.w[1] = _mm256_mul_pd(t.wx1, t.wy0);
    t.w[2] = _mm256_mul_pd(t.wx0, t.wy1);
    t.w[3] = _mm256_mul_pd(t.wx1, t.wy1);

    const __m256d zero = _mm256_setzero_pd();
    const __m256d wmax = _mm256_set1_pd(static_cast<double>(s.in_w));
    const __m256d hmax = _mm256_set1_pd(static_cast<double>(s.in_h));
    const __m256d xs[4] = {fx, _mm256_add_pd(fx, one), fx, _mm256_add_pd(fx, one)};
    const __m256d ys[4] = {fy, fy, _mm256_add_pd(fy, one), _mm256_add_pd(fy, one)};
    for (int q = 0; q < 4; ++q) {
        const __m256d inx = _mm256_and_pd(_mm256_cmp_pd(xs[q], zero, _CMP_GE_OQ),
                                          _mm256_cmp_pd(xs[q], wmax, _CMP_LT_OQ));
        const __m256d iny = _mm256_and_pd(_mm256_cmp_pd(ys[q], zero, _CMP_GE_OQ),
                                          _mm256_cmp_pd(ys[q], hmax, _CMP_LT_OQ));
        t.valid[q] = _mm256_and_pd(inx, iny);
        // Offsets of invalid lanes are forced to 0 so the conversion never sees
        // huge coordinates.
        const __m256d off = _mm256_and_pd(t.valid[q], _mm256_fmadd_pd(ys[q], wmax, xs[q]));
        t.idx[q] = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(off));
    }
    return t;
}

inline __m256d gather_channel(const double* img, const TapsX4& t, int q, std::size_t channels,
                              std::size_t c) {
    const __m256i scaled = _mm256_add_epi64(
        _mm256_mul_epu32(t.idx[q], _mm256_set1_epi64x(static_cast<long long>(channels))),
        _mm256_set1_epi64x(static_cast<long long>(c)));
    return _mm256_mask_i64gather_pd(_mm256_setzero_pd(), img, scaled, t.valid[q], 8);
}

void bilinear_forward_avx2(const BilinearShape& s, const double* image, const double* grid,
                           double* out) {
    const std::size_t plane = s.in_h * s.in_w * s.channels;
    const std::size_t npix = s.out_h * s.out_w;
    for (std::size_t b = 0; b < s.batch; ++b) {
        const double* img = image + b * plane;
        std::size_t p = 0;
        for (; p + 4 <= npix; p += 4) {
            const std::size_t gi = b * npix + p;
            const TapsX4 t = taps_x4(s, grid + 2 * gi);
            for (std::size_t c = 0; c < s.channels; ++c) {
                __m256d acc = _mm256_mul_pd(t.w[0], gather_channel(img, t, 0, s.channels, c));
                acc = _mm256_fmadd_pd(t.w[1], gather_channel(img, t, 1, s.channels, c), acc);
                acc = _mm256_fmadd_pd(t.w[2], gather_channel(img, t, 2, s.channels, c), acc);
                acc = _mm256_fmadd_pd(t.w[3], gather_channel(img, t, 3, s.channels, c), acc);
                alignas(32) double lanes[4];
                _mm256_store_pd(lanes, acc);
                for (int l = 0; l < 4; ++l) out[(gi + l) * s.channels + c] = lanes[l];
            }
        }
        for (; p < npix; ++p) {
            const std::size_t gi = b * npix + p;
            const detail::Taps t = detail::taps(s, grid[2 * gi], grid[2 * gi + 1]);
            for (std::size_t c = 0; c < s.channels; ++c) {
                double acc = 0.0;
                for (int q = 0; q < 4; ++q)
                    if (t.valid[q]) acc += t.weight[q] * img[t.offset[q] * s.channels + c];
                out[gi * s.channels + c] = acc;
            }
        }
    }
}

void bilinear_backward_avx2(const BilinearShape& s, const double* image, const double* grid,
                            const double* grad_out, double* grad_image, double* grad_grid) {
    const std::size_t plane = s.in_h * s.in_w * s.channels;
    const std::size_t npix = s.out_h * s.out_w;
    const double sx = detail::coord_scale(s.in_w);
    const double sy = detail::coord_scale(s.in_h);
    for (std::size_t b = 0; b < s.batch; ++b) {
        const double* img = image + b * plane;
        std::size_t p = 0;
        if (grad_grid != nullptr) {
            for (; p + 4 <= npix; p += 4) {
                const std::size_t gi = b * npix + p;
                const TapsX4 t = taps_x4(s, grid + 2 * gi);
                __m256d dx = _mm256_setzero_pd();
                __m256d dy = _mm256_setzero_pd();
                for (std::size_t c = 0; c < s.channels; ++c) {
                    const __m256d g = _mm256_set_pd(grad_out[(gi + 3) * s.channels + c],
                                                    grad_out[(gi + 2) * s.channels + c],
                                                    grad_out[(gi + 1) * s.channels + c],
                                                    grad_out[(gi + 0) * s.channels + c]);
                    const __m256d v0 = gather_channel(img, t, 0, s.channels, c);
                    const __m256d v1 = gather_channel(img, t, 1, s.channels, c);
                    const __m256d v2 = gather_channel(img, t, 2, s.channels, c);
                    const __m256d v3 = gather_channel(img, t, 3, s.channels, c);
                    const __m256d ddx = _mm256_add_pd(_mm256_mul_pd(t.wy0, _mm256_sub_pd(v1, v0)),
                                                      _mm256_mul_pd(t.wy1, _mm256_sub_pd(v3, v2)));
                    const __m256d ddy = _mm256_add_pd(_mm256_mul_pd(t.wx0, _mm256_sub_pd(v2, v0)),
                                                      _mm256_mul_pd(t.wx1, _mm256_sub_pd(v3, v1)));
                    dx = _mm256_fmadd_pd(g, ddx, dx);
                    dy = _mm256_fmadd_pd(g, ddy, dy);
                }
                alignas(32) double lx[4], ly[4];
                _mm256_store_pd(lx, dx);
                _mm256_store_pd(ly, dy);
                for (int l = 0; l < 4; ++l) {
                    grad_grid[2 * (gi + l)] += lx[l] * sx;
                    grad_grid[2 * (gi + l) + 1] += ly[l] * sy;
                }
            }
        }
        // Scatter into the image gradient has write conflicts; keep it scalar,
        // together with the grid tail.
        for (std::size_t q0 = 0; q0 < npix; ++q0) {
            const std::size_t gi = b * npix + q0;
            const bool grid_tail = grad_grid != nullptr && q0 >= p;
            if (grad_image == nullptr && !grid_tail) continue;
            const detail::Taps t = detail::taps(s, grid[2 * gi], grid[2 * gi + 1]);
            const double* g = grad_out + gi * s.channels;
            if (grad_image != nullptr) {
                double* gimg = grad_image + b * plane;
                for (int q = 0; q < 4; ++q) {
                    if (!t.valid[q]) continue;
                    for (std::size_t c = 0; c < s.channels; ++c)
                        gimg[t.offset[q] * s.channels + c] += t.weight[q] * g[c];
                }
            }
            if (grid_tail) {
                double dx = 0.0, dy = 0.0;
                for (std::size_t c = 0; c < s.channels; ++c) {
                    double v[4];
                    for (int q = 0; q < 4; ++q)
                        v[q] = t.valid[q] ? img[t.offset[q] * s.channels + c] : 0.0;
                    dx += g[c] * (t.wy0 * (v[1] - v[0]) + t.wy1 * (v[3] - v[2]));
                    dy += g[c] * (t.wx0 * (v[2] - v[0]) + t.wx1 * (v[3] - v[1]));
                }
                grad_grid[2 * gi] += dx * sx;
                grad_grid[2 * gi + 1] += dy * sy;
            }
        }
    }
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable table{
        "avx2",   gemm_avx2, axpby_avx2,           add_avx2,
        mul_avx2, dot_avx2,  bilinear_forward_avx2, bilinear_backward_avx2,
    };
    return table;
}

}  // namespace vlcl::kernels
