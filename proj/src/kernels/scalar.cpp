#include <cmath>
#include <vector>

#include "bilinear_common.hpp"
#include "vlcl/kernels.hpp"

namespace vlcl::kernels {
namespace {

void gemm_scalar(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 double alpha, const double* a, std::size_t lda, const double* b,
                 std::size_t ldb, double beta, double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        if (beta == 0.0) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        } else if (beta != 1.0) {
            for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
        }
    }
    if (!trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * ldc;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
                if (av == 0.0) continue;
                const double* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return;
    }
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * ldb;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += (trans_a ? a[p * lda + i] : a[i * lda + p]) * brow[p];
            }
            crow[j] += alpha * acc;
        }
    }
}

void axpby_scalar(std::size_t n, double a, const double* x, double b, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void add_scalar(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_scalar(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void bilinear_forward_scalar(const BilinearShape& s, const double* image, const double* grid,
                             double* out) {
    const std::size_t plane = s.in_h * s.in_w * s.channels;
    const std::size_t npix = s.out_h * s.out_w;
    for (std::size_t b = 0; b < s.batch; ++b) {
        const double* img = image + b * plane;
        for (std::size_t p = 0; p < npix; ++p) {
            const std::size_t gi = b * npix + p;
            const detail::Taps t = detail::taps(s, grid[2 * gi], grid[2 * gi + 1]);
            double* o = out + gi * s.channels;
            for (std::size_t c = 0; c < s.channels; ++c) {
                double acc = 0.0;
                for (int q = 0; q < 4; ++q) {
                    if (t.valid[q]) acc += t.weight[q] * img[t.offset[q] * s.channels + c];
                }
                o[c] = acc;
            }
        }
    }
}

void bilinear_backward_scalar(const BilinearShape& s, const double* image, const double* grid,
                              const double* grad_out, double* grad_image, double* grad_grid) {
    const std::size_t plane = s.in_h * s.in_w * s.channels;
    const std::size_t npix = s.out_h * s.out_w;
    const double sx = detail::coord_scale(s.in_w);
    const double sy = detail::coord_scale(s.in_h);
    for (std::size_t b = 0; b < s.batch; ++b) {
        const double* img = image + b * plane;
        for (std::size_t p = 0; p < npix; ++p) {
            const std::size_t gi = b * npix + p;
            const detail::Taps t = detail::taps(s, grid[2 * gi], grid[2 * gi + 1]);
            const double* g = grad_out + gi * s.channels;
            if (grad_image != nullptr) {
                double* gimg = grad_image + b * plane;
                for (int q = 0; q < 4; ++q) {
                    if (!t.valid[q]) continue;
                    for (std::size_t c = 0; c < s.channels; ++c) {
                        gimg[t.offset[q] * s.channels + c] += t.weight[q] * g[c];
                    }
                }
            }
            if (grad_grid != nullptr) {
                double dx = 0.0;
                double dy = 0.0;
                for (std::size_t c = 0; c < s.channels; ++c) {
                    double v[4];
                    for (int q = 0; q < 4; ++q) {
                        v[q] = t.valid[q] ? img[t.offset[q] * s.channels + c] : 0.0;
                    }
                    // taps order: (x0,y0) (x1,y0) (x0,y1) (x1,y1)
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

const KernelTable& scalar_table() {
    static const KernelTable table{
        "scalar",       gemm_scalar,  axpby_scalar,          add_scalar,
        mul_scalar,     dot_scalar,   bilinear_forward_scalar, bilinear_backward_scalar,
    };
    return table;
}

}  // namespace vlcl::kernels
