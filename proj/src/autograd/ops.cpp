#include "vlcl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "vlcl/kernels.hpp"

namespace vlcl::ag {
namespace {

const double* ptr(const Tensor& t) { return t.values().data(); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                    " vs " + to_string(b.shape()));
    }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                    ", got " + to_string(t.shape()));
    }
}

template <typename F>
std::vector<double> map_values(const Tensor& x, F f) {
    const auto in = x.values();
    std::vector<double> out(in.size());
    std::transform(in.begin(), in.end(), out.begin(), f);
    return out;
}

// Constant 0/1 mask from a predicate on the values of x.
template <typename P>
Tensor mask_of(const Tensor& x, P pred) {
    return Tensor::constant(x.shape(), map_values(x, [&](double v) { return pred(v) ? 1.0 : 0.0; }));
}

double lattice(std::size_t i, std::size_t n) {
    return n > 1 ? -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
}

kernels::BilinearShape bilinear_shape(const Shape& image, const Shape& grid) {
    kernels::BilinearShape s;
    s.batch = image[0];
    s.in_h = image[1];
    s.in_w = image[2];
    s.channels = image[3];
    s.out_h = grid[1];
    s.out_w = grid[2];
    return s;
}

Tensor bilinear_image_grad(const Tensor& g, const Tensor& grid, const Shape& image_shape);
Tensor bilinear_grid_grad(const Tensor& image, const Tensor& grid, const Tensor& g);

Tensor bilinear_image_grad(const Tensor& g, const Tensor& grid, const Shape& image_shape) {
    std::vector<double> out(numel(image_shape), 0.0);
    kernels::active().bilinear_backward(bilinear_shape(image_shape, grid.shape()), nullptr,
                                        ptr(grid), ptr(g), out.data(), nullptr);
    return make_op("bilinear_image_grad", image_shape, std::move(out), {g, grid},
                   [grid](const Tensor& gg, const std::vector<bool>& needed) {
                       if (needed[1]) {
                           throw std::logic_error(
                               "second derivative of bilinear sampling w.r.t. the grid is not "
                               "supported");
                       }
                       return std::vector<Tensor>{bilinear_sample(gg, grid), Tensor()};
                   });
}

Tensor bilinear_grid_grad(const Tensor& image, const Tensor& grid, const Tensor& g) {
    std::vector<double> out(grid.numel(), 0.0);
    kernels::active().bilinear_backward(bilinear_shape(image.shape(), grid.shape()), ptr(image),
                                        ptr(grid), ptr(g), nullptr, out.data());
    return make_op("bilinear_grid_grad", grid.shape(), std::move(out), {image, grid, g},
                   [](const Tensor&, const std::vector<bool>&) -> std::vector<Tensor> {
                       throw std::logic_error(
                           "second derivative of bilinear sampling w.r.t. the grid is not "
                           "supported");
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    kernels::active().add(out.size(), ptr(a), ptr(b), out.data());
    return make_op("add", a.shape(), std::move(out), {a, b},
                   [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g, g};
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.values().begin(), a.values().end());
    kernels::active().axpby(out.size(), -1.0, ptr(b), 1.0, out.data());
    return make_op("sub", a.shape(), std::move(out), {a, b},
                   [](const Tensor& g, const std::vector<bool>& needed) {
                       return std::vector<Tensor>{g, needed[1] ? neg(g) : Tensor()};
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    kernels::active().mul(out.size(), ptr(a), ptr(b), out.data());
    return make_op("mul", a.shape(), std::move(out), {a, b},
                   [a, b](const Tensor& g, const std::vector<bool>& needed) {
                       return std::vector<Tensor>{needed[0] ? mul(g, b) : Tensor(),
                                                  needed[1] ? mul(g, a) : Tensor()};
                   });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.numel(), 0.0);
    kernels::active().axpby(out.size(), factor, ptr(x), 0.0, out.data());
    return make_op("scale", x.shape(), std::move(out), {x},
                   [factor](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{scale(g, factor)};
                   });
}

Tensor add_scalar(const Tensor& x, double offset) {
    return make_op("add_scalar", x.shape(), map_values(x, [offset](double v) { return v + offset; }),
                   {x}, [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g};
                   });
}

Tensor exp(const Tensor& x) {
    return make_op("exp", x.shape(), map_values(x, [](double v) { return std::exp(v); }), {x},
                   [x](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, exp(x))};
                   });
}

Tensor log(const Tensor& x) {
    return make_op("log", x.shape(), map_values(x, [](double v) { return std::log(v); }), {x},
                   [x](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, pow(x, -1.0))};
                   });
}

Tensor tanh(const Tensor& x) {
    return make_op("tanh", x.shape(), map_values(x, [](double v) { return std::tanh(v); }), {x},
                   [x](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{sub(g, mul(g, square(tanh(x))))};
                   });
}

Tensor sigmoid(const Tensor& x) {
    return make_op("sigmoid", x.shape(),
                   map_values(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }), {x},
                   [x](const Tensor& g, const std::vector<bool>&) {
                       const Tensor s = sigmoid(x);
                       return std::vector<Tensor>{mul(g, sub(s, square(s)))};
                   });
}

Tensor relu(const Tensor& x) {
    return make_op("relu", x.shape(), map_values(x, [](double v) { return v > 0.0 ? v : 0.0; }),
                   {x}, [x](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, mask_of(x, [](double v) { return v > 0.0; }))};
                   });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    return make_op("clamp", x.shape(),
                   map_values(x, [lo, hi](double v) { return std::clamp(v, lo, hi); }), {x},
                   [x, lo, hi](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{
                           mul(g, mask_of(x, [lo, hi](double v) { return v >= lo && v <= hi; }))};
                   });
}

Tensor abs(const Tensor& x) {
    return make_op("abs", x.shape(), map_values(x, [](double v) { return std::abs(v); }), {x},
                   [x](const Tensor& g, const std::vector<bool>&) {
                       const Tensor sign = Tensor::constant(
                           x.shape(), map_values(x, [](double v) { return v < 0.0 ? -1.0 : 1.0; }));
                       return std::vector<Tensor>{mul(g, sign)};
                   });
}

Tensor pow(const Tensor& x, double exponent) {
    return make_op("pow", x.shape(),
                   map_values(x, [exponent](double v) { return std::pow(v, exponent); }), {x},
                   [x, exponent](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, scale(pow(x, exponent - 1.0), exponent))};
                   });
}

Tensor square(const Tensor& x) { return mul(x, x); }

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return make_op("sum", {}, {s}, {x}, [shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{reshape(broadcast_mid(reshape(g, {1, 1}), 1, numel(shape), 1), shape)};
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reduce_mid(const Tensor& x, std::size_t outer, std::size_t mid, std::size_t inner) {
    if (outer * mid * inner != x.numel()) {
        throw std::invalid_argument("reduce_mid: " + to_string(x.shape()) + " is not " +
                                    std::to_string(outer) + "x" + std::to_string(mid) + "x" +
                                    std::to_string(inner));
    }
    const double* v = ptr(x);
    std::vector<double> out(outer * inner, 0.0);
    if (inner == 1) {
        for (std::size_t o = 0; o < outer; ++o) {
            const double* row = v + o * mid;
            double acc[4] = {0.0, 0.0, 0.0, 0.0};
            std::size_t m = 0;
            for (; m + 4 <= mid; m += 4)
                for (int l = 0; l < 4; ++l) acc[l] += row[m + l];
            double total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
            for (; m < mid; ++m) total += row[m];
            out[o] = total;
        }
    } else {
        const auto& k = kernels::active();
        for (std::size_t o = 0; o < outer; ++o) {
            double* dst = out.data() + o * inner;
            for (std::size_t m = 0; m < mid; ++m) k.add(inner, dst, v + (o * mid + m) * inner, dst);
        }
    }
    return make_op("reduce_mid", {outer, inner}, std::move(out), {x},
                   [outer, mid, inner, shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{reshape(broadcast_mid(g, outer, mid, inner), shape)};
                   });
}

Tensor broadcast_mid(const Tensor& x, std::size_t outer, std::size_t mid, std::size_t inner) {
    if (outer * inner != x.numel()) {
        throw std::invalid_argument("broadcast_mid: " + to_string(x.shape()) + " is not " +
                                    std::to_string(outer) + "x" + std::to_string(inner));
    }
    const double* v = ptr(x);
    std::vector<double> out(outer * mid * inner);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t m = 0; m < mid; ++m)
            std::copy(v + o * inner, v + (o + 1) * inner, out.begin() + (o * mid + m) * inner);
    return make_op("broadcast_mid", {outer, mid, inner}, std::move(out), {x},
                   [outer, mid, inner, shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{reshape(reduce_mid(g, outer, mid, inner), shape)};
                   });
}

Tensor row_sum(const Tensor& x) {
    require_rank("row_sum", x, 2);
    return reshape(reduce_mid(x, x.dim(0), x.dim(1), 1), {x.dim(0)});
}

Tensor col_sum(const Tensor& x) {
    require_rank("col_sum", x, 2);
    return reshape(reduce_mid(x, 1, x.dim(0), x.dim(1)), {x.dim(1)});
}

Tensor expand_rows(const Tensor& v, std::size_t rows) {
    return reshape(broadcast_mid(v, 1, rows, v.numel()), {rows, v.numel()});
}

Tensor expand_cols(const Tensor& v, std::size_t cols) {
    return reshape(broadcast_mid(v, v.numel(), cols, 1), {v.numel(), cols});
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = trans_a ? a.dim(1) : a.dim(0);
    const std::size_t k = trans_a ? a.dim(0) : a.dim(1);
    const std::size_t kb = trans_b ? b.dim(1) : b.dim(0);
    const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
    if (k != kb) {
        throw std::invalid_argument("matmul: inner dimensions differ: " + to_string(a.shape()) +
                                    (trans_a ? "^T" : "") + " x " + to_string(b.shape()) +
                                    (trans_b ? "^T" : ""));
    }
    std::vector<double> out(m * n, 0.0);
    kernels::active().gemm(trans_a, trans_b, m, n, k, 1.0, ptr(a), a.dim(1), ptr(b), b.dim(1), 0.0,
                           out.data(), n);
    return make_op("matmul", {m, n}, std::move(out), {a, b},
                   [a, b, trans_a, trans_b](const Tensor& g, const std::vector<bool>& needed) {
                       Tensor ga, gb;
                       if (needed[0]) {
                           ga = trans_a ? matmul(b, g, trans_b, true) : matmul(g, b, false, !trans_b);
                       }
                       if (needed[1]) {
                           gb = trans_b ? matmul(g, a, true, trans_a) : matmul(a, g, !trans_a, false);
                       }
                       return std::vector<Tensor>{ga, gb};
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw std::invalid_argument("reshape: cannot view " + to_string(x.shape()) + " as " +
                                    to_string(shape));
    }
    if (shape == x.shape()) return x;
    std::vector<double> out(x.values().begin(), x.values().end());
    return make_op("reshape", std::move(shape), std::move(out), {x},
                   [orig = x.shape()](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{reshape(g, orig)};
                   });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
    if (x.rank() == 0 || start + count > x.dim(0)) {
        throw std::invalid_argument("slice_rows: rows [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") out of " +
                                    to_string(x.shape()));
    }
    const std::size_t row = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = count;
    std::vector<double> out(x.values().begin() + start * row,
                            x.values().begin() + (start + count) * row);
    return make_op("slice_rows", std::move(shape), std::move(out), {x},
                   [start, total = x.dim(0)](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{embed_rows(g, start, total)};
                   });
}

Tensor embed_rows(const Tensor& x, std::size_t start, std::size_t total) {
    if (x.rank() == 0 || start + x.dim(0) > total) {
        throw std::invalid_argument("embed_rows: cannot place " + to_string(x.shape()) +
                                    " at row " + std::to_string(start) + " of " +
                                    std::to_string(total));
    }
    const std::size_t row = x.dim(0) ? x.numel() / x.dim(0) : 0;
    Shape shape = x.shape();
    shape[0] = total;
    std::vector<double> out(numel(shape), 0.0);
    std::copy(x.values().begin(), x.values().end(), out.begin() + start * row);
    return make_op("embed_rows", std::move(shape), std::move(out), {x},
                   [start, count = x.dim(0)](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{slice_rows(g, start, count)};
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    std::size_t total = 0;
    for (const auto& p : parts) total += p.dim(0);
    Tensor out;
    std::size_t start = 0;
    for (const auto& p : parts) {
        Tensor placed = embed_rows(p, start, total);
        out = out.defined() ? add(out, placed) : placed;
        start += p.dim(0);
    }
    return out;
}

Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t pad) {
    require_rank("im2col", x, 4);
    const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (h + 2 * pad < kernel || w + 2 * pad < kernel) {
        throw std::invalid_argument("im2col: kernel larger than padded input " + to_string(x.shape()));
    }
    const std::size_t oh = h + 2 * pad - kernel + 1;
    const std::size_t ow = w + 2 * pad - kernel + 1;
    const std::size_t cols = kernel * kernel * c;
    const double* v = ptr(x);
    std::vector<double> out(b * oh * ow * cols, 0.0);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double* row = out.data() + ((n * oh + oy) * ow + ox) * cols;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        const double* src = v + ((n * h + iy) * w + ix) * c;
                        std::copy(src, src + c, row + (ky * kernel + kx) * c);
                    }
                }
            }
    return make_op("im2col", {b * oh * ow, cols}, std::move(out), {x},
                   [shape = x.shape(), kernel, pad](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{col2im(g, shape, kernel, pad)};
                   });
}

Tensor col2im(const Tensor& cols_t, const Shape& image_shape, std::size_t kernel, std::size_t pad) {
    if (image_shape.size() != 4) throw std::invalid_argument("col2im: image shape must be rank 4");
    const std::size_t b = image_shape[0], h = image_shape[1], w = image_shape[2], c = image_shape[3];
    const std::size_t oh = h + 2 * pad - kernel + 1;
    const std::size_t ow = w + 2 * pad - kernel + 1;
    const std::size_t cols = kernel * kernel * c;
    if (cols_t.shape() != Shape{b * oh * ow, cols}) {
        throw std::invalid_argument("col2im: columns " + to_string(cols_t.shape()) +
                                    " do not match image " + to_string(image_shape));
    }
    const double* v = ptr(cols_t);
    std::vector<double> out(numel(image_shape), 0.0);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* row = v + ((n * oh + oy) * ow + ox) * cols;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        double* dst = out.data() + ((n * h + iy) * w + ix) * c;
                        const double* src = row + (ky * kernel + kx) * c;
                        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                    }
                }
            }
    return make_op("col2im", image_shape, std::move(out), {cols_t},
                   [kernel, pad](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{im2col(g, kernel, pad)};
                   });
}

Tensor avg_pool2(const Tensor& x) {
    require_rank("avg_pool2", x, 4);
    const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (h % 2 || w % 2) throw std::invalid_argument("avg_pool2: odd spatial size " + to_string(x.shape()));
    const std::size_t oh = h / 2, ow = w / 2;
    const double* v = ptr(x);
    std::vector<double> out(b * oh * ow * c, 0.0);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                double* dst = out.data() + ((n * oh + y) * ow + xx) * c;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const double* src = v + ((n * h + 2 * y + dy) * w + 2 * xx + dx) * c;
                        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += 0.25 * src[ch];
                    }
            }
    return make_op("avg_pool2", {b, oh, ow, c}, std::move(out), {x},
                   [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{avg_pool2_adjoint(g)};
                   });
}

Tensor avg_pool2_adjoint(const Tensor& g) {
    require_rank("avg_pool2_adjoint", g, 4);
    const std::size_t b = g.dim(0), oh = g.dim(1), ow = g.dim(2), c = g.dim(3);
    const std::size_t h = oh * 2, w = ow * 2;
    const double* v = ptr(g);
    std::vector<double> out(b * h * w * c);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double* src = v + ((n * oh + y / 2) * ow + x / 2) * c;
                double* dst = out.data() + ((n * h + y) * w + x) * c;
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = 0.25 * src[ch];
            }
    return make_op("avg_pool2_adjoint", {b, h, w, c}, std::move(out), {g},
                   [](const Tensor& gg, const std::vector<bool>&) {
                       return std::vector<Tensor>{avg_pool2(gg)};
                   });
}

Tensor affine_grid(const Tensor& params, std::size_t out_h, std::size_t out_w) {
    if (params.rank() != 2 || params.dim(1) != 4) {
        throw std::invalid_argument("affine_grid: expected batch x 4 params, got " +
                                    to_string(params.shape()));
    }
    const std::size_t b = params.dim(0);
    const double* p = ptr(params);
    std::vector<double> out(b * out_h * out_w * 2);
    for (std::size_t n = 0; n < b; ++n) {
        const double sx = p[4 * n], sy = p[4 * n + 1], tx = p[4 * n + 2], ty = p[4 * n + 3];
        for (std::size_t i = 0; i < out_h; ++i) {
            const double yt = lattice(i, out_h);
            for (std::size_t j = 0; j < out_w; ++j) {
                const std::size_t o = ((n * out_h + i) * out_w + j) * 2;
                out[o] = sx * lattice(j, out_w) + tx;
                out[o + 1] = sy * yt + ty;
            }
        }
    }
    return make_op("affine_grid", {b, out_h, out_w, 2}, std::move(out), {params},
                   [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{affine_grid_adjoint(g)};
                   });
}

Tensor affine_grid_adjoint(const Tensor& g) {
    if (g.rank() != 4 || g.dim(3) != 2) {
        throw std::invalid_argument("affine_grid_adjoint: expected batch x h x w x 2, got " +
                                    to_string(g.shape()));
    }
    const std::size_t b = g.dim(0), h = g.dim(1), w = g.dim(2);
    const double* v = ptr(g);
    std::vector<double> out(b * 4, 0.0);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < h; ++i) {
            const double yt = lattice(i, h);
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t o = ((n * h + i) * w + j) * 2;
                out[4 * n] += v[o] * lattice(j, w);
                out[4 * n + 1] += v[o + 1] * yt;
                out[4 * n + 2] += v[o];
                out[4 * n + 3] += v[o + 1];
            }
        }
    return make_op("affine_grid_adjoint", {b, 4}, std::move(out), {g},
                   [h, w](const Tensor& gg, const std::vector<bool>&) {
                       return std::vector<Tensor>{affine_grid(gg, h, w)};
                   });
}

Tensor bilinear_sample(const Tensor& image, const Tensor& grid) {
    require_rank("bilinear_sample", image, 4);
    if (grid.rank() != 4 || grid.dim(3) != 2 || grid.dim(0) != image.dim(0)) {
        throw std::invalid_argument("bilinear_sample: grid " + to_string(grid.shape()) +
                                    " does not match image batch " + to_string(image.shape()));
    }
    const auto s = bilinear_shape(image.shape(), grid.shape());
    std::vector<double> out(s.batch * s.out_h * s.out_w * s.channels);
    kernels::active().bilinear_forward(s, ptr(image), ptr(grid), out.data());
    return make_op("bilinear_sample", {s.batch, s.out_h, s.out_w, s.channels}, std::move(out),
                   {image, grid},
                   [image, grid](const Tensor& g, const std::vector<bool>& needed) {
                       return std::vector<Tensor>{
                           needed[0] ? bilinear_image_grad(g, grid, image.shape()) : Tensor(),
                           needed[1] ? bilinear_grid_grad(image, grid, g) : Tensor()};
                   });
}

}  // namespace vlcl::ag
