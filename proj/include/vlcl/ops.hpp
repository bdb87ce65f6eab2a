#pragma once

// Differentiable ops. Every backward rule is expressed with these same ops, so
// any composition can be differentiated more than once. The exceptions are the
// two gradient kernels of bilinear sampling, which are first-order only.
//
// Image tensors are channel-last: batch x height x width x channels.

#include <cstddef>
#include <vector>

#include "vlcl/tensor.hpp"

namespace vlcl::ag {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
/// Gradient passes where lo <= x <= hi (boundaries included).
Tensor clamp(const Tensor& x, double lo, double hi);
/// Derivative taken as +1 at zero.
Tensor abs(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);
Tensor square(const Tensor& x);

// Reductions. sum() returns a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Views x as outer x mid x inner and sums over the middle axis -> outer x inner.
Tensor reduce_mid(const Tensor& x, std::size_t outer, std::size_t mid, std::size_t inner);
/// Adjoint of reduce_mid: outer x inner -> outer x mid x inner by repetition.
Tensor broadcast_mid(const Tensor& x, std::size_t outer, std::size_t mid, std::size_t inner);

/// rows x cols -> rows
Tensor row_sum(const Tensor& x);
/// rows x cols -> cols
Tensor col_sum(const Tensor& x);
/// cols -> rows x cols
Tensor expand_rows(const Tensor& v, std::size_t rows);
/// rows -> rows x cols
Tensor expand_cols(const Tensor& v, std::size_t cols);

/// op(a) * op(b) for rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

Tensor reshape(const Tensor& x, Shape shape);

/// Rows [start, start + count) along the leading dimension.
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
/// Adjoint of slice_rows: places x at rows [start, ...) of a zero tensor with
/// `total` leading rows.
Tensor embed_rows(const Tensor& x, std::size_t start, std::size_t total);
/// Concatenation along the leading dimension.
Tensor concat_rows(const std::vector<Tensor>& parts);

/// batch x h x w x c -> (batch*h*w) x (k*k*c), stride 1, zero padding `pad`,
/// column order (ky, kx, c). Output spatial size is h + 2*pad - k + 1.
Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t pad);
/// Adjoint of im2col back to a batch x h x w x c image.
Tensor col2im(const Tensor& cols, const Shape& image_shape, std::size_t kernel, std::size_t pad);

/// 2x2 average pooling with stride 2 (h and w must be even).
Tensor avg_pool2(const Tensor& x);
/// Adjoint of avg_pool2 (each value spread over its 2x2 window, times 1/4).
Tensor avg_pool2_adjoint(const Tensor& g);

/// params: batch x 4 rows (sx, sy, tx, ty) -> batch x out_h x out_w x 2 grid with
/// x_src = sx * x_t + tx, y_src = sy * y_t + ty over the [-1, 1] target lattice.
Tensor affine_grid(const Tensor& params, std::size_t out_h, std::size_t out_w);
/// Adjoint of affine_grid: grid-shaped gradient -> batch x 4.
Tensor affine_grid_adjoint(const Tensor& g);

/// Bilinear sampling with zero padding outside the image.
Tensor bilinear_sample(const Tensor& image, const Tensor& grid);

}  // namespace vlcl::ag
