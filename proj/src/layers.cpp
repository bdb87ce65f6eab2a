#include "vlcl/layers.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "vlcl/ops.hpp"

namespace vlcl::layers {

using namespace vlcl::ag;

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() != 4) throw std::invalid_argument("conv3x3: expected NHWC input, got " + to_string(x.shape()));
    const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t c_out = weight.dim(1);
    Tensor out = matmul(im2col(x, 3, 1), weight);
    out = add(out, expand_rows(bias, b * h * w));
    return reshape(out, {b, h, w, c_out});
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add(matmul(x, weight), expand_rows(bias, x.dim(0)));
}

Tensor sample_norm(const Tensor& x, double eps) {
    const std::size_t b = x.dim(0);
    const std::size_t d = x.numel() / b;
    const double inv_d = 1.0 / static_cast<double>(d);
    const Tensor flat = reshape(x, {b, d});
    const Tensor centered = sub(flat, expand_cols(scale(row_sum(flat), inv_d), d));
    const Tensor var = scale(row_sum(square(centered)), inv_d);
    const Tensor inv_std = pow(add_scalar(var, eps), -0.5);
    return reshape(mul(centered, expand_cols(inv_std, d)), x.shape());
}

Tensor global_avg_pool(const Tensor& x) {
    const std::size_t b = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
    return scale(reduce_mid(x, b, hw, c), 1.0 / static_cast<double>(hw));
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
    const std::size_t cols = x.dim(1);
    const Tensor inv_norm = pow(add_scalar(row_sum(square(x)), eps), -0.5);
    return mul(x, expand_cols(inv_norm, cols));
}

Tensor logsumexp_rows(const Tensor& x) {
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> row_max(rows, -std::numeric_limits<double>::infinity());
    const auto v = x.values();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) row_max[r] = std::max(row_max[r], v[r * cols + c]);
    // The shift is a constant; the result does not depend on it mathematically.
    const Tensor shift = Tensor::constant({rows}, std::move(row_max));
    const Tensor shifted = sub(x, expand_cols(shift, cols));
    return add(log(row_sum(exp(shifted))), shift);
}

}  // namespace vlcl::layers
