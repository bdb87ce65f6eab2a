#pragma once

// Small building blocks shared by the encoder and the localisation nets.

#include "vlcl/tensor.hpp"

namespace vlcl::layers {

/// 3x3 "same" convolution on batch x h x w x c_in images.
/// weight: (3*3*c_in) x c_out, bias: c_out.
ag::Tensor conv3x3(const ag::Tensor& x, const ag::Tensor& weight, const ag::Tensor& bias);

/// x (rows x in) * weight (in x out) + bias (out).
ag::Tensor linear(const ag::Tensor& x, const ag::Tensor& weight, const ag::Tensor& bias);

/// Per-sample normalization over all of h, w, c (no learned affine).
ag::Tensor sample_norm(const ag::Tensor& x, double eps = 1e-5);

/// batch x h x w x c -> batch x c
ag::Tensor global_avg_pool(const ag::Tensor& x);

/// Rows scaled to unit L2 norm; `eps` is added to the squared norm.
ag::Tensor l2_normalize_rows(const ag::Tensor& x, double eps = 1e-12);

/// Row-wise log-sum-exp of a rows x cols matrix (stabilized by the row max).
ag::Tensor logsumexp_rows(const ag::Tensor& x);

}  // namespace vlcl::layers
