#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prognet/nn/tensor.hpp"

// Differentiable primitives. Every function records itself on the active
// tape when at least one input requires a gradient. Shapes are validated
// eagerly and mismatches raise DimensionError naming both operands.
namespace prognet::nn {

/// y = x W^T + b for x[batch, in], W[out, in], b[out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Valid (unpadded) cross-correlation. x[batch, c_in, h, w], kernel[c_out, c_in, kh, kw].
/// Output spatial size is floor((h - kh) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride);

/// Output spatial extent of a valid convolution.
std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// x times a learned single-element tensor `factor`.
Tensor scale_by(const Tensor& x, const Tensor& factor);
/// Elementwise sum of equally shaped tensors.
Tensor add_n(std::span<const Tensor> terms);

/// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);

/// Concatenates 2-D tensors along the column axis.
Tensor concat_cols(std::span<const Tensor> parts);
/// Concatenates tensors along axis 0 (rows / batch). Trailing dims must agree.
Tensor concat_rows(std::span<const Tensor> parts);
/// Columns [start, start + count) of a 2-D tensor.
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
/// Rows [start, start + count) along axis 0 of any-rank tensor.
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);

/// Row-wise softmax over consecutive column groups of width `group`.
/// Uses max subtraction, so any finite input yields finite output.
Tensor softmax_groups(const Tensor& x, std::size_t group);
Tensor log_softmax_groups(const Tensor& x, std::size_t group);
/// Row-wise softmax over the full last axis of a 2-D tensor.
Tensor softmax(const Tensor& x);

}  // namespace prognet::nn
