#pragma once

#include <cstddef>
#include <vector>

#include "resmamba/tensor.hpp"

namespace rmb {

// Elementwise arithmetic. Operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);

// Activations.
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor softmax_lastaxis(const Tensor& x);
Tensor log_softmax_lastaxis(const Tensor& x);

// Reductions to a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

/// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Affine map over the last axis: x[..., K] w[K, N] + bias[N]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,k,k]; `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding);

/// Normalises over the last axis with population variance, then applies gamma/beta.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// [B,C,H,W] -> [B,C,2H,2W], each pixel copied into a 2x2 block.
Tensor upsample_nearest2x(const Tensor& x);

/// [B,C,H,W] -> [B,C] mean over the spatial axes.
Tensor global_avg_pool(const Tensor& x);

/// Concatenation along axis 1 of two [B,*,H,W] tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Same values, new shape with the same element count.
Tensor reshape(const Tensor& x, Shape shape);

/// out.flat[i] = x.flat[index[i]]. The backward pass scatter-adds.
Tensor gather(const Tensor& x, const std::vector<std::size_t>& index, Shape out_shape);

/// [B,C,H,W] -> [B,H*W,C] with pixels in row-major order.
Tensor to_tokens(const Tensor& x);
/// Inverse of to_tokens.
Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width);

}  // namespace rmb
