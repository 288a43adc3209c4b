#pragma once

// Layer kernels with explicit backward passes. Forward functions write into
// caller-owned tensors so a workspace can be reused across batches; backward
// functions accumulate parameter gradients and overwrite input gradients.

#include <cstdint>
#include <vector>

#include "geomask/random.hpp"
#include "geomask/tensor.hpp"

namespace geomask::nn {

/// Square kernel, stride 1, zero padding `pad`. Weight shape (out, in, k, k).
template <typename Scalar>
void conv2d_forward(const Tensor<Scalar>& x, const Parameter<Scalar>& weight, const Parameter<Scalar>& bias, int k,
                    int pad, Tensor<Scalar>& y);

/// Accumulates weight/bias gradients; writes dx when non-null.
template <typename Scalar>
void conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy, Parameter<Scalar>& weight,
                     Parameter<Scalar>& bias, int k, int pad, Tensor<Scalar>* dx);

template <typename Scalar>
void relu_inplace(Tensor<Scalar>& x);

/// dy *= (y > 0), where y is the ReLU output.
template <typename Scalar>
void relu_backward(const Tensor<Scalar>& y, Tensor<Scalar>& dy);

/// 2x2 window, stride 2; `argmax` holds the winning flat index per output.
template <typename Scalar>
void maxpool2_forward(const Tensor<Scalar>& x, Tensor<Scalar>& y, std::vector<std::int64_t>& argmax);

template <typename Scalar>
void maxpool2_backward(const Tensor<Scalar>& dy, const std::vector<std::int64_t>& argmax, const Shape4& x_shape,
                       Tensor<Scalar>& dx);

/// 2x bilinear upsampling with half-pixel centers (edge samples clamped).
template <typename Scalar>
void upsample2x_forward(const Tensor<Scalar>& x, Tensor<Scalar>& y);

template <typename Scalar>
void upsample2x_backward(const Tensor<Scalar>& dy, Tensor<Scalar>& dx);

template <typename Scalar>
void concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Tensor<Scalar>& y);

template <typename Scalar>
void split_channels(const Tensor<Scalar>& dy, int channels_a, Tensor<Scalar>& da, Tensor<Scalar>& db);

/// Adaptive average pooling to out x out with floor/ceil window bounds.
template <typename Scalar>
void adaptive_avgpool_forward(const Tensor<Scalar>& x, int out, Tensor<Scalar>& y);

template <typename Scalar>
void adaptive_avgpool_backward(const Tensor<Scalar>& dy, const Shape4& x_shape, Tensor<Scalar>& dx);

/// x is viewed as (N, features); weight shape (out, in).
template <typename Scalar>
void linear_forward(const Tensor<Scalar>& x, const Parameter<Scalar>& weight, const Parameter<Scalar>& bias,
                    Tensor<Scalar>& y);

template <typename Scalar>
void linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy, Parameter<Scalar>& weight,
                     Parameter<Scalar>& bias, Tensor<Scalar>* dx);

/// Inverted dropout. `mask` receives the per-element multiplier (0 or 1/(1-p)).
template <typename Scalar>
void dropout_forward(Tensor<Scalar>& x, double p, Rng& rng, Tensor<Scalar>& mask);

}  // namespace geomask::nn
