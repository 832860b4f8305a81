#pragma once

#include <cstdint>
#include <vector>

#include "covdet/tensor.hpp"

namespace covdet::kernels {

/// Valid (no padding) cross-correlation. Weights are laid out
/// (ky, kx, in_channel, out_channel) row-major; one bias per out channel.
/// `out` must be pre-sized to the valid output shape. The per-output
/// accumulation order is fixed, so results do not depend on the number of
/// threads.
void conv2d_forward(const Tensor& in, const std::vector<double>& w, const std::vector<double>& bias,
                    int kh, int kw, int out_channels, int stride, Tensor& out);

/// Gradient with respect to the convolution input. `gin` must be pre-sized
/// to the input shape and is overwritten.
void conv2d_backward_input(const Tensor& gout, const std::vector<double>& w, int kh, int kw,
                           int out_channels, int stride, Tensor& gin);

/// Gradients with respect to weights and biases; both are overwritten.
void conv2d_backward_params(const Tensor& in, const Tensor& gout, int kh, int kw, int out_channels,
                            int stride, std::vector<double>& gw, std::vector<double>& gbias);

void relu_forward(const Tensor& in, Tensor& out);
void relu_backward(const Tensor& in, const Tensor& gout, Tensor& gin);

/// 2x2 max pooling. stride 2 is the usual downsampling pool; stride 1 keeps
/// the full resolution (used by the dense split evaluation). When `argmax`
/// is non-null it receives, per output element, the flat spatial index of
/// the winning input pixel (first in row-major scan order on ties).
void maxpool2_forward(const Tensor& in, int stride, Tensor& out, std::vector<std::int32_t>* argmax);
void maxpool2_backward(const Tensor& in, const Tensor& gout, const std::vector<std::int32_t>& argmax,
                       Tensor& gin);

/// Cross-channel local response normalisation with the fixed parameters
/// depth 5, alpha 1e-4 (divided by depth), beta 0.75, k 2.
/// `scale` caches the per-element denominator base for the backward pass.
void lrn_forward(const Tensor& in, Tensor& out, Tensor* scale);
void lrn_backward(const Tensor& in, const Tensor& out, const Tensor& scale, const Tensor& gout,
                  Tensor& gin);

namespace serial {
/// Plain gather-loop reference implementations, kept for testing the
/// OpenMP kernels above and for the benchmark target.
void conv2d_forward(const Tensor& in, const std::vector<double>& w, const std::vector<double>& bias,
                    int kh, int kw, int out_channels, int stride, Tensor& out);
void conv2d_backward_input(const Tensor& gout, const std::vector<double>& w, int kh, int kw,
                           int out_channels, int stride, Tensor& gin);
void conv2d_backward_params(const Tensor& in, const Tensor& gout, int kh, int kw, int out_channels,
                            int stride, std::vector<double>& gw, std::vector<double>& gbias);
void maxpool2_forward(const Tensor& in, int stride, Tensor& out, std::vector<std::int32_t>* argmax);
}  // namespace serial

}  // namespace covdet::kernels
