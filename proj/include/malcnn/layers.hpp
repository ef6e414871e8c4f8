#pragma once

#include <cstdint>
#include <vector>

#include "malcnn/rng.hpp"
#include "malcnn/tensor.hpp"

namespace malcnn {

// All convolutions are 3x3, stride 1, pad 1, so spatial size is preserved.
// input [N,C,H,W], weights [F,C,3,3], bias [F] -> [N,F,H,W].
Tensor conv3x3_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct Conv3x3Grads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
Conv3x3Grads conv3x3_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out);

/// Per-channel batch normalization. Channels are dim 1; statistics are taken
/// over every other dim (N*H*W for conv activations). Train mode requires a
/// batch of at least two samples.
struct BatchNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
};
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta_shift,
                         double eps, bool train, Tensor& running_mean, Tensor& running_var,
                         double momentum, bool update_running, BatchNormCache* cache);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta_shift;
};
BatchNormGrads batchnorm_backward(const Tensor& grad_out, const Tensor& gamma,
                                  const BatchNormCache& cache);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

/// 2x2 max pooling, stride 2; H and W must be even. Ties break to the first
/// index in row-major order. argmax (flat input indices, one per output) is
/// filled when non-null and is what backward routes by.
Tensor maxpool2x2_forward(const Tensor& input, std::vector<std::uint32_t>* argmax);
Tensor maxpool2x2_backward(const Tensor& grad_out, const std::vector<std::size_t>& input_shape,
                           const std::vector<std::uint32_t>& argmax);

// input [N,D], weights [D,U], bias [U] -> [N,U].
Tensor fully_connected_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct FullyConnectedGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
FullyConnectedGrads fully_connected_backward(const Tensor& input, const Tensor& weights,
                                             const Tensor& grad_out);

/// Inverted dropout: train mode zeroes each unit with probability p and
/// scales survivors by 1/(1-p); eval mode is the identity. p must be in (0,1).
Tensor dropout_forward(const Tensor& input, double p, bool train, Rng& rng,
                       std::vector<std::uint8_t>* mask);
Tensor dropout_backward(const Tensor& grad_out, double p, const std::vector<std::uint8_t>& mask);

}  // namespace malcnn
