#include "malcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "malcnn/errors.hpp"

namespace malcnn {

namespace {

// Gathers one sample into a [C*9, H*W] patch matrix (3x3, pad 1, stride 1).
// Row c*9 + kh*3 + kw holds input[c][oh+kh-1][ow+kw-1] with zeros off-image.
void im2col3x3(const double* x, std::size_t C, std::size_t H, std::size_t W, double* col) {
  const std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    const double* xc = x + c * HW;
    for (int kh = 0; kh < 3; ++kh) {
      const int dy = kh - 1;
      for (int kw = 0; kw < 3; ++kw) {
        const int dx = kw - 1;
        double* row = col + ((c * 3 + kh) * 3 + kw) * HW;
        for (std::size_t oh = 0; oh < H; ++oh) {
          double* dst = row + oh * W;
          const long ih = static_cast<long>(oh) + dy;
          if (ih < 0 || ih >= static_cast<long>(H)) {
            std::memset(dst, 0, W * sizeof(double));
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(ih) * W;
          if (dx == 0) {
            std::memcpy(dst, src, W * sizeof(double));
          } else if (dx < 0) {
            dst[0] = 0.0;
            std::memcpy(dst + 1, src, (W - 1) * sizeof(double));
          } else {
            std::memcpy(dst, src + 1, (W - 1) * sizeof(double));
            dst[W - 1] = 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of a patch matrix back onto the input plane (adjoint of im2col3x3).
void col2im3x3(const double* col, std::size_t C, std::size_t H, std::size_t W, double* gx) {
  const std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    double* gxc = gx + c * HW;
    for (int kh = 0; kh < 3; ++kh) {
      const int dy = kh - 1;
      for (int kw = 0; kw < 3; ++kw) {
        const int dx = kw - 1;
        const double* row = col + ((c * 3 + kh) * 3 + kw) * HW;
        for (std::size_t oh = 0; oh < H; ++oh) {
          const long ih = static_cast<long>(oh) + dy;
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          const double* src = row + oh * W;
          double* dst = gxc + static_cast<std::size_t>(ih) * W;
          if (dx == 0) {
            for (std::size_t w = 0; w < W; ++w) dst[w] += src[w];
          } else if (dx < 0) {
            for (std::size_t w = 1; w < W; ++w) dst[w - 1] += src[w];
          } else {
            for (std::size_t w = 0; w + 1 < W; ++w) dst[w + 1] += src[w];
          }
        }
      }
    }
  }
}

// out[len] += sum of up to four scaled rows; the unrolling keeps the FP
// evaluation order fixed while giving the vectorizer independent streams.
inline void axpy4(double* out, std::size_t len, const double* a, double wa, const double* b,
                  double wb, const double* c, double wc, const double* d, double wd) {
  for (std::size_t i = 0; i < len; ++i) {
    out[i] += wa * a[i] + wb * b[i] + wc * c[i] + wd * d[i];
  }
}

inline void axpy1(double* out, std::size_t len, const double* a, double wa) {
  for (std::size_t i = 0; i < len; ++i) out[i] += wa * a[i];
}

inline double dot(const double* a, const double* b, std::size_t len) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < len; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void check_conv_shapes(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 4) {
    throw ShapeError("conv3x3: input must be [N,C,H,W], got " + shape_str(input.shape()));
  }
  if (weights.rank() != 4 || weights.dim(2) != 3 || weights.dim(3) != 3) {
    throw ShapeError("conv3x3: weights must be [F,C,3,3], got " + shape_str(weights.shape()));
  }
  if (weights.dim(1) != input.dim(1)) {
    throw ShapeError("conv3x3: input has " + std::to_string(input.dim(1)) +
                     " channels but weights expect " + std::to_string(weights.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    throw ShapeError("conv3x3: bias must be [F], got " + shape_str(bias.shape()));
  }
}

}  // namespace

Tensor conv3x3_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  check_conv_shapes(input, weights, bias);
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t F = weights.dim(0);
  const std::size_t HW = H * W;
  const std::size_t K = C * 9;

  Tensor out({N, F, H, W});
  std::vector<double> col(K * HW);
  for (std::size_t n = 0; n < N; ++n) {
    im2col3x3(input.data() + n * C * HW, C, H, W, col.data());
    for (std::size_t f = 0; f < F; ++f) {
      double* of = out.data() + (n * F + f) * HW;
      std::fill(of, of + HW, bias[f]);
      const double* wf = weights.data() + f * K;
      std::size_t k = 0;
      for (; k + 4 <= K; k += 4) {
        axpy4(of, HW, col.data() + k * HW, wf[k], col.data() + (k + 1) * HW, wf[k + 1],
              col.data() + (k + 2) * HW, wf[k + 2], col.data() + (k + 3) * HW, wf[k + 3]);
      }
      for (; k < K; ++k) axpy1(of, HW, col.data() + k * HW, wf[k]);
    }
  }
  return out;
}

Conv3x3Grads conv3x3_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out) {
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t F = weights.dim(0);
  if (grad_out.shape() != std::vector<std::size_t>{N, F, H, W}) {
    throw ShapeError("conv3x3 backward: grad_out shape " + shape_str(grad_out.shape()) +
                     " does not match output [N,F,H,W]");
  }
  const std::size_t HW = H * W;
  const std::size_t K = C * 9;

  Conv3x3Grads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({F})};
  std::vector<double> col(K * HW);
  std::vector<double> dcol(K * HW);
  for (std::size_t n = 0; n < N; ++n) {
    im2col3x3(input.data() + n * C * HW, C, H, W, col.data());
    const double* go = grad_out.data() + n * F * HW;
    // Bias and weight gradients.
    for (std::size_t f = 0; f < F; ++f) {
      const double* gof = go + f * HW;
      double bsum = 0.0;
      for (std::size_t i = 0; i < HW; ++i) bsum += gof[i];
      g.bias[f] += bsum;
      double* gwf = g.weights.data() + f * K;
      for (std::size_t k = 0; k < K; ++k) gwf[k] += dot(gof, col.data() + k * HW, HW);
    }
    // Input gradient via the transposed patch product.
    std::fill(dcol.begin(), dcol.end(), 0.0);
    for (std::size_t f = 0; f < F; ++f) {
      const double* gof = go + f * HW;
      const double* wf = weights.data() + f * K;
      std::size_t k = 0;
      for (; k + 4 <= K; k += 4) {
        axpy1(dcol.data() + k * HW, HW, gof, wf[k]);
        axpy1(dcol.data() + (k + 1) * HW, HW, gof, wf[k + 1]);
        axpy1(dcol.data() + (k + 2) * HW, HW, gof, wf[k + 2]);
        axpy1(dcol.data() + (k + 3) * HW, HW, gof, wf[k + 3]);
      }
      for (; k < K; ++k) axpy1(dcol.data() + k * HW, HW, gof, wf[k]);
    }
    col2im3x3(dcol.data(), C, H, W, g.input.data() + n * C * HW);
  }
  return g;
}

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta_shift,
                         double eps, bool train, Tensor& running_mean, Tensor& running_var,
                         double momentum, bool update_running, BatchNormCache* cache) {
  if (input.rank() < 2) {
    throw ShapeError("batchnorm: input must have a channel dim, got " + shape_str(input.shape()));
  }
  const std::size_t N = input.dim(0), C = input.dim(1);
  const std::size_t S = input.numel() / (N * C);
  if (gamma.numel() != C || beta_shift.numel() != C || running_mean.numel() != C ||
      running_var.numel() != C) {
    throw ShapeError("batchnorm: parameter size does not match " + std::to_string(C) +
                     " channels");
  }
  if (train && N < 2) {
    throw StateError("batchnorm: train mode needs a batch of at least 2, got " +
                     std::to_string(N));
  }

  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (train) {
    const double inv_m = 1.0 / static_cast<double>(N * S);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = input.data() + (n * C + c) * S;
        double acc = 0.0;
        for (std::size_t s = 0; s < S; ++s) acc += xc[s];
        mean[c] += acc;
      }
    }
    for (std::size_t c = 0; c < C; ++c) mean[c] *= inv_m;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = input.data() + (n * C + c) * S;
        const double mu = mean[c];
        double acc = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
          const double d = xc[s] - mu;
          acc += d * d;
        }
        var[c] += acc;
      }
    }
    for (std::size_t c = 0; c < C; ++c) var[c] *= inv_m;
    if (update_running) {
      for (std::size_t c = 0; c < C; ++c) {
        running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mean[c];
        running_var[c] = momentum * running_var[c] + (1.0 - momentum) * var[c];
      }
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      var[c] = running_var[c];
    }
  }

  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor out(input.shape());
  Tensor x_hat(input.shape());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = input.data() + (n * C + c) * S;
      double* oc = out.data() + (n * C + c) * S;
      double* hc = x_hat.data() + (n * C + c) * S;
      const double mu = mean[c], is = inv_std[c], ga = gamma[c], be = beta_shift[c];
      for (std::size_t s = 0; s < S; ++s) {
        const double xn = (xc[s] - mu) * is;
        hc[s] = xn;
        oc[s] = ga * xn + be;
      }
    }
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const Tensor& gamma,
                                  const BatchNormCache& cache) {
  const Tensor& x_hat = cache.x_hat;
  if (!grad_out.same_shape(x_hat)) {
    throw ShapeError("batchnorm backward: grad_out shape " + shape_str(grad_out.shape()) +
                     " does not match cached forward");
  }
  const std::size_t N = grad_out.dim(0), C = grad_out.dim(1);
  const std::size_t S = grad_out.numel() / (N * C);
  const double m = static_cast<double>(N * S);

  BatchNormGrads g{Tensor(grad_out.shape()), Tensor({C}), Tensor({C})};
  std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* dy = grad_out.data() + (n * C + c) * S;
      const double* hc = x_hat.data() + (n * C + c) * S;
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        s1 += dy[s];
        s2 += dy[s] * hc[s];
      }
      sum_dy[c] += s1;
      sum_dy_xhat[c] += s2;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    g.beta_shift[c] = sum_dy[c];
    g.gamma[c] = sum_dy_xhat[c];
  }
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* dy = grad_out.data() + (n * C + c) * S;
      const double* hc = x_hat.data() + (n * C + c) * S;
      double* dx = g.input.data() + (n * C + c) * S;
      const double scale = gamma[c] * cache.inv_std[c] / m;
      const double sdy = sum_dy[c], sdyh = sum_dy_xhat[c];
      for (std::size_t s = 0; s < S; ++s) {
        dx[s] = scale * (m * dy[s] - sdy - hc[s] * sdyh);
      }
    }
  }
  return g;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (!input.same_shape(grad_out)) {
    throw ShapeError("relu backward: grad_out shape " + shape_str(grad_out.shape()) +
                     " does not match input " + shape_str(input.shape()));
  }
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) g[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

Tensor maxpool2x2_forward(const Tensor& input, std::vector<std::uint32_t>* argmax) {
  if (input.rank() != 4) {
    throw ShapeError("maxpool2x2: input must be [N,C,H,W], got " + shape_str(input.shape()));
  }
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("maxpool2x2: spatial extents must be even, got " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  if (argmax) argmax->resize(out.numel());
  std::size_t oi = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * H * W;
      for (std::size_t oh = 0; oh < Ho; ++oh) {
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          const std::size_t i00 = base + (2 * oh) * W + 2 * ow;
          const std::size_t idx[4] = {i00, i00 + 1, i00 + W, i00 + W + 1};
          std::size_t best = idx[0];
          double best_v = input[idx[0]];
          for (int t = 1; t < 4; ++t) {
            if (input[idx[t]] > best_v) {
              best_v = input[idx[t]];
              best = idx[t];
            }
          }
          out[oi] = best_v;
          if (argmax) (*argmax)[oi] = static_cast<std::uint32_t>(best);
          ++oi;
        }
      }
    }
  }
  return out;
}

Tensor maxpool2x2_backward(const Tensor& grad_out, const std::vector<std::size_t>& input_shape,
                           const std::vector<std::uint32_t>& argmax) {
  if (grad_out.numel() != argmax.size()) {
    throw ShapeError("maxpool2x2 backward: grad_out does not match cached argmax");
  }
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

Tensor fully_connected_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 2) {
    throw ShapeError("fully_connected: input must be [N,D], got " + shape_str(input.shape()));
  }
  const std::size_t N = input.dim(0), D = input.dim(1);
  if (weights.rank() != 2 || weights.dim(0) != D) {
    throw ShapeError("fully_connected: input width " + std::to_string(D) +
                     " does not match weights " + shape_str(weights.shape()));
  }
  const std::size_t U = weights.dim(1);
  if (bias.numel() != U) {
    throw ShapeError("fully_connected: bias must be [U], got " + shape_str(bias.shape()));
  }
  Tensor out({N, U});
  for (std::size_t n = 0; n < N; ++n) {
    double* on = out.data() + n * U;
    for (std::size_t u = 0; u < U; ++u) on[u] = bias[u];
    const double* xn = input.data() + n * D;
    for (std::size_t d = 0; d < D; ++d) axpy1(on, U, weights.data() + d * U, xn[d]);
  }
  return out;
}

FullyConnectedGrads fully_connected_backward(const Tensor& input, const Tensor& weights,
                                             const Tensor& grad_out) {
  const std::size_t N = input.dim(0), D = input.dim(1), U = weights.dim(1);
  if (grad_out.shape() != std::vector<std::size_t>{N, U}) {
    throw ShapeError("fully_connected backward: grad_out shape " + shape_str(grad_out.shape()) +
                     " does not match output [N,U]");
  }
  FullyConnectedGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({U})};
  for (std::size_t n = 0; n < N; ++n) {
    const double* gn = grad_out.data() + n * U;
    const double* xn = input.data() + n * D;
    for (std::size_t u = 0; u < U; ++u) g.bias[u] += gn[u];
    for (std::size_t d = 0; d < D; ++d) {
      axpy1(g.weights.data() + d * U, U, gn, xn[d]);
      g.input.data()[n * D + d] = dot(weights.data() + d * U, gn, U);
    }
  }
  return g;
}

Tensor dropout_forward(const Tensor& input, double p, bool train, Rng& rng,
                       std::vector<std::uint8_t>* mask) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: probability must be in (0,1), got " +
                                std::to_string(p));
  }
  if (!train) {
    if (mask) mask->clear();
    return input;
  }
  const double scale = 1.0 / (1.0 - p);
  Tensor out(input.shape());
  if (mask) mask->assign(input.numel(), 0);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const bool keep = rng.uniform() >= p;
    if (keep) {
      out[i] = input[i] * scale;
      if (mask) (*mask)[i] = 1;
    }
  }
  return out;
}

Tensor dropout_backward(const Tensor& grad_out, double p, const std::vector<std::uint8_t>& mask) {
  if (grad_out.numel() != mask.size()) {
    throw ShapeError("dropout backward: grad_out does not match cached mask");
  }
  const double scale = 1.0 / (1.0 - p);
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) g[i] = mask[i] ? grad_out[i] * scale : 0.0;
  return g;
}

}  // namespace malcnn
