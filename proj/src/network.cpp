#include "malcnn/network.hpp"

#include <stdexcept>
#include <utility>

#include "malcnn/errors.hpp"

namespace malcnn {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv3x3: return "conv3x3";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kReLU: return "relu";
    case LayerKind::kMaxPool2x2: return "maxpool2x2";
    case LayerKind::kFullyConnected: return "fully_connected";
    case LayerKind::kDropout: return "dropout";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv3x3(std::size_t in_channels, std::size_t out_channels) {
  if (in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("conv3x3 spec: channel counts must be positive");
  }
  LayerSpec s;
  s.kind = LayerKind::kConv3x3;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  return s;
}

LayerSpec LayerSpec::batchnorm(std::size_t channels, double eps, double momentum) {
  if (channels == 0) throw std::invalid_argument("batchnorm spec: channels must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("batchnorm spec: eps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("batchnorm spec: momentum must be in [0,1)");
  }
  LayerSpec s;
  s.kind = LayerKind::kBatchNorm;
  s.channels = channels;
  s.bn_eps = eps;
  s.bn_momentum = momentum;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::kReLU;
  return s;
}

LayerSpec LayerSpec::maxpool2x2() {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool2x2;
  return s;
}

LayerSpec LayerSpec::fully_connected(std::size_t in_features, std::size_t out_features) {
  if (in_features == 0 || out_features == 0) {
    throw std::invalid_argument("fully_connected spec: feature counts must be positive");
  }
  LayerSpec s;
  s.kind = LayerKind::kFullyConnected;
  s.in_features = in_features;
  s.out_features = out_features;
  return s;
}

LayerSpec LayerSpec::dropout(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout spec: probability must be in (0,1), got " +
                                std::to_string(p));
  }
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.dropout_p = p;
  return s;
}

Network::Network(std::vector<LayerSpec> specs, std::size_t in_channels, std::size_t in_height,
                 std::size_t in_width)
    : specs_(std::move(specs)), in_c_(in_channels), in_h_(in_height), in_w_(in_width) {
  if (in_c_ == 0 || in_h_ == 0 || in_w_ == 0) {
    throw std::invalid_argument("network: input extents must be positive");
  }
  if (specs_.empty()) throw std::invalid_argument("network: needs at least one layer");
  validate_and_allocate();
}

void Network::validate_and_allocate() {
  // Shape walk over the declared input; throws before any allocation matters.
  std::size_t c = in_c_, h = in_h_, w = in_w_;
  bool flat = false;        // true once a fully connected layer has been placed
  std::size_t features = 0; // valid when flat
  bool saw_conv = false;
  bool saw_fc = false;

  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    switch (s.kind) {
      case LayerKind::kConv3x3: {
        if (flat) {
          throw ShapeError("layer " + std::to_string(i) +
                           ": conv3x3 cannot follow a fully connected layer");
        }
        if (s.in_channels != c) {
          throw ShapeError("layer " + std::to_string(i) + ": conv3x3 expects " +
                           std::to_string(s.in_channels) + " channels, gets " +
                           std::to_string(c));
        }
        if (!saw_conv) {
          // The first conv is followed by ReLU directly, with no BN between.
          if (i + 1 >= specs_.size() || specs_[i + 1].kind != LayerKind::kReLU) {
            throw std::invalid_argument(
                "layer " + std::to_string(i) +
                ": the first conv3x3 must be followed directly by relu");
          }
          saw_conv = true;
        }
        c = s.out_channels;
        break;
      }
      case LayerKind::kBatchNorm: {
        if (saw_fc || flat) {
          throw std::invalid_argument("layer " + std::to_string(i) +
                                      ": batchnorm is not allowed after a fully connected layer");
        }
        if (s.channels != c) {
          throw ShapeError("layer " + std::to_string(i) + ": batchnorm expects " +
                           std::to_string(s.channels) + " channels, gets " + std::to_string(c));
        }
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kDropout:
        break;
      case LayerKind::kMaxPool2x2: {
        if (flat) {
          throw ShapeError("layer " + std::to_string(i) +
                           ": maxpool2x2 cannot follow a fully connected layer");
        }
        if (h % 2 != 0 || w % 2 != 0) {
          throw ShapeError("layer " + std::to_string(i) + ": maxpool2x2 needs even extents, has " +
                           std::to_string(h) + "x" + std::to_string(w));
        }
        h /= 2;
        w /= 2;
        break;
      }
      case LayerKind::kFullyConnected: {
        const std::size_t d = flat ? features : c * h * w;
        if (s.in_features != d) {
          throw ShapeError("layer " + std::to_string(i) + ": fully_connected expects " +
                           std::to_string(s.in_features) + " inputs, gets " + std::to_string(d));
        }
        flat = true;
        saw_fc = true;
        features = s.out_features;
        break;
      }
    }
  }
  out_dim_ = flat ? features : c * h * w;

  layers_.resize(specs_.size());
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    LayerState& l = layers_[i];
    switch (s.kind) {
      case LayerKind::kConv3x3:
        l.weight = Tensor({s.out_channels, s.in_channels, 3, 3});
        l.bias = Tensor({s.out_channels});
        l.gweight = Tensor(l.weight.shape());
        l.gbias = Tensor(l.bias.shape());
        break;
      case LayerKind::kBatchNorm:
        l.gamma = Tensor::full({s.channels}, 1.0);
        l.beta = Tensor({s.channels});
        l.ggamma = Tensor({s.channels});
        l.gbeta = Tensor({s.channels});
        l.running_mean = Tensor({s.channels});
        l.running_var = Tensor::full({s.channels}, 1.0);
        break;
      case LayerKind::kFullyConnected:
        l.weight = Tensor({s.in_features, s.out_features});
        l.bias = Tensor({s.out_features});
        l.gweight = Tensor(l.weight.shape());
        l.gbias = Tensor(l.bias.shape());
        break;
      default:
        break;
    }
  }
}

void Network::set_mode(Mode m) {
  if (m == Mode::kUnset) throw std::invalid_argument("network: cannot set mode to unset");
  mode_ = m;
}

void Network::init_params(std::uint64_t seed) {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    LayerState& l = layers_[i];
    switch (s.kind) {
      case LayerKind::kConv3x3: {
        MsraInit init(s.in_channels * 9, mix_seed(seed, i));
        init.fill(l.weight);
        l.bias.zero();
        break;
      }
      case LayerKind::kFullyConnected: {
        MsraInit init(s.in_features, mix_seed(seed, i));
        init.fill(l.weight);
        l.bias.zero();
        break;
      }
      case LayerKind::kBatchNorm:
        l.gamma.fill(1.0);
        l.beta.zero();
        l.running_mean.zero();
        l.running_var.fill(1.0);
        break;
      default:
        break;
    }
  }
  reseed_dropout(mix_seed(seed, 0xd70u));
  has_cache_ = false;
}

void Network::reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

void Network::check_batch(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != in_c_ || batch.dim(2) != in_h_ ||
      batch.dim(3) != in_w_) {
    throw ShapeError("network: batch shape " + shape_str(batch.shape()) +
                     " does not match declared input [N," + std::to_string(in_c_) + "," +
                     std::to_string(in_h_) + "," + std::to_string(in_w_) + "]");
  }
}

Tensor Network::forward(const Tensor& batch) {
  if (mode_ == Mode::kUnset) throw StateError("network: mode not set before forward");
  const bool train = mode_ == Mode::kTrain;
  return run(batch, train, train, train, specs_.size());
}

Tensor Network::forward_frozen(const Tensor& batch) {
  return run(batch, true, false, true, specs_.size());
}

Tensor Network::forward_to(const Tensor& batch, std::size_t layer_index) {
  if (mode_ != Mode::kEval) throw StateError("network: forward_to requires eval mode");
  if (layer_index >= specs_.size()) {
    throw std::invalid_argument("network: layer index " + std::to_string(layer_index) +
                                " out of range");
  }
  return run(batch, false, false, false, layer_index + 1);
}

Tensor Network::run(const Tensor& batch, bool train, bool update_running, bool cache,
                    std::size_t stop_after) {
  check_batch(batch);
  Tensor cur = batch;
  for (std::size_t i = 0; i < stop_after; ++i) {
    const LayerSpec& s = specs_[i];
    LayerState& l = layers_[i];
    switch (s.kind) {
      case LayerKind::kConv3x3: {
        if (cache) l.cached_input = cur;
        cur = conv3x3_forward(cur, l.weight, l.bias);
        break;
      }
      case LayerKind::kBatchNorm: {
        cur = batchnorm_forward(cur, l.gamma, l.beta, s.bn_eps, train, l.running_mean,
                                l.running_var, s.bn_momentum, update_running,
                                cache ? &l.bn_cache : nullptr);
        break;
      }
      case LayerKind::kReLU: {
        if (cache) l.cached_input = cur;
        cur = relu_forward(cur);
        break;
      }
      case LayerKind::kMaxPool2x2: {
        if (cache) l.pre_flatten_shape = cur.shape();
        cur = maxpool2x2_forward(cur, cache ? &l.pool_argmax : nullptr);
        break;
      }
      case LayerKind::kFullyConnected: {
        std::vector<std::size_t> in_shape = cur.shape();
        if (cur.rank() != 2) {
          const std::size_t n = cur.dim(0);
          cur = std::move(cur).reshaped({n, cur.numel() / n});
        }
        if (cache) {
          l.cached_input = cur;
          l.pre_flatten_shape = in_shape;
        }
        cur = fully_connected_forward(cur, l.weight, l.bias);
        break;
      }
      case LayerKind::kDropout: {
        cur = dropout_forward(cur, s.dropout_p, train, dropout_rng_,
                              cache ? &l.dropout_mask : nullptr);
        break;
      }
    }
  }
  if (cache && stop_after == specs_.size()) has_cache_ = true;
  return cur;
}

Tensor Network::backward(const Tensor& grad_logits) {
  if (!has_cache_) {
    throw StateError("network: backward needs a caching forward first");
  }
  Tensor grad = grad_logits;
  for (std::size_t idx = specs_.size(); idx-- > 0;) {
    const LayerSpec& s = specs_[idx];
    LayerState& l = layers_[idx];
    switch (s.kind) {
      case LayerKind::kConv3x3: {
        Conv3x3Grads g = conv3x3_backward(l.cached_input, l.weight, grad);
        accumulate(l.gweight, g.weights);
        accumulate(l.gbias, g.bias);
        grad = std::move(g.input);
        break;
      }
      case LayerKind::kBatchNorm: {
        BatchNormGrads g = batchnorm_backward(grad, l.gamma, l.bn_cache);
        accumulate(l.ggamma, g.gamma);
        accumulate(l.gbeta, g.beta_shift);
        grad = std::move(g.input);
        break;
      }
      case LayerKind::kReLU: {
        grad = relu_backward(l.cached_input, grad);
        break;
      }
      case LayerKind::kMaxPool2x2: {
        grad = maxpool2x2_backward(grad, l.pre_flatten_shape, l.pool_argmax);
        break;
      }
      case LayerKind::kFullyConnected: {
        FullyConnectedGrads g = fully_connected_backward(l.cached_input, l.weight, grad);
        accumulate(l.gweight, g.weights);
        accumulate(l.gbias, g.bias);
        grad = std::move(g.input);
        if (l.pre_flatten_shape.size() != 2) {
          grad = std::move(grad).reshaped(l.pre_flatten_shape);
        }
        break;
      }
      case LayerKind::kDropout: {
        grad = dropout_backward(grad, s.dropout_p, l.dropout_mask);
        break;
      }
    }
  }
  return grad;
}

void Network::zero_grads() {
  for (LayerState& l : layers_) {
    if (!l.gweight.empty()) l.gweight.zero();
    if (!l.gbias.empty()) l.gbias.zero();
    if (!l.ggamma.empty()) l.ggamma.zero();
    if (!l.gbeta.empty()) l.gbeta.zero();
  }
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    LayerState& l = layers_[i];
    const std::string base = std::string(layer_kind_name(specs_[i].kind)) + std::to_string(i);
    switch (specs_[i].kind) {
      case LayerKind::kConv3x3:
      case LayerKind::kFullyConnected:
        out.push_back({base + ".weight", &l.weight, &l.gweight, true});
        out.push_back({base + ".bias", &l.bias, &l.gbias, false});
        break;
      case LayerKind::kBatchNorm:
        out.push_back({base + ".gamma", &l.gamma, &l.ggamma, false});
        out.push_back({base + ".beta", &l.beta, &l.gbeta, false});
        break;
      default:
        break;
    }
  }
  return out;
}

std::vector<ParamRef> Network::buffers() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].kind != LayerKind::kBatchNorm) continue;
    LayerState& l = layers_[i];
    const std::string base = std::string(layer_kind_name(specs_[i].kind)) + std::to_string(i);
    out.push_back({base + ".running_mean", &l.running_mean, nullptr, false});
    out.push_back({base + ".running_var", &l.running_var, nullptr, false});
  }
  return out;
}

}  // namespace malcnn
