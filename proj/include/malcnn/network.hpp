#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "malcnn/layers.hpp"
#include "malcnn/rng.hpp"
#include "malcnn/tensor.hpp"

namespace malcnn {

enum class LayerKind : std::uint32_t {
  kConv3x3 = 0,
  kBatchNorm = 1,
  kReLU = 2,
  kMaxPool2x2 = 3,
  kFullyConnected = 4,
  kDropout = 5,
};

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kReLU;
  std::size_t in_channels = 0;   // conv3x3
  std::size_t out_channels = 0;  // conv3x3
  std::size_t channels = 0;      // batchnorm
  std::size_t in_features = 0;   // fully_connected
  std::size_t out_features = 0;  // fully_connected
  double dropout_p = 0.5;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  static LayerSpec conv3x3(std::size_t in_channels, std::size_t out_channels);
  static LayerSpec batchnorm(std::size_t channels, double eps = 1e-5, double momentum = 0.9);
  static LayerSpec relu();
  static LayerSpec maxpool2x2();
  static LayerSpec fully_connected(std::size_t in_features, std::size_t out_features);
  static LayerSpec dropout(double p = 0.5);
};

enum class Mode { kUnset, kTrain, kEval };

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;  // null for buffers
  bool weight_decay = false;
};

/// Ordered layer stack with parameters and optimizer-facing gradients.
/// Construction validates the whole shape chain against the declared input
/// size and enforces the architecture rules: the first convolutional layer is
/// followed directly by ReLU (no batch norm), and no batch norm appears once
/// a fully connected layer has been placed. The stack flattens spatial
/// activations automatically at the first fully connected layer.
class Network {
 public:
  Network(std::vector<LayerSpec> specs, std::size_t in_channels, std::size_t in_height,
          std::size_t in_width);

  void set_mode(Mode m);
  Mode mode() const { return mode_; }

  /// MSRA-fills conv/fc weights, zeroes biases, resets batch norm state, and
  /// reseeds the dropout stream. Everything derives from `seed`.
  void init_params(std::uint64_t seed);
  void reseed_dropout(std::uint64_t seed);

  /// Runs the stack in the current mode. Train mode caches for backward,
  /// draws dropout masks, and folds batch statistics into running stats.
  Tensor forward(const Tensor& batch);

  /// Train-mode arithmetic without the running-stat update; used by the
  /// gradient checker so repeated evaluations are side-effect free.
  Tensor forward_frozen(const Tensor& batch);

  /// Eval-mode forward that stops after `layer_index` and returns that
  /// activation (flattened view if the layer sits past the flatten point).
  Tensor forward_to(const Tensor& batch, std::size_t layer_index);

  /// Backpropagates from grad wrt logits; fills parameter gradients and
  /// returns grad wrt the input batch. Requires a prior caching forward.
  Tensor backward(const Tensor& grad_logits);

  void zero_grads();

  std::vector<ParamRef> params();
  std::vector<ParamRef> buffers();

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t num_layers() const { return specs_.size(); }
  std::size_t in_channels() const { return in_c_; }
  std::size_t in_height() const { return in_h_; }
  std::size_t in_width() const { return in_w_; }
  /// Width of the final activation per sample (K for classifier nets).
  std::size_t num_outputs() const { return out_dim_; }

 private:
  struct LayerState {
    // Parameters and their gradients (which subset is live depends on kind).
    Tensor weight, bias, gamma, beta;
    Tensor gweight, gbias, ggamma, gbeta;
    Tensor running_mean, running_var;
    // Backward caches, filled by caching forwards.
    Tensor cached_input;
    std::vector<std::size_t> pre_flatten_shape;
    BatchNormCache bn_cache;
    std::vector<std::uint32_t> pool_argmax;
    std::vector<std::uint8_t> dropout_mask;
  };

  Tensor run(const Tensor& batch, bool train, bool update_running, bool cache,
             std::size_t stop_after);
  void validate_and_allocate();
  void check_batch(const Tensor& batch) const;

  std::vector<LayerSpec> specs_;
  std::vector<LayerState> layers_;
  std::size_t in_c_ = 0, in_h_ = 0, in_w_ = 0;
  std::size_t out_dim_ = 0;
  Mode mode_ = Mode::kUnset;
  Rng dropout_rng_{0};
  bool has_cache_ = false;
};

}  // namespace malcnn
