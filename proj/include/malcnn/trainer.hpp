#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "malcnn/dataset.hpp"
#include "malcnn/imaging.hpp"
#include "malcnn/network.hpp"
#include "malcnn/tensor.hpp"

namespace malcnn {

/// Training hyperparameters. Defaults are the protocol values: momentum 0.9,
/// weight decay 0.0005, learning rate 0.0001, batch size 80, beta 20, MSRA
/// init, constant learning rate.
struct TrainConfig {
  double learning_rate = 0.0001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 80;
  double beta = 20.0;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  bool use_weighted_loss = true;
  std::string architecture = "vgg_tiny";

  void validate() const;
};

/// Flat key=value file ('#' comments); keys are the TrainConfig field names.
/// Values in the file override `base`.
TrainConfig parse_config_file(const std::string& path, TrainConfig base = {});

struct EpochRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_top1_error = 0.0;
};

struct EvalReport {
  double top1_error = 0.0;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::vector<double> per_class_recall;             // K entries
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], KxK
};

struct RunMetrics {
  std::vector<EpochRow> epochs;
  EvalReport test;
};

/// Corpus images resized to the network input, centered by the training-split
/// mean, with the global index lists for each split.
struct PreparedData {
  Corpus corpus;
  SplitIndices split;
  MeanImage mean;
  std::vector<Tensor> images;  // centered [1,H,W]
  std::vector<int> labels;     // 1..K
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  std::vector<std::size_t> train_sizes;  // per class
  std::size_t num_classes = 0;
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  std::uint64_t corpus_fp = 0;
  std::uint64_t split_fp = 0;
};

PreparedData prepare_dataset(const Corpus& corpus, std::size_t input_h, std::size_t input_w);

/// "vgg_tiny": three 3x3 conv stages (16/32/64 channels, each pooled), batch
/// norm between conv and ReLU except after the first conv, then three fully
/// connected layers (256/128/K) with dropout 0.5 between them. Input extents
/// must be divisible by 8.
Network build_preset(const std::string& name, std::size_t num_classes, std::size_t input_h,
                     std::size_t input_w);

struct SgdState {
  std::vector<Tensor> velocity;  // aligned with Network::params()
};

/// v <- momentum*v - lr*(g + weight_decay*theta); theta <- theta + v.
/// Weight decay touches conv/fc weights only, never biases or batch-norm
/// scale/shift.
void sgd_step(Network& net, SgdState& state, const TrainConfig& cfg);

struct TrainResult {
  RunMetrics metrics;
  std::unique_ptr<Network> net;
  std::vector<double> weights_used;  // omega per class, all 1 when unweighted
};

/// Full training run: per epoch a seeded shuffle, weighted (or plain) softmax
/// loss, SGD with momentum and weight decay, then a validation pass in eval
/// mode. Deterministic for a fixed (seed, config, corpus). A non-finite loss
/// aborts with its epoch/batch coordinates.
TrainResult train(const TrainConfig& cfg, const PreparedData& data);

/// Top-1 error, per-class recall, and the confusion matrix over the given
/// samples, in eval mode.
EvalReport evaluate(Network& net, const PreparedData& data,
                    const std::vector<std::size_t>& sample_indices, std::size_t eval_batch = 64);

struct ArmSummary {
  std::vector<RunMetrics> runs;  // one per seed
  double mean_final_val_error = 0.0;
  double std_final_val_error = 0.0;
  double mean_minority_recall = 0.0;  // test recall averaged over minority classes
};

struct CompareResult {
  ArmSummary weighted;
  ArmSummary unweighted;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> minority_classes;  // 0-based, the two smallest by train size
};

/// Paired weighted-vs-unweighted runs over n_seeds derived seeds; arms share
/// everything except the loss weighting. Runs may execute on worker threads
/// (each run is single-threaded and deterministic); workers = 0 picks the
/// hardware concurrency.
CompareResult compare_losses(const TrainConfig& base, const PreparedData& data,
                             std::size_t n_seeds, std::size_t workers = 0);

/// CSV `epoch,train_loss,val_top1_error`.
void write_metrics_csv(std::ostream& os, const RunMetrics& metrics);

}  // namespace malcnn
