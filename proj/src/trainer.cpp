#include "malcnn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "malcnn/errors.hpp"
#include "malcnn/loss.hpp"
#include "malcnn/rng.hpp"
#include "malcnn/util.hpp"

namespace malcnn {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("config: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("config: momentum must be in [0,1)");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("config: weight_decay must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(beta > 0.0)) throw std::invalid_argument("config: beta must be positive");
  if (epochs == 0) throw std::invalid_argument("config: epochs must be >= 1");
  if (input_height == 0 || input_width == 0) {
    throw std::invalid_argument("config: input size must be positive");
  }
}

TrainConfig parse_config_file(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::istringstream probe(line);
      std::string left;
      if (probe >> left) {
        throw DataError(path + ":" + std::to_string(line_no) + ": expected key = value");
      }
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      if (key == "learning_rate") base.learning_rate = std::stod(value);
      else if (key == "momentum") base.momentum = std::stod(value);
      else if (key == "weight_decay") base.weight_decay = std::stod(value);
      else if (key == "batch_size") base.batch_size = std::stoul(value);
      else if (key == "beta") base.beta = (value == "inf") ? INFINITY : std::stod(value);
      else if (key == "epochs") base.epochs = std::stoul(value);
      else if (key == "seed") base.seed = std::stoull(value);
      else if (key == "input_height") base.input_height = std::stoul(value);
      else if (key == "input_width") base.input_width = std::stoul(value);
      else if (key == "use_weighted_loss") base.use_weighted_loss = (value == "true" || value == "1");
      else if (key == "architecture") base.architecture = value;
      else throw DataError(path + ":" + std::to_string(line_no) + ": unknown key \"" + key + "\"");
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad value for \"" + key + "\"");
    }
  }
  return base;
}

PreparedData prepare_dataset(const Corpus& corpus, std::size_t input_h, std::size_t input_w) {
  PreparedData data;
  data.corpus = corpus;
  data.split = split_60_20_20(corpus);
  data.num_classes = corpus.num_classes();
  data.input_height = input_h;
  data.input_width = input_w;
  data.split_fp = split_fingerprint(corpus, data.split);

  // One pass over the files: content hash, decode, resize.
  std::vector<GrayImage> resized;
  resized.reserve(corpus.total_images());
  std::uint64_t content_hash = fnv1a64("corpus");
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    const ClassEntry& cls = corpus.classes[c];
    content_hash = fnv1a64(cls.name, content_hash);
    const std::uint64_t count = cls.paths.size();
    content_hash = fnv1a64(&count, sizeof(count), content_hash);
    for (const std::string& path : cls.paths) {
      const std::vector<std::uint8_t> bytes = read_file_bytes(path);
      content_hash = fnv1a64(bytes.data(), bytes.size(), content_hash);
      GrayImage img;
      try {
        img = decode_pgm(bytes);
      } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what(), e.byte_offset());
      }
      resized.push_back(resize_bilinear(img, input_h, input_w));
      data.labels.push_back(static_cast<int>(c) + 1);
    }
  }
  data.corpus_fp = content_hash;

  // Global index lists per split; the training split also feeds the mean.
  std::size_t base = 0;
  std::vector<GrayImage> train_images;
  data.train_sizes.assign(corpus.classes.size(), 0);
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    const ClassSplit& s = data.split.per_class[c];
    for (std::size_t i : s.train) {
      data.train_idx.push_back(base + i);
      train_images.push_back(resized[base + i]);
    }
    for (std::size_t i : s.val) data.val_idx.push_back(base + i);
    for (std::size_t i : s.test) data.test_idx.push_back(base + i);
    data.train_sizes[c] = s.train.size();
    base += corpus.classes[c].paths.size();
  }
  data.mean = compute_mean_image(train_images, data.split_fp);

  data.images.reserve(resized.size());
  for (const GrayImage& img : resized) {
    data.images.push_back(subtract_mean(img, data.mean));
  }
  return data;
}

Network build_preset(const std::string& name, std::size_t num_classes, std::size_t input_h,
                     std::size_t input_w) {
  if (name != "vgg_tiny") {
    throw std::invalid_argument("unknown architecture preset \"" + name + "\"");
  }
  if (num_classes < 2) throw std::invalid_argument("preset: need at least 2 classes");
  if (input_h % 8 != 0 || input_w % 8 != 0) {
    throw std::invalid_argument("preset vgg_tiny: input extents must be divisible by 8, got " +
                                std::to_string(input_h) + "x" + std::to_string(input_w));
  }
  const std::size_t flat = 64 * (input_h / 8) * (input_w / 8);
  std::vector<LayerSpec> specs = {
      LayerSpec::conv3x3(1, 16),
      LayerSpec::relu(),
      LayerSpec::maxpool2x2(),
      LayerSpec::conv3x3(16, 32),
      LayerSpec::batchnorm(32),
      LayerSpec::relu(),
      LayerSpec::maxpool2x2(),
      LayerSpec::conv3x3(32, 64),
      LayerSpec::batchnorm(64),
      LayerSpec::relu(),
      LayerSpec::maxpool2x2(),
      LayerSpec::fully_connected(flat, 256),
      LayerSpec::relu(),
      LayerSpec::dropout(0.5),
      LayerSpec::fully_connected(256, 128),
      LayerSpec::relu(),
      LayerSpec::dropout(0.5),
      LayerSpec::fully_connected(128, num_classes),
  };
  return Network(std::move(specs), 1, input_h, input_w);
}

void sgd_step(Network& net, SgdState& state, const TrainConfig& cfg) {
  const std::vector<ParamRef> params = net.params();
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const ParamRef& p : params) state.velocity.emplace_back(p.value->shape());
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: velocity state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i].value;
    const Tensor& grad = *params[i].grad;
    Tensor& vel = state.velocity[i];
    if (!vel.same_shape(theta) || !grad.same_shape(theta)) {
      throw ShapeError("sgd_step: shape mismatch on " + params[i].name);
    }
    const double wd = params[i].weight_decay ? cfg.weight_decay : 0.0;
    for (std::size_t j = 0; j < theta.numel(); ++j) {
      vel[j] = cfg.momentum * vel[j] - cfg.learning_rate * (grad[j] + wd * theta[j]);
      theta[j] += vel[j];
    }
  }
}

namespace {

Tensor assemble_batch(const PreparedData& data, const std::vector<std::size_t>& idx) {
  const std::size_t h = data.input_height, w = data.input_width;
  Tensor batch({idx.size(), 1, h, w});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Tensor& img = data.images[idx[i]];
    std::copy(img.data(), img.data() + h * w, batch.data() + i * h * w);
  }
  return batch;
}

std::vector<int> gather_labels(const PreparedData& data, const std::vector<std::size_t>& idx) {
  std::vector<int> labels(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = data.labels[idx[i]];
  return labels;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const PreparedData& data) {
  cfg.validate();
  if (data.mean.split_fingerprint != data.split_fp) {
    throw StateError("train: mean image was not computed from this training split");
  }
  if (data.input_height != cfg.input_height || data.input_width != cfg.input_width) {
    throw ShapeError("train: prepared data is " + std::to_string(data.input_height) + "x" +
                     std::to_string(data.input_width) + " but config wants " +
                     std::to_string(cfg.input_height) + "x" + std::to_string(cfg.input_width));
  }

  TrainResult result;
  result.weights_used = cfg.use_weighted_loss
                            ? class_weights(data.train_sizes, cfg.beta)
                            : std::vector<double>(data.num_classes, 1.0);

  result.net = std::make_unique<Network>(
      build_preset(cfg.architecture, data.num_classes, cfg.input_height, cfg.input_width));
  Network& net = *result.net;
  net.init_params(cfg.seed);

  SgdState sgd;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(data.train_idx, cfg.batch_size, cfg.seed, epoch);
    net.set_mode(Mode::kTrain);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Tensor batch = assemble_batch(data, batches[b]);
      const std::vector<int> labels = gather_labels(data, batches[b]);
      const Tensor logits = net.forward(batch);
      LossOutput lo;
      try {
        lo = weighted_softmax_loss(logits, labels, result.weights_used);
      } catch (const std::invalid_argument& e) {
        // The loss rejects non-finite logits; surface that as divergence.
        throw DivergenceError(e.what(), epoch, b);
      }
      if (!std::isfinite(lo.loss)) {
        throw DivergenceError("non-finite training loss", epoch, b);
      }
      loss_sum += lo.loss;
      net.zero_grads();
      net.backward(lo.grad_logits);
      sgd_step(net, sgd, cfg);
    }
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(batches.size());
    row.val_top1_error = evaluate(net, data, data.val_idx).top1_error;
    result.metrics.epochs.push_back(row);
  }
  result.metrics.test = evaluate(net, data, data.test_idx);
  return result;
}

EvalReport evaluate(Network& net, const PreparedData& data,
                    const std::vector<std::size_t>& sample_indices, std::size_t eval_batch) {
  if (sample_indices.empty()) throw StateError("evaluate: empty split");
  if (eval_batch == 0) throw std::invalid_argument("evaluate: eval_batch must be >= 1");
  const std::size_t k = data.num_classes;
  EvalReport report;
  report.total = sample_indices.size();
  report.confusion.assign(k, std::vector<std::size_t>(k, 0));

  net.set_mode(Mode::kEval);
  for (std::size_t start = 0; start < sample_indices.size(); start += eval_batch) {
    const std::size_t end = std::min(start + eval_batch, sample_indices.size());
    const std::vector<std::size_t> chunk(sample_indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         sample_indices.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor batch = assemble_batch(data, chunk);
    const Tensor logits = net.forward(batch);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const double* row = logits.data() + i * k;
      std::size_t pred = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (row[j] > row[pred]) pred = j;
      }
      const std::size_t truth = static_cast<std::size_t>(data.labels[chunk[i]] - 1);
      report.confusion[truth][pred] += 1;
      if (truth == pred) ++report.correct;
    }
  }
  report.top1_error =
      static_cast<double>(report.total - report.correct) / static_cast<double>(report.total);
  report.per_class_recall.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row_total = 0;
    for (std::size_t j = 0; j < k; ++j) row_total += report.confusion[c][j];
    if (row_total > 0) {
      report.per_class_recall[c] =
          static_cast<double>(report.confusion[c][c]) / static_cast<double>(row_total);
    }
  }
  return report;
}

namespace {

void run_parallel(std::size_t n_tasks, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, n_tasks);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    std::size_t i;
    while ((i = next.fetch_add(1)) < n_tasks) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void summarize_arm(ArmSummary& arm, const std::vector<std::size_t>& minority) {
  std::vector<double> finals, recalls;
  for (const RunMetrics& run : arm.runs) {
    finals.push_back(run.epochs.back().val_top1_error);
    double r = 0.0;
    for (std::size_t c : minority) r += run.test.per_class_recall[c];
    recalls.push_back(r / static_cast<double>(minority.size()));
  }
  arm.mean_final_val_error = mean_of(finals);
  arm.std_final_val_error = sample_std(finals, arm.mean_final_val_error);
  arm.mean_minority_recall = mean_of(recalls);
}

}  // namespace

CompareResult compare_losses(const TrainConfig& base, const PreparedData& data,
                             std::size_t n_seeds, std::size_t workers) {
  if (n_seeds == 0) throw std::invalid_argument("compare_losses: need at least one seed");
  CompareResult result;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    result.seeds.push_back(mix_seed(base.seed, i));
  }

  // Two smallest classes by training-split size, ties to the lower index.
  std::vector<std::size_t> order(data.num_classes);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.train_sizes[a] < data.train_sizes[b];
  });
  result.minority_classes.assign(order.begin(),
                                 order.begin() + std::min<std::size_t>(2, order.size()));
  std::sort(result.minority_classes.begin(), result.minority_classes.end());

  result.weighted.runs.resize(n_seeds);
  result.unweighted.runs.resize(n_seeds);
  run_parallel(2 * n_seeds, workers, [&](std::size_t task) {
    const std::size_t seed_idx = task / 2;
    const bool weighted = (task % 2) == 0;
    TrainConfig cfg = base;
    cfg.seed = result.seeds[seed_idx];
    cfg.use_weighted_loss = weighted;
    TrainResult run = train(cfg, data);
    (weighted ? result.weighted : result.unweighted).runs[seed_idx] = std::move(run.metrics);
  });
  summarize_arm(result.weighted, result.minority_classes);
  summarize_arm(result.unweighted, result.minority_classes);
  return result;
}

void write_metrics_csv(std::ostream& os, const RunMetrics& metrics) {
  os << "epoch,train_loss,val_top1_error\n";
  for (const EpochRow& row : metrics.epochs) {
    os << row.epoch << "," << fmt_double(row.train_loss) << "," << fmt_double(row.val_top1_error)
       << "\n";
  }
}

}  // namespace malcnn
