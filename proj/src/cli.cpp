#include "malcnn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "malcnn/checkpoint.hpp"
#include "malcnn/dataset.hpp"
#include "malcnn/errors.hpp"
#include "malcnn/features.hpp"
#include "malcnn/imaging.hpp"
#include "malcnn/loss.hpp"
#include "malcnn/trainer.hpp"
#include "malcnn/util.hpp"
#include "malcnn/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace malcnn {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string beta_tag(double beta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", beta);
  return buf;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw DataError("cannot create directory " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

double parse_beta(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "INF") return INFINITY;
  double v = 0.0;
  try {
    v = std::stod(s);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad beta value \"" + s + "\"");
  }
  if (!(v > 0.0)) throw std::invalid_argument("beta must be positive, got \"" + s + "\"");
  return v;
}

json config_to_json(const TrainConfig& cfg) {
  json j;
  j["learning_rate"] = cfg.learning_rate;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["batch_size"] = cfg.batch_size;
  j["beta"] = std::isinf(cfg.beta) ? json("inf") : json(cfg.beta);
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["input_height"] = cfg.input_height;
  j["input_width"] = cfg.input_width;
  j["use_weighted_loss"] = cfg.use_weighted_loss;
  j["architecture"] = cfg.architecture;
  return j;
}

json corpus_to_json(const Corpus& corpus, std::uint64_t content_hash) {
  json classes = json::array();
  for (const ClassEntry& c : corpus.classes) {
    classes.push_back({{"name", c.name}, {"count", c.paths.size()}});
  }
  return json{{"root", corpus.root}, {"content_hash", hex64(content_hash)}, {"classes", classes}};
}

json eval_report_to_json(const EvalReport& report, const Corpus& corpus) {
  json recall = json::object();
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    recall[corpus.classes[c].name] = report.per_class_recall[c];
  }
  return json{{"top1_error", report.top1_error},
              {"accuracy", 1.0 - report.top1_error},
              {"total", report.total},
              {"correct", report.correct},
              {"per_class_recall", recall},
              {"confusion", report.confusion}};
}

// ---- convert ----------------------------------------------------------

int cmd_convert(const std::string& in_dir, const std::string& out_dir,
                const std::string& width_table_path, std::ostream&, std::ostream& err) {
  if (!fs::is_directory(in_dir)) throw DataError("input is not a directory: " + in_dir);
  const WidthTable table =
      width_table_path.empty() ? WidthTable::standard() : WidthTable::load(width_table_path);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no input files in " + in_dir);

  ensure_dir(out_dir);
  std::ostringstream manifest;
  manifest << "source_path,bytes,width,height,output_path\n";
  std::size_t failures = 0;
  for (const std::string& path : files) {
    try {
      const std::vector<std::uint8_t> bytes = read_file_bytes(path);
      const std::size_t width = table.width_for_size(bytes.size());
      const GrayImage img = binary_to_image(bytes, width);
      const std::string out_path =
          (fs::path(out_dir) / (fs::path(path).filename().string() + ".pgm")).string();
      write_pgm(img, out_path);
      manifest << path << "," << bytes.size() << "," << img.width << "," << img.height << ","
               << out_path << "\n";
    } catch (const std::exception& e) {
      err << "convert: " << path << ": " << e.what() << "\n";
      ++failures;
    }
  }
  write_text_file((fs::path(out_dir) / "conversion_manifest.csv").string(), manifest.str());
  if (failures > 0) {
    err << "convert: " << failures << " of " << files.size() << " files failed\n";
    return kExitData;
  }
  return kExitOk;
}

// ---- weights ----------------------------------------------------------

int cmd_weights(const std::string& data_dir, double beta, std::ostream& out, std::ostream&) {
  const Corpus corpus = scan_corpus(data_dir);
  const SplitIndices split = split_60_20_20(corpus);
  const std::vector<ClassStats> stats = class_stats(corpus, split, beta);
  write_weights_csv(out, stats);
  return kExitOk;
}

// ---- train ------------------------------------------------------------

void write_run_artifacts(const std::string& out_dir, const TrainConfig& cfg,
                         const PreparedData& data, const TrainResult& result) {
  ensure_dir(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  const std::string summary_path = (fs::path(out_dir) / "summary.json").string();
  const std::string checkpoint_path = (fs::path(out_dir) / "checkpoint.ckpt").string();
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  const std::string split_path = (fs::path(out_dir) / "split_manifest.csv").string();

  {
    std::ostringstream os;
    write_metrics_csv(os, result.metrics);
    write_text_file(metrics_path, os.str());
  }
  {
    json summary = eval_report_to_json(result.metrics.test, data.corpus);
    summary["config"] = config_to_json(cfg);
    summary["weights_used"] = result.weights_used;
    write_text_file(summary_path, summary.dump(2) + "\n");
  }
  save_checkpoint(*result.net, cfg.seed, checkpoint_path);
  {
    std::ostringstream os;
    write_split_manifest(os, data.corpus, data.split);
    write_text_file(split_path, os.str());
  }
  {
    json manifest;
    manifest["toolkit_version"] = kVersion;
    manifest["command"] = "train";
    manifest["seed"] = cfg.seed;
    manifest["config"] = config_to_json(cfg);
    manifest["corpus"] = corpus_to_json(data.corpus, data.corpus_fp);
    manifest["weights"] = result.weights_used;
    manifest["artifacts"] = {{"metrics_csv", metrics_path},
                             {"summary_json", summary_path},
                             {"checkpoint", checkpoint_path},
                             {"split_manifest", split_path}};
    write_text_file(manifest_path, manifest.dump(2) + "\n");
  }
}

int cmd_train(const std::string& data_dir, const TrainConfig& cfg, const std::string& out_dir,
              std::ostream& out, std::ostream&) {
  cfg.validate();
  const Corpus corpus = scan_corpus(data_dir);
  const PreparedData data = prepare_dataset(corpus, cfg.input_height, cfg.input_width);
  const TrainResult result = train(cfg, data);
  write_run_artifacts(out_dir, cfg, data, result);
  out << "final val top-1 error " << fmt_double(result.metrics.epochs.back().val_top1_error)
      << ", test top-1 error " << fmt_double(result.metrics.test.top1_error) << "\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& split_name, std::ostream& out, std::ostream&) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  const Corpus corpus = scan_corpus(data_dir);
  if (ck.net->num_outputs() != corpus.num_classes()) {
    throw DataError("checkpoint emits " + std::to_string(ck.net->num_outputs()) +
                    " classes but the corpus has " + std::to_string(corpus.num_classes()));
  }
  const PreparedData data = prepare_dataset(corpus, ck.net->in_height(), ck.net->in_width());
  const std::vector<std::size_t>* idx = nullptr;
  if (split_name == "train") idx = &data.train_idx;
  else if (split_name == "val") idx = &data.val_idx;
  else if (split_name == "test") idx = &data.test_idx;
  else throw std::invalid_argument("unknown split \"" + split_name + "\"");

  const EvalReport report = evaluate(*ck.net, data, *idx);
  json j = eval_report_to_json(report, corpus);
  j["split"] = split_name;
  j["checkpoint"] = checkpoint_path;
  out << j.dump(2) << "\n";
  return kExitOk;
}

// ---- sweep-beta -------------------------------------------------------

int cmd_sweep_beta(const std::string& data_dir, const TrainConfig& base,
                   const std::vector<double>& betas, const std::vector<std::uint64_t>& seeds,
                   const std::string& out_dir, std::ostream& out, std::ostream&) {
  base.validate();
  if (betas.empty()) throw std::invalid_argument("sweep: need at least one beta");
  if (seeds.empty()) throw std::invalid_argument("sweep: need at least one seed");
  const Corpus corpus = scan_corpus(data_dir);
  const PreparedData data = prepare_dataset(corpus, base.input_height, base.input_width);
  ensure_dir(out_dir);

  std::ostringstream summary;
  summary << "beta,n_seeds,mean_final_val_top1_error,std_final_val_top1_error\n";
  for (double beta : betas) {
    std::vector<double> finals;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.beta = beta;
      cfg.seed = seed;
      cfg.use_weighted_loss = true;
      const TrainResult result = train(cfg, data);
      const std::string metrics_path =
          (fs::path(out_dir) /
           ("metrics_beta" + beta_tag(beta) + "_seed" + std::to_string(seed) + ".csv"))
              .string();
      std::ostringstream os;
      write_metrics_csv(os, result.metrics);
      write_text_file(metrics_path, os.str());
      finals.push_back(result.metrics.epochs.back().val_top1_error);
    }
    double mean = 0.0;
    for (double v : finals) mean += v;
    mean /= static_cast<double>(finals.size());
    double sd = 0.0;
    if (finals.size() > 1) {
      for (double v : finals) sd += (v - mean) * (v - mean);
      sd = std::sqrt(sd / static_cast<double>(finals.size() - 1));
    }
    summary << beta_tag(beta) << "," << finals.size() << "," << fmt_double(mean) << ","
            << fmt_double(sd) << "\n";
  }
  const std::string summary_path = (fs::path(out_dir) / "sweep_summary.csv").string();
  write_text_file(summary_path, summary.str());
  out << summary.str();
  return kExitOk;
}

// ---- features ---------------------------------------------------------

int cmd_features(const std::string& checkpoint_path, const std::string& data_dir,
                 const std::vector<std::string>& class_names, const std::string& out_dir,
                 std::ostream&, std::ostream&) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  const Corpus corpus = scan_corpus(data_dir);
  if (ck.net->num_outputs() != corpus.num_classes()) {
    throw DataError("checkpoint emits " + std::to_string(ck.net->num_outputs()) +
                    " classes but the corpus has " + std::to_string(corpus.num_classes()));
  }
  if (class_names.empty()) throw std::invalid_argument("features: need at least one class");

  auto class_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
      if (corpus.classes[c].name == name) return c;
    }
    std::string valid;
    for (const ClassEntry& cls : corpus.classes) valid += " " + cls.name;
    throw DataError("unknown class \"" + name + "\"; valid classes:" + valid);
  };
  std::vector<std::size_t> targets;
  for (const std::string& name : class_names) targets.push_back(class_index(name));

  const PreparedData data = prepare_dataset(corpus, ck.net->in_height(), ck.net->in_width());
  ck.net->set_mode(Mode::kEval);
  ensure_dir(out_dir);

  std::ostringstream manifest;
  manifest << "class,n,D,min,max,output_path,warning\n";
  for (std::size_t target : targets) {
    // All images of the class, in corpus order.
    std::vector<Tensor> images;
    std::size_t base = 0;
    for (std::size_t c = 0; c < target; ++c) base += corpus.classes[c].paths.size();
    for (std::size_t i = 0; i < corpus.classes[target].paths.size(); ++i) {
      images.push_back(data.images[base + i]);
    }
    const Tensor feats = extract_features(*ck.net, images);
    const FeatureMap fm = make_feature_map(corpus.classes[target].name, feats);
    const std::string path =
        (fs::path(out_dir) / (corpus.classes[target].name + ".pgm")).string();
    const FeatureExportResult exported = export_feature_map(fm, path);
    manifest << fm.class_name << "," << fm.n << "," << fm.dim << "," << fmt_double(fm.min_value)
             << "," << fmt_double(fm.max_value) << "," << path << ","
             << (exported.degenerate ? "constant-matrix" : "") << "\n";
  }
  write_text_file((fs::path(out_dir) / "features_manifest.csv").string(), manifest.str());
  return kExitOk;
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"imbalance-aware malware-image CNN toolkit"};
  app.require_subcommand(1);

  // convert
  std::string conv_in, conv_out, conv_table;
  CLI::App* convert = app.add_subcommand("convert", "binaries -> grayscale PGM images");
  convert->add_option("--in", conv_in, "directory of binary files")->required();
  convert->add_option("--out", conv_out, "output directory")->required();
  convert->add_option("--width-table", conv_table, "custom filesize->width table file");

  // weights
  std::string weights_data;
  std::string weights_beta = "20";
  CLI::App* weights = app.add_subcommand("weights", "per-class loss weights as CSV");
  weights->add_option("--data", weights_data, "corpus root")->required();
  weights->add_option("--beta", weights_beta, "scaling parameter (default 20)");

  // train
  std::string train_data, train_config, train_out;
  std::string train_beta;
  std::uint64_t train_seed = 0;
  bool seed_set = false, weighted_flag = false, unweighted_flag = false;
  std::size_t train_epochs = 0;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write run artifacts");
  train_cmd->add_option("--data", train_data, "corpus root")->required();
  train_cmd->add_option("--config", train_config, "flat key=value config file");
  train_cmd->add_option("--out", train_out, "run output directory")->required();
  train_cmd->add_option("--seed", train_seed, "run seed")->each([&](const std::string&) {
    seed_set = true;
  });
  train_cmd->add_option("--epochs", train_epochs, "epoch count override");
  train_cmd->add_option("--beta", train_beta, "scaling parameter override");
  train_cmd->add_flag("--weighted", weighted_flag, "use the class-size-weighted loss");
  train_cmd->add_flag("--unweighted", unweighted_flag, "use the plain softmax loss");

  // eval
  std::string eval_ckpt, eval_data, eval_split = "test";
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "corpus root")->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test (default test)");

  // sweep-beta
  std::string sweep_data, sweep_config, sweep_out, sweep_betas = "10,20,40", sweep_seeds = "1";
  CLI::App* sweep = app.add_subcommand("sweep-beta", "paired runs across beta values");
  sweep->add_option("--data", sweep_data, "corpus root")->required();
  sweep->add_option("--config", sweep_config, "flat key=value config file");
  sweep->add_option("--out", sweep_out, "output directory")->required();
  sweep->add_option("--betas", sweep_betas, "comma list of beta values ('inf' allowed)");
  sweep->add_option("--seeds", sweep_seeds, "comma list of run seeds");

  // features
  std::string feat_ckpt, feat_data, feat_classes, feat_out;
  CLI::App* features = app.add_subcommand("features", "per-class feature-map PGMs");
  features->add_option("--checkpoint", feat_ckpt, "checkpoint file")->required();
  features->add_option("--data", feat_data, "corpus root")->required();
  features->add_option("--classes", feat_classes, "comma list of class names")->required();
  features->add_option("--out", feat_out, "output directory")->required();

  std::vector<const char*> argv;
  argv.push_back("malcnn");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (convert->parsed()) return cmd_convert(conv_in, conv_out, conv_table, out, err);
    if (weights->parsed()) return cmd_weights(weights_data, parse_beta(weights_beta), out, err);
    if (train_cmd->parsed()) {
      if (weighted_flag && unweighted_flag) {
        throw std::invalid_argument("--weighted and --unweighted are mutually exclusive");
      }
      TrainConfig cfg;
      if (!train_config.empty()) cfg = parse_config_file(train_config, cfg);
      if (seed_set) cfg.seed = train_seed;
      if (train_epochs > 0) cfg.epochs = train_epochs;
      if (!train_beta.empty()) cfg.beta = parse_beta(train_beta);
      if (weighted_flag) cfg.use_weighted_loss = true;
      if (unweighted_flag) cfg.use_weighted_loss = false;
      return cmd_train(train_data, cfg, train_out, out, err);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_split, out, err);
    if (sweep->parsed()) {
      TrainConfig cfg;
      if (!sweep_config.empty()) cfg = parse_config_file(sweep_config, cfg);
      std::vector<double> betas;
      for (const std::string& b : split_csv_list(sweep_betas)) betas.push_back(parse_beta(b));
      std::vector<std::uint64_t> seeds;
      for (const std::string& s : split_csv_list(sweep_seeds)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
          throw std::invalid_argument("bad seed \"" + s + "\"");
        }
      }
      return cmd_sweep_beta(sweep_data, cfg, betas, seeds, sweep_out, out, err);
    }
    if (features->parsed()) {
      return cmd_features(feat_ckpt, feat_data, split_csv_list(feat_classes), feat_out, out, err);
    }
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace malcnn
