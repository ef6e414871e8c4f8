#include "malcnn/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>

#include "malcnn/errors.hpp"
#include "malcnn/rng.hpp"
#include "malcnn/util.hpp"

namespace fs = std::filesystem;

namespace malcnn {

std::size_t Corpus::total_images() const {
  std::size_t n = 0;
  for (const ClassEntry& c : classes) n += c.paths.size();
  return n;
}

Corpus scan_corpus(const std::string& root) {
  if (!fs::is_directory(root)) throw DataError("corpus root is not a directory: " + root);
  Corpus corpus;
  corpus.root = root;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) {
      throw DataError("corpus root must contain only class directories, found " +
                      entry.path().string());
    }
    ClassEntry cls;
    cls.name = entry.path().filename().string();
    for (const auto& file : fs::directory_iterator(entry.path())) {
      if (!file.is_regular_file() || file.path().extension() != ".pgm") {
        throw DataError("class " + cls.name + " contains a non-image entry: " +
                        file.path().string());
      }
      cls.paths.push_back(file.path().string());
    }
    if (cls.paths.empty()) throw DataError("class directory is empty: " + cls.name);
    std::sort(cls.paths.begin(), cls.paths.end());
    corpus.classes.push_back(std::move(cls));
  }
  if (corpus.classes.empty()) throw DataError("corpus has no class directories: " + root);
  std::sort(corpus.classes.begin(), corpus.classes.end(),
            [](const ClassEntry& a, const ClassEntry& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < corpus.classes.size(); ++i) {
    if (corpus.classes[i].name == corpus.classes[i - 1].name) {
      throw DataError("duplicate class name: " + corpus.classes[i].name);
    }
  }
  return corpus;
}

SplitIndices split_60_20_20(const Corpus& corpus) {
  SplitIndices split;
  split.per_class.resize(corpus.classes.size());
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    const std::size_t n = corpus.classes[c].paths.size();
    if (n < 5) {
      throw DataError("class " + corpus.classes[c].name + " has only " + std::to_string(n) +
                      " images; the 60/20/20 split needs at least 5");
    }
    const std::size_t n_train = (n * 6) / 10;  // floor(0.6 n)
    const std::size_t n_val = (n * 2) / 10;    // floor(0.2 n)
    ClassSplit& s = split.per_class[c];
    for (std::size_t i = 0; i < n_train; ++i) s.train.push_back(i);
    for (std::size_t i = n_train; i < n_train + n_val; ++i) s.val.push_back(i);
    for (std::size_t i = n_train + n_val; i < n; ++i) s.test.push_back(i);
  }
  return split;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& train_indices,
                                                   std::size_t batch_size, std::uint64_t run_seed,
                                                   std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order = train_indices;
  Rng rng(mix_seed(run_seed, epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<ClassStats> class_stats(const Corpus& corpus, const SplitIndices& split, double beta) {
  if (split.per_class.size() != corpus.classes.size()) {
    throw std::invalid_argument("class_stats: split does not match corpus");
  }
  std::vector<std::size_t> sizes(corpus.classes.size());
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    sizes[c] = split.per_class[c].train.size();
  }
  const std::vector<double> weights = class_weights(sizes, beta);
  std::vector<ClassStats> stats(corpus.classes.size());
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    stats[c] = {c + 1, corpus.classes[c].name, sizes[c], weights[c]};
  }
  return stats;
}

const std::vector<std::pair<std::string, std::size_t>>& malimg_fixture() {
  static const std::vector<std::pair<std::string, std::size_t>> table = {
      {"Allaple.L", 1591},     {"Allaple.A", 2949},     {"Yuner.A", 800},
      {"lolyda.AA 1", 213},    {"lolyda.AA 2", 184},    {"lolyda.AA 3", 123},
      {"C2Lop.P", 146},        {"C2Lop.gen!G", 200},    {"Instantaccess", 431},
      {"Swizzor.gen!I", 132},  {"Swizzor.gen!E", 128},  {"VB.AT", 408},
      {"Fakerean", 381},       {"Alueron.gen!J", 198},  {"Malex.gen!J", 136},
      {"Lolyda.AT", 159},      {"Adialer.C", 125},      {"Wintrim.BX", 97},
      {"Dialplatform.B", 177}, {"Dontovo.A", 162},      {"Obfuscator.AD", 142},
      {"Agent.FYI", 116},      {"Autorun.K", 106},      {"Rbot!gen", 158},
      {"Skintrim.N", 80},
  };
  return table;
}

std::uint64_t split_fingerprint(const Corpus& corpus, const SplitIndices& split) {
  std::uint64_t h = fnv1a64("train-split");
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    h = fnv1a64(corpus.classes[c].name, h);
    for (std::size_t i : split.per_class[c].train) {
      h = fnv1a64(corpus.classes[c].paths[i], h);
    }
  }
  return h;
}

std::uint64_t corpus_fingerprint(const Corpus& corpus) {
  std::uint64_t h = fnv1a64("corpus");
  for (const ClassEntry& cls : corpus.classes) {
    h = fnv1a64(cls.name, h);
    const std::uint64_t count = cls.paths.size();
    h = fnv1a64(&count, sizeof(count), h);
    for (const std::string& path : cls.paths) {
      const std::vector<std::uint8_t> bytes = read_file_bytes(path);
      h = fnv1a64(bytes.data(), bytes.size(), h);
    }
  }
  return h;
}

void write_split_manifest(std::ostream& os, const Corpus& corpus, const SplitIndices& split) {
  os << "class,split,path\n";
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    const ClassEntry& cls = corpus.classes[c];
    const ClassSplit& s = split.per_class[c];
    for (std::size_t i : s.train) os << cls.name << ",train," << cls.paths[i] << "\n";
    for (std::size_t i : s.val) os << cls.name << ",val," << cls.paths[i] << "\n";
    for (std::size_t i : s.test) os << cls.name << ",test," << cls.paths[i] << "\n";
  }
}

}  // namespace malcnn
