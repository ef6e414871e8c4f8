#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "malcnn/loss.hpp"

namespace malcnn {

struct ClassEntry {
  std::string name;
  std::vector<std::string> paths;  // lexicographically sorted
};

/// Image corpus laid out as root/<class_name>/*.pgm. Classes and paths are
/// kept in lexicographic order so "the first 60%" is reproducible.
struct Corpus {
  std::string root;
  std::vector<ClassEntry> classes;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t total_images() const;
};

struct ClassSplit {
  std::vector<std::size_t> train, val, test;  // indices into ClassEntry::paths
};

/// Per-class train/val/test partition: first floor(0.6 n), next floor(0.2 n),
/// remainder. Disjoint, covering, order preserving.
struct SplitIndices {
  std::vector<ClassSplit> per_class;
};

Corpus scan_corpus(const std::string& root);
SplitIndices split_60_20_20(const Corpus& corpus);

/// Training batch order for one epoch: a uniform shuffle of the indices
/// seeded by (run_seed, epoch), chunked into batch_size pieces with the
/// short final batch kept.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& train_indices,
                                                   std::size_t batch_size, std::uint64_t run_seed,
                                                   std::uint64_t epoch);

/// Training-split sizes per class with their loss weights at the given beta.
std::vector<ClassStats> class_stats(const Corpus& corpus, const SplitIndices& split, double beta);

/// The 25 (family name, image count) pairs of the malimg corpus.
const std::vector<std::pair<std::string, std::size_t>>& malimg_fixture();

/// Identity of the training split (class names + ordered training paths).
std::uint64_t split_fingerprint(const Corpus& corpus, const SplitIndices& split);

/// Content hash of the whole corpus (per-class counts plus file bytes).
std::uint64_t corpus_fingerprint(const Corpus& corpus);

/// CSV `class,split,path`, classes in corpus order.
void write_split_manifest(std::ostream& os, const Corpus& corpus, const SplitIndices& split);

}  // namespace malcnn
