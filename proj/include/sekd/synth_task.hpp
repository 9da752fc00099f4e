#pragma once

// Synthetic two-direction "translation" task with Zipfian source tokens.
//
// Token layout: PAD=0, BOS=1, SEP=2, EOS=3, two direction tokens, then the
// content vocabulary. A training sequence is BOS DIR source SEP target EOS.
// The forward mapping substitutes every content token through a seeded
// permutation and then swaps each aligned pair (2k, 2k+1) in which at least
// one token has an even id; the inverse direction undoes it.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sekd/token_batch.hpp"

namespace sekd::task {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kSep = 2;
inline constexpr int kEos = 3;
inline constexpr int kDirForward = 4;
inline constexpr int kDirInverse = 5;
inline constexpr int kFirstContent = 6;

struct TaskSpec {
  int vocab_size = 128;
  double zipf_exponent = 1.1;
  int min_len = 4;
  int max_len = 16;
  std::size_t train_size = 10000;
  std::size_t valid_size = 500;
  std::size_t test_size = 1000;
  std::uint64_t seed = 0;
  std::uint64_t mapping_seed = 0;

  void validate() const;
  int content_count() const { return vocab_size - kFirstContent; }
  /// BOS + DIR + source + SEP + target + EOS at max_len.
  int longest_sequence() const { return 2 * max_len + 4; }
  std::string canonical() const;
  std::uint64_t fingerprint() const;
  bool operator==(const TaskSpec &) const = default;
};

class Mapping {
public:
  static Mapping build(const TaskSpec &spec);

  int substitute(int token) const;
  std::vector<int> apply(std::span<const int> source) const;
  std::vector<int> invert(std::span<const int> target) const;

  const std::vector<int> &substitution() const { return forward_; }

private:
  std::vector<int> forward_; // indexed by token id; specials map to themselves
  std::vector<int> inverse_;
};

/// Pair swap on already-substituted tokens; an involution.
std::vector<int> swap_pairs(std::span<const int> tokens);

struct Example {
  int direction = kDirForward;
  std::vector<int> source;
  std::vector<int> target;

  /// BOS DIR source SEP.
  std::vector<int> prompt() const;
  /// prompt, target, EOS.
  std::vector<int> sequence() const;
  bool operator==(const Example &) const = default;
};

struct Split {
  std::string name;
  std::vector<Example> examples;
};

struct Corpus {
  TaskSpec spec;
  Split train;
  Split valid;
  Split test;

  const Split &split(const std::string &name) const;
};

Corpus generate_corpus(const TaskSpec &spec);

/// Draws one Zipf-distributed content token (rank r -> id kFirstContent + r - 1).
class ZipfSampler {
public:
  ZipfSampler(int content_count, double exponent);
  int sample(std::mt19937_64 &gen) const;
  double probability(int rank) const; ///< rank is 1-based

private:
  std::vector<double> cdf_;
};

/// Header line plus one line per example: "DIR src...<TAB>tgt...".
void write_split(const Split &split, const TaskSpec &spec, const std::filesystem::path &path);
std::string serialize_split(const Split &split, const TaskSpec &spec);
/// Parses a corpus file. Throws IoError if missing/malformed or if the
/// header fingerprint differs from `expected` (when given).
Split read_split(const std::filesystem::path &path, const TaskSpec *expected = nullptr);

/// Deterministic shuffled batches over a split for one (seed, epoch).
class BatchIterator {
public:
  BatchIterator(const Split &split, std::size_t batch_size, std::uint64_t seed,
                std::uint64_t epoch);

  bool next(TokenBatch &out);
  std::size_t batch_count() const;

private:
  const Split *split_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Builds a padded TokenBatch with response mask for the given examples.
TokenBatch make_training_batch(const Split &split, std::span<const std::size_t> indices);

/// Token accuracy of the best position-independent predictor (per direction,
/// most frequent target token aligned with each source token) fitted on
/// `train` and scored on `test`.
double unigram_baseline_accuracy(const Split &train, const Split &test, int vocab_size);

} // namespace sekd::task
