#pragma once

#include <vector>

#include "sekd/seq_model.hpp"
#include "sekd/synth_task.hpp"

namespace sekd::eval {

using Sequence = std::vector<int>;
using Corpus = std::vector<Sequence>;

inline constexpr int kMaxOrder = 4;

/// Sufficient statistics of corpus BLEU.
struct BleuStats {
  long hyp_length = 0;
  long ref_length = 0;
  long matches[kMaxOrder] = {0, 0, 0, 0};
  long totals[kMaxOrder] = {0, 0, 0, 0};
};

BleuStats bleu_stats(const Corpus &hyps, const Corpus &refs);

/// Corpus BLEU in [0, 100] over token ids: clipped 1..4-gram precisions, a
/// zero match count at order n is replaced by a precision of 1 / (2 * total_n),
/// geometric mean times brevity penalty. Orders with no hypothesis n-grams
/// give 0.
double corpus_bleu(const Corpus &hyps, const Corpus &refs);
double bleu_from_stats(const BleuStats &stats);
double brevity_penalty(long hyp_length, long ref_length);

/// Matching positions over sum of max(len) per pair; an all-empty corpus
/// pair scores 1.
double token_accuracy(const Corpus &hyps, const Corpus &refs);
double seq_exact_match(const Corpus &hyps, const Corpus &refs);

/// Greedy generations (response tokens only) for every prompt of the split.
template <typename T>
Corpus generate(const ModelParams<T> &params, const task::Split &split, std::size_t max_new);

/// Default generation budget: the longest target plus EOS.
std::size_t default_max_new(const task::TaskSpec &spec);

Corpus references(const task::Split &split);

/// BLEU of student generations against teacher generations on the same prompts.
template <typename T>
double teacher_agreement(const ModelParams<T> &student, const ModelParams<T> &teacher,
                         const task::Split &split, std::size_t max_new);

} // namespace sekd::eval
