#include "sekd/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sekd/error.hpp"

namespace sekd::eval {
namespace {

void require_aligned(const Corpus &hyps, const Corpus &refs) {
  if (hyps.size() != refs.size()) {
    throw InvalidInput("corpora are not aligned: " + std::to_string(hyps.size()) + " vs " +
                       std::to_string(refs.size()));
  }
}

std::map<Sequence, long> ngram_counts(const Sequence &s, std::size_t n) {
  std::map<Sequence, long> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    counts[Sequence(s.begin() + static_cast<std::ptrdiff_t>(i),
                    s.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1;
  }
  return counts;
}

} // namespace

BleuStats bleu_stats(const Corpus &hyps, const Corpus &refs) {
  require_aligned(hyps, refs);
  BleuStats st;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const Sequence &h = hyps[k];
    const Sequence &r = refs[k];
    st.hyp_length += static_cast<long>(h.size());
    st.ref_length += static_cast<long>(r.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto nn = static_cast<std::size_t>(n);
      const auto hc = ngram_counts(h, nn);
      const auto rc = ngram_counts(r, nn);
      for (const auto &[gram, count] : hc) {
        const auto it = rc.find(gram);
        if (it != rc.end()) {
          st.matches[n - 1] += std::min(count, it->second);
        }
      }
      if (h.size() >= nn) {
        st.totals[n - 1] += static_cast<long>(h.size() - nn + 1);
      }
    }
  }
  return st;
}

double brevity_penalty(long hyp_length, long ref_length) {
  if (hyp_length >= ref_length) {
    return 1.0;
  }
  if (hyp_length == 0) {
    return 0.0;
  }
  return std::exp(1.0 - static_cast<double>(ref_length) / static_cast<double>(hyp_length));
}

double bleu_from_stats(const BleuStats &st) {
  double log_sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (st.totals[n] == 0) {
      return 0.0;
    }
    const double total = static_cast<double>(st.totals[n]);
    const double precision = st.matches[n] > 0 ? static_cast<double>(st.matches[n]) / total
                                               : 1.0 / (2.0 * total);
    log_sum += std::log(precision);
  }
  const double bleu =
      100.0 * brevity_penalty(st.hyp_length, st.ref_length) * std::exp(log_sum / kMaxOrder);
  return std::clamp(bleu, 0.0, 100.0);
}

double corpus_bleu(const Corpus &hyps, const Corpus &refs) {
  if (hyps.empty()) {
    throw InvalidInput("corpus_bleu needs at least one pair");
  }
  return bleu_from_stats(bleu_stats(hyps, refs));
}

double token_accuracy(const Corpus &hyps, const Corpus &refs) {
  require_aligned(hyps, refs);
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const std::size_t common = std::min(hyps[k].size(), refs[k].size());
    for (std::size_t i = 0; i < common; ++i) {
      correct += hyps[k][i] == refs[k][i] ? 1 : 0;
    }
    total += std::max(hyps[k].size(), refs[k].size());
  }
  return total == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double seq_exact_match(const Corpus &hyps, const Corpus &refs) {
  require_aligned(hyps, refs);
  if (hyps.empty()) {
    return 1.0;
  }
  std::size_t exact = 0;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    exact += hyps[k] == refs[k] ? 1 : 0;
  }
  return static_cast<double>(exact) / static_cast<double>(hyps.size());
}

std::size_t default_max_new(const task::TaskSpec &spec) {
  return static_cast<std::size_t>(spec.max_len) + 1;
}

Corpus references(const task::Split &split) {
  Corpus out;
  out.reserve(split.examples.size());
  for (const auto &ex : split.examples) {
    out.push_back(ex.target);
  }
  return out;
}

template <typename T>
Corpus generate(const ModelParams<T> &params, const task::Split &split, std::size_t max_new) {
  std::vector<Sequence> prompts;
  prompts.reserve(split.examples.size());
  for (const auto &ex : split.examples) {
    prompts.push_back(ex.prompt());
  }
  Corpus full = decode_greedy(params, prompts, max_new, task::kEos);
  for (std::size_t k = 0; k < full.size(); ++k) {
    full[k].erase(full[k].begin(),
                  full[k].begin() + static_cast<std::ptrdiff_t>(prompts[k].size()));
  }
  return full;
}

template <typename T>
double teacher_agreement(const ModelParams<T> &student, const ModelParams<T> &teacher,
                         const task::Split &split, std::size_t max_new) {
  if (student.config.vocab_size != teacher.config.vocab_size) {
    throw InvalidInput("teacher_agreement: vocabularies differ");
  }
  return corpus_bleu(generate(student, split, max_new), generate(teacher, split, max_new));
}

template Corpus generate<float>(const ModelParams<float> &, const task::Split &, std::size_t);
template Corpus generate<double>(const ModelParams<double> &, const task::Split &,
                                 std::size_t);
template double teacher_agreement<float>(const ModelParams<float> &,
                                         const ModelParams<float> &, const task::Split &,
                                         std::size_t);
template double teacher_agreement<double>(const ModelParams<double> &,
                                          const ModelParams<double> &, const task::Split &,
                                          std::size_t);

} // namespace sekd::eval
