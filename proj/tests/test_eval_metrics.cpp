#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sekd/error.hpp"
#include "sekd/eval_metrics.hpp"
#include "sekd/trainer.hpp"

using namespace sekd;
using namespace sekd::eval;

TEST_CASE("BLEU of identical corpora is 100") {
  const Corpus c{{6, 7, 8, 9}, {10, 11, 12, 13, 14, 15}, {6, 6, 6, 6, 6}};
  CHECK(corpus_bleu(c, c) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("BLEU hand computation for a single pair") {
  // Clipped precisions 4/5, 3/4, 2/3, 1/2; equal lengths so no brevity penalty.
  const double by_hand = 100.0 * std::pow(4.0 / 5 * 3.0 / 4 * 2.0 / 3 * 1.0 / 2, 0.25);
  const double bleu = corpus_bleu({{1, 2, 3, 4, 5}}, {{1, 2, 3, 4, 6}});
  CHECK(bleu == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK(bleu == doctest::Approx(66.874).epsilon(1e-4));

  const BleuStats s = bleu_stats({{1, 2, 3, 4, 5}}, {{1, 2, 3, 4, 6}});
  CHECK(s.matches[0] == 4);
  CHECK(s.totals[0] == 5);
  CHECK(s.matches[3] == 1);
  CHECK(s.totals[3] == 2);
}

TEST_CASE("BLEU clips repeated n-grams") {
  // Unigram "7" appears 4 times in the hypothesis but twice in the reference.
  const BleuStats s = bleu_stats({{7, 7, 7, 7}}, {{7, 7, 8, 9}});
  CHECK(s.matches[0] == 2);
  CHECK(s.matches[1] == 1);
}

TEST_CASE("BLEU smoothing floor and zero-total orders") {
  const double single = corpus_bleu({{1, 2, 3, 4, 5}}, {{6, 7, 8, 9, 10}});
  const double by_hand = 100.0 * std::pow(1.0 / 10 * 1.0 / 8 * 1.0 / 6 * 1.0 / 4, 0.25);
  CHECK(single == doctest::Approx(by_hand).epsilon(1e-12));

  // The floor shrinks with the n-gram totals; a corpus-sized disjoint set
  // lands below 1.
  Corpus h(40, Sequence(10, 1));
  Corpus r(40, Sequence(10, 2));
  const double disjoint = corpus_bleu(h, r);
  CHECK(disjoint > 0.0);
  CHECK(disjoint < 1.0);
  // Three tokens have no 4-grams at all.
  CHECK(corpus_bleu({{1, 2, 3}}, {{1, 2, 3}}) == 0.0);
  CHECK(corpus_bleu({{}}, {{1, 2, 3, 4}}) == 0.0);
}

TEST_CASE("brevity penalty") {
  CHECK(brevity_penalty(10, 10) == 1.0);
  CHECK(brevity_penalty(12, 10) == 1.0);
  CHECK(brevity_penalty(5, 10) == doctest::Approx(std::exp(1.0 - 2.0)));
  const double short_hyp = corpus_bleu({{1, 2, 3, 4}}, {{1, 2, 3, 4, 5, 6, 7, 8}});
  CHECK(short_hyp == doctest::Approx(100.0 * std::exp(1.0 - 2.0)).epsilon(1e-12));
}

TEST_CASE("BLEU errors and invariants") {
  CHECK_THROWS_AS(corpus_bleu({}, {}), InvalidInput);
  CHECK_THROWS_AS(corpus_bleu({{1}}, {{1}, {2}}), InvalidInput);

  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> tok(6, 15);
  std::uniform_int_distribution<int> len(0, 12);
  for (int trial = 0; trial < 100; ++trial) {
    Corpus h(8), r(8);
    for (int i = 0; i < 8; ++i) {
      for (int k = len(gen); k > 0; --k) h[i].push_back(tok(gen));
      for (int k = 4 + len(gen); k > 0; --k) r[i].push_back(tok(gen));
    }
    const double b = corpus_bleu(h, r);
    CHECK(b >= 0.0);
    CHECK(b <= 100.0);
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    Corpus ph, pr;
    for (std::size_t i : perm) {
      ph.push_back(h[i]);
      pr.push_back(r[i]);
    }
    CHECK(corpus_bleu(ph, pr) == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("token accuracy and exact match") {
  const Corpus refs{{6, 7, 8, 9}, {10, 11}};
  CHECK(token_accuracy(refs, refs) == 1.0);
  CHECK(seq_exact_match(refs, refs) == 1.0);
  const Corpus disjoint{{20, 21, 22, 23}, {24, 25}};
  CHECK(token_accuracy(disjoint, refs) == 0.0);
  CHECK(seq_exact_match(disjoint, refs) == 0.0);
  const Corpus half{{6, 7, 8, 9}, {10, 12}};
  CHECK(seq_exact_match(half, refs) == 0.5);
  CHECK(token_accuracy(half, refs) == doctest::Approx(5.0 / 6.0));
  // Missing and extra positions count as wrong.
  CHECK(token_accuracy({{6, 7}}, {{6, 7, 8, 9}}) == 0.5);
  CHECK(token_accuracy({{6, 7, 8, 9, 1, 1, 1, 1}}, {{6, 7, 8, 9}}) == 0.5);
}

TEST_CASE("oracle outputs score perfectly; a random model scores low") {
  task::TaskSpec spec;
  spec.train_size = 50;
  spec.valid_size = 20;
  spec.test_size = 200;
  const task::Corpus corpus = task::generate_corpus(spec);
  const train::EvalResult oracle = train::evaluate_outputs(references(corpus.test), corpus.test);
  CHECK(oracle.bleu == doctest::Approx(100.0));
  CHECK(oracle.seq_exact_match == 1.0);
  CHECK(oracle.token_accuracy == 1.0);

  ModelConfig mc = ModelConfig::preset("student", spec.vocab_size, spec.longest_sequence());
  const auto random_student = init_params<float>(mc);
  const train::EvalResult r = train::evaluate(random_student, corpus.test, spec);
  CHECK(r.bleu < 15.0);
  CHECK(train::evaluate(random_student, corpus.test, spec) == r);

  CHECK(teacher_agreement(random_student, random_student, corpus.test,
                          default_max_new(spec)) == doctest::Approx(100.0));
}
