#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "sekd/dist_math.hpp"
#include "sekd/error.hpp"
#include "sekd/trainer.hpp"

using namespace sekd;
using namespace sekd::train;

namespace {

task::Corpus small_corpus() {
  task::TaskSpec s;
  s.train_size = 256;
  s.valid_size = 24;
  s.test_size = 24;
  return task::generate_corpus(s);
}

ModelConfig small_model(std::uint64_t seed) {
  ModelConfig c{128, 16, 1, 2, 32, 36, seed};
  return c;
}

TrainConfig quick(CheckpointPolicy policy) {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 32;
  t.lr = 3e-3;
  t.eval_every = 5;
  t.checkpoint_policy = policy;
  return t;
}

const task::Corpus &corpus() {
  static const task::Corpus c = small_corpus();
  return c;
}

const ModelParams<float> &teacher() {
  static const ModelParams<float> t = [] {
    TrainConfig tc = quick(CheckpointPolicy::best_on_valid);
    tc.epochs = 3;
    return train_sft(small_model(9), corpus(), tc).params;
  }();
  return t;
}

double epoch_mean(const RunMetrics &m, int epoch) {
  double sum = 0;
  int n = 0;
  for (const auto &s : m.steps) {
    if (s.epoch == epoch) {
      sum += s.hard_fraction;
      ++n;
    }
  }
  return sum / n;
}

} // namespace

TEST_CASE("SFT training is deterministic and reduces the loss") {
  const auto a = train_sft(small_model(0), corpus(), quick(CheckpointPolicy::final));
  const auto b = train_sft(small_model(0), corpus(), quick(CheckpointPolicy::final));
  CHECK(a.params == b.params);
  CHECK(a.metrics == b.metrics);
  REQUIRE(a.metrics.steps.size() == 16);
  CHECK(a.metrics.steps.back().loss < a.metrics.steps.front().loss);
  for (std::size_t i = 1; i < a.metrics.steps.size(); ++i) {
    CHECK(a.metrics.steps[i].step == a.metrics.steps[i - 1].step + 1);
  }
  const auto other = train_sft(small_model(1), corpus(), quick(CheckpointPolicy::final));
  CHECK(other.params != a.params);
}

TEST_CASE("teacher preset on the default task: loss falls within the first epoch") {
  const task::Corpus full = task::generate_corpus(task::TaskSpec{});
  TrainConfig tc;
  tc.epochs = 1;
  tc.eval_every = 1000;
  const auto r = train_sft(ModelConfig::preset("teacher", 128, full.spec.longest_sequence()),
                           full, tc);
  CHECK(r.metrics.steps.back().loss < r.metrics.steps.front().loss);
}

TEST_CASE("both checkpoint policies return a saved checkpoint") {
  const auto best = train_sft(small_model(0), corpus(), quick(CheckpointPolicy::best_on_valid));
  const auto fin = train_sft(small_model(0), corpus(), quick(CheckpointPolicy::final));
  CHECK(best.saved_steps == fin.saved_steps);
  CHECK(std::find(best.saved_steps.begin(), best.saved_steps.end(), best.selected_step) !=
        best.saved_steps.end());
  CHECK(fin.selected_step == 16);
  CHECK(fin.saved_steps.back() == 16);
  double top = -1;
  for (const auto &e : best.metrics.evals) top = std::max(top, e.valid_bleu);
  for (const auto &e : best.metrics.evals) {
    if (e.step == best.selected_step) CHECK(e.valid_bleu == top);
  }
}

TEST_CASE("forward KD with lambda 0 reproduces SFT bit for bit") {
  const auto sft = train_sft(small_model(4), corpus(), quick(CheckpointPolicy::final));
  kd::DistillConfig dc;
  dc.strategy = kd::Strategy::forward;
  dc.lambda = 0.0;
  const auto kd0 = distill(small_model(4), teacher(), corpus(), quick(CheckpointPolicy::final), dc);
  CHECK(kd0.params == sft.params);
  for (std::size_t i = 0; i < sft.metrics.steps.size(); ++i) {
    CHECK(kd0.metrics.steps[i].loss == sft.metrics.steps[i].loss);
  }
}

TEST_CASE("distillation leaves the teacher untouched and logs consistent components") {
  const ModelParams<float> copy = teacher();
  const auto hash = params_fingerprint(teacher());
  for (kd::Strategy s : {kd::Strategy::forward, kd::Strategy::reverse, kd::Strategy::noevo,
                         kd::Strategy::skew, kd::Strategy::skew_teacher,
                         kd::Strategy::self_evolution}) {
    kd::DistillConfig dc;
    dc.strategy = s;
    INFO(kd::to_string(s));
    const auto r = distill(small_model(2), teacher(), corpus(), quick(CheckpointPolicy::best_on_valid), dc);
    CHECK(params_fingerprint(teacher()) == hash);
    CHECK(r.selected_step == 16);
    for (const auto &st : r.metrics.steps) {
      CHECK(std::isfinite(st.loss));
      const double sum = st.components.sft + st.components.easy + st.components.hard;
      CHECK(std::abs(sum - st.loss) < 1e-9);
      CHECK(st.hard_fraction >= 0.0);
      CHECK(st.hard_fraction <= 1.0);
    }
  }
  CHECK(teacher() == copy);
}

TEST_CASE("self-evolution hard fraction does not grow across training") {
  kd::DistillConfig dc;
  TrainConfig tc = quick(CheckpointPolicy::final);
  tc.epochs = 4;
  const auto r = distill(small_model(3), teacher(), corpus(), tc, dc);
  const double first = epoch_mean(r.metrics, 0);
  const double last = epoch_mean(r.metrics, 3);
  CHECK(last <= first + 0.05);
}

TEST_CASE("metrics CSV layout") {
  const auto r = train_sft(small_model(0), corpus(), quick(CheckpointPolicy::best_on_valid));
  std::istringstream in(r.metrics.to_csv());
  std::string line;
  std::getline(in, line);
  CHECK(line == kMetricsCsvHeader);
  std::size_t steps = 0, evals = 0;
  while (std::getline(in, line)) {
    const auto cols = std::count(line.begin(), line.end(), ',') + 1;
    CHECK(cols == 13);
    if (line.rfind("step,", 0) == 0) ++steps;
    else if (line.rfind("eval,", 0) == 0) ++evals;
    else FAIL("unexpected row " << line);
  }
  CHECK(steps == r.metrics.steps.size());
  CHECK(evals == r.metrics.evals.size());
  CHECK(evals == 4); // steps 5, 10, 15 and the last
}

TEST_CASE("divergence and bad inputs are reported") {
  TrainConfig tc = quick(CheckpointPolicy::final);
  tc.lr = 1e30;
  CHECK_THROWS_AS(train_sft(small_model(0), corpus(), tc), TrainingFailure);

  ModelConfig wrong = small_model(0);
  wrong.vocab_size = 64;
  kd::DistillConfig dc;
  CHECK_THROWS_AS(distill(wrong, teacher(), corpus(), quick(CheckpointPolicy::final), dc),
                  InvalidInput);
  ModelConfig short_model = small_model(0);
  short_model.max_seq_len = 10;
  CHECK_THROWS_AS(train_sft(short_model, corpus(), quick(CheckpointPolicy::final)), InvalidInput);

  TrainConfig bad = quick(CheckpointPolicy::final);
  bad.warmup_ratio = 1.0;
  CHECK_THROWS_AS(train_sft(small_model(0), corpus(), bad), InvalidInput);
  bad = quick(CheckpointPolicy::final);
  bad.epochs = 0;
  CHECK_THROWS_AS(train_sft(small_model(0), corpus(), bad), InvalidInput);
}

TEST_CASE("evaluation is deterministic and reports teacher KL on request") {
  const auto &spec = corpus().spec;
  const auto a = evaluate(teacher(), corpus().test, spec);
  CHECK(a == evaluate(teacher(), corpus().test, spec));
  CHECK_FALSE(a.mean_token_kl_to_teacher.has_value());
  const auto self = evaluate(teacher(), corpus().test, spec, &teacher());
  REQUIRE(self.mean_token_kl_to_teacher.has_value());
  CHECK(std::abs(*self.mean_token_kl_to_teacher) < 1e-9);
  const auto other = evaluate(init_params<float>(small_model(5)), corpus().test, spec, &teacher());
  CHECK(*other.mean_token_kl_to_teacher > 1e-3);
}

// Loss gradients pushed through the model match finite differences of the
// whole forward-and-loss pipeline.
TEST_CASE("end-to-end gradients for every strategy") {
  const ModelConfig c{7, 4, 1, 2, 8, 6, 5};
  ModelParams<double> params = init_params<double>(c);
  {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto *t : params.tensors())
      for (auto &v : t->data) v += n(gen);
  }
  const TokenBatch batch = make_batch({{1, 4, 2, 6, 3}, {1, 5, 2, 3}});
  const std::size_t rows = batch.batch * batch.length;

  kd::TokenLossInput base;
  base.target_ids.assign(rows, 0);
  base.loss_mask.assign(rows, 0);
  base.teacher_probs = DenseMatrix(rows, 7);
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t i = 2; i + 1 < batch.lengths[b]; ++i) {
      const std::size_t r = b * batch.length + i;
      base.loss_mask[r] = 1;
      base.target_ids[r] = batch.token(b, i + 1);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> z(7);
    for (auto &v : z) v = u(gen);
    const auto p = dist::softmax(z);
    std::copy(p.begin(), p.end(), base.teacher_probs.row(r).begin());
  }

  auto loss_of = [&](const ModelParams<double> &p, const kd::DistillConfig &dc,
                     RowMat<double> *grad) {
    const RowMat<double> logits = forward(p, batch);
    kd::TokenLossInput in = base;
    in.student_logits = DenseMatrix(rows, 7);
    std::copy(logits.data(), logits.data() + logits.size(), in.student_logits.data.begin());
    const kd::LossOutput out = kd::distill_loss(in, dc, 3, 10);
    if (grad) {
      *grad = Eigen::Map<const RowMat<double>>(out.grad_logits.data.data(),
                                               static_cast<Eigen::Index>(rows), 7);
    }
    return out.value;
  };

  for (kd::Strategy s : {kd::Strategy::forward, kd::Strategy::reverse, kd::Strategy::noevo,
                         kd::Strategy::skew, kd::Strategy::skew_teacher,
                         kd::Strategy::self_evolution}) {
    kd::DistillConfig dc;
    dc.strategy = s;
    dc.gamma = 0.3;
    INFO(kd::to_string(s));
    RowMat<double> g;
    loss_of(params, dc, &g);
    const ModelParams<double> grads = backward(params, batch, g);
    ModelParams<double> probe = params;
    auto tensors = probe.tensors();
    const auto gt = grads.tensors();
    const double h = 1e-6;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      for (std::size_t k = 0; k < tensors[t]->size(); k += 3) {
        double &v = tensors[t]->data[k];
        const double saved = v;
        v = saved + h;
        const double up = loss_of(probe, dc, nullptr);
        v = saved - h;
        const double down = loss_of(probe, dc, nullptr);
        v = saved;
        const double numeric = (up - down) / (2 * h);
        const double analytic = gt[t]->data[k];
        const double rel =
            std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
        CHECK(rel < 1e-3);
      }
    }
  }
}
