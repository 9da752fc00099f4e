#include "sekd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "sekd/adam.hpp"
#include "sekd/dist_math.hpp"
#include "sekd/error.hpp"
#include "sekd/eval_metrics.hpp"
#include "sekd/rng.hpp"

namespace sekd::train {
namespace {

constexpr std::size_t kInferenceBatch = 64;

/// Teacher-forced logits at the response-predicting positions of every
/// example in a split, stored in single precision.
class TeacherCache {
public:
  TeacherCache(const ModelParams<float> &teacher, const task::Split &split) {
    const auto vocab = static_cast<std::size_t>(teacher.config.vocab_size);
    vocab_ = vocab;
    offsets_.resize(split.examples.size());
    std::size_t total = 0;
    for (std::size_t e = 0; e < split.examples.size(); ++e) {
      offsets_[e] = total;
      total += split.examples[e].target.size() + 1;
    }
    logits_.resize(total * vocab);

    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < split.examples.size(); start += kInferenceBatch) {
      const std::size_t stop = std::min(split.examples.size(), start + kInferenceBatch);
      idx.resize(stop - start);
      std::iota(idx.begin(), idx.end(), start);
      const TokenBatch batch = task::make_training_batch(split, idx);
      const RowMat<float> logits = forward(teacher, batch);
      for (std::size_t b = 0; b < batch.batch; ++b) {
        const task::Example &ex = split.examples[idx[b]];
        const std::size_t prompt_len = ex.source.size() + 3;
        for (std::size_t j = 0; j <= ex.target.size(); ++j) {
          const auto r = static_cast<Eigen::Index>(b * batch.length + prompt_len - 1 + j);
          std::copy_n(logits.row(r).data(), vocab,
                      logits_.begin() +
                          static_cast<std::ptrdiff_t>((offsets_[idx[b]] + j) * vocab));
        }
      }
    }
  }

  /// Teacher distribution for response token j (0-based, EOS last) of example e.
  void probs(std::size_t example, std::size_t j, std::span<double> out) const {
    const float *src = logits_.data() + (offsets_[example] + j) * vocab_;
    std::vector<double> z(src, src + vocab_);
    dist::softmax_into(z, out);
  }

private:
  std::size_t vocab_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<float> logits_;
};

/// Loss rows for a batch: row b * L + i predicts token i + 1.
kd::TokenLossInput loss_input(const TokenBatch &batch, const RowMat<float> &logits,
                              const task::Split &split, const TeacherCache *teacher) {
  const std::size_t rows = batch.batch * batch.length;
  const auto vocab = static_cast<std::size_t>(logits.cols());
  kd::TokenLossInput in;
  in.student_logits = DenseMatrix(rows, vocab);
  in.target_ids.assign(rows, 0);
  in.loss_mask.assign(rows, 0);
  if (teacher != nullptr) {
    in.teacher_probs = DenseMatrix(rows, vocab);
  }
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const task::Example &ex = split.examples[batch.example_index[b]];
    const std::size_t prompt_len = ex.source.size() + 3;
    for (std::size_t i = 0; i + 1 < batch.length; ++i) {
      const std::size_t r = b * batch.length + i;
      in.target_ids[r] = batch.token(b, i + 1);
      if (!batch.response(b, i + 1)) {
        continue;
      }
      in.loss_mask[r] = 1;
      const float *src = logits.row(static_cast<Eigen::Index>(r)).data();
      std::copy_n(src, vocab, in.student_logits.row(r).begin());
      if (teacher != nullptr) {
        teacher->probs(batch.example_index[b], i + 1 - prompt_len, in.teacher_probs.row(r));
      }
    }
  }
  return in;
}

using LossFn = std::function<kd::LossOutput(const kd::TokenLossInput &, long step, long total)>;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

TrainResult run_training(const ModelConfig &model_config, const task::Corpus &corpus,
                         const TrainConfig &cfg, const TeacherCache *teacher,
                         const LossFn &loss_fn, CheckpointPolicy policy, const char *label) {
  cfg.validate();
  model_config.validate();
  if (model_config.max_seq_len < corpus.spec.longest_sequence()) {
    throw InvalidInput("max_seq_len " + std::to_string(model_config.max_seq_len) +
                       " is shorter than the longest task sequence " +
                       std::to_string(corpus.spec.longest_sequence()));
  }
  if (model_config.vocab_size != corpus.spec.vocab_size) {
    throw InvalidInput("model vocab_size does not match the task vocabulary");
  }
  const task::Split &train = corpus.train;
  const long per_epoch =
      static_cast<long>((train.examples.size() + cfg.batch_size - 1) / cfg.batch_size);
  const long total_steps = per_epoch * cfg.epochs;
  const std::size_t max_new = eval::default_max_new(corpus.spec);

  TrainResult result;
  result.params = init_params<float>(model_config);
  OptimizerState<float> opt = OptimizerState<float>::zeros(model_config);
  std::optional<ModelParams<float>> best;
  double best_bleu = -1.0;

  auto run_eval = [&](long step) {
    const eval::Corpus hyps = eval::generate(result.params, corpus.valid, max_new);
    const eval::Corpus refs = eval::references(corpus.valid);
    EvalRecord rec{step, eval::corpus_bleu(hyps, refs), eval::token_accuracy(hyps, refs)};
    result.metrics.evals.push_back(rec);
    result.saved_steps.push_back(step);
    if (policy == CheckpointPolicy::best_on_valid && rec.valid_bleu > best_bleu) {
      best_bleu = rec.valid_bleu;
      best = result.params;
      result.selected_step = step;
    }
    if (cfg.verbose) {
      std::fprintf(stderr, "[%s] step %ld/%ld valid_bleu=%.3f token_acc=%.4f\n", label, step,
                   total_steps, rec.valid_bleu, rec.valid_token_accuracy);
    }
  };

  long step = 0;
  ForwardCache<float> fwd;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    task::BatchIterator it(train, cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch));
    TokenBatch batch;
    while (it.next(batch)) {
      const RowMat<float> logits = forward(result.params, batch, &fwd);
      const kd::TokenLossInput in = loss_input(batch, logits, train, teacher);
      const kd::LossOutput loss = loss_fn(in, step, total_steps);
      ++step;
      if (!std::isfinite(loss.value)) {
        throw TrainingFailure(std::string(label) + ": non-finite loss at step " +
                                  std::to_string(step),
                              step);
      }
      const RowMat<float> grad_logits =
          Eigen::Map<const RowMat<double>>(loss.grad_logits.data.data(),
                                           static_cast<Eigen::Index>(loss.grad_logits.rows),
                                           static_cast<Eigen::Index>(loss.grad_logits.cols))
              .cast<float>();
      const ModelParams<float> grads = backward(result.params, fwd, grad_logits);
      const double lr = warmup_lr(cfg.lr, step - 1, total_steps, cfg.warmup_ratio, cfg.lr_decay);
      adam_step(result.params, grads, opt, lr);

      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.loss = loss.value;
      rec.components = loss.diagnostics.components;
      rec.hard_fraction = loss.diagnostics.hard_fraction;
      rec.mean_difficulty = loss.diagnostics.mean_difficulty;
      rec.beta = loss.diagnostics.effective_beta;
      rec.lr = lr;
      result.metrics.steps.push_back(rec);

      if (step % cfg.eval_every == 0 || step == total_steps) {
        run_eval(step);
      }
    }
    if (cfg.verbose) {
      std::fprintf(stderr, "[%s] epoch %d done, last loss %.5f\n", label, epoch + 1,
                   result.metrics.steps.back().loss);
    }
  }

  if (policy == CheckpointPolicy::best_on_valid && best.has_value()) {
    result.params = std::move(*best);
  } else {
    result.selected_step = step;
  }
  return result;
}

} // namespace

std::string_view to_string(CheckpointPolicy p) {
  return p == CheckpointPolicy::best_on_valid ? "best_on_valid" : "final";
}

CheckpointPolicy parse_checkpoint_policy(std::string_view name) {
  if (name == "best_on_valid") {
    return CheckpointPolicy::best_on_valid;
  }
  if (name == "final") {
    return CheckpointPolicy::final;
  }
  throw InvalidInput("checkpoint_policy: unknown value '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (epochs <= 0) {
    throw InvalidInput("epochs must be positive");
  }
  if (batch_size == 0) {
    throw InvalidInput("batch_size must be positive");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw InvalidInput("lr must be positive");
  }
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw InvalidInput("warmup_ratio must lie in [0, 1)");
  }
  if (eval_every <= 0) {
    throw InvalidInput("eval_every must be positive");
  }
}

std::string RunMetrics::to_csv() const {
  std::ostringstream os;
  os << kMetricsCsvHeader << "\n";
  for (const StepRecord &s : steps) {
    os << "step," << s.step << ',' << s.epoch << ',' << format_double(s.loss) << ','
       << format_double(s.components.sft) << ',' << format_double(s.components.easy) << ','
       << format_double(s.components.hard) << ',' << format_double(s.hard_fraction) << ','
       << format_double(s.mean_difficulty) << ',' << format_double(s.beta) << ','
       << format_double(s.lr) << ",,\n";
  }
  for (const EvalRecord &e : evals) {
    os << "eval," << e.step << ",,,,,,,,,," << format_double(e.valid_bleu) << ','
       << format_double(e.valid_token_accuracy) << "\n";
  }
  return os.str();
}

TrainResult train_sft(const ModelConfig &model_config, const task::Corpus &corpus,
                      const TrainConfig &train_config) {
  const LossFn loss = [](const kd::TokenLossInput &in, long, long) { return kd::sft_loss(in); };
  return run_training(model_config, corpus, train_config, nullptr, loss,
                      train_config.checkpoint_policy, "sft");
}

TrainResult distill(const ModelConfig &student_config, const ModelParams<float> &teacher,
                    const task::Corpus &corpus, const TrainConfig &train_config,
                    const kd::DistillConfig &distill_config) {
  distill_config.validate();
  if (teacher.config.vocab_size != student_config.vocab_size) {
    throw InvalidInput("teacher and student vocabularies differ");
  }
  const TeacherCache cache(teacher, corpus.train);
  const LossFn loss = [&](const kd::TokenLossInput &in, long step, long total) {
    return kd::distill_loss(in, distill_config, step, total);
  };
  const std::string label(kd::to_string(distill_config.strategy));
  return run_training(student_config, corpus, train_config, &cache, loss,
                      CheckpointPolicy::final, label.c_str());
}

EvalResult evaluate_outputs(const std::vector<std::vector<int>> &hyps,
                            const task::Split &split) {
  const eval::Corpus refs = eval::references(split);
  EvalResult r;
  r.bleu = eval::corpus_bleu(hyps, refs);
  r.token_accuracy = eval::token_accuracy(hyps, refs);
  r.seq_exact_match = eval::seq_exact_match(hyps, refs);
  return r;
}

EvalResult evaluate(const ModelParams<float> &params, const task::Split &split,
                    const task::TaskSpec &spec, const ModelParams<float> *teacher) {
  EvalResult r =
      evaluate_outputs(eval::generate(params, split, eval::default_max_new(spec)), split);
  if (teacher != nullptr) {
    if (teacher->config.vocab_size != params.config.vocab_size) {
      throw InvalidInput("teacher and student vocabularies differ");
    }
    const TeacherCache cache(*teacher, split);
    const auto vocab = static_cast<std::size_t>(params.config.vocab_size);
    std::vector<double> p(vocab);
    std::vector<double> q(vocab);
    std::vector<double> z(vocab);
    double sum = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < split.examples.size(); start += kInferenceBatch) {
      const std::size_t stop = std::min(split.examples.size(), start + kInferenceBatch);
      idx.resize(stop - start);
      std::iota(idx.begin(), idx.end(), start);
      const TokenBatch batch = task::make_training_batch(split, idx);
      const RowMat<float> logits = forward(params, batch);
      for (std::size_t b = 0; b < batch.batch; ++b) {
        const task::Example &ex = split.examples[idx[b]];
        const std::size_t prompt_len = ex.source.size() + 3;
        for (std::size_t j = 0; j <= ex.target.size(); ++j) {
          const auto row = static_cast<Eigen::Index>(b * batch.length + prompt_len - 1 + j);
          std::copy_n(logits.row(row).data(), vocab, z.begin());
          dist::softmax_into(z, q);
          cache.probs(idx[b], j, p);
          sum += dist::kl_divergence(p, q);
          ++count;
        }
      }
    }
    r.mean_token_kl_to_teacher = sum / static_cast<double>(count);
  }
  return r;
}

DifficultyByFrequency difficulty_by_frequency(const ModelParams<float> &student,
                                              const ModelParams<float> &teacher,
                                              const task::Corpus &corpus,
                                              const task::Split &split, double lambda) {
  const auto vocab = static_cast<std::size_t>(corpus.spec.vocab_size);
  std::vector<std::size_t> freq(vocab, 0);
  for (const auto &ex : corpus.train.examples) {
    for (int t : ex.target) {
      freq[static_cast<std::size_t>(t)] += 1;
    }
  }
  std::vector<int> content(static_cast<std::size_t>(corpus.spec.content_count()));
  std::iota(content.begin(), content.end(), task::kFirstContent);
  std::stable_sort(content.begin(), content.end(), [&](int a, int b) {
    return freq[static_cast<std::size_t>(a)] < freq[static_cast<std::size_t>(b)];
  });
  std::vector<std::uint8_t> rare(vocab, 0);
  for (std::size_t i = 0; i < content.size() / 4; ++i) {
    rare[static_cast<std::size_t>(content[i])] = 1;
  }

  const TeacherCache cache(teacher, split);
  std::vector<double> p(vocab);
  std::vector<double> q(vocab);
  std::vector<double> z(vocab);
  std::vector<double> target(vocab);
  DifficultyByFrequency out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.examples.size(); start += kInferenceBatch) {
    const std::size_t stop = std::min(split.examples.size(), start + kInferenceBatch);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const TokenBatch batch = task::make_training_batch(split, idx);
    const RowMat<float> logits = forward(student, batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      const task::Example &ex = split.examples[idx[b]];
      const std::size_t prompt_len = ex.source.size() + 3;
      for (std::size_t j = 0; j < ex.target.size(); ++j) {
        const auto row = static_cast<Eigen::Index>(b * batch.length + prompt_len - 1 + j);
        std::copy_n(logits.row(row).data(), vocab, z.begin());
        dist::softmax_into(z, q);
        cache.probs(idx[b], j, p);
        const auto t = static_cast<std::size_t>(ex.target[j]);
        for (std::size_t k = 0; k < vocab; ++k) {
          target[k] = (1.0 - lambda) * (k == t ? 1.0 : 0.0) + lambda * p[k];
        }
        const double d = dist::kl_divergence(target, q);
        if (rare[t]) {
          out.rare += d;
          ++out.rare_count;
        } else {
          out.frequent += d;
          ++out.frequent_count;
        }
      }
    }
  }
  out.rare /= static_cast<double>(std::max<std::size_t>(out.rare_count, 1));
  out.frequent /= static_cast<double>(std::max<std::size_t>(out.frequent_count, 1));
  return out;
}

} // namespace sekd::train
