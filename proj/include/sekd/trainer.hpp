#pragma once

// Training entry points: supervised fine-tuning and offline distillation from
// a frozen teacher. Models train in single precision; all loss math runs in
// double precision.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sekd/adam.hpp"
#include "sekd/kd_losses.hpp"
#include "sekd/seq_model.hpp"
#include "sekd/synth_task.hpp"

namespace sekd::train {

enum class CheckpointPolicy { best_on_valid, final };

std::string_view to_string(CheckpointPolicy p);
CheckpointPolicy parse_checkpoint_policy(std::string_view name);

struct TrainConfig {
  int epochs = 3;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double warmup_ratio = 0.03;
  LrDecay lr_decay = LrDecay::none;
  long eval_every = 150;
  std::uint64_t seed = 0;
  CheckpointPolicy checkpoint_policy = CheckpointPolicy::best_on_valid;
  bool verbose = false;

  void validate() const;
};

struct StepRecord {
  long step = 0; ///< 1-based optimizer step
  int epoch = 0;
  double loss = 0.0;
  kd::LossComponents components;
  double hard_fraction = 0.0;
  double mean_difficulty = 0.0;
  double beta = 1.0;
  double lr = 0.0;
  bool operator==(const StepRecord &) const = default;
};

struct EvalRecord {
  long step = 0;
  double valid_bleu = 0.0;
  double valid_token_accuracy = 0.0;
  bool operator==(const EvalRecord &) const = default;
};

struct RunMetrics {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;

  /// One row per step, then one row per evaluation (kind column "step"/"eval").
  std::string to_csv() const;
  bool operator==(const RunMetrics &) const = default;
};

inline constexpr const char *kMetricsCsvHeader =
    "kind,step,epoch,loss,sft,easy,hard,hard_fraction,mean_difficulty,beta,lr,valid_bleu,"
    "valid_token_accuracy";

struct TrainResult {
  ModelParams<float> params;
  RunMetrics metrics;
  long selected_step = 0;        ///< step of the returned checkpoint
  std::vector<long> saved_steps; ///< steps at which checkpoints were taken
};

struct EvalResult {
  double bleu = 0.0;
  double token_accuracy = 0.0;
  double seq_exact_match = 0.0;
  std::optional<double> mean_token_kl_to_teacher;
  bool operator==(const EvalResult &) const = default;
};

TrainResult train_sft(const ModelConfig &model_config, const task::Corpus &corpus,
                      const TrainConfig &train_config);

/// Student distillation against a frozen teacher using teacher-forced
/// probabilities on the ground-truth sequences. Returns the final checkpoint.
TrainResult distill(const ModelConfig &student_config, const ModelParams<float> &teacher,
                    const task::Corpus &corpus, const TrainConfig &train_config,
                    const kd::DistillConfig &distill_config);

/// Greedy-decoding metrics on a split; with a teacher, also the mean
/// teacher-forced KL(teacher || student) over response positions.
EvalResult evaluate(const ModelParams<float> &params, const task::Split &split,
                    const task::TaskSpec &spec, const ModelParams<float> *teacher = nullptr);

/// Metrics of arbitrary generations against the split's references.
EvalResult evaluate_outputs(const std::vector<std::vector<int>> &hyps,
                            const task::Split &split);

/// Mean teacher-student difficulty KL(y~ || q) split by token frequency:
/// `rare` covers target tokens in the bottom frequency quartile of the
/// training targets, `frequent` the rest.
struct DifficultyByFrequency {
  double rare = 0.0;
  double frequent = 0.0;
  std::size_t rare_count = 0;
  std::size_t frequent_count = 0;
};

DifficultyByFrequency difficulty_by_frequency(const ModelParams<float> &student,
                                              const ModelParams<float> &teacher,
                                              const task::Corpus &corpus,
                                              const task::Split &split, double lambda);

} // namespace sekd::train
