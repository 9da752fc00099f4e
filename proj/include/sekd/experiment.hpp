#pragma once

// Config-driven experiment harness behind the `sekd` command line tool.
//
// Output layout under the run directory:
//   data/{train,valid,test}.txt
//   teacher/seed_<s>/{checkpoint/, metrics.csv}
//   students/<strategy>/seed_<s>/{checkpoint/, metrics.csv}
//   summary.json, summary.csv            (evaluate)
//   sweep/<param>=<value>/seed_<s>/...   (sweep cells)
//   sweep.csv, sweep.json                (sweep)

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sekd/kd_losses.hpp"
#include "sekd/seq_model.hpp"
#include "sekd/synth_task.hpp"
#include "sekd/trainer.hpp"

namespace sekd::exp {

/// Strategy name for the student trained with plain SFT.
inline constexpr const char *kSftStrategy = "sft";
inline constexpr const char *kWorkersEnv = "SEKD_SWEEP_WORKERS";

/// A model is either a named preset or a preset with field overrides.
struct ModelSpec {
  std::string preset;
  nlohmann::json overrides = nlohmann::json::object();

  ModelConfig resolve(const task::TaskSpec &task, std::uint64_t seed) const;
};

struct SweepAxis {
  /// One of gamma, k_percent, beta, lambda, strategy, beta_range.
  std::string param;
  std::vector<nlohmann::json> values;

  std::string label(std::size_t i) const;
};

struct ExperimentConfig {
  std::string name = "default";
  task::TaskSpec task;
  ModelSpec teacher{"teacher"};
  ModelSpec student{"student"};
  train::TrainConfig train;
  kd::DistillConfig distill;
  std::vector<std::string> strategies{kSftStrategy, "forward",      "reverse",       "noevo",
                                      "skew",       "skew_teacher", "self_evolution"};
  std::optional<SweepAxis> sweep;
  std::vector<std::uint64_t> seeds{0};
  /// Existing run directory whose teacher checkpoints are reused.
  std::string teacher_dir;
  /// Directory with corpus files written by gen-data; empty regenerates in memory.
  std::string data_dir;

  nlohmann::json to_json() const;
  /// FNV-1a over the canonical JSON form.
  std::uint64_t fingerprint() const;
};

/// Parses and validates; unknown keys and out-of-range values throw
/// InvalidInput naming the offending field.
ExperimentConfig parse_config(const nlohmann::json &j);
ExperimentConfig load_config(const std::filesystem::path &path);

/// Applies one sweep value to a distillation config and returns the strategy
/// to run (which may be "sft").
std::string apply_sweep_value(const SweepAxis &axis, std::size_t index,
                              kd::DistillConfig &distill, const std::string &base_strategy);

struct StudentScores {
  std::string model; ///< "teacher" or a strategy name
  std::string sweep_value;
  std::uint64_t seed = 0;
  double bleu = 0.0;
  double token_accuracy = 0.0;
  double seq_exact_match = 0.0;
  double teacher_agreement = 0.0;
  double final_hard_fraction = 0.0;
  std::uint64_t params_fingerprint = 0;
};

struct SweepResult {
  std::vector<StudentScores> cells;   ///< value-major, then seed order
  std::vector<StudentScores> medians; ///< one per sweep value
};

/// Median of the per-seed rows for each sweep value (mean of the two middle
/// values for an even count).
std::vector<StudentScores> aggregate_medians(const std::vector<StudentScores> &cells,
                                             const SweepAxis &axis);

void cmd_gen_data(const ExperimentConfig &config, const std::filesystem::path &out);
void cmd_train_teacher(const ExperimentConfig &config, const std::filesystem::path &out);
void cmd_distill(const ExperimentConfig &config, const std::filesystem::path &out);
std::vector<StudentScores> cmd_evaluate(const ExperimentConfig &config,
                                        const std::filesystem::path &out);
SweepResult cmd_sweep(const ExperimentConfig &config, const std::filesystem::path &out);

/// Sweep worker count from the environment, default 1.
unsigned sweep_workers();

std::string scores_csv(const std::vector<StudentScores> &rows, const std::string &kind);
inline constexpr const char *kScoresCsvHeader =
    "kind,model,sweep_value,seed,bleu,token_accuracy,seq_exact_match,teacher_agreement,"
    "final_hard_fraction,params_fingerprint";

} // namespace sekd::exp
