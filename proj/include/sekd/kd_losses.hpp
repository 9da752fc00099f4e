#pragma once

// Token-level distillation objectives.
//
// Every objective averages over the N response positions selected by the loss
// mask; prompt and padding rows contribute zero loss and zero gradient.
// Reductions run in ascending row order so results are bit-reproducible.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sekd/dense.hpp"

namespace sekd::kd {

enum class Strategy { forward, reverse, noevo, skew, skew_teacher, self_evolution };
enum class Selection { threshold, topk };
enum class BetaSchedule { constant, linear };

std::string_view to_string(Strategy s);
std::string_view to_string(Selection s);
std::string_view to_string(BetaSchedule s);
Strategy parse_strategy(std::string_view name);
Selection parse_selection(std::string_view name);
BetaSchedule parse_beta_schedule(std::string_view name);

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct DistillConfig {
  Strategy strategy = Strategy::self_evolution;
  double lambda = 0.5;
  double beta = 0.5;
  double skew_teacher_beta = 0.9; ///< proxy weight of the skew_teacher objective
  double gamma = 0.4; ///< +inf allowed
  Selection selection = Selection::threshold;
  double k_percent = 20.0;
  double beta_begin = 0.5;
  double beta_end = 0.0;
  BetaSchedule beta_schedule = BetaSchedule::constant;

  /// Throws InvalidInput naming the first offending field.
  void validate() const;
};

struct TokenLossInput {
  DenseMatrix student_logits;  ///< rows x V
  DenseMatrix teacher_probs;   ///< rows x V; may be empty for sft_loss
  std::vector<int> target_ids; ///< one per row
  std::vector<std::uint8_t> loss_mask;

  std::size_t rows() const { return target_ids.size(); }
  std::size_t vocab() const { return student_logits.cols; }
  std::size_t response_count() const;

  /// Throws InvalidInput on shape mismatch, out-of-range ids, an all-false
  /// mask, or (when `needs_teacher`) invalid teacher rows.
  void validate(bool needs_teacher) const;
};

/// Weighted parts of the loss; value == sft + easy + hard.
/// `easy` collects KL terms against the plain student distribution, `hard`
/// collects KL terms against a proxy mixture.
struct LossComponents {
  double sft = 0.0;
  double easy = 0.0;
  double hard = 0.0;
  bool operator==(const LossComponents &) const = default;
};

struct LossDiagnostics {
  double hard_fraction = 0.0;
  double mean_difficulty = 0.0;
  std::vector<double> per_token_difficulty; ///< response rows only, in row order
  std::vector<std::uint8_t> hard_mask;      ///< response rows only
  double effective_beta = 1.0;
  LossComponents components;
};

struct LossOutput {
  double value = 0.0;
  DenseMatrix grad_logits;
  LossDiagnostics diagnostics;
};

LossOutput sft_loss(const TokenLossInput &input);
LossOutput forward_kd_loss(const TokenLossInput &input, const DistillConfig &config);
LossOutput reverse_kd_loss(const TokenLossInput &input, const DistillConfig &config);
LossOutput noevo_loss(const TokenLossInput &input, const DistillConfig &config);
LossOutput skew_kd_loss(const TokenLossInput &input, const DistillConfig &config);
LossOutput skew_teacher_loss(const TokenLossInput &input, const DistillConfig &config);
LossOutput self_evolution_loss(const TokenLossInput &input, const DistillConfig &config,
                               long step, long total_steps);

/// Dispatches on config.strategy.
LossOutput distill_loss(const TokenLossInput &input, const DistillConfig &config,
                        long step, long total_steps);

/// Row i = (1 - lambda) * onehot(t_i) + lambda * p_i, for every row.
DenseMatrix target_distribution(const TokenLossInput &input, double lambda);

/// d_i = KL(targets_i || student_i) per row.
std::vector<double> token_difficulty(const DenseMatrix &targets,
                                     const DenseMatrix &student_probs);

/// Threshold mode: d_i > gamma. Top-K mode: the ceil(K/100 * N) largest,
/// ties to the lower index.
std::vector<std::uint8_t> classify_tokens(const std::vector<double> &difficulties,
                                          const DistillConfig &config);

double beta_schedule(long step, long total_steps, const DistillConfig &config);

} // namespace sekd::kd
