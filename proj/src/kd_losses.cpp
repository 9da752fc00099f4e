#include "sekd/kd_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sekd/dist_math.hpp"
#include "sekd/error.hpp"

namespace sekd::kd {
namespace {

std::string field_error(const char *field, const char *rule, double got) {
  std::ostringstream os;
  os << field << " " << rule << " (got " << got << ")";
  return os.str();
}

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

/// -log q(t) and softmax of a logit row.
double nll_and_probs(std::span<const double> z, int target, std::span<double> q) {
  const double lse = dist::softmax_into(z, q);
  return lse - z[static_cast<std::size_t>(target)];
}

/// Mixed objective (1 - lambda) * sft + lambda * kd where the kd term per row
/// is produced by `kd_term(row) -> KlWithGrad`. Shared by forward, reverse and
/// skew-teacher so that lambda = 0 reproduces sft_loss bit for bit.
template <typename KdTerm>
LossOutput interpolated_loss(const TokenLossInput &input, double lambda, bool kd_via_proxy,
                             KdTerm &&kd_term) {
  const std::size_t rows = input.rows();
  const std::size_t vocab = input.vocab();
  const double inv_n = 1.0 / static_cast<double>(input.response_count());

  LossOutput out;
  out.grad_logits = DenseMatrix(rows, vocab);
  std::vector<double> q(vocab);
  double sft_sum = 0.0;
  double kd_sum = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!input.loss_mask[i]) {
      continue;
    }
    const auto z = input.student_logits.row(i);
    const int t = input.target_ids[i];
    sft_sum += nll_and_probs(z, t, q);
    const dist::KlWithGrad kd = kd_term(i);
    kd_sum += kd.value;
    auto g = out.grad_logits.row(i);
    for (std::size_t k = 0; k < vocab; ++k) {
      const double y = (static_cast<int>(k) == t) ? 1.0 : 0.0;
      g[k] = ((1.0 - lambda) * (q[k] - y) + lambda * kd.grad[k]) * inv_n;
    }
  }
  out.diagnostics.components.sft = (1.0 - lambda) * (sft_sum * inv_n);
  const double kd_part = lambda * (kd_sum * inv_n);
  if (kd_via_proxy) {
    out.diagnostics.components.hard = kd_part;
  } else {
    out.diagnostics.components.easy = kd_part;
  }
  out.value = out.diagnostics.components.sft + kd_part;
  return out;
}

/// Difficulties of the response rows against the mixed target, for diagnostics.
void fill_difficulty(const TokenLossInput &input, double lambda, LossDiagnostics &diag) {
  const DenseMatrix targets = target_distribution(input, lambda);
  std::vector<double> q(input.vocab());
  diag.per_token_difficulty.clear();
  double sum = 0.0;
  for (std::size_t i = 0; i < input.rows(); ++i) {
    if (!input.loss_mask[i]) {
      continue;
    }
    dist::softmax_into(input.student_logits.row(i), q);
    const double d = dist::kl_divergence(targets.row(i), q);
    diag.per_token_difficulty.push_back(d);
    sum += d;
  }
  diag.mean_difficulty = sum / static_cast<double>(diag.per_token_difficulty.size());
  diag.hard_mask.assign(diag.per_token_difficulty.size(), 0);
}

enum class HardSet { by_config, none, all };

/// Stage 1 (difficulty, classification) and stage 2 (easy / proxy losses).
LossOutput token_adaptive_loss(const TokenLossInput &input, const DistillConfig &config,
                               double beta, HardSet hard_set) {
  input.validate(true);
  const std::size_t rows = input.rows();
  const std::size_t vocab = input.vocab();
  const std::size_t n = input.response_count();
  const double inv_n = 1.0 / static_cast<double>(n);

  const DenseMatrix targets = target_distribution(input, config.lambda);

  LossOutput out;
  LossDiagnostics &diag = out.diagnostics;
  diag.effective_beta = beta;
  std::vector<double> q(vocab);
  std::vector<std::size_t> response_rows;
  response_rows.reserve(n);
  double difficulty_sum = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!input.loss_mask[i]) {
      continue;
    }
    response_rows.push_back(i);
    dist::softmax_into(input.student_logits.row(i), q);
    const double d = dist::kl_divergence(targets.row(i), q);
    diag.per_token_difficulty.push_back(d);
    difficulty_sum += d;
  }
  diag.mean_difficulty = difficulty_sum * inv_n;

  switch (hard_set) {
  case HardSet::by_config:
    diag.hard_mask = classify_tokens(diag.per_token_difficulty, config);
    break;
  case HardSet::none:
    diag.hard_mask.assign(n, 0);
    break;
  case HardSet::all:
    diag.hard_mask.assign(n, 1);
    break;
  }

  out.grad_logits = DenseMatrix(rows, vocab);
  double total = 0.0;
  double easy_sum = 0.0;
  double hard_sum = 0.0;
  std::size_t hard_count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = response_rows[r];
    const bool hard = diag.hard_mask[r] != 0;
    const dist::KlWithGrad term = dist::kl_grad_wrt_student_logits(
        targets.row(i), input.student_logits.row(i), hard ? beta : 1.0);
    total += term.value;
    if (hard) {
      hard_sum += term.value;
      ++hard_count;
    } else {
      easy_sum += term.value;
    }
    auto g = out.grad_logits.row(i);
    for (std::size_t k = 0; k < vocab; ++k) {
      g[k] = term.grad[k] * inv_n;
    }
  }
  out.value = total * inv_n;
  diag.components.easy = easy_sum * inv_n;
  diag.components.hard = hard_sum * inv_n;
  diag.hard_fraction = static_cast<double>(hard_count) * inv_n;
  return out;
}

} // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
  case Strategy::forward:
    return "forward";
  case Strategy::reverse:
    return "reverse";
  case Strategy::noevo:
    return "noevo";
  case Strategy::skew:
    return "skew";
  case Strategy::skew_teacher:
    return "skew_teacher";
  case Strategy::self_evolution:
    return "self_evolution";
  }
  return "?";
}

std::string_view to_string(Selection s) {
  return s == Selection::threshold ? "threshold" : "topk";
}

std::string_view to_string(BetaSchedule s) {
  return s == BetaSchedule::constant ? "static" : "linear";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::forward, Strategy::reverse, Strategy::noevo, Strategy::skew,
                     Strategy::skew_teacher, Strategy::self_evolution}) {
    if (to_string(s) == name) {
      return s;
    }
  }
  throw InvalidInput("strategy: unknown value '" + std::string(name) + "'");
}

Selection parse_selection(std::string_view name) {
  if (name == "threshold") {
    return Selection::threshold;
  }
  if (name == "topk") {
    return Selection::topk;
  }
  throw InvalidInput("selection: unknown value '" + std::string(name) + "'");
}

BetaSchedule parse_beta_schedule(std::string_view name) {
  if (name == "static") {
    return BetaSchedule::constant;
  }
  if (name == "linear") {
    return BetaSchedule::linear;
  }
  throw InvalidInput("beta_schedule: unknown value '" + std::string(name) + "'");
}

void DistillConfig::validate() const {
  if (!in_unit_interval(lambda)) {
    throw InvalidInput(field_error("lambda", "must lie in [0, 1]", lambda));
  }
  if (!in_unit_interval(beta)) {
    throw InvalidInput(field_error("beta", "must lie in [0, 1]", beta));
  }
  if (!in_unit_interval(skew_teacher_beta)) {
    throw InvalidInput(field_error("skew_teacher_beta", "must lie in [0, 1]", skew_teacher_beta));
  }
  if (std::isnan(gamma) || gamma < 0.0) {
    throw InvalidInput(field_error("gamma", "must be >= 0 or inf", gamma));
  }
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw InvalidInput(field_error("k_percent", "must lie in (0, 100]", k_percent));
  }
  if (!in_unit_interval(beta_begin)) {
    throw InvalidInput(field_error("beta_begin", "must lie in [0, 1]", beta_begin));
  }
  if (!in_unit_interval(beta_end)) {
    throw InvalidInput(field_error("beta_end", "must lie in [0, 1]", beta_end));
  }
}

std::size_t TokenLossInput::response_count() const {
  return static_cast<std::size_t>(std::count_if(loss_mask.begin(), loss_mask.end(),
                                                [](std::uint8_t m) { return m != 0; }));
}

void TokenLossInput::validate(bool needs_teacher) const {
  const std::size_t n = rows();
  if (student_logits.rows != n || loss_mask.size() != n) {
    throw InvalidInput("loss input: row counts disagree");
  }
  if (student_logits.cols < 2) {
    throw InvalidInput("loss input: vocabulary must have at least two entries");
  }
  if (needs_teacher &&
      (teacher_probs.rows != n || teacher_probs.cols != student_logits.cols)) {
    throw InvalidInput("loss input: teacher matrix shape mismatch");
  }
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!loss_mask[i]) {
      continue;
    }
    any = true;
    if (target_ids[i] < 0 || static_cast<std::size_t>(target_ids[i]) >= vocab()) {
      throw InvalidInput("loss input: target id out of range");
    }
    if (needs_teacher) {
      dist::validate_distribution(teacher_probs.row(i), "teacher row");
    }
  }
  if (!any) {
    throw InvalidInput("loss input: loss mask selects no response positions");
  }
}

LossOutput sft_loss(const TokenLossInput &input) {
  input.validate(false);
  const std::size_t rows = input.rows();
  const std::size_t vocab = input.vocab();
  const double inv_n = 1.0 / static_cast<double>(input.response_count());

  LossOutput out;
  out.grad_logits = DenseMatrix(rows, vocab);
  std::vector<double> q(vocab);
  double sft_sum = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!input.loss_mask[i]) {
      continue;
    }
    const int t = input.target_ids[i];
    sft_sum += nll_and_probs(input.student_logits.row(i), t, q);
    auto g = out.grad_logits.row(i);
    for (std::size_t k = 0; k < vocab; ++k) {
      const double y = (static_cast<int>(k) == t) ? 1.0 : 0.0;
      g[k] = (q[k] - y) * inv_n;
    }
  }
  out.value = sft_sum * inv_n;
  out.diagnostics.components.sft = out.value;
  return out;
}

LossOutput forward_kd_loss(const TokenLossInput &input, const DistillConfig &config) {
  input.validate(true);
  LossOutput out = interpolated_loss(input, config.lambda, false, [&](std::size_t i) {
    return dist::kl_grad_wrt_student_logits(input.teacher_probs.row(i),
                                            input.student_logits.row(i), 1.0);
  });
  fill_difficulty(input, config.lambda, out.diagnostics);
  return out;
}

LossOutput reverse_kd_loss(const TokenLossInput &input, const DistillConfig &config) {
  input.validate(true);
  LossOutput out = interpolated_loss(input, config.lambda, false, [&](std::size_t i) {
    return dist::reverse_kl_grad_wrt_student_logits(input.teacher_probs.row(i),
                                                    input.student_logits.row(i));
  });
  fill_difficulty(input, config.lambda, out.diagnostics);
  return out;
}

LossOutput skew_teacher_loss(const TokenLossInput &input, const DistillConfig &config) {
  input.validate(true);
  LossOutput out = interpolated_loss(input, config.lambda, true, [&](std::size_t i) {
    return dist::kl_grad_wrt_student_logits(input.teacher_probs.row(i),
                                            input.student_logits.row(i),
                                            config.skew_teacher_beta);
  });
  fill_difficulty(input, config.lambda, out.diagnostics);
  out.diagnostics.effective_beta = config.skew_teacher_beta;
  return out;
}

LossOutput noevo_loss(const TokenLossInput &input, const DistillConfig &config) {
  return token_adaptive_loss(input, config, 1.0, HardSet::none);
}

LossOutput skew_kd_loss(const TokenLossInput &input, const DistillConfig &config) {
  return token_adaptive_loss(input, config, config.beta, HardSet::all);
}

LossOutput self_evolution_loss(const TokenLossInput &input, const DistillConfig &config,
                               long step, long total_steps) {
  const double beta = beta_schedule(step, total_steps, config);
  return token_adaptive_loss(input, config, beta, HardSet::by_config);
}

LossOutput distill_loss(const TokenLossInput &input, const DistillConfig &config, long step,
                        long total_steps) {
  switch (config.strategy) {
  case Strategy::forward:
    return forward_kd_loss(input, config);
  case Strategy::reverse:
    return reverse_kd_loss(input, config);
  case Strategy::noevo:
    return noevo_loss(input, config);
  case Strategy::skew:
    return skew_kd_loss(input, config);
  case Strategy::skew_teacher:
    return skew_teacher_loss(input, config);
  case Strategy::self_evolution:
    return self_evolution_loss(input, config, step, total_steps);
  }
  throw InvalidInput("unknown strategy");
}

DenseMatrix target_distribution(const TokenLossInput &input, double lambda) {
  if (!in_unit_interval(lambda)) {
    throw InvalidInput(field_error("lambda", "must lie in [0, 1]", lambda));
  }
  const std::size_t vocab = input.vocab();
  DenseMatrix out(input.rows(), vocab);
  for (std::size_t i = 0; i < input.rows(); ++i) {
    if (!input.loss_mask[i]) {
      continue;
    }
    const auto p = input.teacher_probs.row(i);
    auto row = out.row(i);
    const auto t = static_cast<std::size_t>(input.target_ids[i]);
    for (std::size_t k = 0; k < vocab; ++k) {
      const double y = (k == t) ? 1.0 : 0.0;
      row[k] = (1.0 - lambda) * y + lambda * p[k];
    }
  }
  return out;
}

std::vector<double> token_difficulty(const DenseMatrix &targets,
                                     const DenseMatrix &student_probs) {
  if (targets.rows != student_probs.rows || targets.cols != student_probs.cols) {
    throw InvalidInput("token_difficulty: shape mismatch");
  }
  std::vector<double> d(targets.rows);
  for (std::size_t i = 0; i < targets.rows; ++i) {
    d[i] = dist::kl_divergence(targets.row(i), student_probs.row(i));
  }
  return d;
}

std::vector<std::uint8_t> classify_tokens(const std::vector<double> &difficulties,
                                          const DistillConfig &config) {
  const std::size_t n = difficulties.size();
  if (n == 0) {
    throw InvalidInput("classify_tokens: no response positions");
  }
  std::vector<std::uint8_t> hard(n, 0);
  if (config.selection == Selection::threshold) {
    for (std::size_t i = 0; i < n; ++i) {
      hard[i] = difficulties[i] > config.gamma ? 1 : 0;
    }
    return hard;
  }
  // Multiply before dividing so integral K * N / 100 stays exact.
  const double raw = config.k_percent * static_cast<double>(n) / 100.0;
  const auto count = std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return difficulties[a] > difficulties[b];
  });
  for (std::size_t r = 0; r < count; ++r) {
    hard[order[r]] = 1;
  }
  return hard;
}

double beta_schedule(long step, long total_steps, const DistillConfig &config) {
  if (total_steps < 1 || step < 0 || step > total_steps) {
    throw InvalidInput("beta_schedule: need 0 <= step <= total_steps and total_steps >= 1");
  }
  if (config.beta_schedule == BetaSchedule::constant) {
    return config.beta;
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return config.beta_begin + (config.beta_end - config.beta_begin) * frac;
}

} // namespace sekd::kd
