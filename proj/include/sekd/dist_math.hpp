#pragma once

// Probability-distribution primitives over a shared vocabulary.
//
// Distributions and logit vectors are passed as spans of doubles. All KL
// terms floor the second argument at kProbFloor before taking the log and use
// 0 * log 0 = 0 for the first argument.

#include <span>
#include <vector>

namespace sekd::dist {

inline constexpr double kProbFloor = 1e-12;

/// Tolerance used when validating that a distribution sums to one.
inline constexpr double kSumTolerance = 1e-6;

/// Result of a KL term together with its gradient w.r.t. student logits.
struct KlWithGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Throws InvalidInput unless `p` is a distribution (V >= 2, entries >= 0,
/// sum within kSumTolerance of 1).
void validate_distribution(std::span<const double> p, const char *what = "distribution");

/// Throws InvalidInput unless all logits are finite and there are at least two.
void validate_logits(std::span<const double> z);

std::vector<double> softmax(std::span<const double> z);

/// Writes softmax(z) into `out` (same length). Returns log-sum-exp of z.
double softmax_into(std::span<const double> z, std::span<double> out);

/// log softmax, computed as z - logsumexp(z).
std::vector<double> log_softmax(std::span<const double> z);

double kl_divergence(std::span<const double> p, std::span<const double> q);

/// w * a + (1 - w) * b.
std::vector<double> mix(std::span<const double> a, std::span<const double> b, double w);

std::vector<double> one_hot(std::size_t index, std::size_t size);

/// KL(target || beta * softmax(z) + (1 - beta) * target) and its exact gradient
/// w.r.t. z. Gradient flows through q inside the mixture:
///   grad_k = beta * q_k * (S - t_k / m_k),  S = sum_j q_j t_j / m_j.
/// beta = 1 reduces to KL(target || q) with grad = q - target.
KlWithGrad kl_grad_wrt_student_logits(std::span<const double> target,
                                      std::span<const double> z, double beta);

/// KL(softmax(z) || p) and its gradient q_k * (log(q_k / p_k) - KL).
KlWithGrad reverse_kl_grad_wrt_student_logits(std::span<const double> p,
                                              std::span<const double> z);

} // namespace sekd::dist
