#include "sekd/dist_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sekd/error.hpp"

namespace sekd::dist {
namespace {

void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) {
    throw InvalidInput("length mismatch: " + std::to_string(a) + " vs " +
                       std::to_string(b));
  }
}

double floored_log(double x) { return std::log(std::max(x, kProbFloor)); }

} // namespace

void validate_distribution(std::span<const double> p, const char *what) {
  if (p.size() < 2) {
    throw InvalidInput(std::string(what) + ": needs at least two entries");
  }
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidInput(std::string(what) + ": entries must be finite and non-negative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidInput(std::string(what) + ": entries sum to " + std::to_string(sum));
  }
}

void validate_logits(std::span<const double> z) {
  if (z.size() < 2) {
    throw InvalidInput("logits: needs at least two entries");
  }
  for (double v : z) {
    if (!std::isfinite(v)) {
      throw InvalidInput("logits: non-finite entry");
    }
  }
}

double softmax_into(std::span<const double> z, std::span<double> out) {
  require_same_size(z.size(), out.size());
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (double &v : out) {
    v *= inv;
  }
  return m + std::log(sum);
}

std::vector<double> softmax(std::span<const double> z) {
  validate_logits(z);
  std::vector<double> out(z.size());
  softmax_into(z, out);
  return out;
}

std::vector<double> log_softmax(std::span<const double> z) {
  validate_logits(z);
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) {
    sum += std::exp(v - m);
  }
  const double lse = m + std::log(sum);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = z[i] - lse;
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require_same_size(p.size(), q.size());
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) {
      kl += p[j] * (std::log(p[j]) - floored_log(q[j]));
    }
  }
  return kl;
}

std::vector<double> mix(std::span<const double> a, std::span<const double> b, double w) {
  require_same_size(a.size(), b.size());
  if (!(w >= 0.0 && w <= 1.0)) {
    throw InvalidInput("mix weight must lie in [0, 1]");
  }
  std::vector<double> out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    out[j] = w * a[j] + (1.0 - w) * b[j];
  }
  return out;
}

std::vector<double> one_hot(std::size_t index, std::size_t size) {
  if (index >= size) {
    throw InvalidInput("one_hot index out of range");
  }
  std::vector<double> out(size, 0.0);
  out[index] = 1.0;
  return out;
}

KlWithGrad kl_grad_wrt_student_logits(std::span<const double> target,
                                      std::span<const double> z, double beta) {
  require_same_size(target.size(), z.size());
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw InvalidInput("beta must lie in [0, 1]");
  }
  const std::size_t n = z.size();
  std::vector<double> q(n);
  softmax_into(z, q);

  KlWithGrad out;
  out.grad.assign(n, 0.0);
  if (beta == 1.0) {
    out.value = kl_divergence(target, q);
    for (std::size_t k = 0; k < n; ++k) {
      out.grad[k] = q[k] - target[k];
    }
    return out;
  }

  // r_j = t_j / m_j with m the proxy mixture.
  std::vector<double> r(n, 0.0);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double m = beta * q[j] + (1.0 - beta) * target[j];
    if (target[j] > 0.0) {
      out.value += target[j] * (std::log(target[j]) - floored_log(m));
      r[j] = target[j] / std::max(m, kProbFloor);
    }
    s += q[j] * r[j];
  }
  for (std::size_t k = 0; k < n; ++k) {
    out.grad[k] = beta * q[k] * (s - r[k]);
  }
  return out;
}

KlWithGrad reverse_kl_grad_wrt_student_logits(std::span<const double> p,
                                              std::span<const double> z) {
  require_same_size(p.size(), z.size());
  const std::size_t n = z.size();
  std::vector<double> q(n);
  const double lse = softmax_into(z, q);

  std::vector<double> log_ratio(n, 0.0);
  KlWithGrad out;
  for (std::size_t j = 0; j < n; ++j) {
    log_ratio[j] = (z[j] - lse) - floored_log(p[j]);
    if (q[j] > 0.0) {
      out.value += q[j] * log_ratio[j];
    }
  }
  out.grad.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    out.grad[k] = q[k] * (log_ratio[k] - out.value);
  }
  return out;
}

} // namespace sekd::dist
