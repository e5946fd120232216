#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace nphmm::numerics {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_i exp(values_i)). Entries may be -inf (zero weight); returns -inf
// iff every entry is -inf. Throws UsageError on empty input.
double log_sum_exp(std::span<const double> values);

// log(exp(a) + exp(b)) without the span overhead.
inline double log_add_exp(double a, double b) noexcept {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

// Normalizes log-weights in place so that exp(values) sums to 1 and returns
// the log normalizer that was subtracted.
double normalize_log_weights(std::span<double> values);

/// log(2 * Gamma(1 + 1/p)), the log normalizer of the exponential-power
/// kernel psi(z) = exp(-z^p) / (2 Gamma(1 + 1/p)).
double exp_power_log_normalizer(int p);

/// log[(1/s) psi((y - mu)/s)] for an even integer p >= 2 and s > 0.
/// Throws UsageError when s <= 0 or p is odd or smaller than 2.
double exp_power_log_kernel(double y, double mu, double s, int p);

// Unchecked variant for inner loops; `log_norm` must equal
// exp_power_log_normalizer(p).
inline double exp_power_log_kernel_unchecked(double y, double mu, double s, int p,
                                             double log_norm) noexcept {
  const double z = (y - mu) / s;
  const double z2 = z * z;
  double zp = z2;
  for (int k = 2; k < p; k += 2) zp *= z2;
  return -std::log(s) - log_norm - zp;
}

/// Log density of the dominating probability measure: a standard Cauchy,
/// G(y) = 1 / (pi (1 + y^2)).
inline double dominating_log_density(double y) noexcept {
  return -std::log(std::numbers::pi) - std::log1p(y * y);
}

// Population mean / sample standard deviation helpers used by the harness.
double mean(std::span<const double> values);
double sample_std_dev(std::span<const double> values);

// Mean and standard error via non-overlapping batch means. `batches` is
// clamped to the number of values; the remainder after equal-size batches is
// dropped from the error estimate but kept in the mean.
struct BatchMeans {
  double mean = 0.0;
  double std_error = 0.0;
  int batches = 0;
};
BatchMeans batch_means(std::span<const double> values, int batches);

}  // namespace nphmm::numerics
