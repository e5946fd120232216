#include "nphmm/numerics.hpp"

#include <algorithm>
#include <string>

#include "nphmm/errors.hpp"

namespace nphmm::numerics {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw UsageError("log_sum_exp: empty input");
  const double m = *std::max_element(values.begin(), values.end());
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double normalize_log_weights(std::span<double> values) {
  const double z = log_sum_exp(values);
  if (!std::isfinite(z)) throw NumericalError("normalize_log_weights: non-finite normalizer");
  for (double& v : values) v -= z;
  return z;
}

double exp_power_log_normalizer(int p) {
  if (p < 2 || p % 2 != 0)
    throw UsageError("exponential-power kernel requires an even p >= 2, got " + std::to_string(p));
  return std::log(2.0) + std::lgamma(1.0 + 1.0 / p);
}

double exp_power_log_kernel(double y, double mu, double s, int p) {
  if (!(s > 0.0)) throw UsageError("exponential-power kernel requires s > 0");
  return exp_power_log_kernel_unchecked(y, mu, s, p, exp_power_log_normalizer(p));
}

double mean(std::span<const double> values) {
  if (values.empty()) throw UsageError("mean: empty input");
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

double sample_std_dev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

BatchMeans batch_means(std::span<const double> values, int batches) {
  if (values.empty()) throw UsageError("batch_means: empty input");
  if (batches < 2) throw UsageError("batch_means: need at least two batches");
  BatchMeans out;
  out.mean = mean(values);
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(batches), values.size());
  const std::size_t size = values.size() / b;
  out.batches = static_cast<int>(b);
  if (b < 2) return out;
  std::vector<double> means(b);
  for (std::size_t j = 0; j < b; ++j) means[j] = mean(values.subspan(j * size, size));
  out.std_error = sample_std_dev(means) / std::sqrt(static_cast<double>(b));
  return out;
}

}  // namespace nphmm::numerics
