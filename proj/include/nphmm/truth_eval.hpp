#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nphmm/hmm_core.hpp"
#include "nphmm/random.hpp"

namespace nphmm::truth {

/// Finite normal mixture, reported as a density w.r.t. the dominating
/// Cauchy measure: log f(y) - log G(y) with f the Lebesgue density.
class NormalMixtureEmission final : public hmm::Emission {
 public:
  NormalMixtureEmission(std::vector<double> weights, std::vector<double> means, std::vector<double> sds);

  double log_density(double y) const override;
  bool can_sample() const override { return true; }
  double sample(Rng& rng) const override;

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& sds() const { return sds_; }

 private:
  std::vector<double> weights_;
  std::vector<double> means_;
  std::vector<double> sds_;
};

/// Stationary finite-state HMM. The initial law is replaced by the
/// stationary distribution of Q; Q must have strictly positive entries and
/// every emission must be samplable.
class FiniteHmmTruth {
 public:
  explicit FiniteHmmTruth(const hmm::HmmParams& params);
  const hmm::HmmParams& params() const { return params_; }

 private:
  hmm::HmmParams params_;
};

/// HMM on the compact state space [0, 1] with uniform base measure. The
/// transition kernel has a density q(x, x') with sigma_lower <= q <= sigma_upper.
class CompactKernelTruth {
 public:
  using KernelFn = std::function<double(double x, double x_next)>;
  using EmissionLogFn = std::function<double(double x, double y)>;  // w.r.t. the dominating measure
  using EmissionSampler = std::function<double(double x, Rng& rng)>;

  struct Options {
    int grid_nodes = 128;  // quadrature nodes of the filter
    int burn_in = 1000;    // hidden-chain steps discarded by the simulator
    std::optional<double> sigma_lower;
    std::optional<double> sigma_upper;
  };

  // Bounds are checked against the kernel on a 101 x 101 grid; missing
  // bounds are taken from that grid. Throws UsageError when the lower bound
  // is not positive or a supplied bound is violated.
  CompactKernelTruth(KernelFn kernel, EmissionLogFn emission_log_density, EmissionSampler emission_sampler,
                     Options options);

  /// Circle [0, 1) with a von Mises transition kernel of concentration kappa
  /// and Gaussian emissions N(amplitude * cos(2 pi x), emission_sd^2).
  static CompactKernelTruth circular(double kappa, double amplitude, double emission_sd, Options options);
  /// q(x, x') = 1 + strength (2x - 1)(2x' - 1) and emissions
  /// N(amplitude * (2x - 1), emission_sd^2). Not periodic.
  static CompactKernelTruth bilinear(double strength, double amplitude, double emission_sd, Options options);

  double kernel(double x, double x_next) const { return kernel_(x, x_next); }
  double emission_log_density(double x, double y) const { return emission_log_(x, y); }
  double sample_emission(double x, Rng& rng) const { return emission_sampler_(x, rng); }
  double sample_next_state(double x, Rng& rng) const;

  double sigma_lower() const { return sigma_lower_; }
  double sigma_upper() const { return sigma_upper_; }
  int grid_nodes() const { return options_.grid_nodes; }
  int burn_in() const { return options_.burn_in; }

  /// Finite HMM on `nodes` equispaced points of [0, 1] with trapezoid
  /// weights (row-normalized) started at its stationary law.
  hmm::HmmParams discretize(int nodes) const;

 private:
  KernelFn kernel_;
  EmissionLogFn emission_log_;
  EmissionSampler emission_sampler_;
  Options options_;
  double sigma_lower_ = 0;
  double sigma_upper_ = 0;
};

class IidMixtureTruth {
 public:
  explicit IidMixtureTruth(hmm::EmissionPtr emission);
  const hmm::Emission& emission() const { return *emission_; }
  const hmm::EmissionPtr& emission_ptr() const { return emission_; }

 private:
  hmm::EmissionPtr emission_;
};

using TruthModel = std::variant<FiniteHmmTruth, CompactKernelTruth, IidMixtureTruth>;

std::string truth_kind(const TruthModel& truth);

/// Stationary sample of length n; deterministic in seed.
std::vector<double> simulate_truth(const TruthModel& truth, std::size_t n, std::uint64_t seed);

/// log p*(y_i | y_1^{i-1}) for every i: exact filter (finite), grid
/// quadrature filter with `grid_nodes` nodes (compact; 0 = the truth's
/// default, < 8 is a UsageError), marginal density (i.i.d.).
std::vector<double> truth_conditional_log_densities(const TruthModel& truth, std::span<const double> y,
                                                    int grid_nodes = 0);
/// log p*(y_i | y_1^{i-1}) for the last element of `history`.
double truth_conditional_log_density(const TruthModel& truth, std::span<const double> history, int grid_nodes = 0);

struct PredictionErrorOptions {
  std::size_t n_mc = 200000;
  std::size_t burn_in = 1000;
  int batches = 30;
  std::uint64_t seed = 1;
};

struct PredictionErrorEstimate {
  double k_hat = 0.0;
  double std_error = 0.0;
  std::size_t chain_length = 0;
  std::size_t burn_in = 0;
  int batches = 0;
};

/// Ergodic average of log p*(y_i | y_1^{i-1}) - log p_theta(y_i | y_1^{i-1})
/// over one simulated chain, after the burn-in; batch-means standard error.
/// Throws EstimationError on a non-finite summand.
PredictionErrorEstimate estimate_prediction_error(const TruthModel& truth, const hmm::HmmParams& theta,
                                                  const PredictionErrorOptions& options);

struct ForgettingGap {
  int k = 0;
  int k_prime = 0;
  double gap = 0.0;    // max over sequences of |L*_k - L*_k'|
  double bound = 0.0;  // C* rho*^{min(k,k') - 1}
};

struct ForgettingReport {
  double sigma_lower = 0.0;
  double sigma_upper = 0.0;
  double rho_star = 0.0;
  double c_star = 0.0;
  double c_mix = 0.0;  // +inf when sigma_lower = 1 (no dependence)
  int n_mix = 1;
  double tolerance = 1e-4;
  std::vector<ForgettingGap> empirical_gaps;
  int violations = 0;
};

/// rho* = 1 - s-/s+, C* = 1 / (1 - rho*), c* = -log(1 - s-)/2, n* = 1.
/// Throws UsageError when sigma_lower <= 0 or sigma_lower > sigma_upper.
ForgettingReport forgetting_constants(double sigma_lower, double sigma_upper);
/// Constants of a truth: kernel bounds (compact), K min Q and K max Q
/// (finite, uniform base measure on the states), 1 and 1 (i.i.d.).
ForgettingReport forgetting_constants(const TruthModel& truth);

/// Samples n_sequences stationary windows and records, for every pair of
/// window lengths, the largest |log p*(y_i | y_{i-k}^{i-1}) - log p*(y_i | y_{i-k'}^{i-1})|.
ForgettingReport check_forgetting(const TruthModel& truth, int n_sequences, std::span<const int> k_values,
                                  std::uint64_t seed);

struct TailMomentEstimate {
  double delta = 0.0;
  double moment = 0.0;  // E*[p*(Y_i | Y_1^{i-1})^delta]
  double std_error = 0.0;
  double b_star = 0.0;  // (1 + log moment) / delta
};

TailMomentEstimate estimate_tail_moment(const TruthModel& truth, std::size_t n, std::size_t burn_in, double delta,
                                        std::uint64_t seed, int batches = 30);

}  // namespace nphmm::truth
