#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/random.hpp"

namespace nphmm::hmm {

/// Emission law of one hidden state. Densities are taken with respect to the
/// dominating probability measure (see numerics::dominating_log_density), not
/// Lebesgue measure.
class Emission {
 public:
  virtual ~Emission() = default;
  virtual double log_density(double y) const = 0;
  virtual bool can_sample() const { return false; }
  // Throws UsageError unless can_sample().
  virtual double sample(Rng& rng) const;
};

using EmissionPtr = std::shared_ptr<const Emission>;

/// Parameters (K, pi, Q, gamma) of a finite-state HMM. Immutable once built;
/// the constructor checks that pi and every row of Q are probability vectors
/// (entries >= 0, sum within 1e-10).
class HmmParams {
 public:
  HmmParams(Eigen::VectorXd initial, Eigen::MatrixXd transition,
            std::vector<EmissionPtr> emissions);

  int num_states() const { return static_cast<int>(initial_.size()); }
  const Eigen::VectorXd& initial() const { return initial_; }
  const Eigen::MatrixXd& transition() const { return transition_; }
  const Emission& emission(int state) const { return *emissions_[state]; }
  const std::vector<EmissionPtr>& emissions() const { return emissions_; }

  // n x K table of log gamma_x(y_t).
  Eigen::MatrixXd emission_log_table(std::span<const double> y) const;

  HmmParams with_initial(Eigen::VectorXd initial) const;
  // State x of the result is state perm[x] of *this.
  HmmParams permuted(std::span<const int> perm) const;

  double min_transition() const { return transition_.minCoeff(); }
  double min_initial() const { return initial_.minCoeff(); }

 private:
  Eigen::VectorXd initial_;
  Eigen::MatrixXd transition_;
  std::vector<EmissionPtr> emissions_;
};

/// Left eigenvector mu = mu Q with sum 1, by a direct linear solve. Throws
/// NumericalError when the balance system is singular (reducible chain) or
/// the residual exceeds 1e-10.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& Q);

struct SampledPath {
  std::vector<int> states;  // 0-based
  std::vector<double> observations;
};

SampledPath sample_path(const HmmParams& params, std::size_t n, Rng& rng);

/// Output of one normalized forward sweep.
///
/// predictor.row(t) = p(X_t | y_1^{t-1}) and filtered.row(t) = p(X_t | y_1^t);
/// log_norm(t) = log p(y_t | y_1^{t-1}). Once a step has zero likelihood the
/// remaining log_norm entries are -inf and the filter stops updating.
struct ForwardPass {
  Eigen::MatrixXd predictor;
  Eigen::MatrixXd filtered;
  Eigen::VectorXd log_norm;
  double log_likelihood = 0.0;
  // Index of the first step with zero likelihood, or -1.
  long degenerate_step = -1;
};

ForwardPass forward(const Eigen::VectorXd& initial, const Eigen::MatrixXd& Q,
                    const Eigen::MatrixXd& log_emission);

/// l_n = log p(y_1^n) under params (initial law params.initial()).
double log_likelihood(const HmmParams& params, std::span<const double> y);
/// Same, with X_1 ~ initial instead of params.initial().
double log_likelihood(const HmmParams& params, std::span<const double> y,
                      const Eigen::VectorXd& initial);

/// log p(y_t | y_1^{t-1}) for every t.
std::vector<double> conditional_log_densities(const HmmParams& params, std::span<const double> y);

struct FilterState {
  Eigen::VectorXd predictor;        // p(X_t = . | y_1^{t-1}), linear scale
  double log_likelihood_so_far = 0;  // log p(y_1^{t-1})
};

std::vector<FilterState> run_filter(const HmmParams& params, std::span<const double> y);

/// L_{i,k,mu} = log p(y_i | y_{i-k}^{i-1}, X_{i-k} ~ mu) where `window` holds
/// y_{i-k}, ..., y_i (k >= 1, so at least two observations).
double windowed_conditional_log_density(const HmmParams& params, std::span<const double> window,
                                        const Eigen::VectorXd& mu);

/// rho = 1 - sigma / (1 - sigma), the filter forgetting rate under a floor
/// sigma on the transition matrix.
double forgetting_rate(double sigma_minus);
/// rho^{min(k,k')-1} / (1 - rho).
double forgetting_bound(double sigma_minus, int k, int k_prime);

}  // namespace nphmm::hmm
