#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/hmm_core.hpp"
#include "nphmm/model_space.hpp"

namespace nphmm::fit {

struct FitConfig {
  int max_iters = 200;
  double tol = 1e-8;  // relative improvement of l_n below which EM stops
  int restarts = 4;
  std::uint64_t seed = 1;
  int inner_emission_iters = 3;
  int threads = 1;  // 0 = hardware concurrency

  // Throws UsageError on max_iters < 1, tol <= 0 or restarts < 1.
  void validate() const;
};

/// A point of S_{K,M,n} in editable form.
struct MixtureHmm {
  Eigen::VectorXd initial;
  Eigen::MatrixXd transition;
  std::vector<model::EmissionMixture> emissions;

  hmm::HmmParams to_params() const;
};

// Empty string when `m` satisfies every constraint of `index` up to `slack`,
// otherwise a description of the first violation.
std::string feasibility_violation(const MixtureHmm& m, const model::ModelIndex& index, double slack = 1e-12);

struct Posteriors {
  Eigen::MatrixXd state;              // n x K, p(X_t | y_1^n)
  std::vector<Eigen::MatrixXd> pair;  // n-1 entries, p(X_t, X_{t+1} | y_1^n)
  double log_likelihood = 0.0;
};

/// Scaled forward-backward. Requires n >= 2; throws DegenerateFitError when
/// the likelihood is zero.
Posteriors e_step(const hmm::HmmParams& params, std::span<const double> y);

struct TransitionUpdate {
  Eigen::VectorXd initial;
  Eigen::MatrixXd transition;
};

/// Expected-count update of (pi, Q) under the floor sigma_minus. Each row is
/// the constrained maximizer of the expected complete-data log-likelihood;
/// rows without expected counts fall back to uniform.
TransitionUpdate m_step_transitions(std::span<const Eigen::MatrixXd> pair_posteriors,
                                    const Eigen::MatrixXd& state_posteriors, double sigma_minus);

/// Bounded weighted-EM refinement of every state's mixture, the floor
/// component held at its fixed weight. A state's mixture is only replaced
/// when sum_t r_t log gamma(y_t) does not decrease.
std::vector<model::EmissionMixture> m_step_emissions(std::span<const double> y,
                                                     const Eigen::MatrixXd& state_posteriors,
                                                     std::span<const model::EmissionMixture> current,
                                                     const FitConfig& config);

/// Starting point for one EM restart: jittered empirical quantiles for the
/// locations, spread / M for the scales, uniform weights, a perturbed
/// uniform Q and pi = stationary(Q). Requires n >= K M.
MixtureHmm initialize(std::span<const double> y, const model::ModelIndex& index, std::uint64_t restart_seed);

struct FitResult {
  model::ModelIndex index;
  MixtureHmm estimate;
  hmm::HmmParams params;
  double final_log_likelihood = 0.0;  // (1/n) l_n
  std::vector<double> trace;          // (1/n) l_n at the start and after every accepted iteration
  int restart_index = 0;
  bool converged = false;
  int iterations = 0;
  // (1/n) decrease of l_n of a rejected final EM step, 0 when none.
  double rejected_drop = 0.0;
};

/// Process-wide record of every EM run: trace steps that decrease (1/n) l_n
/// by more than 1e-8, and rejected EM steps whose decrease exceeds 1e-8.
struct TraceAudit {
  long runs = 0;
  long steps = 0;
  long decreasing_steps = 0;
  long rejected_steps = 0;
  double worst_drop = 0.0;  // largest (1/n) decrease seen in either form
};
TraceAudit trace_audit();
void reset_trace_audit();

/// EM from a given starting point (one restart).
FitResult run_em(std::span<const double> y, const model::ModelIndex& index, MixtureHmm start,
                 const FitConfig& config, int restart_index = 0);

/// Best of config.restarts EM runs; ties go to the lowest restart index.
/// Throws FitFailureError when every restart fails.
FitResult fit_model(std::span<const double> y, const model::ModelIndex& index, const FitConfig& config);

}  // namespace nphmm::fit
