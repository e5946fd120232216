#pragma once

#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/fit.hpp"
#include "nphmm/hmm_core.hpp"
#include "nphmm/model_space.hpp"
#include "nphmm/random.hpp"
#include "nphmm/truth_eval.hpp"

namespace testing {

using nphmm::Rng;

inline double uniform(Rng& rng, double a = 0.0, double b = 1.0) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

// Random row-stochastic matrix with entries >= sigma.
inline Eigen::MatrixXd random_transition(int K, Rng& rng, double sigma = 0.0) {
  Eigen::MatrixXd raw(K, K);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) raw(a, b) = -std::log(uniform(rng, 1e-12, 1.0));
  return nphmm::model::project_transition(raw, sigma);
}

inline Eigen::VectorXd random_distribution(int K, Rng& rng, double sigma = 0.0) {
  Eigen::VectorXd v(K);
  for (int a = 0; a < K; ++a) v(a) = -std::log(uniform(rng, 1e-12, 1.0));
  return nphmm::model::project_distribution(v, sigma);
}

inline nphmm::model::EmissionMixture random_mixture(const nphmm::model::Constraints& c, int M, Rng& rng,
                                                    double loc_spread = 3.0) {
  std::vector<double> w(M), mu(M), s(M);
  double total = 0.0;
  for (int j = 0; j < M; ++j) {
    w[j] = uniform(rng, 0.05, 1.0);
    total += w[j];
  }
  for (auto& v : w) v /= total;
  const auto [lo_s, hi_s] = c.scale_bounds(M);
  const double spread = std::min(loc_spread, static_cast<double>(c.n()));
  for (int j = 0; j < M; ++j) {
    mu[j] = uniform(rng, -spread, spread);
    s[j] = uniform(rng, lo_s, hi_s);
  }
  return nphmm::model::EmissionMixture(c, w, mu, s);
}

// Random point of S_{K,M,n}.
inline nphmm::fit::MixtureHmm random_model(const nphmm::model::Constraints& c, int K, int M, Rng& rng) {
  nphmm::fit::MixtureHmm m;
  m.transition = random_transition(K, rng, c.sigma_minus());
  m.initial = random_distribution(K, rng, c.sigma_minus());
  for (int x = 0; x < K; ++x) m.emissions.push_back(random_mixture(c, M, rng));
  return m;
}

inline std::shared_ptr<nphmm::truth::NormalMixtureEmission> normal(double mean, double sd) {
  return std::make_shared<nphmm::truth::NormalMixtureEmission>(std::vector<double>{1.0}, std::vector<double>{mean},
                                                               std::vector<double>{sd});
}

// 2-state HMM with normal emissions, stationary start.
inline nphmm::hmm::HmmParams two_state_normal(const Eigen::MatrixXd& Q, double m0, double m1, double sd) {
  std::vector<nphmm::hmm::EmissionPtr> em{normal(m0, sd), normal(m1, sd)};
  return nphmm::hmm::HmmParams(nphmm::hmm::stationary_distribution(Q), Q, em);
}

inline std::vector<double> sample_observations(const nphmm::hmm::HmmParams& p, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return nphmm::hmm::sample_path(p, n, rng).observations;
}

}  // namespace testing
