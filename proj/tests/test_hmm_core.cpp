#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "nphmm/errors.hpp"
#include "nphmm/hmm_core.hpp"
#include "nphmm/numerics.hpp"
#include "nphmm/model_space.hpp"
#include "oracles/brute_force.hpp"

using namespace nphmm;
using testing::uniform;

namespace {

// Emission that is -inf on an interval, for zero-likelihood paths.
class HoleEmission final : public hmm::Emission {
 public:
  double log_density(double y) const override { return (y > 10.0 && y < 20.0) ? numerics::kNegInf : -std::abs(y); }
};

struct Instance {
  hmm::HmmParams params;
  std::vector<double> y;
};

Instance random_instance(Rng& rng, int K, int n, double sigma = 0.0) {
  const auto c = model::Constraints::make(50);
  fit::MixtureHmm m;
  for (int x = 0; x < K; ++x) m.emissions.push_back(testing::random_mixture(c, 1 + static_cast<int>(rng() % 3), rng));
  m.transition = testing::random_transition(K, rng, sigma);
  m.initial = testing::random_distribution(K, rng, sigma);
  std::vector<double> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = uniform(rng, -4.0, 4.0);
  return {m.to_params(), y};
}

}  // namespace

TEST_SUITE("hmm_core") {
  TEST_CASE("HmmParams validates its simplices") {
    std::vector<hmm::EmissionPtr> em{testing::normal(0, 1), testing::normal(1, 1)};
    Eigen::MatrixXd Q(2, 2);
    Q << 0.5, 0.5, 0.3, 0.7;
    CHECK_NOTHROW(hmm::HmmParams(Eigen::Vector2d(0.5, 0.5), Q, em));
    CHECK_THROWS_AS(hmm::HmmParams(Eigen::Vector2d(0.6, 0.5), Q, em), UsageError);
    Eigen::MatrixXd bad = Q;
    bad(1, 0) = -0.1;
    bad(1, 1) = 1.1;
    CHECK_THROWS_AS(hmm::HmmParams(Eigen::Vector2d(0.5, 0.5), bad, em), UsageError);
    CHECK_THROWS_AS(hmm::HmmParams(Eigen::Vector3d(0.2, 0.3, 0.5), Q, em), UsageError);
  }

  TEST_CASE("stationary distribution examples") {
    Eigen::MatrixXd U = Eigen::MatrixXd::Constant(2, 2, 0.5);
    const auto mu = hmm::stationary_distribution(U);
    CHECK(mu(0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(mu(1) == doctest::Approx(0.5).epsilon(1e-14));
    Eigen::MatrixXd Q(2, 2);
    Q << 0.9, 0.1, 0.2, 0.8;
    // Balance: 0.1 mu0 = 0.2 mu1.
    const auto m2 = hmm::stationary_distribution(Q);
    CHECK(std::abs(m2(0) - 2.0 / 3.0) <= 1e-14);
    CHECK(std::abs(m2(1) - 1.0 / 3.0) <= 1e-14);
    for (double eps : {1e-6, 0.01, 0.3, 0.5, 0.99}) {
      Eigen::MatrixXd P(2, 2);
      P << 1 - eps, eps, eps, 1 - eps;
      const auto s = hmm::stationary_distribution(P);
      CHECK(std::abs(s(0) - 0.5) <= 1e-10);
    }
    CHECK_THROWS_AS(hmm::stationary_distribution(Eigen::MatrixXd::Identity(2, 2)), NumericalError);
  }

  TEST_CASE("stationary distribution residual on random chains") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const int K = 1 + trial % 6;
      const auto Q = testing::random_transition(K, rng, 0.01);
      const auto mu = hmm::stationary_distribution(Q);
      CHECK((mu.transpose() * Q - mu.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(std::abs(mu.sum() - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("sample_path: K = 1, determinism, transition frequencies") {
    std::vector<hmm::EmissionPtr> one{testing::normal(2.0, 0.5)};
    const hmm::HmmParams p1(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Ones(1, 1), one);
    Rng rng(3);
    const auto path = hmm::sample_path(p1, 500, rng);
    CHECK(std::all_of(path.states.begin(), path.states.end(), [](int s) { return s == 0; }));
    CHECK(path.observations.size() == 500);

    Eigen::MatrixXd Q(2, 2);
    Q << 0.7, 0.3, 0.4, 0.6;
    const auto p = testing::two_state_normal(Q, -1, 1, 1);
    Rng a(99), b(99);
    const auto pa = hmm::sample_path(p, 1000, a);
    const auto pb = hmm::sample_path(p, 1000, b);
    CHECK(pa.states == pb.states);
    CHECK(pa.observations == pb.observations);

    Rng r(5);
    const auto long_path = hmm::sample_path(p, 100000, r);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(2, 2);
    for (std::size_t t = 0; t + 1 < long_path.states.size(); ++t) counts(long_path.states[t], long_path.states[t + 1]) += 1;
    for (int x = 0; x < 2; ++x) {
      const double row = counts.row(x).sum();
      for (int z = 0; z < 2; ++z) {
        const double freq = counts(x, z) / row;
        const double se = std::sqrt(Q(x, z) * (1 - Q(x, z)) / row);
        CHECK(std::abs(freq - Q(x, z)) <= 3 * se);
      }
    }
    CHECK_THROWS_AS(hmm::sample_path(hmm::HmmParams(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Ones(1, 1),
                                                    {std::make_shared<HoleEmission>()}),
                                     3, r),
                    UsageError);
  }

  TEST_CASE("log_likelihood: K = 1 is a plain sum") {
    const auto c = model::Constraints::make(100);
    Rng rng(2);
    auto mix = testing::random_mixture(c, 2, rng);
    const hmm::HmmParams p(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Ones(1, 1),
                           {std::make_shared<model::EmissionMixture>(mix)});
    std::vector<double> y{0.1, -2.0, 3.5, 0.0, 1.0};
    double sum = 0.0;
    for (double v : y) sum += mix.log_density(v);
    CHECK(hmm::log_likelihood(p, y) == doctest::Approx(sum).epsilon(1e-13));
  }

  TEST_CASE("forward matches brute-force path enumeration (100 instances)") {
    Rng rng(20240101);
    for (int trial = 0; trial < 100; ++trial) {
      const int K = 1 + trial % 3;
      const int n = 1 + static_cast<int>(rng() % 8);
      const auto inst = random_instance(rng, K, n);
      const auto table = inst.params.emission_log_table(inst.y);
      const auto oracle = oracle::enumerate_paths(inst.params.initial(), inst.params.transition(), table);
      const double ll = hmm::log_likelihood(inst.params, inst.y);
      CHECK(std::abs(ll - oracle.log_likelihood) <= 1e-10 * std::max(1.0, std::abs(oracle.log_likelihood)));
    }
  }

  TEST_CASE("run_filter predictors match enumeration; t = 1 predictor is pi") {
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
      const int K = 1 + trial % 3;
      const int n = 1 + static_cast<int>(rng() % 6);
      const auto inst = random_instance(rng, K, n);
      const auto states = hmm::run_filter(inst.params, inst.y);
      const auto oracle = oracle::enumerate_paths(inst.params.initial(), inst.params.transition(),
                                                  inst.params.emission_log_table(inst.y));
      CHECK((states[0].predictor - inst.params.initial()).cwiseAbs().maxCoeff() == 0.0);
      for (int t = 0; t < n; ++t) {
        CHECK((states[t].predictor - oracle.predictor.row(t).transpose()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(std::abs(states[t].predictor.sum() - 1.0) <= 1e-10);
      }
      // Final running likelihood plus the last step's contribution.
      const auto cond = hmm::conditional_log_densities(inst.params, inst.y);
      CHECK(std::abs(states.back().log_likelihood_so_far + cond.back() - hmm::log_likelihood(inst.params, inst.y)) <=
            1e-10 * std::max(1.0, std::abs(oracle.log_likelihood)));
    }
  }

  TEST_CASE("predictor envelope under a floored Q") {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
      const int K = 2 + trial % 4;
      const double sigma = 0.1 * 2.0 / K;
      const auto inst = random_instance(rng, K, 200, sigma);
      const auto states = hmm::run_filter(inst.params, inst.y);
      for (std::size_t t = 1; t < states.size(); ++t) {
        CHECK(states[t].predictor.minCoeff() >= sigma - 1e-12);
        CHECK(states[t].predictor.maxCoeff() <= 1.0 + 1e-12);
      }
    }
    // sigma = 0.1.
    const auto inst = random_instance(rng, 3, 300, 0.1);
    for (const auto& s : hmm::run_filter(inst.params, inst.y)) CHECK(s.predictor.minCoeff() >= 0.1 - 1e-12);
  }

  TEST_CASE("log_likelihood is invariant under state relabeling") {
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
      const int K = 2 + trial % 3;
      const auto inst = random_instance(rng, K, 50);
      std::vector<int> perm(K);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const auto permuted = inst.params.permuted(perm);
      for (int x = 0; x < K; ++x) {
        CHECK(permuted.initial()(x) == inst.params.initial()(perm[x]));
        for (int z = 0; z < K; ++z) CHECK(permuted.transition()(x, z) == inst.params.transition()(perm[x], perm[z]));
      }
      const double a = hmm::log_likelihood(inst.params, inst.y);
      const double b = hmm::log_likelihood(permuted, inst.y);
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
  }

  TEST_CASE("zero likelihood is -inf, not an error") {
    std::vector<hmm::EmissionPtr> em{std::make_shared<HoleEmission>(), std::make_shared<HoleEmission>()};
    const hmm::HmmParams p(Eigen::Vector2d(0.5, 0.5), Eigen::MatrixXd::Constant(2, 2, 0.5), em);
    std::vector<double> y{0.0, 1.0, 15.0, 2.0};
    CHECK(hmm::log_likelihood(p, y) == numerics::kNegInf);
    const auto fp = hmm::forward(p.initial(), p.transition(), p.emission_log_table(y));
    CHECK(fp.degenerate_step == 2);
    CHECK(fp.log_norm(3) == numerics::kNegInf);
  }

  TEST_CASE("windowed conditional density: ratio definition and envelope") {
    Rng rng(13);
    const long n = 1000;
    const auto c = model::Constraints::make(n);
    for (int trial = 0; trial < 30; ++trial) {
      const int K = 2 + trial % 3;
      const auto m = testing::random_model(c, K, 2, rng);
      const auto params = m.to_params();
      std::vector<double> y(12);
      for (auto& v : y) v = uniform(rng, -5.0, 5.0);
      const Eigen::VectorXd mu = testing::random_distribution(K, rng);
      const double L = hmm::windowed_conditional_log_density(params, y, mu);
      const double full = hmm::log_likelihood(params, y, mu);
      const double past = hmm::log_likelihood(params, std::span<const double>(y).first(y.size() - 1), mu);
      CHECK(std::abs(L - (full - past)) <= 1e-12 * std::max(1.0, std::abs(full)));
      const double b = model::b_gamma(params, y.back());
      CHECK(L >= std::log(c.sigma_minus()) + b - 1e-12);
      CHECK(L <= b + 1e-12);
    }
    CHECK_THROWS_AS(hmm::windowed_conditional_log_density(testing::random_model(c, 2, 1, rng).to_params(),
                                                          std::vector<double>{1.0}, Eigen::Vector2d(0.5, 0.5)),
                    UsageError);
  }

  TEST_CASE("forgetting: k = 5 against k' = 20 with distinct initial laws") {
    Rng rng(17);
    const auto c = model::Constraints::make(200);
    const double sigma = c.sigma_minus();
    for (int trial = 0; trial < 20; ++trial) {
      const int K = 2 + trial % 2;
      const auto params = testing::random_model(c, K, 2, rng).to_params();
      std::vector<double> y(21);
      for (auto& v : y) v = uniform(rng, -4.0, 4.0);
      const Eigen::VectorXd mu = testing::random_distribution(K, rng);
      const Eigen::VectorXd mu2 = testing::random_distribution(K, rng);
      const double a = hmm::windowed_conditional_log_density(params, std::span<const double>(y).last(6), mu);
      const double b = hmm::windowed_conditional_log_density(params, y, mu2);
      CHECK(std::abs(a - b) <= hmm::forgetting_bound(sigma, 5, 20) + 1e-10);
    }
    const double rho = hmm::forgetting_rate(0.2);
    CHECK(rho == doctest::Approx(0.75));
    CHECK(hmm::forgetting_bound(0.2, 3, 7) == doctest::Approx(0.75 * 0.75 / 0.25));
    CHECK_THROWS_AS(hmm::forgetting_rate(0.0), UsageError);
  }
}
