#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "nphmm/errors.hpp"
#include "nphmm/numerics.hpp"
#include "nphmm/random.hpp"
#include "oracles/quadrature.hpp"

using namespace nphmm;
using numerics::kNegInf;

TEST_SUITE("numerics") {
  TEST_CASE("log_sum_exp examples") {
    CHECK(numerics::log_sum_exp(std::vector<double>{kNegInf}) == kNegInf);
    CHECK(numerics::log_sum_exp(std::vector<double>{kNegInf, kNegInf}) == kNegInf);
    CHECK(numerics::log_sum_exp(std::vector<double>{0.0, 0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    // Shifted exact arithmetic: log(e^1000 + e^1000) = 1000 + log 2.
    CHECK(numerics::log_sum_exp(std::vector<double>{1000.0, 1000.0}) ==
          doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
    CHECK(numerics::log_sum_exp(std::vector<double>{-1000.0, -1000.0}) ==
          doctest::Approx(-1000.0 + std::log(2.0)).epsilon(1e-15));
    CHECK(numerics::log_sum_exp(std::vector<double>{3.0, kNegInf}) == 3.0);
    CHECK_THROWS_AS(numerics::log_sum_exp(std::vector<double>{}), UsageError);
  }

  TEST_CASE("log_sum_exp is permutation invariant and shift covariant") {
    Rng rng(7);
    std::normal_distribution<double> z(0.0, 30.0);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> v(1 + trial % 9);
      for (auto& x : v) x = z(rng);
      const double base = numerics::log_sum_exp(v);
      std::vector<double> perm(v.rbegin(), v.rend());
      std::shuffle(perm.begin(), perm.end(), rng);
      CHECK(std::abs(numerics::log_sum_exp(perm) - base) <= 1e-12 * (1.0 + std::abs(base)));
      const double c = z(rng) * 10.0;
      for (auto& x : v) x += c;
      CHECK(std::abs(numerics::log_sum_exp(v) - (base + c)) <= 1e-12 * (1.0 + std::abs(base + c)));
    }
  }

  TEST_CASE("normalize_log_weights sums to one") {
    std::vector<double> v{1.0, kNegInf, -3.0, 700.0};
    const double z = numerics::normalize_log_weights(v);
    CHECK(z == doctest::Approx(700.0));
    double total = 0.0;
    for (double x : v) total += std::exp(x);
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(v[1] == kNegInf);
  }

  TEST_CASE("log_add_exp agrees with log_sum_exp") {
    CHECK(numerics::log_add_exp(kNegInf, kNegInf) == kNegInf);
    CHECK(numerics::log_add_exp(2.0, kNegInf) == 2.0);
    CHECK(numerics::log_add_exp(-5.0, 4.0) ==
          doctest::Approx(numerics::log_sum_exp(std::vector<double>{-5.0, 4.0})).epsilon(1e-15));
  }

  TEST_CASE("exponential-power kernel examples") {
    // Gamma(3/2) = sqrt(pi)/2, so the p = 2 normalizer is log sqrt(pi).
    CHECK(numerics::exp_power_log_kernel(0.0, 0.0, 1.0, 2) ==
          doctest::Approx(-0.5 * std::log(std::numbers::pi)).epsilon(1e-14));
    CHECK(numerics::exp_power_log_kernel(0.0, 0.0, 1.0, 2) == doctest::Approx(-0.57236494292470008).epsilon(1e-14));
    // Gamma(5/4) from the tgamma reference, independent of lgamma.
    CHECK(numerics::exp_power_log_normalizer(4) == doctest::Approx(std::log(2.0 * std::tgamma(1.25))).epsilon(1e-14));
    CHECK(numerics::exp_power_log_normalizer(4) == doctest::Approx(0.59487534413813215).epsilon(1e-13));
    for (int p : {2, 4, 6})
      for (double d : {0.1, 0.7, 2.5})
        CHECK(numerics::exp_power_log_kernel(1.3 + d, 1.3, 0.4, p) ==
              numerics::exp_power_log_kernel(1.3 - d, 1.3, 0.4, p));
    CHECK_THROWS_AS(numerics::exp_power_log_kernel(0.0, 0.0, 0.0, 2), UsageError);
    CHECK_THROWS_AS(numerics::exp_power_log_kernel(0.0, 0.0, -1.0, 2), UsageError);
    CHECK_THROWS_AS(numerics::exp_power_log_kernel(0.0, 0.0, 1.0, 3), UsageError);
    CHECK_THROWS_AS(numerics::exp_power_log_kernel(0.0, 0.0, 1.0, 0), UsageError);
  }

  TEST_CASE("exponential-power kernel integrates to one") {
    const double mass = oracle::integrate(
        [](double y) { return std::exp(numerics::exp_power_log_kernel(y, 0.0, 1.0, 2)); }, -20.0, 20.0);
    CHECK(std::abs(mass - 1.0) <= 1e-8);
    for (int p : {4, 6, 8}) {
      const double m = oracle::integrate(
          [p](double y) { return std::exp(numerics::exp_power_log_kernel(y, 0.5, 0.3, p)); }, -10.0, 10.0);
      CHECK(std::abs(m - 1.0) <= 1e-8);
    }
  }

  TEST_CASE("exponential-power kernel decreases in |y - mu|") {
    for (int p : {2, 4})
      for (double d = 0.0; d < 5.0; d += 0.01)
        CHECK(numerics::exp_power_log_kernel(d + 0.01, 0.0, 0.7, p) < numerics::exp_power_log_kernel(d, 0.0, 0.7, p));
  }

  TEST_CASE("p = 2 kernel is the normal density with variance 1/2") {
    for (double y = -6.0; y <= 6.0; y += 0.05) {
      const double normal = std::exp(-y * y) / std::sqrt(std::numbers::pi);
      CHECK(std::abs(std::exp(numerics::exp_power_log_kernel(y, 0.0, 1.0, 2)) - normal) <= 1e-12);
    }
  }

  TEST_CASE("dominating density") {
    CHECK(numerics::dominating_log_density(0.0) == doctest::Approx(-std::log(std::numbers::pi)).epsilon(1e-15));
    CHECK(numerics::dominating_log_density(0.0) == doctest::Approx(-1.1447298858494002).epsilon(1e-14));
    CHECK(numerics::dominating_log_density(1.0) == doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
    // Split at +-1 so the panels resolve the peak; the tails carry ~6e-5.
    auto g = [](double y) { return std::exp(numerics::dominating_log_density(y)); };
    const double mass = oracle::integrate(g, -1e4, -1.0, 1e-13) + oracle::integrate(g, -1.0, 1.0, 1e-13) +
                        oracle::integrate(g, 1.0, 1e4, 1e-13);
    CHECK(std::abs(mass - 1.0) <= 1e-4);
  }

  TEST_CASE("batch means") {
    std::vector<double> v(300);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 2);
    const auto bm = numerics::batch_means(v, 30);
    CHECK(bm.mean == doctest::Approx(0.5));
    CHECK(bm.batches == 30);
    CHECK(bm.std_error == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(numerics::mean(std::vector<double>{1, 2, 3, 4}) == doctest::Approx(2.5));
    CHECK(numerics::sample_std_dev(std::vector<double>{1, 2, 3, 4}) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  }
}
