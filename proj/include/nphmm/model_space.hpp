#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/hmm_core.hpp"

namespace nphmm::model {

// Admissible range of the mixture scales: [1/M, 1] (default) or [1/n, n].
enum class ScaleRange { kUnit, kWide };

struct ConstraintParams {
  double c_sigma = 1.0;         // sigma_minus(n) = c_sigma / log n
  double floor_exponent = 2.0;  // floor weight n^{-a}
  int p = 2;                    // even kernel power
  ScaleRange scale_range = ScaleRange::kUnit;
  // B(n) = c_b log n; unset means 5 for unit scales and 6 for wide scales.
  std::optional<double> c_b;

  double resolved_c_b() const { return c_b.value_or(scale_range == ScaleRange::kWide ? 6.0 : 5.0); }
};

/// n-dependent constraint snapshot of the model family.
class Constraints {
 public:
  // Throws UsageError unless sigma_minus lies in (0, 1/e], the floor weight
  // lies in (0, 1) and p is an even integer >= 2.
  static Constraints make(long n, const ConstraintParams& params = {});

  long n() const { return n_; }
  const ConstraintParams& params() const { return params_; }
  double c_sigma() const { return params_.c_sigma; }
  double sigma_minus() const { return sigma_minus_; }
  double floor_weight() const { return floor_weight_; }
  double log_floor_weight() const { return log_floor_weight_; }
  int p() const { return params_.p; }
  double b_bound() const { return params_.resolved_c_b() * std::log(static_cast<double>(n_)); }
  double kernel_log_norm() const { return kernel_log_norm_; }

  std::pair<double, double> loc_range() const {
    return {-static_cast<double>(n_), static_cast<double>(n_)};
  }
  std::pair<double, double> scale_bounds(int M) const;
  // floor(log n / (2 c_sigma)).
  int max_states() const;

 private:
  long n_ = 0;
  ConstraintParams params_;
  double sigma_minus_ = 0;
  double floor_weight_ = 0;
  double log_floor_weight_ = 0;
  double kernel_log_norm_ = 0;
};

/// Emission density w.r.t. the dominating measure:
///   gamma(y) = f + (1 - f) / G(y) * sum_i w_i (1/s_i) psi((y - mu_i) / s_i)
/// with f the floor weight of the constraint snapshot.
class EmissionMixture final : public hmm::Emission {
 public:
  // Validates sum(w) = 1 within 1e-12, w >= 0, locations and scales inside
  // the snapshot's ranges.
  EmissionMixture(Constraints constraints, std::vector<double> weights,
                  std::vector<double> locations, std::vector<double> scales);

  int components() const { return static_cast<int>(weights_.size()); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& locations() const { return locations_; }
  const std::vector<double>& scales() const { return scales_; }
  const Constraints& constraints() const { return constraints_; }

  double log_density(double y) const override;
  bool can_sample() const override { return true; }
  double sample(Rng& rng) const override;

  // log sum_i w_i (1/s_i) psi((y - mu_i)/s_i): the Lebesgue density of the
  // non-floor part.
  double kernel_log_density(double y) const;

  // log[w_j (1/s_j) psi((y - mu_j)/s_j)]; -inf for a zero weight.
  double component_log_term(int j, double y) const {
    const double z = (y - locations_[j]) * inv_scales_[j];
    const double z2 = z * z;
    double zp = z2;
    for (int k = 2; k < constraints_.p(); k += 2) zp *= z2;
    return offsets_[j] - zp;
  }

 private:
  Constraints constraints_;
  std::vector<double> weights_;
  std::vector<double> locations_;
  std::vector<double> scales_;
  std::vector<double> offsets_;  // log w_j - log s_j - log(2 Gamma(1 + 1/p))
  std::vector<double> inv_scales_;
};

double emission_log_density(const EmissionMixture& mix, double y);

/// b_gamma(y) = log sum_x gamma_x(y).
double b_gamma(std::span<const EmissionMixture> emissions, double y);
double b_gamma(const hmm::HmmParams& params, double y);

// 4096 equispaced points over [-2n, 2n] followed by every mixture location.
std::vector<double> tail_check_grid(long n, std::span<const EmissionMixture> emissions);

/// Per row: normalize, then mix with the uniform row using the smallest
/// coefficient that lifts the minimum entry to sigma_minus. Feasible rows
/// (sum 1 within 1e-12, min >= sigma_minus) are returned untouched.
/// Throws InfeasibleConstraintError when K * sigma_minus > 1.
Eigen::MatrixXd project_transition(const Eigen::MatrixXd& Q_raw, double sigma_minus);
Eigen::VectorXd project_distribution(const Eigen::VectorXd& v, double sigma_minus);

/// argmax of sum_j c_j log q_j over {q in simplex, q_j >= sigma_minus}:
/// q_j = max(sigma_minus, c_j / lambda). All-zero counts give the uniform
/// vector.
Eigen::VectorXd floored_simplex_argmax(const Eigen::VectorXd& counts, double sigma_minus);

struct ModelIndex {
  int K = 1;
  int M = 1;
  Constraints constraints;

  int m_M() const { return 2 * M; }
  int model_dimension() const { return m_M() * K + K * K - 1; }
};

struct PenaltyConfig {
  double c_pen = 1.0;
  double log_exponent = 2.0;  // r in (log n)^r

  static PenaltyConfig paper_faithful() { return {1.0, 15.0}; }
};

/// c_pen (K M + K^2) (log n)^r / n. Requires n >= 3.
double penalty(const ModelIndex& index, const PenaltyConfig& config);

struct GridCaps {
  std::optional<int> max_states;
  std::optional<int> max_components;
};

/// All (K, M) with 1 <= K <= floor(log n / (2 c_sigma)), 2M <= n, within the
/// caps, ordered by K then M. Throws UsageError when the grid is empty.
std::vector<ModelIndex> model_grid(long n, const ConstraintParams& params, const GridCaps& caps = {});

}  // namespace nphmm::model
