#include "nphmm/model_space.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nphmm/errors.hpp"
#include "nphmm/numerics.hpp"

namespace nphmm::model {

using numerics::kNegInf;

Constraints Constraints::make(long n, const ConstraintParams& params) {
  if (n < 2) throw UsageError("constraints: sample size n must be >= 2");
  if (!(params.c_sigma > 0.0)) throw UsageError("constraints: c_sigma must be > 0");
  if (!(params.floor_exponent > 0.0)) throw UsageError("constraints: floor exponent must be > 0");
  if (params.c_b && !(*params.c_b >= 1.0)) throw UsageError("constraints: c_b must be >= 1");
  Constraints c;
  c.n_ = n;
  c.params_ = params;
  const double log_n = std::log(static_cast<double>(n));
  c.sigma_minus_ = params.c_sigma / log_n;
  if (!(c.sigma_minus_ > 0.0 && c.sigma_minus_ <= std::exp(-1.0))) {
    std::ostringstream os;
    os << "constraints: sigma_minus = c_sigma / log n = " << c.sigma_minus_
       << " is outside (0, 1/e]; increase n or decrease c_sigma";
    throw UsageError(os.str());
  }
  c.log_floor_weight_ = -params.floor_exponent * log_n;
  c.floor_weight_ = std::exp(c.log_floor_weight_);
  if (!(c.floor_weight_ > 0.0 && c.floor_weight_ < 1.0))
    throw UsageError("constraints: floor weight n^{-a} must lie in (0, 1)");
  c.kernel_log_norm_ = numerics::exp_power_log_normalizer(params.p);
  return c;
}

std::pair<double, double> Constraints::scale_bounds(int M) const {
  if (M < 1) throw UsageError("scale_bounds: M must be >= 1");
  if (params_.scale_range == ScaleRange::kWide) {
    const double n = static_cast<double>(n_);
    return {1.0 / n, n};
  }
  return {1.0 / M, 1.0};
}

int Constraints::max_states() const {
  return static_cast<int>(std::floor(std::log(static_cast<double>(n_)) / (2.0 * params_.c_sigma)));
}

EmissionMixture::EmissionMixture(Constraints constraints, std::vector<double> weights,
                                 std::vector<double> locations, std::vector<double> scales)
    : constraints_(std::move(constraints)),
      weights_(std::move(weights)),
      locations_(std::move(locations)),
      scales_(std::move(scales)) {
  const std::size_t M = weights_.size();
  if (M == 0) throw UsageError("EmissionMixture: need at least one component");
  if (locations_.size() != M || scales_.size() != M)
    throw UsageError("EmissionMixture: weights, locations and scales differ in length");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw UsageError("EmissionMixture: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw UsageError("EmissionMixture: weights do not sum to 1");
  const auto [lo_mu, hi_mu] = constraints_.loc_range();
  const auto [lo_s, hi_s] = constraints_.scale_bounds(static_cast<int>(M));
  for (std::size_t i = 0; i < M; ++i) {
    if (!(locations_[i] >= lo_mu && locations_[i] <= hi_mu))
      throw UsageError("EmissionMixture: location outside [-n, n]");
    if (!(scales_[i] >= lo_s && scales_[i] <= hi_s))
      throw UsageError("EmissionMixture: scale outside the admissible range");
  }
  offsets_.resize(M);
  inv_scales_.resize(M);
  for (std::size_t i = 0; i < M; ++i) {
    offsets_[i] = weights_[i] > 0.0
                      ? std::log(weights_[i]) - std::log(scales_[i]) - constraints_.kernel_log_norm()
                      : kNegInf;
    inv_scales_[i] = 1.0 / scales_[i];
  }
}

double EmissionMixture::kernel_log_density(double y) const {
  const int M = static_cast<int>(weights_.size());
  double stack[16];
  std::vector<double> heap;
  double* terms = stack;
  if (M > 16) {
    heap.resize(static_cast<std::size_t>(M));
    terms = heap.data();
  }
  double m = kNegInf;
  for (int i = 0; i < M; ++i) {
    terms[i] = component_log_term(i, y);
    m = std::max(m, terms[i]);
  }
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (int i = 0; i < M; ++i) acc += std::exp(terms[i] - m);
  return m + std::log(acc);
}

double EmissionMixture::log_density(double y) const {
  const double f = constraints_.floor_weight();
  const double k = kernel_log_density(y);
  if (k == kNegInf) return constraints_.log_floor_weight();
  return numerics::log_add_exp(constraints_.log_floor_weight(),
                               std::log1p(-f) + k - numerics::dominating_log_density(y));
}

double EmissionMixture::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(rng) < constraints_.floor_weight()) {
    std::cauchy_distribution<double> cauchy(0.0, 1.0);
    return cauchy(rng);
  }
  const double u = unif(rng);
  std::size_t j = 0;
  double acc = 0.0;
  for (; j + 1 < weights_.size(); ++j) {
    acc += weights_[j];
    if (u < acc) break;
  }
  while (weights_[j] == 0.0 && j > 0) --j;
  // |Z|^p ~ Gamma(1/p, 1) for the density proportional to exp(-z^p).
  const int p = constraints_.p();
  std::gamma_distribution<double> gamma(1.0 / p, 1.0);
  const double magnitude = std::pow(gamma(rng), 1.0 / p);
  const double z = unif(rng) < 0.5 ? -magnitude : magnitude;
  return locations_[j] + scales_[j] * z;
}

double emission_log_density(const EmissionMixture& mix, double y) { return mix.log_density(y); }

double b_gamma(std::span<const EmissionMixture> emissions, double y) {
  if (emissions.empty()) throw UsageError("b_gamma: need at least one emission");
  std::vector<double> terms;
  terms.reserve(emissions.size());
  for (const auto& e : emissions) terms.push_back(e.log_density(y));
  return numerics::log_sum_exp(terms);
}

double b_gamma(const hmm::HmmParams& params, double y) {
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(params.num_states()));
  for (int x = 0; x < params.num_states(); ++x) terms.push_back(params.emission(x).log_density(y));
  return numerics::log_sum_exp(terms);
}

std::vector<double> tail_check_grid(long n, std::span<const EmissionMixture> emissions) {
  constexpr int kPoints = 4096;
  const double lo = -2.0 * static_cast<double>(n);
  const double hi = 2.0 * static_cast<double>(n);
  std::vector<double> grid;
  grid.reserve(kPoints);
  for (int i = 0; i < kPoints; ++i) grid.push_back(lo + (hi - lo) * i / (kPoints - 1));
  for (const auto& e : emissions)
    for (double mu : e.locations()) grid.push_back(mu);
  return grid;
}

namespace {

void check_floor_feasible(Eigen::Index K, double sigma_minus) {
  if (sigma_minus < 0.0) throw UsageError("sigma_minus must be >= 0");
  if (static_cast<double>(K) * sigma_minus > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "floor " << sigma_minus << " infeasible for " << K << " states (K * sigma_minus > 1)";
    throw InfeasibleConstraintError(os.str());
  }
}

Eigen::VectorXd project_row(const Eigen::VectorXd& raw, double sigma_minus) {
  const auto K = raw.size();
  if ((raw.array() < 0.0).any() || !raw.allFinite())
    throw UsageError("project_transition: entries must be finite and nonnegative");
  const double total = raw.sum();
  if (!(total > 0.0)) throw UsageError("project_transition: row with nonpositive sum");
  if (std::abs(total - 1.0) <= 1e-12 && raw.minCoeff() >= sigma_minus) return raw;
  Eigen::VectorXd row = raw / total;
  const double m = row.minCoeff();
  if (m >= sigma_minus) return row;
  const double uniform = 1.0 / static_cast<double>(K);
  // (1 - beta) m + beta / K = sigma_minus
  const double beta = (sigma_minus - m) / (uniform - m);
  Eigen::VectorXd mixed = (1.0 - beta) * row.array() + beta * uniform;
  return mixed;
}

}  // namespace

Eigen::MatrixXd project_transition(const Eigen::MatrixXd& Q_raw, double sigma_minus) {
  const auto K = Q_raw.rows();
  if (K < 1 || Q_raw.cols() != K) throw UsageError("project_transition: matrix must be square");
  check_floor_feasible(K, sigma_minus);
  Eigen::MatrixXd out(K, K);
  for (Eigen::Index x = 0; x < K; ++x)
    out.row(x) = project_row(Q_raw.row(x).transpose(), sigma_minus).transpose();
  return out;
}

Eigen::VectorXd project_distribution(const Eigen::VectorXd& v, double sigma_minus) {
  check_floor_feasible(v.size(), sigma_minus);
  return project_row(v, sigma_minus);
}

Eigen::VectorXd floored_simplex_argmax(const Eigen::VectorXd& counts, double sigma_minus) {
  const auto K = counts.size();
  if (K < 1) throw UsageError("floored_simplex_argmax: empty counts");
  check_floor_feasible(K, sigma_minus);
  if ((counts.array() < 0.0).any() || !counts.allFinite())
    throw UsageError("floored_simplex_argmax: counts must be finite and nonnegative");
  if (!(counts.sum() > 0.0)) return Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
  std::vector<bool> fixed(static_cast<std::size_t>(K), false);
  double lambda = 0.0;
  for (;;) {
    double free_sum = 0.0;
    int n_fixed = 0;
    for (Eigen::Index j = 0; j < K; ++j) {
      if (fixed[j]) ++n_fixed;
      else free_sum += counts(j);
    }
    lambda = free_sum / (1.0 - sigma_minus * n_fixed);
    bool changed = false;
    for (Eigen::Index j = 0; j < K; ++j) {
      if (!fixed[j] && counts(j) < sigma_minus * lambda) {
        fixed[j] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  Eigen::VectorXd q(K);
  for (Eigen::Index j = 0; j < K; ++j) q(j) = fixed[j] ? sigma_minus : counts(j) / lambda;
  return q;
}

double penalty(const ModelIndex& index, const PenaltyConfig& config) {
  const long n = index.constraints.n();
  if (n < 3) throw UsageError("penalty: n must be >= 3");
  const double log_n = std::log(static_cast<double>(n));
  const double size = static_cast<double>(index.K) * index.M + static_cast<double>(index.K) * index.K;
  return config.c_pen * size * std::pow(log_n, config.log_exponent) / static_cast<double>(n);
}

std::vector<ModelIndex> model_grid(long n, const ConstraintParams& params, const GridCaps& caps) {
  if (n < 3) throw UsageError("model_grid: n must be >= 3");
  if (!(params.c_sigma > 0.0)) throw UsageError("model_grid: c_sigma must be > 0");
  int k_max = static_cast<int>(std::floor(std::log(static_cast<double>(n)) / (2.0 * params.c_sigma)));
  long m_max = n / 2;
  if (caps.max_states) k_max = std::min(k_max, *caps.max_states);
  if (caps.max_components) m_max = std::min<long>(m_max, *caps.max_components);
  if (k_max < 1 || m_max < 1) {
    std::ostringstream os;
    os << "model_grid: empty grid for n = " << n << ", c_sigma = " << params.c_sigma
       << " (K <= log n / (2 c_sigma) and 2M <= n leave no model)";
    throw UsageError(os.str());
  }
  const Constraints constraints = Constraints::make(n, params);
  std::vector<ModelIndex> grid;
  for (int K = 1; K <= k_max; ++K)
    for (int M = 1; M <= m_max; ++M) grid.push_back(ModelIndex{K, M, constraints});
  return grid;
}

}  // namespace nphmm::model
