#include "nphmm/hmm_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nphmm/errors.hpp"
#include "nphmm/numerics.hpp"

namespace nphmm::hmm {

using numerics::kNegInf;

double Emission::sample(Rng&) const {
  throw UsageError("emission does not provide a sampler");
}

namespace {

constexpr double kSimplexTol = 1e-10;

void check_probability_vector(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) {
  if ((v.array() < 0.0).any() || !v.allFinite()) {
    std::ostringstream os;
    os << what << " has a negative or non-finite entry";
    throw UsageError(os.str());
  }
  if (std::abs(v.sum() - 1.0) > kSimplexTol) {
    std::ostringstream os;
    os << what << " sums to " << v.sum() << ", expected 1";
    throw UsageError(os.str());
  }
}

int draw_categorical(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  const int K = static_cast<int>(probs.size());
  for (int x = 0; x < K; ++x) {
    acc += probs(x);
    if (u < acc) return x;
  }
  // u landed in the rounding gap above the cumulative sum.
  for (int x = K - 1; x >= 0; --x)
    if (probs(x) > 0.0) return x;
  return K - 1;
}

}  // namespace

HmmParams::HmmParams(Eigen::VectorXd initial, Eigen::MatrixXd transition,
                     std::vector<EmissionPtr> emissions)
    : initial_(std::move(initial)),
      transition_(std::move(transition)),
      emissions_(std::move(emissions)) {
  const auto K = initial_.size();
  if (K < 1) throw UsageError("HmmParams: need at least one state");
  if (transition_.rows() != K || transition_.cols() != K)
    throw UsageError("HmmParams: transition matrix must be K x K");
  if (static_cast<Eigen::Index>(emissions_.size()) != K)
    throw UsageError("HmmParams: need one emission per state");
  for (const auto& e : emissions_)
    if (!e) throw UsageError("HmmParams: null emission");
  check_probability_vector(initial_, "initial distribution");
  for (Eigen::Index x = 0; x < K; ++x)
    check_probability_vector(transition_.row(x).transpose(), "transition row");
}

Eigen::MatrixXd HmmParams::emission_log_table(std::span<const double> y) const {
  const int K = num_states();
  Eigen::MatrixXd table(static_cast<Eigen::Index>(y.size()), K);
  for (int x = 0; x < K; ++x) {
    const Emission& e = *emissions_[x];
    for (std::size_t t = 0; t < y.size(); ++t) table(static_cast<Eigen::Index>(t), x) = e.log_density(y[t]);
  }
  return table;
}

HmmParams HmmParams::with_initial(Eigen::VectorXd initial) const {
  return HmmParams(std::move(initial), transition_, emissions_);
}

HmmParams HmmParams::permuted(std::span<const int> perm) const {
  const int K = num_states();
  if (static_cast<int>(perm.size()) != K) throw UsageError("permuted: wrong permutation size");
  std::vector<int> seen(K, 0);
  for (int p : perm) {
    if (p < 0 || p >= K || seen[p]++) throw UsageError("permuted: not a permutation");
  }
  Eigen::VectorXd pi(K);
  Eigen::MatrixXd Q(K, K);
  std::vector<EmissionPtr> em(K);
  for (int x = 0; x < K; ++x) {
    pi(x) = initial_(perm[x]);
    em[x] = emissions_[perm[x]];
    for (int y = 0; y < K; ++y) Q(x, y) = transition_(perm[x], perm[y]);
  }
  return HmmParams(std::move(pi), std::move(Q), std::move(em));
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& Q) {
  const auto K = Q.rows();
  if (K < 1 || Q.cols() != K) throw UsageError("stationary_distribution: Q must be square");
  Eigen::MatrixXd A = Q.transpose() - Eigen::MatrixXd::Identity(K, K);
  A.row(K - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(K);
  b(K - 1) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw NumericalError("stationary_distribution: singular balance system (reducible chain?)");
  Eigen::VectorXd mu = lu.solve(b);
  const double residual = (mu.transpose() * Q - mu.transpose()).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-10) || (mu.array() < -1e-10).any())
    throw NumericalError("stationary_distribution: solve is not a probability vector");
  mu = mu.cwiseMax(0.0);
  return mu / mu.sum();
}

SampledPath sample_path(const HmmParams& params, std::size_t n, Rng& rng) {
  if (n < 1) throw UsageError("sample_path: n must be >= 1");
  const int K = params.num_states();
  for (int x = 0; x < K; ++x)
    if (!params.emission(x).can_sample()) throw UsageError("sample_path: emission without sampler");
  SampledPath out;
  out.states.resize(n);
  out.observations.resize(n);
  int x = draw_categorical(params.initial(), rng);
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) x = draw_categorical(params.transition().row(x).transpose(), rng);
    out.states[t] = x;
    out.observations[t] = params.emission(x).sample(rng);
  }
  return out;
}

ForwardPass forward(const Eigen::VectorXd& initial, const Eigen::MatrixXd& Q,
                    const Eigen::MatrixXd& log_emission) {
  const Eigen::Index n = log_emission.rows();
  const Eigen::Index K = log_emission.cols();
  if (initial.size() != K || Q.rows() != K || Q.cols() != K)
    throw UsageError("forward: dimension mismatch");
  ForwardPass out;
  out.predictor.resize(n, K);
  out.filtered.resize(n, K);
  out.log_norm.resize(n);
  out.log_likelihood = 0.0;

  Eigen::RowVectorXd pred = initial.transpose();
  Eigen::RowVectorXd a(K);
  for (Eigen::Index t = 0; t < n; ++t) {
    out.predictor.row(t) = pred;
    double m = kNegInf;
    if (out.degenerate_step < 0) {
      for (Eigen::Index x = 0; x < K; ++x) {
        a(x) = pred(x) > 0.0 ? std::log(pred(x)) + log_emission(t, x) : kNegInf;
        m = std::max(m, a(x));
      }
    }
    if (!(m > kNegInf) || std::isnan(m)) {
      if (out.degenerate_step < 0) out.degenerate_step = static_cast<long>(t);
      out.log_norm(t) = kNegInf;
      out.log_likelihood = kNegInf;
      out.filtered.row(t) = pred;
      pred = pred * Q;
      continue;
    }
    double s = 0.0;
    for (Eigen::Index x = 0; x < K; ++x) {
      a(x) = std::exp(a(x) - m);
      s += a(x);
    }
    out.log_norm(t) = m + std::log(s);
    out.log_likelihood += out.log_norm(t);
    a /= s;
    out.filtered.row(t) = a;
    pred = a * Q;
  }
  return out;
}

double log_likelihood(const HmmParams& params, std::span<const double> y) {
  return log_likelihood(params, y, params.initial());
}

double log_likelihood(const HmmParams& params, std::span<const double> y,
                      const Eigen::VectorXd& initial) {
  if (y.empty()) throw UsageError("log_likelihood: empty observation sequence");
  return forward(initial, params.transition(), params.emission_log_table(y)).log_likelihood;
}

std::vector<double> conditional_log_densities(const HmmParams& params, std::span<const double> y) {
  if (y.empty()) throw UsageError("conditional_log_densities: empty observation sequence");
  const ForwardPass fp = forward(params.initial(), params.transition(), params.emission_log_table(y));
  return {fp.log_norm.data(), fp.log_norm.data() + fp.log_norm.size()};
}

std::vector<FilterState> run_filter(const HmmParams& params, std::span<const double> y) {
  if (y.empty()) throw UsageError("run_filter: empty observation sequence");
  const ForwardPass fp = forward(params.initial(), params.transition(), params.emission_log_table(y));
  std::vector<FilterState> states(y.size());
  double so_far = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    states[t].predictor = fp.predictor.row(static_cast<Eigen::Index>(t)).transpose();
    states[t].log_likelihood_so_far = so_far;
    so_far += fp.log_norm(static_cast<Eigen::Index>(t));
  }
  return states;
}

double windowed_conditional_log_density(const HmmParams& params, std::span<const double> window,
                                        const Eigen::VectorXd& mu) {
  if (window.size() < 2) throw UsageError("windowed_conditional_log_density: need k >= 1");
  if (mu.size() != params.num_states()) throw UsageError("windowed_conditional_log_density: mu size");
  const Eigen::MatrixXd table = params.emission_log_table(window);
  const auto k = static_cast<Eigen::Index>(window.size()) - 1;
  const double full = forward(mu, params.transition(), table).log_likelihood;
  const double past = forward(mu, params.transition(), table.topRows(k)).log_likelihood;
  if (full == kNegInf) return kNegInf;
  return full - past;
}

double forgetting_rate(double sigma_minus) {
  if (!(sigma_minus > 0.0 && sigma_minus < 0.5))
    throw UsageError("forgetting_rate: sigma_minus must lie in (0, 1/2)");
  return 1.0 - sigma_minus / (1.0 - sigma_minus);
}

double forgetting_bound(double sigma_minus, int k, int k_prime) {
  if (k < 1 || k_prime < 1) throw UsageError("forgetting_bound: window lengths must be >= 1");
  const double rho = forgetting_rate(sigma_minus);
  return std::pow(rho, std::min(k, k_prime) - 1) / (1.0 - rho);
}

}  // namespace nphmm::hmm
