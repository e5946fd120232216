#include "nphmm/truth_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include "nphmm/errors.hpp"
#include "nphmm/numerics.hpp"

namespace nphmm::truth {

using numerics::kNegInf;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double normal_log_pdf(double y, double mean, double sd) {
  const double z = (y - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Emission of one quadrature node of a compact-state truth.
class NodeEmission final : public hmm::Emission {
 public:
  NodeEmission(std::shared_ptr<const CompactKernelTruth::EmissionLogFn> fn, double x) : fn_(std::move(fn)), x_(x) {}
  double log_density(double y) const override { return (*fn_)(x_, y); }

 private:
  std::shared_ptr<const CompactKernelTruth::EmissionLogFn> fn_;
  double x_;
};

}  // namespace

NormalMixtureEmission::NormalMixtureEmission(std::vector<double> weights, std::vector<double> means,
                                             std::vector<double> sds)
    : weights_(std::move(weights)), means_(std::move(means)), sds_(std::move(sds)) {
  if (weights_.empty() || means_.size() != weights_.size() || sds_.size() != weights_.size())
    throw UsageError("NormalMixtureEmission: weights, means and sds must be nonempty and of equal length");
  double total = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!(weights_[i] >= 0.0)) throw UsageError("NormalMixtureEmission: negative weight");
    if (!(sds_[i] > 0.0)) throw UsageError("NormalMixtureEmission: sd must be > 0");
    total += weights_[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw UsageError("NormalMixtureEmission: weights must sum to 1");
}

double NormalMixtureEmission::log_density(double y) const {
  double m = kNegInf;
  double terms[16];
  std::vector<double> heap;
  double* buf = terms;
  if (weights_.size() > 16) {
    heap.resize(weights_.size());
    buf = heap.data();
  }
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    buf[i] = weights_[i] > 0.0 ? std::log(weights_[i]) + normal_log_pdf(y, means_[i], sds_[i]) : kNegInf;
    m = std::max(m, buf[i]);
  }
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) acc += std::exp(buf[i] - m);
  return m + std::log(acc) - numerics::dominating_log_density(y);
}

double NormalMixtureEmission::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  std::size_t j = 0;
  double acc = 0.0;
  for (; j + 1 < weights_.size(); ++j) {
    acc += weights_[j];
    if (u < acc) break;
  }
  std::normal_distribution<double> normal(means_[j], sds_[j]);
  return normal(rng);
}

FiniteHmmTruth::FiniteHmmTruth(const hmm::HmmParams& params)
    : params_(params.with_initial(hmm::stationary_distribution(params.transition()))) {
  if (!(params.min_transition() > 0.0)) throw UsageError("FiniteHmmTruth: transition matrix must be positive");
  for (int x = 0; x < params.num_states(); ++x)
    if (!params.emission(x).can_sample()) throw UsageError("FiniteHmmTruth: emissions must be samplable");
}

CompactKernelTruth::CompactKernelTruth(KernelFn kernel, EmissionLogFn emission_log_density,
                                       EmissionSampler emission_sampler, Options options)
    : kernel_(std::move(kernel)),
      emission_log_(std::move(emission_log_density)),
      emission_sampler_(std::move(emission_sampler)),
      options_(options) {
  if (!kernel_ || !emission_log_ || !emission_sampler_)
    throw UsageError("CompactKernelTruth: kernel, emission density and sampler are required");
  if (options_.grid_nodes < 8) throw UsageError("CompactKernelTruth: quadrature grid needs at least 8 nodes");
  if (options_.burn_in < 0) throw UsageError("CompactKernelTruth: burn_in must be >= 0");
  constexpr int kCheck = 101;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < kCheck; ++i)
    for (int j = 0; j < kCheck; ++j) {
      const double q = kernel_(i / (kCheck - 1.0), j / (kCheck - 1.0));
      if (!std::isfinite(q)) throw UsageError("CompactKernelTruth: kernel density is not finite");
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
  sigma_lower_ = options_.sigma_lower.value_or(lo);
  sigma_upper_ = options_.sigma_upper.value_or(hi);
  if (!(sigma_lower_ > 0.0)) throw UsageError("CompactKernelTruth: kernel lower bound must be positive");
  if (lo < sigma_lower_ * (1.0 - 1e-12) || hi > sigma_upper_ * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "CompactKernelTruth: kernel range [" << lo << ", " << hi << "] on the check grid violates the bounds ["
       << sigma_lower_ << ", " << sigma_upper_ << "]";
    throw UsageError(os.str());
  }
}

CompactKernelTruth CompactKernelTruth::circular(double kappa, double amplitude, double emission_sd, Options options) {
  if (!(kappa >= 0.0) || !(emission_sd > 0.0))
    throw UsageError("circular truth: need kappa >= 0 and emission_sd > 0");
  const double i0 = std::cyl_bessel_i(0.0, kappa);
  auto kernel = [kappa, i0](double x, double xn) {
    return std::exp(kappa * std::cos(2.0 * std::numbers::pi * (xn - x))) / i0;
  };
  auto mean = [amplitude](double x) { return amplitude * std::cos(2.0 * std::numbers::pi * x); };
  auto log_density = [mean, emission_sd](double x, double y) {
    return normal_log_pdf(y, mean(x), emission_sd) - numerics::dominating_log_density(y);
  };
  auto sampler = [mean, emission_sd](double x, Rng& rng) {
    std::normal_distribution<double> normal(mean(x), emission_sd);
    return normal(rng);
  };
  if (!options.sigma_lower) options.sigma_lower = std::exp(-kappa) / i0;
  if (!options.sigma_upper) options.sigma_upper = std::exp(kappa) / i0;
  return CompactKernelTruth(kernel, log_density, sampler, options);
}

CompactKernelTruth CompactKernelTruth::bilinear(double strength, double amplitude, double emission_sd,
                                                Options options) {
  if (!(strength >= 0.0 && strength < 1.0) || !(emission_sd > 0.0))
    throw UsageError("bilinear truth: need strength in [0, 1) and emission_sd > 0");
  auto kernel = [strength](double x, double xn) { return 1.0 + strength * (2.0 * x - 1.0) * (2.0 * xn - 1.0); };
  auto mean = [amplitude](double x) { return amplitude * (2.0 * x - 1.0); };
  auto log_density = [mean, emission_sd](double x, double y) {
    return normal_log_pdf(y, mean(x), emission_sd) - numerics::dominating_log_density(y);
  };
  auto sampler = [mean, emission_sd](double x, Rng& rng) {
    std::normal_distribution<double> normal(mean(x), emission_sd);
    return normal(rng);
  };
  if (!options.sigma_lower) options.sigma_lower = 1.0 - strength;
  if (!options.sigma_upper) options.sigma_upper = 1.0 + strength;
  return CompactKernelTruth(kernel, log_density, sampler, options);
}

double CompactKernelTruth::sample_next_state(double x, Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (;;) {
    const double proposal = unif(rng);
    if (unif(rng) * sigma_upper_ <= kernel_(x, proposal)) return proposal;
  }
}

hmm::HmmParams CompactKernelTruth::discretize(int nodes) const {
  if (nodes < 8) throw UsageError("quadrature grid too coarse: need at least 8 nodes");
  const double h = 1.0 / (nodes - 1);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(nodes, h);
  w(0) = w(nodes - 1) = 0.5 * h;
  Eigen::MatrixXd P(nodes, nodes);
  for (int j = 0; j < nodes; ++j) {
    for (int k = 0; k < nodes; ++k) P(j, k) = w(k) * kernel_(j * h, k * h);
    P.row(j) /= P.row(j).sum();
  }
  auto fn = std::make_shared<const EmissionLogFn>(emission_log_);
  std::vector<hmm::EmissionPtr> em;
  em.reserve(static_cast<std::size_t>(nodes));
  for (int j = 0; j < nodes; ++j) em.push_back(std::make_shared<NodeEmission>(fn, j * h));
  Eigen::VectorXd pi = hmm::stationary_distribution(P);
  return hmm::HmmParams(std::move(pi), std::move(P), std::move(em));
}

IidMixtureTruth::IidMixtureTruth(hmm::EmissionPtr emission) : emission_(std::move(emission)) {
  if (!emission_ || !emission_->can_sample()) throw UsageError("IidMixtureTruth: need a samplable emission");
}

std::string truth_kind(const TruthModel& truth) {
  return std::visit(Overloaded{[](const FiniteHmmTruth&) { return std::string("finite_hmm"); },
                               [](const CompactKernelTruth&) { return std::string("compact_kernel"); },
                               [](const IidMixtureTruth&) { return std::string("iid_mixture"); }},
                    truth);
}

std::vector<double> simulate_truth(const TruthModel& truth, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw UsageError("simulate_truth: n must be >= 1");
  Rng rng(seed);
  return std::visit(
      Overloaded{[&](const FiniteHmmTruth& t) { return hmm::sample_path(t.params(), n, rng).observations; },
                 [&](const CompactKernelTruth& t) {
                   std::uniform_real_distribution<double> unif(0.0, 1.0);
                   double x = unif(rng);
                   for (int b = 0; b < t.burn_in(); ++b) x = t.sample_next_state(x, rng);
                   std::vector<double> y(n);
                   for (std::size_t i = 0; i < n; ++i) {
                     if (i > 0) x = t.sample_next_state(x, rng);
                     y[i] = t.sample_emission(x, rng);
                   }
                   return y;
                 },
                 [&](const IidMixtureTruth& t) {
                   std::vector<double> y(n);
                   for (auto& v : y) v = t.emission().sample(rng);
                   return y;
                 }},
      truth);
}

namespace {

// Finite HMM that represents the truth for filtering purposes, if any.
std::optional<hmm::HmmParams> filter_model(const TruthModel& truth, int grid_nodes) {
  if (const auto* f = std::get_if<FiniteHmmTruth>(&truth)) return f->params();
  if (const auto* c = std::get_if<CompactKernelTruth>(&truth))
    return c->discretize(grid_nodes > 0 ? grid_nodes : c->grid_nodes());
  return std::nullopt;
}

}  // namespace

std::vector<double> truth_conditional_log_densities(const TruthModel& truth, std::span<const double> y,
                                                    int grid_nodes) {
  if (y.empty()) throw UsageError("truth_conditional_log_densities: empty history");
  if (grid_nodes != 0 && grid_nodes < 8) throw UsageError("quadrature grid too coarse: need at least 8 nodes");
  if (const auto* iid = std::get_if<IidMixtureTruth>(&truth)) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = iid->emission().log_density(y[i]);
    return out;
  }
  return hmm::conditional_log_densities(*filter_model(truth, grid_nodes), y);
}

double truth_conditional_log_density(const TruthModel& truth, std::span<const double> history, int grid_nodes) {
  return truth_conditional_log_densities(truth, history, grid_nodes).back();
}

PredictionErrorEstimate estimate_prediction_error(const TruthModel& truth, const hmm::HmmParams& theta,
                                                  const PredictionErrorOptions& options) {
  if (!(options.n_mc > options.burn_in)) throw UsageError("estimate_prediction_error: need n_mc > burn_in");
  if (options.batches < 2) throw UsageError("estimate_prediction_error: need at least 2 batches");
  const std::vector<double> y = simulate_truth(truth, options.n_mc, options.seed);
  const std::vector<double> log_true = truth_conditional_log_densities(truth, y);
  const std::vector<double> log_model = hmm::conditional_log_densities(theta, y);
  std::vector<double> summands;
  summands.reserve(options.n_mc - options.burn_in);
  for (std::size_t i = options.burn_in; i < options.n_mc; ++i) {
    const double d = log_true[i] - log_model[i];
    if (!std::isfinite(d)) {
      std::ostringstream os;
      os << "estimate_prediction_error: non-finite log-density ratio at step " << i;
      throw EstimationError(os.str(), i);
    }
    summands.push_back(d);
  }
  const auto bm = numerics::batch_means(summands, options.batches);
  return PredictionErrorEstimate{bm.mean, bm.std_error, options.n_mc, options.burn_in, bm.batches};
}

ForgettingReport forgetting_constants(double sigma_lower, double sigma_upper) {
  if (!(sigma_lower > 0.0)) throw UsageError("forgetting_constants: invalid truth, sigma_lower must be > 0");
  if (!(sigma_upper >= sigma_lower)) throw UsageError("forgetting_constants: need sigma_upper >= sigma_lower");
  if (sigma_lower > 1.0 + 1e-12)
    throw UsageError("forgetting_constants: a probability kernel density cannot exceed 1 everywhere");
  ForgettingReport r;
  r.sigma_lower = sigma_lower;
  r.sigma_upper = sigma_upper;
  r.rho_star = 1.0 - sigma_lower / sigma_upper;
  r.c_star = 1.0 / (1.0 - r.rho_star);
  r.c_mix = sigma_lower >= 1.0 ? std::numeric_limits<double>::infinity() : -std::log1p(-sigma_lower) / 2.0;
  r.n_mix = 1;
  return r;
}

ForgettingReport forgetting_constants(const TruthModel& truth) {
  return std::visit(Overloaded{[](const FiniteHmmTruth& t) {
                                 const auto& Q = t.params().transition();
                                 const double K = static_cast<double>(Q.rows());
                                 return forgetting_constants(std::min(1.0, K * Q.minCoeff()),
                                                             std::max(1.0, K * Q.maxCoeff()));
                               },
                               [](const CompactKernelTruth& t) {
                                 return forgetting_constants(t.sigma_lower(), t.sigma_upper());
                               },
                               [](const IidMixtureTruth&) { return forgetting_constants(1.0, 1.0); }},
                    truth);
}

ForgettingReport check_forgetting(const TruthModel& truth, int n_sequences, std::span<const int> k_values,
                                  std::uint64_t seed) {
  if (n_sequences < 1) throw UsageError("check_forgetting: need at least one sequence");
  if (k_values.empty()) throw UsageError("check_forgetting: need window lengths");
  for (int k : k_values)
    if (k < 1) throw UsageError("check_forgetting: window lengths must be >= 1");
  ForgettingReport report = forgetting_constants(truth);
  const int k_max = *std::max_element(k_values.begin(), k_values.end());
  const std::size_t len = static_cast<std::size_t>(k_max) + 1;
  const auto model = filter_model(truth, 0);
  const std::size_t nk = k_values.size();
  std::vector<double> gaps(nk * nk, 0.0);
  std::vector<double> L(nk);
  for (int s = 0; s < n_sequences; ++s) {
    const std::vector<double> y = simulate_truth(truth, len, derive_seed(seed, static_cast<std::uint64_t>(s)));
    for (std::size_t a = 0; a < nk; ++a) {
      const auto window = std::span<const double>(y).last(static_cast<std::size_t>(k_values[a]) + 1);
      L[a] = model ? hmm::windowed_conditional_log_density(*model, window, model->initial())
                   : std::get<IidMixtureTruth>(truth).emission().log_density(window.back());
    }
    for (std::size_t a = 0; a < nk; ++a)
      for (std::size_t b = 0; b < nk; ++b) gaps[a * nk + b] = std::max(gaps[a * nk + b], std::abs(L[a] - L[b]));
  }
  for (std::size_t a = 0; a < nk; ++a) {
    for (std::size_t b = a + 1; b < nk; ++b) {
      ForgettingGap g;
      g.k = k_values[a];
      g.k_prime = k_values[b];
      g.gap = gaps[a * nk + b];
      g.bound = report.c_star * std::pow(report.rho_star, std::min(g.k, g.k_prime) - 1);
      if (g.gap > g.bound + report.tolerance) ++report.violations;
      report.empirical_gaps.push_back(g);
    }
  }
  return report;
}

TailMomentEstimate estimate_tail_moment(const TruthModel& truth, std::size_t n, std::size_t burn_in, double delta,
                                        std::uint64_t seed, int batches) {
  if (!(delta > 0.0)) throw UsageError("estimate_tail_moment: delta must be > 0");
  if (!(n > burn_in)) throw UsageError("estimate_tail_moment: need n > burn_in");
  const std::vector<double> y = simulate_truth(truth, n, seed);
  const std::vector<double> lp = truth_conditional_log_densities(truth, y);
  std::vector<double> values;
  values.reserve(n - burn_in);
  for (std::size_t i = burn_in; i < n; ++i) values.push_back(std::exp(delta * lp[i]));
  const auto bm = numerics::batch_means(values, batches);
  return TailMomentEstimate{delta, bm.mean, bm.std_error, (1.0 + std::log(bm.mean)) / delta};
}

}  // namespace nphmm::truth
