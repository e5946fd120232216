#include "nphmm/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>

#include "nphmm/errors.hpp"
#include "nphmm/numerics.hpp"
#include "nphmm/parallel.hpp"
#include "nphmm/random.hpp"

namespace nphmm::fit {

using model::EmissionMixture;
using numerics::kNegInf;

void FitConfig::validate() const {
  if (max_iters < 1) throw UsageError("fit: max_iters must be >= 1");
  if (!(tol > 0.0)) throw UsageError("fit: tol must be > 0");
  if (restarts < 1) throw UsageError("fit: restarts must be >= 1");
  if (inner_emission_iters < 1) throw UsageError("fit: inner_emission_iters must be >= 1");
  if (threads < 0) throw UsageError("fit: threads must be >= 0");
}

hmm::HmmParams MixtureHmm::to_params() const {
  std::vector<hmm::EmissionPtr> em;
  em.reserve(emissions.size());
  for (const auto& e : emissions) em.push_back(std::make_shared<EmissionMixture>(e));
  return hmm::HmmParams(initial, transition, std::move(em));
}

std::string feasibility_violation(const MixtureHmm& m, const model::ModelIndex& index, double slack) {
  std::ostringstream os;
  const double sigma = index.constraints.sigma_minus();
  if (m.initial.size() != index.K || m.transition.rows() != index.K ||
      static_cast<int>(m.emissions.size()) != index.K)
    return "state count differs from the model index";
  if (m.transition.minCoeff() < sigma - slack) {
    os << "min Q = " << m.transition.minCoeff() << " < sigma_minus = " << sigma;
    return os.str();
  }
  if (m.initial.minCoeff() < sigma - slack) {
    os << "min pi = " << m.initial.minCoeff() << " < sigma_minus = " << sigma;
    return os.str();
  }
  if (std::abs(m.initial.sum() - 1.0) > 1e-10) return "pi does not sum to 1";
  for (Eigen::Index x = 0; x < m.transition.rows(); ++x)
    if (std::abs(m.transition.row(x).sum() - 1.0) > 1e-10) return "Q row does not sum to 1";
  const auto [lo_mu, hi_mu] = index.constraints.loc_range();
  const auto [lo_s, hi_s] = index.constraints.scale_bounds(index.M);
  for (const auto& e : m.emissions) {
    if (e.components() != index.M) return "mixture component count differs from M";
    if (e.constraints().floor_weight() != index.constraints.floor_weight()) return "floor weight changed";
    for (int j = 0; j < e.components(); ++j) {
      if (e.locations()[j] < lo_mu || e.locations()[j] > hi_mu) return "location outside [-n, n]";
      if (e.scales()[j] < lo_s || e.scales()[j] > hi_s) return "scale outside its range";
    }
  }
  return {};
}

namespace {

Posteriors e_step_table(const Eigen::VectorXd& initial, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& log_em) {
  const Eigen::Index n = log_em.rows();
  const hmm::ForwardPass fp = hmm::forward(initial, Q, log_em);
  if (fp.degenerate_step >= 0) {
    std::ostringstream os;
    os << "e_step: zero likelihood at observation " << fp.degenerate_step;
    throw DegenerateFitError(os.str(), static_cast<std::size_t>(fp.degenerate_step));
  }
  const Eigen::Index K = Q.rows();

  Posteriors out;
  out.log_likelihood = fp.log_likelihood;
  out.state.resize(n, K);
  out.pair.resize(static_cast<std::size_t>(n - 1));

  // beta_t(x) = p(y_{t+1}^n | X_t = x) / p(y_{t+1}^n | y_1^t)
  Eigen::RowVectorXd beta = Eigen::RowVectorXd::Ones(K);
  out.state.row(n - 1) = fp.filtered.row(n - 1);
  Eigen::RowVectorXd scaled(K);
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    for (Eigen::Index x = 0; x < K; ++x)
      scaled(x) = std::exp(log_em(t + 1, x) - fp.log_norm(t + 1)) * beta(x);
    Eigen::MatrixXd pair = fp.filtered.row(t).transpose() * scaled;
    pair.array() *= Q.array();
    const double z = pair.sum();
    pair /= z;
    out.pair[static_cast<std::size_t>(t)] = pair;
    beta = (Q * scaled.transpose()).transpose();
    Eigen::RowVectorXd post = fp.filtered.row(t).cwiseProduct(beta);
    out.state.row(t) = post / post.sum();
  }
  return out;
}

// Same values as HmmParams::emission_log_table, with log G(y_t) cached.
Eigen::MatrixXd mixture_log_table(std::span<const EmissionMixture> emissions, std::span<const double> y,
                                  const std::vector<double>& log_g) {
  Eigen::MatrixXd table(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(emissions.size()));
  for (std::size_t x = 0; x < emissions.size(); ++x) {
    const auto& e = emissions[x];
    const double log_f = e.constraints().log_floor_weight();
    const double log_1mf = std::log1p(-e.constraints().floor_weight());
    for (std::size_t t = 0; t < y.size(); ++t) {
      const double k = e.kernel_log_density(y[t]);
      table(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(x)) =
          k == kNegInf ? log_f : numerics::log_add_exp(log_f, log_1mf + k - log_g[t]);
    }
  }
  return table;
}

std::vector<double> dominating_log_table(std::span<const double> y) {
  std::vector<double> out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) out[t] = numerics::dominating_log_density(y[t]);
  return out;
}

Posteriors e_step_mixtures(const MixtureHmm& m, std::span<const double> y, const std::vector<double>& log_g) {
  return e_step_table(m.initial, m.transition, mixture_log_table(m.emissions, y, log_g));
}

}  // namespace

Posteriors e_step(const hmm::HmmParams& params, std::span<const double> y) {
  if (y.size() < 2) throw UsageError("e_step: need at least two observations");
  return e_step_table(params.initial(), params.transition(), params.emission_log_table(y));
}

TransitionUpdate m_step_transitions(std::span<const Eigen::MatrixXd> pair_posteriors,
                                    const Eigen::MatrixXd& state_posteriors, double sigma_minus) {
  const Eigen::Index K = state_posteriors.cols();
  if (state_posteriors.rows() < 1) throw UsageError("m_step_transitions: empty posteriors");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(K, K);
  for (const auto& p : pair_posteriors) counts += p;
  TransitionUpdate out;
  out.transition.resize(K, K);
  for (Eigen::Index x = 0; x < K; ++x)
    out.transition.row(x) = model::floored_simplex_argmax(counts.row(x).transpose(), sigma_minus).transpose();
  out.initial = model::floored_simplex_argmax(state_posteriors.row(0).transpose(), sigma_minus);
  return out;
}

namespace {

// argmin_mu sum_t c_t (y_t - mu)^p for even p (convex in mu).
double weighted_power_center(std::span<const double> y, const Eigen::Ref<const Eigen::VectorXd>& c, int p) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double wsum = 0.0;
  double wmean = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double w = c(static_cast<Eigen::Index>(t));
    if (w <= 0.0) continue;
    lo = std::min(lo, y[t]);
    hi = std::max(hi, y[t]);
    wsum += w;
    wmean += w * y[t];
  }
  wmean /= wsum;
  if (p == 2 || !(hi > lo)) return wmean;
  // g(mu) = sum c (mu - y)^{p-1} is increasing; safeguarded Newton on [lo, hi].
  double mu = wmean;
  for (int it = 0; it < 100; ++it) {
    double g = 0.0;
    double dg = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      const double w = c(static_cast<Eigen::Index>(t));
      if (w <= 0.0) continue;
      const double d = mu - y[t];
      const double dp2 = std::pow(d, p - 2);
      g += w * dp2 * d;
      dg += w * (p - 1) * dp2;
    }
    if (g > 0.0) hi = mu;
    else lo = mu;
    double next = dg > 0.0 ? mu - g / dg : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - mu) <= 1e-13 * (1.0 + std::abs(mu))) return next;
    mu = next;
  }
  return mu;
}

// Component responsibilities c(t, j) = r_t p(component j | y_t) and the
// objective sum_t r_t log gamma(y_t), in one pass.
double responsibilities(const EmissionMixture& mix, std::span<const double> y, const std::vector<double>& log_g,
                        const Eigen::Ref<const Eigen::VectorXd>& r, double log_f, double log_1mf,
                        Eigen::MatrixXd& c, std::vector<double>& comp) {
  const int M = mix.components();
  double obj = 0.0;
  for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(y.size()); ++t) {
    const double rt = r(t);
    if (rt <= 0.0) {
      c.row(t).setZero();
      continue;
    }
    const double shift = log_1mf - log_g[t];
    double top = log_f;
    for (int j = 0; j < M; ++j) {
      comp[j] = mix.component_log_term(j, y[t]) + shift;
      top = std::max(top, comp[j]);
    }
    double acc = std::exp(log_f - top);
    for (int j = 0; j < M; ++j) {
      comp[j] = std::exp(comp[j] - top);
      acc += comp[j];
    }
    const double inv = rt / acc;
    for (int j = 0; j < M; ++j) c(t, j) = comp[j] * inv;
    obj += rt * (top + std::log(acc));
  }
  return obj;
}

EmissionMixture refine_mixture(std::span<const double> y, const std::vector<double>& log_g,
                               const Eigen::Ref<const Eigen::VectorXd>& r,
                               const EmissionMixture& start, int inner_iters) {
  const model::Constraints& cons = start.constraints();
  const int M = start.components();
  const int p = cons.p();
  const double log_f = cons.log_floor_weight();
  const double log_1mf = std::log1p(-cons.floor_weight());
  const auto [lo_mu, hi_mu] = cons.loc_range();
  const auto [lo_s, hi_s] = cons.scale_bounds(M);
  const auto n = static_cast<Eigen::Index>(y.size());

  EmissionMixture best = start;
  Eigen::MatrixXd c(n, M);
  Eigen::MatrixXd c_next(n, M);
  std::vector<double> comp(static_cast<std::size_t>(M));
  double best_obj = responsibilities(best, y, log_g, r, log_f, log_1mf, c, comp);
  for (int it = 0; it < inner_iters; ++it) {
    const auto& mu = best.locations();
    const auto& s = best.scales();
    const Eigen::VectorXd C = c.colwise().sum().transpose();
    const double C_total = C.sum();
    if (!(C_total > 0.0)) break;
    std::vector<double> nw(M), nmu(mu), ns(s);
    for (int j = 0; j < M; ++j) nw[j] = C(j) / C_total;
    for (int j = 0; j < M; ++j) {
      if (!(C(j) > 1e-300)) continue;
      nmu[j] = std::clamp(weighted_power_center(y, c.col(j), p), lo_mu, hi_mu);
      double moment = 0.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        const double ctj = c(t, j);
        if (ctj <= 0.0) continue;
        const double d2 = (y[t] - nmu[j]) * (y[t] - nmu[j]);
        double dp = d2;
        for (int k = 2; k < p; k += 2) dp *= d2;
        moment += ctj * dp;
      }
      // argmax_s of -C log s - moment / s^p, then clipped (unimodal in s).
      const double s_opt = std::pow(p * moment / C(j), 1.0 / p);
      ns[j] = std::clamp(s_opt, lo_s, hi_s);
    }
    double wsum = 0.0;
    for (double v : nw) wsum += v;
    for (double& v : nw) v /= wsum;
    EmissionMixture candidate(cons, std::move(nw), std::move(nmu), std::move(ns));
    const double obj = responsibilities(candidate, y, log_g, r, log_f, log_1mf, c_next, comp);
    if (!(obj >= best_obj)) break;
    const bool stalled = obj - best_obj <= 1e-13 * std::abs(best_obj);
    best = std::move(candidate);
    best_obj = obj;
    std::swap(c, c_next);
    if (stalled) break;
  }
  return best;
}

}  // namespace

std::vector<EmissionMixture> m_step_emissions(std::span<const double> y, const Eigen::MatrixXd& state_posteriors,
                                              std::span<const EmissionMixture> current, const FitConfig& config) {
  const auto K = static_cast<Eigen::Index>(current.size());
  if (state_posteriors.cols() != K || state_posteriors.rows() != static_cast<Eigen::Index>(y.size()))
    throw UsageError("m_step_emissions: posterior table does not match data and states");
  const std::vector<double> log_g = dominating_log_table(y);
  std::vector<EmissionMixture> out;
  out.reserve(current.size());
  for (Eigen::Index x = 0; x < K; ++x) {
    const auto r = state_posteriors.col(x);
    if (!(r.sum() > 0.0)) {
      out.push_back(current[x]);
      continue;
    }
    out.push_back(refine_mixture(y, log_g, r, current[x], config.inner_emission_iters));
  }
  return out;
}

MixtureHmm initialize(std::span<const double> y, const model::ModelIndex& index, std::uint64_t restart_seed) {
  const int K = index.K;
  const int M = index.M;
  if (y.size() < static_cast<std::size_t>(K) * M) throw UsageError("initialize: need n >= K M");
  const model::Constraints& cons = index.constraints;
  Rng rng(restart_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double u) {
    const double pos = u * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
  };
  const double spread = numerics::sample_std_dev(y);
  const double median = quantile(0.5);
  const double jitter = 1e-2 * spread / M + 1e-6 * (1.0 + std::abs(median));
  const auto [lo_mu, hi_mu] = cons.loc_range();
  const auto [lo_s, hi_s] = cons.scale_bounds(M);
  const double scale = std::clamp(spread / M, lo_s, hi_s);

  MixtureHmm m;
  m.emissions.reserve(static_cast<std::size_t>(K));
  for (int x = 0; x < K; ++x) {
    std::vector<double> locs(static_cast<std::size_t>(M));
    for (int j = 0; j < M; ++j) {
      // State x, component j draws from stratum x + K j of K M quantile strata.
      const double level = (x + K * j + unif(rng)) / (static_cast<double>(K) * M);
      locs[j] = std::clamp(quantile(level) + jitter * (2.0 * unif(rng) - 1.0), lo_mu, hi_mu);
    }
    m.emissions.emplace_back(cons, std::vector<double>(M, 1.0 / M), std::move(locs),
                             std::vector<double>(M, scale));
  }
  Eigen::MatrixXd raw(K, K);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) raw(a, b) = 1.0 / K + unif(rng) / K;
  m.transition = model::project_transition(raw, cons.sigma_minus());
  m.initial = model::project_distribution(hmm::stationary_distribution(m.transition), cons.sigma_minus());
  return m;
}

namespace {

std::mutex audit_mutex;
TraceAudit audit;

void record_trace(const std::vector<double>& trace, double rejected_drop) {
  constexpr double kSlack = 1e-8;
  std::lock_guard lock(audit_mutex);
  ++audit.runs;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    ++audit.steps;
    const double drop = trace[i - 1] - trace[i];
    audit.worst_drop = std::max(audit.worst_drop, drop);
    if (drop > kSlack) ++audit.decreasing_steps;
  }
  audit.worst_drop = std::max(audit.worst_drop, rejected_drop);
  if (rejected_drop > kSlack) ++audit.rejected_steps;
}

}  // namespace

TraceAudit trace_audit() {
  std::lock_guard lock(audit_mutex);
  return audit;
}

void reset_trace_audit() {
  std::lock_guard lock(audit_mutex);
  audit = TraceAudit{};
}

FitResult run_em(std::span<const double> y, const model::ModelIndex& index, MixtureHmm start,
                 const FitConfig& config, int restart_index) {
  config.validate();
  const double n = static_cast<double>(y.size());
  const double sigma = index.constraints.sigma_minus();
  MixtureHmm current = std::move(start);
  if (y.size() < 2) throw UsageError("run_em: need at least two observations");
  const std::vector<double> log_g = dominating_log_table(y);
  Posteriors post = e_step_mixtures(current, y, log_g);
  std::vector<double> trace{post.log_likelihood / n};
  bool converged = false;
  int iterations = 0;
  double rejected_drop = 0.0;
  for (int it = 0; it < config.max_iters; ++it) {
    TransitionUpdate tu = m_step_transitions(post.pair, post.state, sigma);
    MixtureHmm candidate{std::move(tu.initial), std::move(tu.transition),
                         m_step_emissions(y, post.state, current.emissions, config)};
    Posteriors candidate_post = e_step_mixtures(candidate, y, log_g);
    const double gain = candidate_post.log_likelihood - post.log_likelihood;
    if (!(gain >= 0.0)) {
      rejected_drop = std::isfinite(gain) ? -gain / n : std::numeric_limits<double>::infinity();
      // Only reachable through rounding at a fixed point; keep the last iterate.
      converged = gain > -1e-9 * std::abs(post.log_likelihood);
      break;
    }
    current = std::move(candidate);
    post = std::move(candidate_post);
    trace.push_back(post.log_likelihood / n);
    ++iterations;
    if (gain <= config.tol * std::abs(post.log_likelihood)) {
      converged = true;
      break;
    }
  }
  record_trace(trace, rejected_drop);
  hmm::HmmParams params = current.to_params();
  return FitResult{index,         std::move(current), std::move(params), post.log_likelihood / n,
                   std::move(trace), restart_index,  converged,         iterations,
                   rejected_drop};
}

FitResult fit_model(std::span<const double> y, const model::ModelIndex& index, const FitConfig& config) {
  config.validate();
  if (y.size() < 2) throw UsageError("fit_model: need at least two observations");
  if (index.K > index.constraints.max_states())
    throw UsageError("fit_model: K exceeds log n / (2 c_sigma)");
  std::vector<std::optional<FitResult>> results(static_cast<std::size_t>(config.restarts));
  std::vector<std::string> diagnostics(static_cast<std::size_t>(config.restarts));
  parallel_for(results.size(), config.threads, [&](std::size_t r) {
    try {
      MixtureHmm start = initialize(y, index, derive_seed(config.seed, r));
      results[r] = run_em(y, index, std::move(start), config, static_cast<int>(r));
    } catch (const std::exception& e) {
      diagnostics[r] = "restart " + std::to_string(r) + ": " + e.what();
    }
  });
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (!results[r] || !std::isfinite(results[r]->final_log_likelihood)) continue;
    if (!best || results[r]->final_log_likelihood > results[*best]->final_log_likelihood) best = r;
  }
  if (!best) {
    std::ostringstream os;
    os << "fit_model: all " << config.restarts << " restarts failed for K = " << index.K << ", M = " << index.M;
    throw FitFailureError(os.str(), diagnostics);
  }
  return std::move(*results[*best]);
}

}  // namespace nphmm::fit
