#include "nphmm/serialization.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "nphmm/errors.hpp"

namespace nphmm::io {

namespace {

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
  return a;
}

Eigen::VectorXd vector_from(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw UsageError(std::string(what) + ": expected a nonempty array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw UsageError(std::string(what) + ": expected a nonempty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::VectorXd first = vector_from(j[0], what);
  Eigen::MatrixXd m(rows, first.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = vector_from(j[static_cast<std::size_t>(r)], what);
    if (row.size() != first.size()) throw UsageError(std::string(what) + ": ragged rows");
    m.row(r) = row.transpose();
  }
  return m;
}

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const char* section) {
  if (!j.is_object()) throw UsageError(std::string(section) + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : j.items())
    if (!allowed.count(item.key())) throw UsageError(std::string(section) + ": unknown key '" + item.key() + "'");
}

template <class T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

Json to_json(const model::ConstraintParams& p) {
  return Json{{"c_sigma", p.c_sigma},
              {"floor_exponent", p.floor_exponent},
              {"p", p.p},
              {"c_b", p.resolved_c_b()},
              {"scale_range", p.scale_range == model::ScaleRange::kWide ? "wide" : "unit"}};
}

model::ConstraintParams constraint_params_from_json(const Json& j) {
  reject_unknown(j, {"c_sigma", "floor_exponent", "p", "c_b", "scale_range"}, "constraints");
  model::ConstraintParams p;
  read_if(j, "c_sigma", p.c_sigma);
  read_if(j, "floor_exponent", p.floor_exponent);
  read_if(j, "p", p.p);
  if (j.contains("c_b")) p.c_b = j.at("c_b").get<double>();
  if (j.contains("scale_range")) {
    const auto s = j.at("scale_range").get<std::string>();
    if (s == "unit")
      p.scale_range = model::ScaleRange::kUnit;
    else if (s == "wide")
      p.scale_range = model::ScaleRange::kWide;
    else
      throw UsageError("constraints.scale_range must be \"unit\" or \"wide\"");
  }
  return p;
}

Json to_json(const model::Constraints& c) {
  Json j{{"n", c.n()}, {"params", to_json(c.params())}};
  j["sigma_minus"] = c.sigma_minus();
  j["floor_weight"] = c.floor_weight();
  j["b_bound"] = c.b_bound();
  j["loc_range"] = {c.loc_range().first, c.loc_range().second};
  j["max_states"] = c.max_states();
  return j;
}

model::Constraints constraints_from_json(const Json& j) {
  if (!j.contains("n") || !j.contains("params")) throw UsageError("constraint snapshot needs 'n' and 'params'");
  return model::Constraints::make(j.at("n").get<long>(), constraint_params_from_json(j.at("params")));
}

Json to_json(const model::ModelIndex& index) {
  return Json{{"K", index.K}, {"M", index.M}, {"model_dimension", index.model_dimension()}};
}

Json to_json(const model::PenaltyConfig& c) { return Json{{"c_pen", c.c_pen}, {"r", c.log_exponent}}; }

model::PenaltyConfig penalty_config_from_json(const Json& j) {
  reject_unknown(j, {"c_pen", "r"}, "penalty");
  model::PenaltyConfig c;
  read_if(j, "c_pen", c.c_pen);
  read_if(j, "r", c.log_exponent);
  if (!(c.c_pen >= 0.0) || !std::isfinite(c.c_pen)) throw UsageError("penalty.c_pen must be finite and >= 0");
  if (!std::isfinite(c.log_exponent)) throw UsageError("penalty.r must be finite");
  return c;
}

Json to_json(const fit::FitConfig& c) {
  return Json{{"max_iters", c.max_iters},     {"tol", c.tol},
              {"restarts", c.restarts},       {"seed", c.seed},
              {"inner_emission_iters", c.inner_emission_iters}, {"threads", c.threads}};
}

fit::FitConfig fit_config_from_json(const Json& j) {
  reject_unknown(j, {"max_iters", "tol", "restarts", "seed", "inner_emission_iters", "threads"}, "fit");
  fit::FitConfig c;
  read_if(j, "max_iters", c.max_iters);
  read_if(j, "tol", c.tol);
  read_if(j, "restarts", c.restarts);
  read_if(j, "seed", c.seed);
  read_if(j, "inner_emission_iters", c.inner_emission_iters);
  read_if(j, "threads", c.threads);
  c.validate();
  return c;
}

Json to_json(const fit::MixtureHmm& m) {
  Json em = Json::array();
  for (const auto& e : m.emissions)
    em.push_back(Json{{"weights", e.weights()}, {"locations", e.locations()}, {"scales", e.scales()}});
  return Json{{"initial", vector_json(m.initial)}, {"transition", matrix_json(m.transition)}, {"emissions", em}};
}

fit::MixtureHmm mixture_hmm_from_json(const Json& j, const model::Constraints& constraints) {
  fit::MixtureHmm m;
  m.initial = vector_from(j.at("initial"), "initial");
  m.transition = matrix_from(j.at("transition"), "transition");
  const auto K = m.initial.size();
  if (m.transition.rows() != K || m.transition.cols() != K)
    throw UsageError("fitted model: transition must be K x K with K = |initial|");
  const Json& em = j.at("emissions");
  if (!em.is_array() || static_cast<Eigen::Index>(em.size()) != K)
    throw UsageError("fitted model: need one emission per state");
  for (const auto& e : em)
    m.emissions.emplace_back(constraints, e.at("weights").get<std::vector<double>>(),
                             e.at("locations").get<std::vector<double>>(), e.at("scales").get<std::vector<double>>());
  return m;
}

Json to_json(const fit::FitResult& r) {
  Json j;
  j["kind"] = "fit_result";
  j["model"] = to_json(r.index);
  j["constraints"] = to_json(r.index.constraints);
  j["avg_log_likelihood"] = r.final_log_likelihood;
  j["restart_index"] = r.restart_index;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["estimate"] = to_json(r.estimate);
  j["trace"] = r.trace;
  return j;
}

fit::MixtureHmm fitted_model_from_json(const Json& j) {
  const Json* fit = &j;
  if (j.contains("chosen_fit")) fit = &j.at("chosen_fit");
  if (!fit->contains("estimate") || !fit->contains("constraints"))
    throw UsageError("model file holds neither a fit result nor a selection report");
  return mixture_hmm_from_json(fit->at("estimate"), constraints_from_json(fit->at("constraints")));
}

Json to_json(const selection::SelectionReport& report) {
  Json table = Json::array();
  for (std::size_t i = 0; i < report.table.size(); ++i) {
    const auto& row = report.table[i];
    Json r = to_json(row.index);
    r["status"] = row.ok ? "ok" : "failed";
    if (row.ok) {
      r["avg_log_likelihood"] = row.avg_log_likelihood;
      r["penalty"] = row.penalty;
      r["score"] = row.score;
    } else {
      r["diagnostic"] = row.diagnostic;
    }
    r["chosen"] = i == report.chosen_row;
    table.push_back(std::move(r));
  }
  Json j;
  j["kind"] = "selection_report";
  j["chosen"] = to_json(report.chosen());
  j["penalty"] = to_json(report.penalty_config);
  j["fit"] = to_json(report.fit_config);
  j["table"] = std::move(table);
  if (report.chosen_fit) j["chosen_fit"] = to_json(*report.chosen_fit);
  return j;
}

std::string selection_csv(const selection::SelectionReport& report) {
  std::ostringstream os;
  os << "K,M,model_dimension,status,avg_log_likelihood,penalty,score,chosen\n";
  for (std::size_t i = 0; i < report.table.size(); ++i) {
    const auto& row = report.table[i];
    os << row.index.K << ',' << row.index.M << ',' << row.index.model_dimension() << ',' << (row.ok ? "ok" : "failed")
       << ',';
    if (row.ok)
      os << format_double(row.avg_log_likelihood) << ',' << format_double(row.penalty) << ','
         << format_double(row.score);
    else
      os << ",,";
    os << ',' << (i == report.chosen_row ? 1 : 0) << '\n';
  }
  return os.str();
}

Json to_json(const truth::PredictionErrorEstimate& e) {
  return Json{{"k_hat", e.k_hat},
              {"std_error", e.std_error},
              {"chain_length", e.chain_length},
              {"burn_in", e.burn_in},
              {"batches", e.batches}};
}

Json to_json(const truth::ForgettingReport& r) {
  Json gaps = Json::array();
  for (const auto& g : r.empirical_gaps)
    gaps.push_back(Json{{"k", g.k}, {"k_prime", g.k_prime}, {"gap", g.gap}, {"bound", g.bound}});
  Json j{{"sigma_lower", r.sigma_lower}, {"sigma_upper", r.sigma_upper}, {"rho_star", r.rho_star},
         {"c_star", r.c_star}};
  // JSON has no infinity; an unbounded c* is written as null.
  j["c_mix"] = std::isfinite(r.c_mix) ? Json(r.c_mix) : Json(nullptr);
  j["n_mix"] = r.n_mix;
  j["tolerance"] = r.tolerance;
  j["violations"] = r.violations;
  j["empirical_gaps"] = std::move(gaps);
  return j;
}

Json to_json(const truth::TailMomentEstimate& e) {
  return Json{{"delta", e.delta}, {"moment", e.moment}, {"std_error", e.std_error}, {"b_star", e.b_star}};
}

void write_observations(const std::filesystem::path& path, const std::vector<double>& y) {
  std::string text = "y\n";
  text.reserve(y.size() * 26 + 2);
  char buf[40];
  for (double v : y) {
    const int len = std::snprintf(buf, sizeof buf, "%.17g\n", v);
    text.append(buf, static_cast<std::size_t>(len));
  }
  write_text(path, text);
}

std::vector<double> read_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file " + path.string());
  std::vector<double> y;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "y") continue;
    double v = 0.0;
    const char* end = line.data() + line.size();
    const auto res = std::from_chars(line.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": not a finite number: '" + line + "'");
    y.push_back(v);
  }
  if (y.empty()) throw UsageError(path.string() + ": no observations");
  return y;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

}  // namespace nphmm::io
