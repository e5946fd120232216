#include "nphmm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#include "nphmm/errors.hpp"
#include "nphmm/parallel.hpp"
#include "nphmm/select.hpp"

namespace nphmm::experiment {

using io::Json;

namespace {

Json metadata() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return Json{{"created_utc", buf}, {"generator", "nphmm"}};
}

void check_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& section) {
  if (!j.is_object()) throw UsageError(section + ": expected an object");
  for (const auto& item : j.items())
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; }) == keys.end())
      throw UsageError(section + ": unknown key '" + item.key() + "'");
}

template <class T>
T required(const Json& j, const char* key, const std::string& section) {
  if (!j.contains(key)) throw UsageError(section + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(section + "." + key + ": " + e.what());
  }
}

template <class T>
void optional_key(const Json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(section + "." + key + ": " + e.what());
  }
}

std::shared_ptr<const truth::NormalMixtureEmission> normal_mixture(const Json& j, const std::string& section) {
  return std::make_shared<truth::NormalMixtureEmission>(required<std::vector<double>>(j, "weights", section),
                                                        required<std::vector<double>>(j, "means", section),
                                                        required<std::vector<double>>(j, "sds", section));
}

// Artifact wrapper: payload plus the resolved config and a metadata block
// holding the only non-deterministic field.
Json artifact(const ExperimentConfig& config, const char* command, Json payload) {
  Json j;
  j["command"] = command;
  j["config"] = config.to_json();
  j["result"] = std::move(payload);
  j["metadata"] = metadata();
  return j;
}

fit::FitConfig replicate_fit_config(const ExperimentConfig& config, std::uint64_t replicate_seed) {
  fit::FitConfig f = config.fit;
  f.seed = replicate_seed;
  return f;
}

std::vector<model::ModelIndex> grid_for(const ExperimentConfig& config, long n) {
  return model::model_grid(n, config.constraints, config.grid_caps);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

truth::TruthModel build_truth(const Json& spec) {
  const std::string section = "truth";
  if (!spec.is_object()) throw UsageError("truth: expected an object");
  const auto kind = required<std::string>(spec, "kind", section);
  if (kind == "finite_hmm") {
    check_keys(spec, {"kind", "transition", "emissions"}, section);
    const auto rows = required<std::vector<std::vector<double>>>(spec, "transition", section);
    const auto K = static_cast<Eigen::Index>(rows.size());
    if (K == 0) throw UsageError("truth.transition: empty");
    Eigen::MatrixXd Q(K, K);
    for (Eigen::Index r = 0; r < K; ++r) {
      if (static_cast<Eigen::Index>(rows[r].size()) != K) throw UsageError("truth.transition: must be square");
      for (Eigen::Index c = 0; c < K; ++c) Q(r, c) = rows[r][c];
    }
    const Json& em = spec.at("emissions");
    if (!em.is_array() || static_cast<Eigen::Index>(em.size()) != K)
      throw UsageError("truth.emissions: need one entry per state");
    std::vector<hmm::EmissionPtr> emissions;
    for (std::size_t x = 0; x < em.size(); ++x) {
      const std::string s = "truth.emissions[" + std::to_string(x) + "]";
      check_keys(em[x], {"weights", "means", "sds"}, s);
      emissions.push_back(normal_mixture(em[x], s));
    }
    if (!(Q.minCoeff() > 0.0)) throw UsageError("truth.transition: entries must be > 0");
    // Start from the uniform law; FiniteHmmTruth replaces it by the stationary one.
    return truth::FiniteHmmTruth(hmm::HmmParams(Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K)), Q,
                                                std::move(emissions)));
  }
  if (kind == "compact_kernel") {
    check_keys(spec,
               {"kind", "family", "kappa", "strength", "amplitude", "emission_sd", "grid_nodes", "burn_in"},
               section);
    truth::CompactKernelTruth::Options opts;
    optional_key(spec, "grid_nodes", opts.grid_nodes, section);
    optional_key(spec, "burn_in", opts.burn_in, section);
    const auto family = required<std::string>(spec, "family", section);
    const double amplitude = required<double>(spec, "amplitude", section);
    const double sd = required<double>(spec, "emission_sd", section);
    if (family == "circular")
      return truth::CompactKernelTruth::circular(required<double>(spec, "kappa", section), amplitude, sd, opts);
    if (family == "bilinear")
      return truth::CompactKernelTruth::bilinear(required<double>(spec, "strength", section), amplitude, sd, opts);
    throw UsageError("truth.family must be \"circular\" or \"bilinear\"");
  }
  if (kind == "iid_mixture") {
    check_keys(spec, {"kind", "weights", "means", "sds"}, section);
    return truth::IidMixtureTruth(normal_mixture(spec, section));
  }
  throw UsageError("truth.kind must be finite_hmm, compact_kernel or iid_mixture");
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  check_keys(j,
             {"truth", "n", "n_grid", "grid", "model", "constraints", "penalty", "fit", "evaluate", "replicates",
              "seed", "output_dir"},
             "config");
  ExperimentConfig c;
  if (!j.contains("truth")) throw UsageError("config: missing 'truth'");
  c.truth_spec = j.at("truth");
  if (j.contains("n") == j.contains("n_grid")) throw UsageError("config: give exactly one of 'n' and 'n_grid'");
  if (j.contains("n")) {
    c.n_values = {required<long>(j, "n", "config")};
  } else {
    c.n_values = required<std::vector<long>>(j, "n_grid", "config");
    c.has_n_grid = true;
    if (c.n_values.empty()) throw UsageError("config.n_grid: empty");
  }
  for (long n : c.n_values)
    if (n < 3) throw UsageError("config: every n must be >= 3");

  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    check_keys(g, {"max_states", "max_components"}, "grid");
    if (g.contains("max_states")) c.grid_caps.max_states = required<int>(g, "max_states", "grid");
    if (g.contains("max_components")) c.grid_caps.max_components = required<int>(g, "max_components", "grid");
  }
  if (j.contains("constraints")) c.constraints = io::constraint_params_from_json(j.at("constraints"));
  if (j.contains("penalty")) c.penalty = io::penalty_config_from_json(j.at("penalty"));
  if (j.contains("fit")) {
    if (j.at("fit").contains("seed")) throw UsageError("fit.seed: fit seeds are derived from the master seed");
    c.fit = io::fit_config_from_json(j.at("fit"));
  }
  if (j.contains("evaluate")) {
    const Json& e = j.at("evaluate");
    check_keys(e, {"n_mc", "burn_in", "batches", "forgetting_sequences", "forgetting_k", "tail_delta"}, "evaluate");
    optional_key(e, "n_mc", c.evaluate.n_mc, "evaluate");
    optional_key(e, "burn_in", c.evaluate.burn_in, "evaluate");
    optional_key(e, "batches", c.evaluate.batches, "evaluate");
    optional_key(e, "forgetting_sequences", c.evaluate.forgetting_sequences, "evaluate");
    optional_key(e, "forgetting_k", c.evaluate.forgetting_k, "evaluate");
    optional_key(e, "tail_delta", c.evaluate.tail_delta, "evaluate");
  }
  if (!(c.evaluate.n_mc > c.evaluate.burn_in)) throw UsageError("evaluate: need n_mc > burn_in");
  if (c.evaluate.batches < 2) throw UsageError("evaluate.batches must be >= 2");
  if (c.evaluate.forgetting_sequences < 1) throw UsageError("evaluate.forgetting_sequences must be >= 1");
  if (c.evaluate.forgetting_k.empty()) throw UsageError("evaluate.forgetting_k: empty");
  for (int k : c.evaluate.forgetting_k)
    if (k < 1) throw UsageError("evaluate.forgetting_k: entries must be >= 1");
  if (!(c.evaluate.tail_delta > 0.0)) throw UsageError("evaluate.tail_delta must be > 0");

  optional_key(j, "replicates", c.replicates, "config");
  if (c.replicates < 1) throw UsageError("config.replicates must be >= 1");
  optional_key(j, "seed", c.seed, "config");
  if (j.contains("output_dir")) c.output_dir = required<std::string>(j, "output_dir", "config");

  // Re-validate module invariants now, before any compute.
  build_truth(c.truth_spec);
  for (long n : c.n_values) {
    model::Constraints::make(n, c.constraints);
    grid_for(c, n);
  }
  if (j.contains("model")) {
    const Json& m = j.at("model");
    check_keys(m, {"K", "M"}, "model");
    model::ModelIndex idx{required<int>(m, "K", "model"), required<int>(m, "M", "model"),
                          model::Constraints::make(c.n_values.front(), c.constraints)};
    if (idx.K < 1 || idx.M < 1) throw UsageError("model: K and M must be >= 1");
    if (idx.K > idx.constraints.max_states()) throw UsageError("model: K exceeds floor(log n / (2 c_sigma))");
    c.fixed_model = idx;
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_json(io::read_json(path));
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["truth"] = truth_spec;
  if (has_n_grid)
    j["n_grid"] = n_values;
  else
    j["n"] = n_values.front();
  Json grid = Json::object();
  if (grid_caps.max_states) grid["max_states"] = *grid_caps.max_states;
  if (grid_caps.max_components) grid["max_components"] = *grid_caps.max_components;
  j["grid"] = grid;
  if (fixed_model) j["model"] = Json{{"K", fixed_model->K}, {"M", fixed_model->M}};
  j["constraints"] = io::to_json(constraints);
  j["penalty"] = io::to_json(penalty);
  Json f = io::to_json(fit);
  f.erase("seed");
  j["fit"] = f;
  j["evaluate"] = Json{{"n_mc", evaluate.n_mc},
                       {"burn_in", evaluate.burn_in},
                       {"batches", evaluate.batches},
                       {"forgetting_sequences", evaluate.forgetting_sequences},
                       {"forgetting_k", evaluate.forgetting_k},
                       {"tail_delta", evaluate.tail_delta}};
  j["replicates"] = replicates;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  return j;
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t n_index, int replicate) {
  return derive_seed(derive_seed(master, n_index), static_cast<std::uint64_t>(replicate));
}

std::vector<std::filesystem::path> run_simulate(const ExperimentConfig& config) {
  const auto truth = build_truth(config.truth_spec);
  std::vector<std::filesystem::path> written;
  Json files = Json::array();
  for (std::size_t i = 0; i < config.n_values.size(); ++i) {
    const long n = config.n_values[i];
    for (int r = 0; r < config.replicates; ++r) {
      std::ostringstream name;
      name << "y";
      if (config.has_n_grid) name << "_n" << n;
      name << "_rep" << r << ".csv";
      const auto path = config.output_dir / name.str();
      io::write_observations(path, truth::simulate_truth(truth, static_cast<std::size_t>(n),
                                                         replicate_seed(config.seed, i, r)));
      written.push_back(path);
      files.push_back(Json{{"n", n}, {"replicate", r}, {"file", name.str()}});
    }
  }
  const auto manifest = config.output_dir / "simulate.json";
  io::write_text(manifest, artifact(config, "simulate", Json{{"files", files}}).dump(2) + "\n");
  written.push_back(manifest);
  return written;
}

std::vector<std::filesystem::path> run_fit(const ExperimentConfig& config, const std::filesystem::path& data) {
  if (!config.fixed_model) throw UsageError("fit: config needs a 'model' section with K and M");
  const auto y = io::read_observations(data);
  const auto index = model::ModelIndex{config.fixed_model->K, config.fixed_model->M,
                                       model::Constraints::make(static_cast<long>(y.size()), config.constraints)};
  if (index.K > index.constraints.max_states())
    throw UsageError("fit: K exceeds floor(log n / (2 c_sigma)) for this data length");
  const auto result = fit::fit_model(y, index, replicate_fit_config(config, replicate_seed(config.seed, 0, 0)));
  Json payload = io::to_json(result);
  payload["data"] = data.string();
  const auto path = config.output_dir / "fit.json";
  io::write_text(path, artifact(config, "fit", std::move(payload)).dump(2) + "\n");
  return {path};
}

std::vector<std::filesystem::path> run_select(const ExperimentConfig& config, const std::filesystem::path& data) {
  const auto y = io::read_observations(data);
  const auto grid = grid_for(config, static_cast<long>(y.size()));
  const auto report = selection::select_model(y, grid, replicate_fit_config(config, replicate_seed(config.seed, 0, 0)),
                                              config.penalty);
  Json payload = io::to_json(report);
  payload["data"] = data.string();
  const auto json_path = config.output_dir / "selection.json";
  const auto csv_path = config.output_dir / "selection.csv";
  io::write_text(json_path, artifact(config, "select", std::move(payload)).dump(2) + "\n");
  io::write_text(csv_path, io::selection_csv(report));
  return {json_path, csv_path};
}

std::vector<std::filesystem::path> run_evaluate(const ExperimentConfig& config,
                                                const std::optional<std::filesystem::path>& model_file) {
  const auto truth = build_truth(config.truth_spec);
  Json payload;
  payload["truth_kind"] = truth::truth_kind(truth);
  const auto& ev = config.evaluate;
  payload["forgetting"] = io::to_json(truth::check_forgetting(truth, ev.forgetting_sequences, ev.forgetting_k,
                                                              derive_seed(config.seed, 1)));
  payload["tail_moment"] = io::to_json(
      truth::estimate_tail_moment(truth, ev.n_mc, ev.burn_in, ev.tail_delta, derive_seed(config.seed, 2), ev.batches));
  if (model_file) {
    const Json model_json = io::read_json(*model_file);
    // Artifacts written by fit/select wrap the model in "result".
    const auto model = io::fitted_model_from_json(model_json.contains("result") ? model_json.at("result") : model_json);
    truth::PredictionErrorOptions opts{ev.n_mc, ev.burn_in, ev.batches, derive_seed(config.seed, 3)};
    payload["model_file"] = model_file->string();
    payload["prediction_error"] = io::to_json(truth::estimate_prediction_error(truth, model.to_params(), opts));
  }
  const auto path = config.output_dir / "evaluate.json";
  io::write_text(path, artifact(config, "evaluate", std::move(payload)).dump(2) + "\n");
  return {path};
}

std::optional<double> log_log_slope(const std::vector<long>& n_values, const std::vector<double>& medians) {
  if (n_values.size() != medians.size() || n_values.size() < 2) throw UsageError("log_log_slope: need >= 2 points");
  double sx = 0, sy = 0;
  const double m = static_cast<double>(n_values.size());
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    if (!(medians[i] > 0.0)) return std::nullopt;
    sx += std::log(static_cast<double>(n_values[i]));
    sy += std::log(medians[i]);
  }
  const double mx = sx / m, my = sy / m;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    const double dx = std::log(static_cast<double>(n_values[i])) - mx;
    sxy += dx * (std::log(medians[i]) - my);
    sxx += dx * dx;
  }
  if (!(sxx > 0.0)) throw UsageError("log_log_slope: n values must not all be equal");
  return sxy / sxx;
}

RateSummary run_rate(const ExperimentConfig& config) {
  if (!config.has_n_grid || config.n_values.size() < 3)
    throw UsageError("rate: needs an n_grid with at least 3 points");
  if (config.replicates < 5) throw UsageError("rate: needs at least 5 replicates");
  const auto truth = build_truth(config.truth_spec);
  const auto csv_path = config.output_dir / "rate.csv";
  io::write_text(csv_path, "n,replicate,k_hat,std_error,K_hat,M_hat\n");
  std::ofstream csv(csv_path, std::ios::binary | std::ios::app);
  if (!csv) throw IoError("cannot append to " + csv_path.string());

  RateSummary summary;
  const int reps = config.replicates;
  const int threads = config.fit.threads;
  for (std::size_t i = 0; i < config.n_values.size(); ++i) {
    const long n = config.n_values[i];
    const auto grid = grid_for(config, n);
    std::vector<RateRow> rows(static_cast<std::size_t>(reps));
    std::vector<std::string> errors(static_cast<std::size_t>(reps));
    const bool outer_parallel = reps > 1 && threads != 1;
    parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
      try {
        const std::uint64_t seed = replicate_seed(config.seed, i, static_cast<int>(r));
        const auto y = truth::simulate_truth(truth, static_cast<std::size_t>(n), derive_seed(seed, 0));
        fit::FitConfig fc = replicate_fit_config(config, derive_seed(seed, 1));
        if (outer_parallel) fc.threads = 1;
        const auto report = selection::select_model(y, grid, fc, config.penalty);
        const truth::PredictionErrorOptions opts{config.evaluate.n_mc, config.evaluate.burn_in,
                                                 config.evaluate.batches, derive_seed(seed, 2)};
        RateRow& row = rows[r];
        row.n = n;
        row.replicate = static_cast<int>(r);
        row.estimate = truth::estimate_prediction_error(truth, report.chosen_fit->params, opts);
        row.K_hat = report.chosen().K;
        row.M_hat = report.chosen().M;
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
    });
    std::vector<double> k_hats;
    for (int r = 0; r < reps; ++r) {
      if (!errors[static_cast<std::size_t>(r)].empty()) {
        csv.flush();
        throw NumericalError("rate: n = " + std::to_string(n) + ", replicate " + std::to_string(r) + ": " +
                             errors[static_cast<std::size_t>(r)]);
      }
      const auto& row = rows[static_cast<std::size_t>(r)];
      csv << row.n << ',' << row.replicate << ',' << io::format_double(row.estimate.k_hat) << ','
          << io::format_double(row.estimate.std_error) << ',' << row.K_hat << ',' << row.M_hat << '\n';
      k_hats.push_back(row.estimate.k_hat);
      summary.rows.push_back(row);
    }
    csv.flush();
    summary.median_k_hat.push_back(median(k_hats));
  }
  summary.slope = log_log_slope(config.n_values, summary.median_k_hat);

  Json per_n = Json::array();
  for (std::size_t i = 0; i < config.n_values.size(); ++i)
    per_n.push_back(Json{{"n", config.n_values[i]}, {"median_k_hat", summary.median_k_hat[i]}});
  Json payload{{"rows", summary.rows.size()}, {"median_k_hat", per_n}};
  payload["log_log_slope"] = summary.slope ? Json(*summary.slope) : Json(nullptr);
  if (!summary.slope) payload["note"] = "a median k_hat is not positive; the log-log slope is undefined";
  io::write_text(config.output_dir / "summary.json", artifact(config, "rate", std::move(payload)).dump(2) + "\n");
  return summary;
}

}  // namespace nphmm::experiment
