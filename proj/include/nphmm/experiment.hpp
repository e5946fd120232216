#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nphmm/fit.hpp"
#include "nphmm/model_space.hpp"
#include "nphmm/serialization.hpp"
#include "nphmm/truth_eval.hpp"

namespace nphmm::experiment {

struct EvaluateSettings {
  std::size_t n_mc = 200000;
  std::size_t burn_in = 1000;
  int batches = 30;
  int forgetting_sequences = 200;
  std::vector<int> forgetting_k = {1, 2, 3, 5, 8, 12};
  double tail_delta = 0.5;
};

/// Resolved experiment configuration. Built from JSON by `load`, which
/// validates every section (including the truth and the constraint snapshot
/// at each n) before anything is computed.
struct ExperimentConfig {
  io::Json truth_spec;
  std::vector<long> n_values;  // a single n, or the n-grid
  bool has_n_grid = false;
  model::GridCaps grid_caps;
  std::optional<model::ModelIndex> fixed_model;  // "model": {K, M} for the fit command
  model::ConstraintParams constraints;
  model::PenaltyConfig penalty;
  fit::FitConfig fit;
  EvaluateSettings evaluate;
  int replicates = 1;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";

  static ExperimentConfig from_json(const io::Json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  // Full resolved config, echoed into every artifact.
  io::Json to_json() const;
};

truth::TruthModel build_truth(const io::Json& spec);

/// Seed of replicate r at grid position i of the n-grid.
std::uint64_t replicate_seed(std::uint64_t master, std::size_t n_index, int replicate);

// Each command writes its artifacts below config.output_dir and returns the
// paths it wrote.
std::vector<std::filesystem::path> run_simulate(const ExperimentConfig& config);
std::vector<std::filesystem::path> run_fit(const ExperimentConfig& config, const std::filesystem::path& data);
std::vector<std::filesystem::path> run_select(const ExperimentConfig& config, const std::filesystem::path& data);
std::vector<std::filesystem::path> run_evaluate(const ExperimentConfig& config,
                                                const std::optional<std::filesystem::path>& model_file);

struct RateRow {
  long n = 0;
  int replicate = 0;
  truth::PredictionErrorEstimate estimate;
  int K_hat = 0;
  int M_hat = 0;
};

struct RateSummary {
  std::vector<RateRow> rows;
  std::vector<double> median_k_hat;  // per n, grid order
  std::optional<double> slope;       // none if a median is not positive
};

/// Least-squares slope of log(median k_hat) against log n.
std::optional<double> log_log_slope(const std::vector<long>& n_values, const std::vector<double>& medians);

/// simulate -> select -> estimate_prediction_error for every (n, replicate).
/// Rows are appended to rate.csv as they finish; summary.json is written at
/// the end. Requires an n-grid of >= 3 points and >= 5 replicates.
RateSummary run_rate(const ExperimentConfig& config);

}  // namespace nphmm::experiment
