#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nphmm/fit.hpp"
#include "nphmm/model_space.hpp"
#include "nphmm/select.hpp"
#include "nphmm/truth_eval.hpp"

namespace nphmm::io {

using Json = nlohmann::ordered_json;

// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

Json to_json(const model::ConstraintParams& params);
// Missing keys keep their defaults; unknown keys are a UsageError.
model::ConstraintParams constraint_params_from_json(const Json& j);

// Snapshot: the parameters plus every derived quantity at this n.
Json to_json(const model::Constraints& constraints);
model::Constraints constraints_from_json(const Json& j);

Json to_json(const model::ModelIndex& index);
Json to_json(const model::PenaltyConfig& config);
model::PenaltyConfig penalty_config_from_json(const Json& j);
Json to_json(const fit::FitConfig& config);
fit::FitConfig fit_config_from_json(const Json& j);

Json to_json(const fit::MixtureHmm& m);
fit::MixtureHmm mixture_hmm_from_json(const Json& j, const model::Constraints& constraints);

Json to_json(const fit::FitResult& result);
// Rebuilds the fitted model of a fit or selection artifact; accepts either a
// FitResult object or a SelectionReport (its chosen fit).
fit::MixtureHmm fitted_model_from_json(const Json& j);

Json to_json(const selection::SelectionReport& report);
// Flat table, one row per (K, M) in grid order.
std::string selection_csv(const selection::SelectionReport& report);

Json to_json(const truth::PredictionErrorEstimate& estimate);
Json to_json(const truth::ForgettingReport& report);
Json to_json(const truth::TailMomentEstimate& estimate);

// Single column "y" with a header row, 17 significant digits.
void write_observations(const std::filesystem::path& path, const std::vector<double>& y);
// Reads the format above; a header row is optional. Throws IoError when the
// file cannot be opened and UsageError on a malformed row.
std::vector<double> read_observations(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
Json read_json(const std::filesystem::path& path);

}  // namespace nphmm::io
