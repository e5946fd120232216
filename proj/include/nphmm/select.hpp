#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nphmm/fit.hpp"
#include "nphmm/model_space.hpp"

namespace nphmm::selection {

struct SelectionRow {
  model::ModelIndex index;
  bool ok = false;
  double avg_log_likelihood = 0.0;  // (1/n) l_n of the fitted model
  double penalty = 0.0;
  double score = 0.0;  // avg_log_likelihood - penalty
  std::string diagnostic;
};

struct SelectionReport {
  std::vector<SelectionRow> table;  // grid order
  std::size_t chosen_row = 0;
  std::optional<fit::FitResult> chosen_fit;
  fit::FitConfig fit_config;
  model::PenaltyConfig penalty_config;

  const model::ModelIndex& chosen() const { return table.at(chosen_row).index; }
};

/// Row of the penalized arg max over the rows that fitted; ties go to the
/// smaller K, then the smaller M. Recomputes the
/// penalty column with `penalty_config`, so stored tables can be rescored
/// without refitting. Throws SelectionError when no row fitted.
std::size_t choose_row(std::span<const SelectionRow> table, const model::PenaltyConfig& penalty_config);

/// Fits every grid point and keeps the penalized maximizer.
SelectionReport select_model(std::span<const double> y, std::span<const model::ModelIndex> grid,
                             const fit::FitConfig& fit_config, const model::PenaltyConfig& penalty_config);

}  // namespace nphmm::selection
