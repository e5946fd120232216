#include "nphmm/select.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "nphmm/errors.hpp"
#include "nphmm/parallel.hpp"

namespace nphmm::selection {

std::size_t choose_row(std::span<const SelectionRow> table, const model::PenaltyConfig& penalty_config) {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!table[i].ok) continue;
    const double score = table[i].avg_log_likelihood - model::penalty(table[i].index, penalty_config);
    const auto& idx = table[i].index;
    const bool smaller = best && (idx.K < table[*best].index.K ||
                                  (idx.K == table[*best].index.K && idx.M < table[*best].index.M));
    if (!best || score > best_score || (score == best_score && smaller)) {
      best = i;
      best_score = score;
    }
  }
  if (!best) {
    std::vector<std::string> diagnostics;
    for (const auto& row : table)
      diagnostics.push_back("K = " + std::to_string(row.index.K) + ", M = " + std::to_string(row.index.M) + ": " +
                            row.diagnostic);
    throw SelectionError("select_model: every model of the grid failed to fit", std::move(diagnostics));
  }
  return *best;
}

SelectionReport select_model(std::span<const double> y, std::span<const model::ModelIndex> grid,
                             const fit::FitConfig& fit_config, const model::PenaltyConfig& penalty_config) {
  if (grid.empty()) throw UsageError("select_model: empty grid");
  fit_config.validate();
  SelectionReport report;
  report.fit_config = fit_config;
  report.penalty_config = penalty_config;
  report.table.resize(grid.size());
  std::vector<std::optional<fit::FitResult>> fits(grid.size());

  // Grid points run in parallel; restarts inside each fit stay serial.
  fit::FitConfig inner = fit_config;
  inner.threads = 1;
  parallel_for(grid.size(), fit_config.threads, [&](std::size_t i) {
    SelectionRow& row = report.table[i];
    row.index = grid[i];
    row.penalty = model::penalty(grid[i], penalty_config);
    try {
      fits[i] = fit::fit_model(y, grid[i], inner);
      row.ok = std::isfinite(fits[i]->final_log_likelihood);
      row.avg_log_likelihood = fits[i]->final_log_likelihood;
      row.score = row.avg_log_likelihood - row.penalty;
      if (!row.ok) row.diagnostic = "non-finite log-likelihood";
    } catch (const FitFailureError& e) {
      std::ostringstream os;
      os << e.what();
      for (const auto& d : e.diagnostics())
        if (!d.empty()) os << "; " << d;
      row.diagnostic = os.str();
    } catch (const std::exception& e) {
      row.diagnostic = e.what();
    }
  });
  report.chosen_row = choose_row(report.table, penalty_config);
  report.chosen_fit = std::move(fits[report.chosen_row]);
  return report;
}

}  // namespace nphmm::selection
