#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "nphmm/errors.hpp"
#include "nphmm/select.hpp"

using namespace nphmm;
using selection::SelectionRow;

namespace {

SelectionRow row(const model::Constraints& c, int K, int M, double ll, bool ok = true) {
  SelectionRow r;
  r.index = model::ModelIndex{K, M, c};
  r.ok = ok;
  r.avg_log_likelihood = ll;
  if (!ok) r.diagnostic = "synthetic failure";
  return r;
}

std::vector<double> two_state_data(std::size_t n, std::uint64_t seed) {
  Eigen::MatrixXd Q(2, 2);
  Q << 0.9, 0.1, 0.2, 0.8;
  return testing::sample_observations(testing::two_state_normal(Q, -2.0, 2.0, 0.7071067811865476), n, seed);
}

}  // namespace

TEST_SUITE("select") {
  TEST_CASE("singleton grid is chosen regardless of the penalty") {
    const auto y = two_state_data(400, 1);
    const auto grid = std::vector<model::ModelIndex>{{2, 2, model::Constraints::make(400)}};
    fit::FitConfig cfg;
    cfg.restarts = 1;
    for (double c_pen : {0.0, 1.0, 1e6}) {
      const auto report = selection::select_model(y, grid, cfg, model::PenaltyConfig{c_pen, 2.0});
      CHECK(report.table.size() == 1);
      CHECK(report.chosen().K == 2);
      CHECK(report.chosen().M == 2);
      REQUIRE(report.chosen_fit);
      CHECK(report.chosen_fit->index.K == 2);
    }
  }

  TEST_CASE("zero penalty maximizes the raw likelihood; table covers the grid") {
    const auto y = two_state_data(600, 2);
    model::GridCaps caps;
    caps.max_states = 2;
    caps.max_components = 2;
    const auto grid = model::model_grid(600, {}, caps);
    fit::FitConfig cfg;
    cfg.restarts = 2;
    const auto report = selection::select_model(y, grid, cfg, model::PenaltyConfig{0.0, 2.0});
    REQUIRE(report.table.size() == grid.size());
    double best = -INFINITY;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(report.table[i].index.K == grid[i].K);
      CHECK(report.table[i].index.M == grid[i].M);
      CHECK(report.table[i].ok);
      best = std::max(best, report.table[i].avg_log_likelihood);
    }
    CHECK(report.table[report.chosen_row].avg_log_likelihood == best);
    CHECK(report.table[report.chosen_row].score == best);
  }

  TEST_CASE("ties go to the smaller K, then the smaller M") {
    const auto c = model::Constraints::make(1000);
    std::vector<SelectionRow> t{row(c, 1, 2, -1.0), row(c, 1, 3, -1.0), row(c, 2, 1, -1.0)};
    CHECK(selection::choose_row(t, {0.0, 2.0}) == 0);
    std::vector<SelectionRow> reordered{row(c, 2, 1, -1.0), row(c, 1, 3, -1.0), row(c, 1, 2, -1.0)};
    CHECK(selection::choose_row(reordered, {0.0, 2.0}) == 2);
  }

  TEST_CASE("failed rows are excluded; all failed raises with diagnostics") {
    const auto c = model::Constraints::make(1000);
    std::vector<SelectionRow> t{row(c, 1, 1, 5.0, false), row(c, 1, 2, -3.0), row(c, 2, 1, -2.0)};
    CHECK(selection::choose_row(t, {0.0, 2.0}) == 2);
    std::vector<SelectionRow> none{row(c, 1, 1, 0.0, false), row(c, 2, 1, 0.0, false)};
    try {
      selection::choose_row(none, {1.0, 2.0});
      FAIL("expected SelectionError");
    } catch (const SelectionError& e) {
      CHECK(e.diagnostics().size() == 2);
      CHECK(e.diagnostics()[1].find("K = 2") != std::string::npos);
    }
    // A grid point the fitter rejects is recorded, not fatal.
    const auto y = two_state_data(300, 3);
    std::vector<model::ModelIndex> grid{{1, 1, model::Constraints::make(300)}, {9, 1, model::Constraints::make(300)}};
    fit::FitConfig cfg;
    cfg.restarts = 1;
    const auto report = selection::select_model(y, grid, cfg, {0.1, 2.0});
    CHECK(report.table[1].ok == false);
    CHECK_FALSE(report.table[1].diagnostic.empty());
    CHECK(report.chosen_row == 0);
    std::vector<model::ModelIndex> bad{{9, 1, model::Constraints::make(300)}};
    CHECK_THROWS_AS(selection::select_model(y, bad, cfg, {0.1, 2.0}), SelectionError);
    CHECK_THROWS_AS(selection::select_model(y, std::vector<model::ModelIndex>{}, cfg, {0.1, 2.0}), UsageError);
  }

  TEST_CASE("the chosen score is the exact maximum of the table") {
    const auto c = model::Constraints::make(2000);
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<SelectionRow> t;
      for (int K = 1; K <= 3; ++K)
        for (int M = 1; M <= 3; ++M) t.push_back(row(c, K, M, testing::uniform(rng, -2, 0)));
      const model::PenaltyConfig pen{testing::uniform(rng, 0, 2), 2.0};
      const auto chosen = selection::choose_row(t, pen);
      const double chosen_score = t[chosen].avg_log_likelihood - model::penalty(t[chosen].index, pen);
      for (const auto& r : t) CHECK(r.avg_log_likelihood - model::penalty(r.index, pen) <= chosen_score);
    }
  }

  TEST_CASE("a larger c_pen never selects a larger model on a stored table") {
    const auto y = two_state_data(1500, 9);
    model::GridCaps caps;
    caps.max_states = 3;
    caps.max_components = 2;
    const auto grid = model::model_grid(1500, {}, caps);
    fit::FitConfig cfg;
    cfg.restarts = 2;
    const auto report = selection::select_model(y, grid, cfg, {0.0, 2.0});
    int previous = 1 << 30;
    for (double c_pen = 0.0; c_pen <= 5.0; c_pen += 0.01) {
      const auto chosen = selection::choose_row(report.table, {c_pen, 2.0});
      const int dim = report.table[chosen].index.model_dimension();
      CHECK(dim <= previous);
      previous = dim;
    }
  }
}
