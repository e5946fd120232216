// nphmm command-line front end: simulate | fit | select | evaluate | rate.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nphmm/errors.hpp"
#include "nphmm/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool paper_faithful_penalty = false;
  std::string data;
  std::string model;
  std::string out;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("-c,--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the master seed");
  cmd->add_flag("--paper-faithful-penalty", o.paper_faithful_penalty, "Use c_pen = 1, r = 15");
  cmd->add_option("--out", o.out, "Override the output directory");
}

nphmm::experiment::ExperimentConfig resolve(const Options& o) {
  auto j = nphmm::io::read_json(o.config);
  if (o.seed) j["seed"] = *o.seed;
  if (o.paper_faithful_penalty) j["penalty"] = nphmm::io::Json{{"c_pen", 1.0}, {"r", 15.0}};
  if (!o.out.empty()) j["output_dir"] = o.out;
  return nphmm::experiment::ExperimentConfig::from_json(j);
}

void print_paths(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalized-likelihood selection for nonparametric hidden Markov models"};
  app.require_subcommand(1);
  Options o;

  auto* simulate = app.add_subcommand("simulate", "Simulate observation files from the configured truth");
  add_common(simulate, o);

  auto* fit = app.add_subcommand("fit", "Fit the model given in the config's 'model' section");
  add_common(fit, o);
  fit->add_option("--data", o.data, "Observation CSV")->required()->check(CLI::ExistingFile);

  auto* select = app.add_subcommand("select", "Penalized selection over the (K, M) grid");
  add_common(select, o);
  select->add_option("--data", o.data, "Observation CSV")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Forgetting/tail checks and the prediction error of a fitted model");
  add_common(evaluate, o);
  evaluate->add_option("--model", o.model, "fit.json or selection.json to evaluate")->check(CLI::ExistingFile);

  auto* rate = app.add_subcommand("rate", "Rate experiment over the config's n_grid");
  add_common(rate, o);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = resolve(o);
    namespace ex = nphmm::experiment;
    if (simulate->parsed()) {
      print_paths(ex::run_simulate(config));
    } else if (fit->parsed()) {
      print_paths(ex::run_fit(config, o.data));
    } else if (select->parsed()) {
      print_paths(ex::run_select(config, o.data));
    } else if (evaluate->parsed()) {
      std::optional<std::filesystem::path> model;
      if (!o.model.empty()) model = o.model;
      print_paths(ex::run_evaluate(config, model));
    } else if (rate->parsed()) {
      const auto summary = ex::run_rate(config);
      std::cout << (config.output_dir / "rate.csv").string() << '\n'
                << (config.output_dir / "summary.json").string() << '\n';
      if (summary.slope) std::cout << "log-log slope: " << *summary.slope << '\n';
    }
  } catch (const nphmm::SelectionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& d : e.diagnostics()) std::cerr << "  " << d << '\n';
    return 3;
  } catch (const nphmm::FitFailureError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& d : e.diagnostics()) std::cerr << "  " << d << '\n';
    return 3;
  } catch (const nphmm::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const nphmm::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
