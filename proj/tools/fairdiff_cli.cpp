#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fairdiff/experiment.hpp"

namespace {

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config,-c", o.config, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--out,-o", o.out, "Output root (default: the config's output key)");
  cmd->add_option("--override", o.overrides, "key=value with a dotted key; repeatable")->take_all();
}

fairdiff::ExperimentConfig load(const RunOptions& o) {
  return fairdiff::load_config(o.config, o.overrides, o.seed);
}

std::filesystem::path out_root(const RunOptions& o, const fairdiff::ExperimentConfig& cfg) {
  return o.out.empty() ? std::filesystem::path(cfg.output) : std::filesystem::path(o.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic bias measurement and correction for diffusion samplers"};
  app.require_subcommand(1);

  RunOptions synth_opts, baseline_opts, correct_opts;
  auto* synth = app.add_subcommand("synth", "Write the population and its attribute marginals");
  add_run_options(synth, synth_opts);
  auto* baseline = app.add_subcommand("baseline", "Sample the biased model and report attribute proportions");
  add_run_options(baseline, baseline_opts);
  auto* correct = app.add_subcommand("correct", "Calibrate, inject at t_star and report corrected proportions");
  add_run_options(correct, correct_opts);

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge report.json files into a long-format CSV");
  report->add_option("inputs", report_inputs, "report.json files")->required()->check(CLI::ExistingFile);
  report->add_option("--out,-o", report_out, "Output CSV (default: stdout)");

  auto* selftest = app.add_subcommand("selftest", "Run quick invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      const auto cfg = load(synth_opts);
      std::cout << fairdiff::cmd_synth(cfg, out_root(synth_opts, cfg)).summary;
    } else if (baseline->parsed()) {
      const auto cfg = load(baseline_opts);
      std::cout << fairdiff::cmd_baseline(cfg, out_root(baseline_opts, cfg)).summary;
    } else if (correct->parsed()) {
      const auto cfg = load(correct_opts);
      std::cout << fairdiff::cmd_correct(cfg, out_root(correct_opts, cfg)).summary;
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> paths(report_inputs.begin(), report_inputs.end());
      const std::string table = fairdiff::cmd_report(paths);
      if (report_out.empty()) std::cout << table;
      else fairdiff::write_text(report_out, table);
    } else if (selftest->parsed()) {
      return fairdiff::run_selftest(std::cout) == 0 ? 0 : 1;
    }
  } catch (const fairdiff::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fairdiff::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const fairdiff::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
