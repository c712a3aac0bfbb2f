#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairdiff/config.hpp"
#include "fairdiff/corrector.hpp"
#include "fairdiff/localization.hpp"
#include "fairdiff/metrics.hpp"

namespace fairdiff {

/// Everything the correction pipeline produced, before anything is written.
struct CorrectionOutcome {
  RowMatrix latents;                   // calibration latents at t_star
  std::vector<GmmFit> fits;            // one per correct.K entry
  AttributeAssignment assignment;
  std::size_t target_fit = 0;          // fit used for eval.attribute
  CorrectionPlan plan;
  std::optional<ComponentNaming> naming;
  std::string naming_error;            // set when naming was ambiguous
  CorrectedBatch corrected;
};

/// The biased model under study: the population sharpened by model.gamma.
MixtureDenoiser make_model(const ExperimentConfig& cfg, const NoiseSchedule& sched);

/// Calibrate, fit every configured mixture, localize attributes, name the
/// target components and draw the corrected batch.
CorrectionOutcome run_correction(const ExperimentConfig& cfg, const Denoiser& den,
                                 const NoiseSchedule& sched, const Execution& exec = {});

/// Reports for all three attributes. Frechet distances compare the rows
/// classified into each class with that class's exact population moments.
std::vector<BiasReport> attribute_reports(const ExperimentConfig& cfg, const RowMatrix& uncorrected,
                                          const RowMatrix* corrected, const ReportMetadata& meta);

struct RunResult {
  std::filesystem::path directory;     // <out>/<digest>
  std::vector<std::string> files;      // written, relative to directory
  ReportDocument document;             // empty for synth
  std::string summary;                 // human-readable, for stdout
};

RunResult cmd_synth(const ExperimentConfig& cfg, const std::filesystem::path& out_root);
RunResult cmd_baseline(const ExperimentConfig& cfg, const std::filesystem::path& out_root,
                       const Execution& exec = {});
RunResult cmd_correct(const ExperimentConfig& cfg, const std::filesystem::path& out_root,
                      const Execution& exec = {});

/// Long-format comparison table attribute,class,series,proportion over the
/// given report.json files. Rows repeated across inputs are kept once, first
/// file wins.
std::string cmd_report(const std::vector<std::filesystem::path>& inputs);

/// Quick invariant checks; writes one line per check and returns the number
/// of failures.
int run_selftest(std::ostream& out);

}  // namespace fairdiff
