#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairdiff/common.hpp"
#include "fairdiff/population.hpp"

namespace fairdiff {

/// Bayes-argmax class histogram of the sample rows.
std::vector<std::size_t> class_counts(const Population& pop, Attribute attribute, const RowMatrix& samples);

/// Per-row Bayes-argmax class.
std::vector<std::size_t> classify_rows(const Population& pop, Attribute attribute, const RowMatrix& samples);

/// counts / total; all zeros when total is zero.
std::vector<double> proportions(std::span<const std::size_t> counts);

struct ReportMetadata {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_digest;

  bool operator==(const ReportMetadata&) const = default;
};

/// Per-class representation of one attribute: training reference, uncorrected
/// generation and (optionally) corrected generation. delta = gen - train;
/// ratio = gen / train with +infinity where train is zero.
struct BiasReport {
  Attribute attribute = Attribute::gender;
  std::vector<double> train_props;
  std::vector<double> gen_uncorrected;
  std::optional<std::vector<double>> gen_corrected;
  std::vector<double> delta_uncorrected;
  std::vector<double> ratio_uncorrected;
  std::optional<std::vector<double>> delta_corrected;
  std::optional<std::vector<double>> ratio_corrected;
  /// Corrected proportions all within equalize_tol of uniform.
  std::optional<bool> equalized_to_uniform;
  std::vector<std::size_t> counts_uncorrected;
  std::optional<std::vector<std::size_t>> counts_corrected;
  std::vector<std::optional<double>> frechet_uncorrected;
  std::vector<std::optional<double>> frechet_corrected;
  ReportMetadata metadata;

  bool operator==(const BiasReport&) const = default;
};

inline constexpr double kDefaultEqualizeTolerance = 0.03;

BiasReport bias_report(Attribute attribute, std::span<const double> train_props,
                       std::span<const double> gen_uncorrected,
                       std::optional<std::vector<double>> gen_corrected = std::nullopt,
                       double equalize_tol = kDefaultEqualizeTolerance);

struct MomentSummary {
  Vector mean;
  Eigen::MatrixXd covariance;
  std::size_t n = 0;  // 0 for exact (closed-form) summaries
};

/// Sample mean and unbiased (n - 1) covariance. Needs n >= 2.
MomentSummary moments(const RowMatrix& samples);

/// Exact mean and covariance of the population restricted to one class.
MomentSummary class_moments(const Population& pop, Attribute attribute, std::size_t cls);

/// ||m1 - m2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}).
double frechet_gaussian(const MomentSummary& a, const MomentSummary& b);

/// Symmetric PSD square root by eigendecomposition, eigenvalues clamped at 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s);

/// Fraction of rows whose predicted class equals the class named for their
/// source component.
double purity(std::span<const std::size_t> source_component, std::span<const std::size_t> predicted,
              std::span<const int> component_class);

/// purity under the best one-to-one component/class mapping.
double best_mapping_purity(std::span<const std::size_t> source_component,
                           std::span<const std::size_t> predicted, std::size_t components,
                           std::size_t classes);

// Report files ---------------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

enum class ReportFormat { json, csv };

struct ReportDocument {
  int schema_version = kReportSchemaVersion;
  ReportMetadata metadata;
  std::vector<BiasReport> reports;
  nlohmann::ordered_json details;  // optional run diagnostics; null when absent
};

nlohmann::ordered_json report_to_json(const BiasReport& report);
BiasReport report_from_json(const nlohmann::json& j);

nlohmann::ordered_json document_to_json(const ReportDocument& doc);
ReportDocument document_from_json(const nlohmann::json& j);

/// One row per class: attribute,class,train,gen_uncorrected,gen_corrected,delta,ratio.
/// delta and ratio refer to the corrected series when present, else the
/// uncorrected one.
std::string document_to_csv(const ReportDocument& doc);

void emit_report(const BiasReport& report, const std::filesystem::path& path, ReportFormat format);
void emit_document(const ReportDocument& doc, const std::filesystem::path& path, ReportFormat format);
ReportDocument read_document(const std::filesystem::path& path);

/// Writes text to a file, throwing IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Shortest round-trip decimal for a double ("inf" for +infinity).
std::string format_double(double v);

}  // namespace fairdiff
