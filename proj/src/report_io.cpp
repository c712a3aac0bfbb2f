#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "fairdiff/metrics.hpp"

namespace fairdiff {

namespace {

using ojson = nlohmann::ordered_json;

ojson doubles_json(std::span<const double> v) {
  ojson arr = ojson::array();
  for (double x : v) {
    if (std::isinf(x)) arr.push_back(x > 0 ? "inf" : "-inf");
    else arr.push_back(x);
  }
  return arr;
}

std::vector<double> doubles_from(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array()) throw ValidationError("report: " + key + " is not a list");
  std::vector<double> out;
  for (const auto& v : j) {
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf") out.push_back(std::numeric_limits<double>::infinity());
      else if (s == "-inf") out.push_back(-std::numeric_limits<double>::infinity());
      else throw ValidationError("report: bad number '" + s + "' in " + key);
    } else if (v.is_number()) {
      out.push_back(v.get<double>());
    } else {
      throw ValidationError("report: bad entry in " + key);
    }
  }
  return out;
}

ojson optional_doubles_json(const std::vector<std::optional<double>>& v) {
  ojson arr = ojson::array();
  for (const auto& x : v) {
    if (x) arr.push_back(*x);
    else arr.push_back(nullptr);
  }
  return arr;
}

std::vector<std::optional<double>> optional_doubles_from(const nlohmann::json& j) {
  std::vector<std::optional<double>> out;
  if (j.is_null()) return out;
  for (const auto& v : j) {
    if (v.is_null()) out.emplace_back();
    else out.emplace_back(v.get<double>());
  }
  return out;
}

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("report: missing field '") + key + "'");
  return j[key];
}

}  // namespace

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // nlohmann emits the shortest representation that round-trips.
  return nlohmann::json(v).dump();
}

ojson report_to_json(const BiasReport& r) {
  ojson j;
  j["attribute"] = std::string(attribute_name(r.attribute));
  ojson names = ojson::array();
  for (std::size_t c = 0; c < r.train_props.size(); ++c) names.push_back(std::string(class_name(r.attribute, c)));
  j["classes"] = names;
  j["train"] = doubles_json(r.train_props);
  j["gen_uncorrected"] = doubles_json(r.gen_uncorrected);
  j["gen_corrected"] = r.gen_corrected ? doubles_json(*r.gen_corrected) : ojson(nullptr);
  j["counts_uncorrected"] = r.counts_uncorrected;
  j["counts_corrected"] = r.counts_corrected ? ojson(*r.counts_corrected) : ojson(nullptr);
  j["delta_uncorrected"] = doubles_json(r.delta_uncorrected);
  j["ratio_uncorrected"] = doubles_json(r.ratio_uncorrected);
  j["delta_corrected"] = r.delta_corrected ? doubles_json(*r.delta_corrected) : ojson(nullptr);
  j["ratio_corrected"] = r.ratio_corrected ? doubles_json(*r.ratio_corrected) : ojson(nullptr);
  j["equalized_to_uniform"] = r.equalized_to_uniform ? ojson(*r.equalized_to_uniform) : ojson(nullptr);
  j["frechet_uncorrected"] = optional_doubles_json(r.frechet_uncorrected);
  j["frechet_corrected"] = r.frechet_corrected.empty() ? ojson(nullptr) : optional_doubles_json(r.frechet_corrected);
  return j;
}

BiasReport report_from_json(const nlohmann::json& j) {
  BiasReport r;
  r.attribute = parse_attribute(require(j, "attribute").get<std::string>());
  r.train_props = doubles_from(require(j, "train"), "train");
  r.gen_uncorrected = doubles_from(require(j, "gen_uncorrected"), "gen_uncorrected");
  r.delta_uncorrected = doubles_from(require(j, "delta_uncorrected"), "delta_uncorrected");
  r.ratio_uncorrected = doubles_from(require(j, "ratio_uncorrected"), "ratio_uncorrected");
  r.counts_uncorrected = require(j, "counts_uncorrected").get<std::vector<std::size_t>>();
  if (j.contains("gen_corrected") && !j["gen_corrected"].is_null()) {
    r.gen_corrected = doubles_from(j["gen_corrected"], "gen_corrected");
    r.delta_corrected = doubles_from(require(j, "delta_corrected"), "delta_corrected");
    r.ratio_corrected = doubles_from(require(j, "ratio_corrected"), "ratio_corrected");
  }
  if (j.contains("counts_corrected") && !j["counts_corrected"].is_null()) {
    r.counts_corrected = j["counts_corrected"].get<std::vector<std::size_t>>();
  }
  if (j.contains("equalized_to_uniform") && !j["equalized_to_uniform"].is_null()) {
    r.equalized_to_uniform = j["equalized_to_uniform"].get<bool>();
  }
  if (j.contains("frechet_uncorrected")) r.frechet_uncorrected = optional_doubles_from(j["frechet_uncorrected"]);
  if (j.contains("frechet_corrected")) r.frechet_corrected = optional_doubles_from(j["frechet_corrected"]);
  if (r.train_props.size() != class_count(r.attribute) || r.gen_uncorrected.size() != r.train_props.size()) {
    throw ValidationError("report: proportion vectors do not match the class count");
  }
  return r;
}

ojson document_to_json(const ReportDocument& doc) {
  ojson j;
  j["schema_version"] = doc.schema_version;
  j["metadata"] = {{"command", doc.metadata.command},
                   {"seed", doc.metadata.seed},
                   {"config_digest", doc.metadata.config_digest}};
  j["reports"] = ojson::array();
  for (const auto& r : doc.reports) j["reports"].push_back(report_to_json(r));
  if (!doc.details.is_null()) j["details"] = doc.details;
  return j;
}

ReportDocument document_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("report: expected a JSON object");
  ReportDocument doc;
  const auto& version = require(j, "schema_version");
  if (!version.is_number_integer()) throw ValidationError("report: schema_version must be an integer");
  doc.schema_version = version.get<int>();
  if (doc.schema_version != kReportSchemaVersion) {
    throw ValidationError("report: unsupported schema_version " + std::to_string(doc.schema_version) +
                          " (expected " + std::to_string(kReportSchemaVersion) + ")");
  }
  const auto& meta = require(j, "metadata");
  doc.metadata.command = require(meta, "command").get<std::string>();
  doc.metadata.seed = require(meta, "seed").get<std::uint64_t>();
  doc.metadata.config_digest = require(meta, "config_digest").get<std::string>();
  for (const auto& item : require(j, "reports")) {
    BiasReport r = report_from_json(item);
    r.metadata = doc.metadata;
    doc.reports.push_back(std::move(r));
  }
  if (j.contains("details")) doc.details = j["details"];
  return doc;
}

std::string document_to_csv(const ReportDocument& doc) {
  std::ostringstream out;
  out << "attribute,class,train,gen_uncorrected,gen_corrected,delta,ratio\n";
  for (const auto& r : doc.reports) {
    const auto& delta = r.delta_corrected ? *r.delta_corrected : r.delta_uncorrected;
    const auto& ratio = r.ratio_corrected ? *r.ratio_corrected : r.ratio_uncorrected;
    for (std::size_t c = 0; c < r.train_props.size(); ++c) {
      out << attribute_name(r.attribute) << ',' << class_name(r.attribute, c) << ','
          << format_double(r.train_props[c]) << ',' << format_double(r.gen_uncorrected[c]) << ','
          << (r.gen_corrected ? format_double((*r.gen_corrected)[c]) : std::string()) << ','
          << format_double(delta[c]) << ',' << format_double(ratio[c]) << '\n';
    }
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  f.close();
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void emit_document(const ReportDocument& doc, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::json) {
    write_text(path, document_to_json(doc).dump(2) + "\n");
  } else {
    write_text(path, document_to_csv(doc));
  }
}

void emit_report(const BiasReport& report, const std::filesystem::path& path, ReportFormat format) {
  ReportDocument doc;
  doc.metadata = report.metadata;
  doc.reports.push_back(report);
  emit_document(doc, path, format);
}

ReportDocument read_document(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("report '" + path.string() + "': " + e.what());
  }
  return document_from_json(j);
}

}  // namespace fairdiff
