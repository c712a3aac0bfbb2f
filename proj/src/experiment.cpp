#include "fairdiff/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace fairdiff {

namespace {

using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::filesystem::path prepare_dir(const ExperimentConfig& cfg, const std::filesystem::path& out_root) {
  const auto dir = out_root / cfg.digest;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

std::string samples_csv(const Population& pop, const RowMatrix& points,
                        const std::vector<std::size_t>* component) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < points.cols(); ++j) out << 'x' << j << ',';
  out << "age,gender,race";
  if (component) out << ",component";
  out << '\n';
  std::array<std::vector<std::size_t>, kAttributeCount> labels;
  for (Attribute a : kAllAttributes) labels[static_cast<std::size_t>(a)] = classify_rows(pop, a, points);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) out << format_double(points(i, j)) << ',';
    const auto r = static_cast<std::size_t>(i);
    out << class_name(Attribute::age, labels[0][r]) << ',' << class_name(Attribute::gender, labels[1][r]) << ','
        << class_name(Attribute::race, labels[2][r]);
    if (component) out << ',' << (*component)[r];
    out << '\n';
  }
  return out.str();
}

ojson marginals_json(const Marginals& m) {
  ojson j = ojson::object();
  for (Attribute a : kAllAttributes) {
    ojson classes = ojson::object();
    for (std::size_t c = 0; c < class_count(a); ++c) {
      classes[std::string(class_name(a, c))] = m[static_cast<std::size_t>(a)][c];
    }
    j[std::string(attribute_name(a))] = classes;
  }
  return j;
}

struct StageLog {
  ojson stages = ojson::array();
  Clock::time_point started = Clock::now();

  template <typename F>
  auto run(const std::string& name, F&& f) {
    const auto t0 = Clock::now();
    auto finish = [&](const char* status) {
      stages.push_back({{"name", name},
                        {"status", status},
                        {"seconds", std::chrono::duration<double>(Clock::now() - t0).count()}});
    };
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        finish("ok");
      } else {
        auto r = f();
        finish("ok");
        return r;
      }
    } catch (...) {
      finish("failed");
      throw;
    }
  }
};

void write_manifest(const ExperimentConfig& cfg, const std::string& command, const std::filesystem::path& dir,
                    std::vector<std::string>& files, const StageLog& log) {
  files.push_back("manifest.json");
  ojson m;
  m["command"] = command;
  m["config_digest"] = cfg.digest;
  m["seed"] = cfg.seed;
  m["config"] = cfg.canonical;
  m["files"] = files;
  m["stages"] = log.stages;
  m["wall_clock_seconds"] = std::chrono::duration<double>(Clock::now() - log.started).count();
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void write_common(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::vector<std::string>& files) {
  write_text(dir / "population.json", population_to_json(cfg.population).dump(2) + "\n");
  files.push_back("population.json");
}

std::string brief(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string report_summary(const ReportDocument& doc) {
  std::ostringstream out;
  for (const auto& r : doc.reports) {
    out << attribute_name(r.attribute) << ':';
    for (std::size_t c = 0; c < r.train_props.size(); ++c) {
      out << ' ' << class_name(r.attribute, c) << " train=" << brief(r.train_props[c])
          << " gen=" << brief(r.gen_uncorrected[c]);
      if (r.gen_corrected) out << " corrected=" << brief((*r.gen_corrected)[c]);
    }
    if (r.equalized_to_uniform) out << (*r.equalized_to_uniform ? " [equalized]" : " [not equalized]");
    out << '\n';
  }
  return out.str();
}

ojson matrix_json(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

ojson correction_details(const ExperimentConfig& cfg, const CorrectionOutcome& o, const Population& pop) {
  ojson d;
  ojson hierarchy = ojson::array();
  for (Attribute a : o.assignment.hierarchy) hierarchy.push_back(std::string(attribute_name(a)));
  ojson fits = ojson::array();
  for (std::size_t i = 0; i < o.fits.size(); ++i) {
    const auto& f = o.fits[i];
    fits.push_back({{"K", f.model.components()},
                    {"channels", cfg.correct.channels[i]},
                    {"attribute", std::string(attribute_name(o.assignment.attribute_of_fit[i]))},
                    {"separability", o.assignment.separability[i]},
                    {"kl_table", matrix_json(o.assignment.kl_tables[i])},
                    {"weights", std::vector<double>(f.model.weights.data(), f.model.weights.data() + f.model.weights.size())},
                    {"final_loglik", f.loglik_trace.empty() ? 0.0 : f.loglik_trace.back()},
                    {"iterations", f.iterations},
                    {"converged", f.converged},
                    {"restart", f.restart}});
  }
  d["localization"] = {{"hierarchy", hierarchy}, {"fits", fits}, {"target_fit", o.target_fit}};
  d["quotas"] = o.plan.quotas;

  const Attribute attr = cfg.eval.attribute;
  ojson naming;
  if (o.naming) {
    naming["status"] = "ok";
    ojson names = ojson::array();
    for (int c : o.naming->component_class) names.push_back(std::string(class_name(attr, static_cast<std::size_t>(c))));
    naming["component_class"] = names;
    naming["majority_fraction"] = o.naming->majority_fraction;
    naming["histogram"] = o.naming->histogram;
  } else {
    naming["status"] = "ambiguous";
    naming["error"] = o.naming_error;
  }
  d["naming"] = naming;

  const auto predicted = classify_rows(pop, attr, o.corrected.batch.points);
  if (o.naming) {
    d["purity"] = purity(o.corrected.source_component, predicted, o.naming->component_class);
  }
  d["best_mapping_purity"] =
      best_mapping_purity(o.corrected.source_component, predicted, o.plan.quotas.size(), class_count(attr));
  return d;
}

}  // namespace

MixtureDenoiser make_model(const ExperimentConfig& cfg, const NoiseSchedule& sched) {
  return MixtureDenoiser(sharpen_mixture(cfg.population, cfg.gamma), sched);
}

CorrectionOutcome run_correction(const ExperimentConfig& cfg, const Denoiser& den, const NoiseSchedule& sched,
                                 const Execution& exec) {
  const auto& cc = cfg.correct;
  for (std::size_t K : cc.components) {
    if (cc.n_calib < 10 * K) {
      throw ValidationError("correct.n_calib: " + std::to_string(cc.n_calib) + " is below 10*K=" +
                            std::to_string(10 * K));
    }
  }
  CorrectionOutcome o;
  o.latents = calibration_latents(den, sched, cc.t_star, cc.n_calib, cfg.seed, exec);
  for (std::size_t i = 0; i < cc.components.size(); ++i) {
    const EmOptions opts = cfg.em_options(splitmix64(cfg.seed ^ splitmix64(0x676d6d00u + i)));
    o.fits.push_back(em_fit(select_channels(o.latents, cc.channels[i]), cc.components[i], cfg.gmm.cov_type, opts));
  }
  o.assignment = assign_attributes(std::span<const GmmFit>(o.fits), std::span<const Attribute>(cc.hierarchy));
  o.target_fit = o.assignment.fit_of(cfg.eval.attribute);

  o.plan.t_star = cc.t_star;
  o.plan.fit = o.fits[o.target_fit];
  o.plan.quotas = make_quotas(cfg.eval.n_samples, o.plan.fit.model.components());
  o.plan.injection_cov = cc.injection_cov;
  o.plan.channels = cc.channels[o.target_fit];
  o.plan.pool = o.latents;

  const ComponentInjector injector = make_injector(o.plan, sched, den.dimension());
  try {
    o.naming = name_components(injector, den, sched, cfg.population, cfg.eval.attribute, cc.t_star, cc.n_probe,
                               cfg.seed, exec);
  } catch (const NamingError& e) {
    o.naming_error = e.what();
  }
  o.corrected = corrected_sample(den, sched, o.plan, cfg.seed, exec);
  return o;
}

std::vector<BiasReport> attribute_reports(const ExperimentConfig& cfg, const RowMatrix& uncorrected,
                                          const RowMatrix* corrected, const ReportMetadata& meta) {
  const Population& pop = cfg.population;
  const Marginals train = attribute_marginals(pop);
  std::vector<BiasReport> out;
  for (Attribute a : kAllAttributes) {
    const auto ai = static_cast<std::size_t>(a);
    const auto unc_class = classify_rows(pop, a, uncorrected);
    std::vector<std::size_t> unc_counts(class_count(a), 0);
    for (std::size_t c : unc_class) ++unc_counts[c];
    std::optional<std::vector<double>> corr_props;
    std::vector<std::size_t> corr_class, corr_counts;
    if (corrected) {
      corr_class = classify_rows(pop, a, *corrected);
      corr_counts.assign(class_count(a), 0);
      for (std::size_t c : corr_class) ++corr_counts[c];
      corr_props = proportions(corr_counts);
    }
    BiasReport r = bias_report(a, train[ai], proportions(unc_counts), corr_props, cfg.eval.equalize_tol);
    r.counts_uncorrected = unc_counts;
    if (corrected) r.counts_corrected = corr_counts;
    r.metadata = meta;

    auto frechet = [&](const RowMatrix& rows, const std::vector<std::size_t>& cls, std::size_t c)
        -> std::optional<double> {
      if (!(train[ai][c] > 0.0)) return std::nullopt;
      std::vector<Eigen::Index> idx;
      for (std::size_t i = 0; i < cls.size(); ++i) {
        if (cls[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
      }
      if (idx.size() < 2) return std::nullopt;
      RowMatrix subset(static_cast<Eigen::Index>(idx.size()), rows.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) subset.row(static_cast<Eigen::Index>(i)) = rows.row(idx[i]);
      return frechet_gaussian(moments(subset), class_moments(pop, a, c));
    };
    for (std::size_t c = 0; c < class_count(a); ++c) {
      r.frechet_uncorrected.push_back(frechet(uncorrected, unc_class, c));
      if (corrected) r.frechet_corrected.push_back(frechet(*corrected, corr_class, c));
    }
    out.push_back(std::move(r));
  }
  return out;
}

RunResult cmd_synth(const ExperimentConfig& cfg, const std::filesystem::path& out_root) {
  RunResult res;
  StageLog log;
  res.directory = prepare_dir(cfg, out_root);
  const Marginals m = attribute_marginals(cfg.population);
  log.run("synth", [&] {
    write_common(cfg, res.directory, res.files);
    write_text(res.directory / "marginals.json", marginals_json(m).dump(2) + "\n");
    res.files.push_back("marginals.json");
  });
  write_manifest(cfg, "synth", res.directory, res.files, log);
  std::ostringstream s;
  s << "population: " << cfg.population.size() << " components, dimension " << cfg.population.dimension() << '\n';
  for (Attribute a : kAllAttributes) {
    s << attribute_name(a) << ':';
    for (std::size_t c = 0; c < class_count(a); ++c) {
      s << ' ' << class_name(a, c) << '=' << brief(m[static_cast<std::size_t>(a)][c]);
    }
    s << '\n';
  }
  s << "written to " << res.directory.string() << '\n';
  res.summary = s.str();
  return res;
}

RunResult cmd_baseline(const ExperimentConfig& cfg, const std::filesystem::path& out_root, const Execution& exec) {
  RunResult res;
  StageLog log;
  res.directory = prepare_dir(cfg, out_root);
  const NoiseSchedule sched = cfg.schedule();
  const MixtureDenoiser den = make_model(cfg, sched);
  const SampleBatch batch = log.run("sample", [&] { return sample_reverse(den, sched, cfg.eval.n_samples, cfg.seed, {}, exec); });

  const ReportMetadata meta{"baseline", cfg.seed, cfg.digest};
  res.document.metadata = meta;
  log.run("report", [&] {
    res.document.reports = attribute_reports(cfg, batch.points, nullptr, meta);
    write_text(res.directory / "samples_uncorrected.csv", samples_csv(cfg.population, batch.points, nullptr));
    emit_document(res.document, res.directory / "report.json", ReportFormat::json);
    emit_document(res.document, res.directory / "report.csv", ReportFormat::csv);
    res.files = {"samples_uncorrected.csv", "report.json", "report.csv"};
    write_common(cfg, res.directory, res.files);
  });
  write_manifest(cfg, "baseline", res.directory, res.files, log);
  res.summary = report_summary(res.document) + "written to " + res.directory.string() + "\n";
  return res;
}

RunResult cmd_correct(const ExperimentConfig& cfg, const std::filesystem::path& out_root, const Execution& exec) {
  RunResult res;
  StageLog log;
  res.directory = prepare_dir(cfg, out_root);
  const NoiseSchedule sched = cfg.schedule();
  const MixtureDenoiser den = make_model(cfg, sched);
  const SampleBatch batch = log.run("sample", [&] { return sample_reverse(den, sched, cfg.eval.n_samples, cfg.seed, {}, exec); });
  const CorrectionOutcome o = log.run("correct", [&] { return run_correction(cfg, den, sched, exec); });

  const ReportMetadata meta{"correct", cfg.seed, cfg.digest};
  res.document.metadata = meta;
  log.run("report", [&] {
    res.document.reports = attribute_reports(cfg, batch.points, &o.corrected.batch.points, meta);
    res.document.details = correction_details(cfg, o, cfg.population);
    write_text(res.directory / "samples_uncorrected.csv", samples_csv(cfg.population, batch.points, nullptr));
    write_text(res.directory / "samples_corrected.csv",
               samples_csv(cfg.population, o.corrected.batch.points, &o.corrected.source_component));
    emit_document(res.document, res.directory / "report.json", ReportFormat::json);
    emit_document(res.document, res.directory / "report.csv", ReportFormat::csv);
    res.files = {"samples_uncorrected.csv", "samples_corrected.csv", "report.json", "report.csv"};
    write_common(cfg, res.directory, res.files);
  });
  write_manifest(cfg, "correct", res.directory, res.files, log);
  std::string summary = report_summary(res.document);
  if (!o.naming) summary += "warning: " + o.naming_error + "\n";
  res.summary = summary + "written to " + res.directory.string() + "\n";
  return res;
}

std::string cmd_report(const std::vector<std::filesystem::path>& inputs) {
  if (inputs.empty()) throw ValidationError("report: no input files");
  std::ostringstream out;
  out << "attribute,class,series,proportion\n";
  std::set<std::tuple<int, std::size_t, std::string>> seen;
  std::optional<int> version;
  for (const auto& path : inputs) {
    const ReportDocument doc = read_document(path);
    if (version && *version != doc.schema_version) {
      throw ValidationError("report: schema_version mismatch between inputs (" + std::to_string(*version) +
                            " vs " + std::to_string(doc.schema_version) + ")");
    }
    version = doc.schema_version;
    for (const auto& r : doc.reports) {
      auto emit = [&](const std::string& series, const std::vector<double>& props) {
        for (std::size_t c = 0; c < props.size(); ++c) {
          if (!seen.emplace(static_cast<int>(r.attribute), c, series).second) continue;
          out << attribute_name(r.attribute) << ',' << class_name(r.attribute, c) << ',' << series << ','
              << format_double(props[c]) << '\n';
        }
      };
      emit("train", r.train_props);
      emit("uncorrected", r.gen_uncorrected);
      if (r.gen_corrected) emit("corrected", *r.gen_corrected);
    }
  }
  return out.str();
}

}  // namespace fairdiff
