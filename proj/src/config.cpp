#include "fairdiff/config.hpp"

#include <cstdio>
#include <set>

#include "fairdiff/metrics.hpp"

namespace fairdiff {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void reject_unknown(const json& section, const std::string& prefix, std::initializer_list<const char*> allowed) {
  if (!section.is_object()) throw ValidationError(prefix + ": expected an object");
  for (const auto& [key, _] : section.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError((prefix.empty() ? "" : prefix + ".") + key + ": unknown key");
  }
}

template <typename T>
T get_or(const json& section, const std::string& prefix, const char* key, T fallback) {
  if (!section.contains(key)) return fallback;
  const std::string name = prefix + "." + key;
  const json& v = section[key];
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(name + ": expected a string");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(name + ": expected true/false");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ValidationError(name + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0 && !v.is_number_unsigned()) throw ValidationError(name + ": must be >= 0");
      }
    } else {
      if (!v.is_number()) throw ValidationError(name + ": expected a number");
    }
    return v.get<T>();
  } catch (const json::exception&) {
    throw ValidationError(name + ": invalid value");
  }
}

std::vector<double> marginal_from(const json& v, const std::string& name) {
  if (!v.is_array()) throw ValidationError(name + ": expected a list of proportions");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ValidationError(name + ": expected numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Population population_from_preset(const json& section) {
  reject_unknown(section, "population", {"preset", "component_std", "separation", "marginals", "attributes", "dimension"});
  if (!section["preset"].is_string()) throw ValidationError("population.preset: expected a string");
  GridSpec spec = grid_preset(section["preset"].get<std::string>());
  spec.component_std = get_or<double>(section, "population", "component_std", spec.component_std);
  spec.dimension = get_or<std::size_t>(section, "population", "dimension", spec.dimension);
  if (section.contains("separation")) {
    const auto& sep = section["separation"];
    reject_unknown(sep, "population.separation", {"age", "gender", "race"});
    for (Attribute a : kAllAttributes) {
      const std::string key(attribute_name(a));
      spec.separation[static_cast<std::size_t>(a)] =
          get_or<double>(sep, "population.separation", key.c_str(), spec.separation[static_cast<std::size_t>(a)]);
    }
  }
  if (section.contains("attributes")) {
    const auto& list = section["attributes"];
    if (!list.is_array()) throw ValidationError("population.attributes: expected a list of attribute names");
    spec.included = {false, false, false};
    for (const auto& name : list) {
      if (!name.is_string()) throw ValidationError("population.attributes: expected attribute names");
      spec.included[static_cast<std::size_t>(parse_attribute(name.get<std::string>()))] = true;
    }
  }
  for (Attribute a : kAllAttributes) {
    const auto ai = static_cast<std::size_t>(a);
    if (!spec.included[ai]) {
      spec.marginals[ai].assign(class_count(a), 0.0);
      spec.marginals[ai][0] = 1.0;
    }
  }
  if (section.contains("marginals")) {
    const auto& m = section["marginals"];
    reject_unknown(m, "population.marginals", {"age", "gender", "race"});
    for (const auto& [key, value] : m.items()) {
      const Attribute a = parse_attribute(key);
      spec.marginals[static_cast<std::size_t>(a)] = marginal_from(value, "population.marginals." + key);
    }
  }
  return grid_population(spec);
}

std::vector<std::size_t> index_list(const json& v, const std::string& name) {
  if (!v.is_array()) throw ValidationError(name + ": expected a list of indices");
  std::vector<std::size_t> out;
  for (const auto& x : v) {
    if (!x.is_number_integer() || x.get<long long>() < 0) throw ValidationError(name + ": expected non-negative integers");
    out.push_back(x.get<std::size_t>());
  }
  return out;
}

}  // namespace

Population resolve_population(const json& section, const std::filesystem::path& base_dir) {
  if (!section.is_object()) throw ValidationError("population: expected an object");
  if (section.contains("preset")) return population_from_preset(section);
  if (section.contains("file")) {
    reject_unknown(section, "population", {"file"});
    if (!section["file"].is_string()) throw ValidationError("population.file: expected a path");
    std::filesystem::path p = section["file"].get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    json spec;
    try {
      spec = json::parse(read_text(p));
    } catch (const json::parse_error& e) {
      throw ValidationError("population file '" + p.string() + "': " + e.what());
    }
    return build_population(spec);
  }
  return build_population(section);
}

NoiseSchedule ExperimentConfig::schedule() const {
  return build_schedule(diffusion.steps, diffusion.beta_start, diffusion.beta_end, ScheduleKind::linear,
                        diffusion.sigma_rule);
}

EmOptions ExperimentConfig::em_options(std::uint64_t fit_seed) const {
  EmOptions o;
  o.tol = gmm.tol;
  o.max_iter = gmm.max_iter;
  o.n_restarts = gmm.restarts;
  o.reg_floor = gmm.reg_floor;
  o.seed = fit_seed;
  return o;
}

ExperimentConfig parse_config(const json& raw, const std::filesystem::path& base_dir) {
  reject_unknown(raw, "", {"seed", "population", "diffusion", "model", "gmm", "correct", "eval", "output"});
  const json empty = json::object();
  auto section = [&](const char* key) -> const json& {
    if (!raw.contains(key)) return empty;
    if (!raw[key].is_object()) throw ValidationError(std::string(key) + ": expected an object");
    return raw[key];
  };

  ExperimentConfig cfg{.population = resolve_population(
                           raw.contains("population") ? raw["population"] : json{{"preset", "fairface-like"}}, base_dir)};
  cfg.seed = get_or<std::uint64_t>(raw, "config", "seed", 0);
  cfg.output = get_or<std::string>(raw, "config", "output", "runs");

  const json& diff = section("diffusion");
  reject_unknown(diff, "diffusion", {"T", "beta_start", "beta_end", "sigma_rule"});
  cfg.diffusion.steps = get_or<int>(diff, "diffusion", "T", cfg.diffusion.steps);
  cfg.diffusion.beta_start = get_or<double>(diff, "diffusion", "beta_start", cfg.diffusion.beta_start);
  cfg.diffusion.beta_end = get_or<double>(diff, "diffusion", "beta_end", cfg.diffusion.beta_end);
  cfg.diffusion.sigma_rule = parse_sigma_rule(get_or<std::string>(diff, "diffusion", "sigma_rule", "sqrt_beta"));
  (void)cfg.schedule();  // validates ranges

  const json& model = section("model");
  reject_unknown(model, "model", {"gamma"});
  cfg.gamma = get_or<double>(model, "model", "gamma", 1.0);
  if (!(cfg.gamma >= 1.0)) throw ValidationError("model.gamma: must be >= 1");

  const json& gmm = section("gmm");
  reject_unknown(gmm, "gmm", {"tol", "max_iter", "restarts", "cov_type", "reg_floor"});
  cfg.gmm.tol = get_or<double>(gmm, "gmm", "tol", cfg.gmm.tol);
  cfg.gmm.max_iter = get_or<int>(gmm, "gmm", "max_iter", cfg.gmm.max_iter);
  cfg.gmm.restarts = get_or<int>(gmm, "gmm", "restarts", cfg.gmm.restarts);
  cfg.gmm.cov_type = parse_covariance_type(get_or<std::string>(gmm, "gmm", "cov_type", "diagonal"));
  cfg.gmm.reg_floor = get_or<double>(gmm, "gmm", "reg_floor", cfg.gmm.reg_floor);
  if (!(cfg.gmm.tol > 0.0)) throw ValidationError("gmm.tol: must be positive");
  if (cfg.gmm.max_iter < 1) throw ValidationError("gmm.max_iter: must be >= 1");
  if (cfg.gmm.restarts < 1) throw ValidationError("gmm.restarts: must be >= 1");
  if (!(cfg.gmm.reg_floor > 0.0)) throw ValidationError("gmm.reg_floor: must be positive");

  const json& corr = section("correct");
  reject_unknown(corr, "correct", {"t_star", "K", "channels", "hierarchy", "injection_cov", "n_calib", "n_probe"});
  cfg.correct.t_star = get_or<int>(corr, "correct", "t_star", cfg.correct.t_star);
  if (cfg.correct.t_star < 1 || cfg.correct.t_star > cfg.diffusion.steps) {
    throw ValidationError("correct.t_star: must lie in [1, diffusion.T]");
  }
  if (corr.contains("K")) {
    if (corr["K"].is_number_integer()) cfg.correct.components = {corr["K"].get<std::size_t>()};
    else cfg.correct.components = index_list(corr["K"], "correct.K");
  }
  if (corr.contains("channels")) {
    const auto& ch = corr["channels"];
    if (!ch.is_array()) throw ValidationError("correct.channels: expected a list of coordinate lists");
    cfg.correct.channels.clear();
    for (std::size_t i = 0; i < ch.size(); ++i) {
      cfg.correct.channels.push_back(index_list(ch[i], "correct.channels[" + std::to_string(i) + "]"));
    }
  } else if (corr.contains("K") && cfg.correct.components.size() != cfg.correct.channels.size()) {
    cfg.correct.channels.assign(cfg.correct.components.size(), {});
  }
  if (corr.contains("hierarchy")) {
    const auto& h = corr["hierarchy"];
    if (!h.is_array()) throw ValidationError("correct.hierarchy: expected a list of attribute names");
    cfg.correct.hierarchy.clear();
    for (const auto& name : h) {
      if (!name.is_string()) throw ValidationError("correct.hierarchy: expected attribute names");
      cfg.correct.hierarchy.push_back(parse_attribute(name.get<std::string>()));
    }
  }
  if (cfg.correct.components.empty()) throw ValidationError("correct.K: needs at least one entry");
  if (cfg.correct.channels.size() != cfg.correct.components.size()) {
    throw ValidationError("correct.channels: needs one coordinate list per entry of correct.K");
  }
  for (std::size_t k : cfg.correct.components) {
    if (k < 1) throw ValidationError("correct.K: component counts must be >= 1");
  }
  for (const auto& group : cfg.correct.channels) {
    std::set<std::size_t> seen;
    for (std::size_t c : group) {
      if (c >= cfg.population.dimension()) throw ValidationError("correct.channels: coordinate " + std::to_string(c) + " out of range");
      if (!seen.insert(c).second) throw ValidationError("correct.channels: repeated coordinate " + std::to_string(c));
    }
  }
  cfg.correct.injection_cov = parse_injection_cov(get_or<std::string>(corr, "correct", "injection_cov", "fitted"));
  cfg.correct.n_calib = get_or<std::size_t>(corr, "correct", "n_calib", cfg.correct.n_calib);
  cfg.correct.n_probe = get_or<std::size_t>(corr, "correct", "n_probe", cfg.correct.n_probe);
  if (cfg.correct.n_probe == 0) throw ValidationError("correct.n_probe: must be >= 1");

  const json& ev = section("eval");
  reject_unknown(ev, "eval", {"n_samples", "attribute", "equalize_tol"});
  cfg.eval.n_samples = get_or<std::size_t>(ev, "eval", "n_samples", cfg.eval.n_samples);
  if (cfg.eval.n_samples == 0) throw ValidationError("eval.n_samples: must be >= 1");
  cfg.eval.attribute = parse_attribute(get_or<std::string>(ev, "eval", "attribute", "gender"));
  cfg.eval.equalize_tol = get_or<double>(ev, "eval", "equalize_tol", cfg.eval.equalize_tol);

  ojson c;
  c["seed"] = cfg.seed;
  c["population"] = population_to_json(cfg.population);
  c["diffusion"] = {{"T", cfg.diffusion.steps},
                    {"beta_start", cfg.diffusion.beta_start},
                    {"beta_end", cfg.diffusion.beta_end},
                    {"sigma_rule", std::string(sigma_rule_name(cfg.diffusion.sigma_rule))}};
  c["model"] = {{"gamma", cfg.gamma}};
  c["gmm"] = {{"tol", cfg.gmm.tol},
              {"max_iter", cfg.gmm.max_iter},
              {"restarts", cfg.gmm.restarts},
              {"cov_type", std::string(covariance_type_name(cfg.gmm.cov_type))},
              {"reg_floor", cfg.gmm.reg_floor}};
  ojson hierarchy = ojson::array();
  for (Attribute a : cfg.correct.hierarchy) hierarchy.push_back(std::string(attribute_name(a)));
  c["correct"] = {{"t_star", cfg.correct.t_star},
                  {"K", cfg.correct.components},
                  {"channels", cfg.correct.channels},
                  {"hierarchy", hierarchy},
                  {"injection_cov", std::string(injection_cov_name(cfg.correct.injection_cov))},
                  {"n_calib", cfg.correct.n_calib},
                  {"n_probe", cfg.correct.n_probe}};
  c["eval"] = {{"n_samples", cfg.eval.n_samples},
               {"attribute", std::string(attribute_name(cfg.eval.attribute))},
               {"equalize_tol", cfg.eval.equalize_tol}};
  cfg.canonical = std::move(c);
  cfg.digest = config_digest(cfg.canonical);
  return cfg;
}

void apply_override(json& raw, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ValidationError("--override: expected key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  std::string pointer;
  std::size_t start = 0;
  while (start <= key.size()) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("--override: malformed key '" + key + "'");
    pointer += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!raw.is_object()) raw = json::object();
  raw[json::json_pointer(pointer)] = value;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                             std::optional<std::uint64_t> seed) {
  json raw;
  if (!path.empty()) {
    const std::string text = read_text(path);
    try {
      raw = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError("config '" + path.string() + "': " + e.what());
    }
  } else {
    raw = json::object();
  }
  for (const auto& o : overrides) apply_override(raw, o);
  if (seed) raw["seed"] = *seed;
  const auto base = path.empty() ? std::filesystem::path(".") : path.parent_path();
  return parse_config(raw, base.empty() ? std::filesystem::path(".") : base);
}

std::string config_digest(const nlohmann::ordered_json& canonical) {
  const std::string text = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fairdiff
