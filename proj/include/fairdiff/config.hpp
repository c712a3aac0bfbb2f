#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fairdiff/diffusion.hpp"
#include "fairdiff/gmm.hpp"
#include "fairdiff/injection.hpp"
#include "fairdiff/population.hpp"

namespace fairdiff {

struct DiffusionSettings {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  SigmaRule sigma_rule = SigmaRule::sqrt_beta;
};

struct GmmSettings {
  double tol = 1e-6;
  int max_iter = 500;
  int restarts = 4;
  CovarianceType cov_type = CovarianceType::diagonal;
  double reg_floor = 1e-6;
};

struct CorrectionSettings {
  int t_star = 350;
  std::vector<std::size_t> components{2, 2, 3};               // one mixture per entry
  std::vector<std::vector<std::size_t>> channels{{0, 1}, {2, 3}, {4, 5}};
  std::vector<Attribute> hierarchy{Attribute::age, Attribute::gender, Attribute::race};
  InjectionCov injection_cov = InjectionCov::fitted;
  std::size_t n_calib = 2000;
  std::size_t n_probe = 200;
};

struct EvalSettings {
  std::size_t n_samples = 5000;
  Attribute attribute = Attribute::gender;
  double equalize_tol = 0.03;
};

/// Validated experiment configuration. `canonical` is the fully resolved
/// document (defaults filled in, population inlined); `digest` hashes it.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  Population population;
  double gamma = 1.0;
  DiffusionSettings diffusion;
  GmmSettings gmm;
  CorrectionSettings correct;
  EvalSettings eval;
  std::string output = "runs";
  nlohmann::ordered_json canonical;
  std::string digest;

  NoiseSchedule schedule() const;
  EmOptions em_options(std::uint64_t fit_seed) const;
};

/// Parses a raw configuration. Relative population file paths resolve
/// against base_dir. Unknown keys and type errors throw ValidationError
/// naming the offending key.
ExperimentConfig parse_config(const nlohmann::json& raw, const std::filesystem::path& base_dir = ".");

/// Reads a JSON config file, applies key=value overrides (dotted keys, JSON
/// values; bare words are strings) and an optional seed, then validates.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> seed = std::nullopt);

void apply_override(nlohmann::json& raw, std::string_view assignment);

/// 64-bit FNV-1a of the compact canonical dump, as 16 hex digits.
std::string config_digest(const nlohmann::ordered_json& canonical);

/// Population from the config's population section (preset, file or inline).
Population resolve_population(const nlohmann::json& section, const std::filesystem::path& base_dir);

}  // namespace fairdiff
