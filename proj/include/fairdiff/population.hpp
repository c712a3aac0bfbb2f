#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fairdiff/common.hpp"

namespace fairdiff {

/// Sensitive attributes. The class names are nominal labels for abstract
/// synthetic classes.
enum class Attribute : int { age = 0, gender = 1, race = 2 };

inline constexpr std::size_t kAttributeCount = 3;
inline constexpr std::array<Attribute, kAttributeCount> kAllAttributes{
    Attribute::age, Attribute::gender, Attribute::race};

std::size_t class_count(Attribute a);
std::string_view attribute_name(Attribute a);
std::string_view class_name(Attribute a, std::size_t cls);
/// Throws ValidationError for unknown names.
Attribute parse_attribute(std::string_view name);

/// Smallest allowed variance of a population component.
inline constexpr double kCovFloor = 1e-6;

/// One Gaussian of the ground-truth mixture. Covariance is diagonal.
struct ComponentSpec {
  Vector mean;
  Vector cov_diag;
  double weight = 0.0;
  std::array<int, kAttributeCount> labels{};  // indexed by Attribute
};

/// Labeled Gaussian mixture standing in for an annotated face dataset.
class Population {
 public:
  /// Validates and normalizes. Weights summing to within 1e-9 of one are
  /// renormalized; anything else throws ValidationError.
  Population(std::size_t dimension, std::vector<ComponentSpec> components);

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return components_.size(); }
  const std::vector<ComponentSpec>& components() const { return components_; }
  const ComponentSpec& operator[](std::size_t k) const { return components_[k]; }

 private:
  std::size_t dimension_;
  std::vector<ComponentSpec> components_;
};

struct LabeledBatch {
  RowMatrix points;
  std::vector<std::array<int, kAttributeCount>> labels;
  std::vector<std::size_t> source_component;
};

/// Parses the population description (keys: dimension, components[].mean,
/// components[].cov_diag, components[].weight, components[].labels.{age,gender,race}).
Population build_population(const nlohmann::json& spec);
nlohmann::ordered_json population_to_json(const Population& pop);

/// i.i.d. draws; draw i depends only on (seed, i).
LabeledBatch sample_population(const Population& pop, std::size_t n, std::uint64_t seed);

struct ClassPosterior {
  std::vector<double> posterior;
  std::size_t argmax = 0;
};

/// Exact class posterior p(class | x) under the population.
ClassPosterior bayes_classify(const Population& pop, Attribute attribute,
                              std::span<const double> x);

using Marginals = std::array<std::vector<double>, kAttributeCount>;
Marginals attribute_marginals(const Population& pop);

/// log N(x; mean, diag(var)).
double log_normal_diag(std::span<const double> x, const Vector& mean, const Vector& var);

/// Synthetic grid population: one component per label combination of the
/// included attributes. Each attribute owns a two-coordinate block
/// (age 0-1, gender 2-3, race 4-5); remaining coordinates carry shared noise.
/// Binary attributes place their classes at +/- separation/2 along the block
/// diagonal; race places its three classes on an equilateral triangle of
/// side `separation`. Separations are in units of component_std. Component
/// weights are the product of the attribute marginals.
struct GridSpec {
  std::size_t dimension = 8;
  double component_std = 3.0;
  std::array<bool, kAttributeCount> included{true, true, true};
  std::array<double, kAttributeCount> separation{8.0, 5.0, 3.0};
  Marginals marginals{std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5},
                      std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}};
};

Population grid_population(const GridSpec& spec);

/// Named presets: "balanced", "fairface-like", "ffhq-like".
GridSpec grid_preset(std::string_view name);

}  // namespace fairdiff
