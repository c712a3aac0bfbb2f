#include "fairdiff/population.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "fairdiff/random.hpp"

namespace fairdiff {

namespace {

constexpr std::array<std::string_view, kAttributeCount> kAttributeNames{"age", "gender", "race"};
constexpr std::array<std::size_t, kAttributeCount> kClassCounts{2, 2, 3};
const std::array<std::vector<std::string_view>, kAttributeCount> kClassNames{
    std::vector<std::string_view>{"young", "old"},
    std::vector<std::string_view>{"male", "female"},
    std::vector<std::string_view>{"white", "black", "other"}};

std::size_t index_of(Attribute a) { return static_cast<std::size_t>(a); }

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Vector json_vector(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array()) throw ValidationError(key + ": expected a list of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(key + "[" + std::to_string(i) + "]: not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace

std::size_t class_count(Attribute a) { return kClassCounts.at(index_of(a)); }

std::string_view attribute_name(Attribute a) { return kAttributeNames.at(index_of(a)); }

std::string_view class_name(Attribute a, std::size_t cls) {
  return kClassNames.at(index_of(a)).at(cls);
}

Attribute parse_attribute(std::string_view name) {
  for (Attribute a : kAllAttributes) {
    if (attribute_name(a) == name) return a;
  }
  throw ValidationError("unknown attribute '" + std::string(name) + "'");
}

Population::Population(std::size_t dimension, std::vector<ComponentSpec> components)
    : dimension_(dimension), components_(std::move(components)) {
  if (dimension_ == 0) throw ValidationError("population dimension must be >= 1");
  if (components_.empty()) throw ValidationError("population needs at least one component");

  double total = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    auto& c = components_[k];
    const std::string where = "components[" + std::to_string(k) + "]";
    const auto d = static_cast<Eigen::Index>(dimension_);
    if (c.mean.size() != d) throw ValidationError(where + ".mean: dimension mismatch");
    if (c.cov_diag.size() != d) throw ValidationError(where + ".cov_diag: dimension mismatch");
    if (!c.mean.allFinite()) throw ValidationError(where + ".mean: non-finite entry");
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!std::isfinite(c.cov_diag[j]) || c.cov_diag[j] < 0.0) {
        throw ValidationError(where + ".cov_diag: covariance is not positive definite");
      }
      c.cov_diag[j] = std::max(c.cov_diag[j], kCovFloor);
    }
    if (!std::isfinite(c.weight) || c.weight < 0.0 || c.weight > 1.0) {
      throw ValidationError(where + ".weight: must lie in [0, 1]");
    }
    for (Attribute a : kAllAttributes) {
      const int label = c.labels[index_of(a)];
      if (label < 0 || static_cast<std::size_t>(label) >= class_count(a)) {
        throw ValidationError(where + ".labels." + std::string(attribute_name(a)) +
                              ": class index out of range");
      }
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "components[].weight: weights sum to " << total << ", expected 1";
    throw ValidationError(msg.str());
  }
  for (auto& c : components_) c.weight /= total;
}

Population build_population(const nlohmann::json& spec) {
  if (!spec.is_object()) throw ValidationError("population: expected an object");
  for (const auto& [key, _] : spec.items()) {
    if (key != "dimension" && key != "components") {
      throw ValidationError("population." + key + ": unknown key");
    }
  }
  if (!spec.contains("dimension") || !spec["dimension"].is_number_integer() ||
      spec["dimension"].get<long long>() < 1) {
    throw ValidationError("dimension: expected a positive integer");
  }
  const auto d = spec["dimension"].get<std::size_t>();
  if (!spec.contains("components") || !spec["components"].is_array()) {
    throw ValidationError("components: expected a list");
  }
  std::vector<ComponentSpec> comps;
  const auto& list = spec["components"];
  for (std::size_t k = 0; k < list.size(); ++k) {
    const auto& item = list[k];
    const std::string where = "components[" + std::to_string(k) + "]";
    if (!item.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [key, _] : item.items()) {
      if (key != "mean" && key != "cov_diag" && key != "weight" && key != "labels") {
        throw ValidationError(where + "." + key + ": unknown key");
      }
    }
    for (const char* key : {"mean", "cov_diag", "weight", "labels"}) {
      if (!item.contains(key)) throw ValidationError(where + "." + key + ": missing");
    }
    ComponentSpec c;
    c.mean = json_vector(item["mean"], where + ".mean");
    c.cov_diag = json_vector(item["cov_diag"], where + ".cov_diag");
    if (!item["weight"].is_number()) throw ValidationError(where + ".weight: not a number");
    c.weight = item["weight"].get<double>();
    const auto& labels = item["labels"];
    if (!labels.is_object()) throw ValidationError(where + ".labels: expected an object");
    for (const auto& [key, _] : labels.items()) parse_attribute(key);
    for (Attribute a : kAllAttributes) {
      const std::string name(attribute_name(a));
      if (!labels.contains(name)) {
        throw ValidationError(where + ".labels." + name + ": missing attribute label");
      }
      if (!labels[name].is_number_integer()) {
        throw ValidationError(where + ".labels." + name + ": expected a class index");
      }
      c.labels[index_of(a)] = labels[name].get<int>();
    }
    comps.push_back(std::move(c));
  }
  return Population(d, std::move(comps));
}

nlohmann::ordered_json population_to_json(const Population& pop) {
  nlohmann::ordered_json out;
  out["dimension"] = pop.dimension();
  out["components"] = nlohmann::ordered_json::array();
  for (const auto& c : pop.components()) {
    nlohmann::ordered_json item;
    item["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
    item["cov_diag"] = std::vector<double>(c.cov_diag.data(), c.cov_diag.data() + c.cov_diag.size());
    item["weight"] = c.weight;
    nlohmann::ordered_json labels;
    for (Attribute a : kAllAttributes) labels[std::string(attribute_name(a))] = c.labels[index_of(a)];
    item["labels"] = labels;
    out["components"].push_back(item);
  }
  return out;
}

LabeledBatch sample_population(const Population& pop, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_population: n must be >= 1");
  const auto d = static_cast<Eigen::Index>(pop.dimension());
  LabeledBatch batch;
  batch.points.resize(static_cast<Eigen::Index>(n), d);
  batch.labels.resize(n);
  batch.source_component.resize(n);

  std::vector<double> cumulative(pop.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < pop.size(); ++k) cumulative[k] = (acc += pop[k].weight);

  std::vector<double> z(pop.dimension());
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, StreamTag::population, i);
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t k = static_cast<std::size_t>(it - cumulative.begin());
    k = std::min(k, pop.size() - 1);
    rng.normals(z);
    const auto& c = pop[k];
    for (Eigen::Index j = 0; j < d; ++j) {
      batch.points(static_cast<Eigen::Index>(i), j) =
          c.mean[j] + std::sqrt(c.cov_diag[j]) * z[static_cast<std::size_t>(j)];
    }
    batch.labels[i] = c.labels;
    batch.source_component[i] = k;
  }
  return batch;
}

double log_normal_diag(std::span<const double> x, const Vector& mean, const Vector& var) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    const double r = x[static_cast<std::size_t>(j)] - mean[j];
    acc += std::log(2.0 * std::numbers::pi * var[j]) + r * r / var[j];
  }
  return -0.5 * acc;
}

ClassPosterior bayes_classify(const Population& pop, Attribute attribute,
                              std::span<const double> x) {
  const auto ai = index_of(attribute);
  if (ai >= kAttributeCount) throw ValidationError("bayes_classify: unknown attribute id");
  if (x.size() != pop.dimension()) throw ValidationError("bayes_classify: dimension mismatch");
  const std::size_t classes = class_count(attribute);

  std::vector<double> joint(pop.size());
  for (std::size_t k = 0; k < pop.size(); ++k) {
    const auto& c = pop[k];
    joint[k] = c.weight > 0.0 ? std::log(c.weight) + log_normal_diag(x, c.mean, c.cov_diag)
                              : -std::numeric_limits<double>::infinity();
  }
  const double total = log_sum_exp(joint);

  ClassPosterior out;
  out.posterior.assign(classes, 0.0);
  std::vector<double> members;
  for (std::size_t cls = 0; cls < classes; ++cls) {
    members.clear();
    for (std::size_t k = 0; k < pop.size(); ++k) {
      if (static_cast<std::size_t>(pop[k].labels[ai]) == cls) members.push_back(joint[k]);
    }
    if (!members.empty()) out.posterior[cls] = std::exp(log_sum_exp(members) - total);
  }
  if (!std::isfinite(total)) {
    // Every density underflowed; fall back to the prior.
    std::fill(out.posterior.begin(), out.posterior.end(), 0.0);
    for (const auto& c : pop.components()) out.posterior[static_cast<std::size_t>(c.labels[ai])] += c.weight;
  }
  double s = 0.0;
  for (double p : out.posterior) s += p;
  for (double& p : out.posterior) p /= s;
  out.argmax = 0;
  for (std::size_t cls = 1; cls < classes; ++cls) {
    if (out.posterior[cls] > out.posterior[out.argmax]) out.argmax = cls;
  }
  return out;
}

Marginals attribute_marginals(const Population& pop) {
  Marginals m;
  for (Attribute a : kAllAttributes) {
    auto& v = m[index_of(a)];
    v.assign(class_count(a), 0.0);
    for (const auto& c : pop.components()) v[static_cast<std::size_t>(c.labels[index_of(a)])] += c.weight;
  }
  return m;
}

Population grid_population(const GridSpec& spec) {
  if (spec.dimension < 6) throw ValidationError("grid population needs dimension >= 6");
  if (!(spec.component_std > 0.0)) throw ValidationError("component_std must be positive");
  for (Attribute a : kAllAttributes) {
    const auto ai = index_of(a);
    const auto& m = spec.marginals[ai];
    const std::string key = "marginals." + std::string(attribute_name(a));
    if (m.size() != class_count(a)) throw ValidationError(key + ": wrong number of classes");
    double s = 0.0;
    for (double p : m) {
      if (!(p >= 0.0)) throw ValidationError(key + ": negative proportion");
      s += p;
    }
    if (spec.included[ai] && std::abs(s - 1.0) > 1e-9) {
      std::ostringstream msg;
      msg << key << ": proportions sum to " << s << ", expected 1";
      throw ValidationError(msg.str());
    }
    if (!(spec.separation[ai] >= 0.0)) throw ValidationError("separation must be >= 0");
  }

  const double s = spec.component_std;
  const double diag = 1.0 / std::sqrt(2.0);
  auto offsets = [&](Attribute a, int cls) -> std::array<double, 2> {
    const double sep = spec.separation[index_of(a)] * s;
    if (class_count(a) == 2) {
      const double sign = cls == 0 ? -0.5 : 0.5;
      return {sign * sep * diag, sign * sep * diag};
    }
    // Equilateral triangle of side sep centred at the origin.
    const double radius = sep / std::sqrt(3.0);
    const double angle = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * cls / 3.0;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  };

  std::array<std::vector<int>, kAttributeCount> classes;
  for (Attribute a : kAllAttributes) {
    const auto ai = index_of(a);
    if (spec.included[ai]) {
      for (std::size_t c = 0; c < class_count(a); ++c) classes[ai].push_back(static_cast<int>(c));
    } else {
      classes[ai] = {0};
    }
  }

  std::vector<ComponentSpec> comps;
  for (int age : classes[0]) {
    for (int gender : classes[1]) {
      for (int race : classes[2]) {
        ComponentSpec c;
        c.labels = {age, gender, race};
        c.mean = Vector::Zero(static_cast<Eigen::Index>(spec.dimension));
        c.cov_diag = Vector::Constant(static_cast<Eigen::Index>(spec.dimension), s * s);
        c.weight = 1.0;
        for (Attribute a : kAllAttributes) {
          const auto ai = index_of(a);
          if (!spec.included[ai]) continue;
          const auto off = offsets(a, c.labels[ai]);
          c.mean[static_cast<Eigen::Index>(2 * ai)] = off[0];
          c.mean[static_cast<Eigen::Index>(2 * ai + 1)] = off[1];
          c.weight *= spec.marginals[ai][static_cast<std::size_t>(c.labels[ai])];
        }
        if (c.weight > 0.0) comps.push_back(std::move(c));
      }
    }
  }
  return Population(spec.dimension, std::move(comps));
}

GridSpec grid_preset(std::string_view name) {
  GridSpec spec;
  if (name == "balanced") return spec;
  if (name == "fairface-like") {
    spec.marginals = {std::vector<double>{0.73, 0.27}, std::vector<double>{0.53, 0.47},
                      std::vector<double>{0.19, 0.14, 0.67}};
    return spec;
  }
  if (name == "ffhq-like") {
    spec.included = {true, true, false};
    spec.marginals = {std::vector<double>{0.78, 0.22}, std::vector<double>{0.44, 0.56},
                      std::vector<double>{1.0, 0.0, 0.0}};
    return spec;
  }
  throw ValidationError("population.preset: unknown preset '" + std::string(name) + "'");
}

}  // namespace fairdiff
