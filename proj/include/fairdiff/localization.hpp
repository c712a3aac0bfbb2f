#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fairdiff/common.hpp"
#include "fairdiff/diffusion.hpp"
#include "fairdiff/gmm.hpp"
#include "fairdiff/injection.hpp"
#include "fairdiff/population.hpp"

namespace fairdiff {

struct GaussianComponent {
  Vector mean;
  Eigen::MatrixXd covariance;
};

GaussianComponent component_of(const GmmModel& model, std::size_t k);

/// Closed-form KL(p || q); symmetric=true returns the mean of both directions.
double kl_gaussian(const GaussianComponent& p, const GaussianComponent& q, bool symmetric = false);

/// table(i, j) = KL(P_i || P_j).
Eigen::MatrixXd pairwise_kl(const GmmModel& model);

/// Minimum symmetric KL over component pairs. Needs K >= 2.
double separability(const GmmModel& model);

struct FitProfile {
  std::size_t components = 0;
  double separability = 0.0;
};

/// Which fitted mixture describes which attribute.
struct AttributeAssignment {
  std::vector<Attribute> hierarchy;         // most expressive first
  std::vector<std::size_t> fit_for;         // parallel to hierarchy
  std::vector<Attribute> attribute_of_fit;  // parallel to the fit list
  std::vector<double> separability;         // per fit
  std::vector<Eigen::MatrixXd> kl_tables;   // per fit; empty when built from profiles

  std::size_t fit_of(Attribute a) const;
};

/// Fits whose component count matches exactly one attribute's class count are
/// assigned to it directly. Attributes sharing a class count receive the
/// matching fits in hierarchy order, most separable fit first; equal
/// separability keeps list order.
AttributeAssignment assign_attributes(std::span<const FitProfile> fits,
                                      std::span<const Attribute> hierarchy);
AttributeAssignment assign_attributes(std::span<const GmmFit> fits,
                                      std::span<const Attribute> hierarchy);

struct ComponentNaming {
  Attribute attribute = Attribute::gender;
  std::vector<int> component_class;                   // majority class per component
  std::vector<double> majority_fraction;
  std::vector<std::vector<std::size_t>> histogram;    // component x class
  bool bijective = false;
};

/// Two components claimed the same class. Carries the full diagnostics.
class NamingError : public NumericalError {
 public:
  NamingError(const std::string& what, ComponentNaming naming)
      : NumericalError(what), naming_(std::move(naming)) {}
  const ComponentNaming& naming() const { return naming_; }

 private:
  ComponentNaming naming_;
};

/// Names each component by the majority Bayes class of n_probe latents drawn
/// from it and denoised from t_star to 0.
ComponentNaming name_components(const ComponentInjector& injector, const Denoiser& den,
                                const NoiseSchedule& sched, const Population& pop,
                                Attribute attribute, int t_star, std::size_t n_probe,
                                std::uint64_t seed, const Execution& exec = {});

}  // namespace fairdiff
