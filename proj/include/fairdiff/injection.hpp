#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fairdiff/common.hpp"
#include "fairdiff/gmm.hpp"
#include "fairdiff/random.hpp"

namespace fairdiff {

/// Covariance of injected latents. fitted: the component's own covariance.
/// isotropic_residual: (1 - abar_{t*}) I around the component mean.
enum class InjectionCov { fitted, isotropic_residual };

InjectionCov parse_injection_cov(std::string_view name);
std::string_view injection_cov_name(InjectionCov mode);

/// Draws full latent vectors x_{t*} from one component of a fitted mixture.
///
/// The mixture may cover only a subset of coordinates (`channels`). The other
/// coordinates are then copied from a calibration latent picked uniformly
/// from `pool`, so they keep the model's own marginal at t*.
class ComponentInjector {
 public:
  ComponentInjector(GmmModel model, std::vector<std::size_t> channels, RowMatrix pool,
                    std::size_t dimension, InjectionCov mode, double residual_variance);

  std::size_t components() const { return model_.components(); }
  std::size_t dimension() const { return dimension_; }
  const GmmModel& model() const { return model_; }

  void draw(std::size_t component, CounterStream& rng, std::span<double> out) const;

 private:
  GmmModel model_;
  std::vector<std::size_t> channels_;  // empty: all coordinates
  RowMatrix pool_;
  std::size_t dimension_;
  std::vector<Eigen::MatrixXd> factors_;  // lower-triangular per component
};

}  // namespace fairdiff
