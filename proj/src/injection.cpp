#include "fairdiff/injection.hpp"

#include <cmath>
#include <string>

namespace fairdiff {

InjectionCov parse_injection_cov(std::string_view name) {
  if (name == "fitted") return InjectionCov::fitted;
  if (name == "isotropic_residual") return InjectionCov::isotropic_residual;
  throw ValidationError("correct.injection_cov: unknown mode '" + std::string(name) + "'");
}

std::string_view injection_cov_name(InjectionCov mode) {
  return mode == InjectionCov::fitted ? "fitted" : "isotropic_residual";
}

ComponentInjector::ComponentInjector(GmmModel model, std::vector<std::size_t> channels,
                                     RowMatrix pool, std::size_t dimension, InjectionCov mode,
                                     double residual_variance)
    : model_(std::move(model)),
      channels_(std::move(channels)),
      pool_(std::move(pool)),
      dimension_(dimension) {
  const std::size_t covered = channels_.empty() ? dimension_ : channels_.size();
  if (model_.dimension() != covered) {
    throw ValidationError("injector: mixture dimension does not match the covered coordinates");
  }
  for (std::size_t c : channels_) {
    if (c >= dimension_) throw ValidationError("injector: channel index out of range");
  }
  if (!channels_.empty() && channels_.size() < dimension_) {
    if (pool_.rows() == 0 || static_cast<std::size_t>(pool_.cols()) != dimension_) {
      throw ValidationError("injector: a calibration pool is required for partial channels");
    }
  }
  if (!(residual_variance > 0.0)) throw ValidationError("injector: residual variance must be positive");

  const auto m = static_cast<Eigen::Index>(covered);
  for (std::size_t k = 0; k < model_.components(); ++k) {
    if (mode == InjectionCov::isotropic_residual) {
      factors_.push_back(std::sqrt(residual_variance) * Eigen::MatrixXd::Identity(m, m));
    } else if (model_.cov_type == CovarianceType::diagonal) {
      factors_.push_back(model_.covariances[k].diagonal().cwiseSqrt().asDiagonal());
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(model_.covariances[k]);
      if (llt.info() != Eigen::Success) throw NumericalError("injector: covariance not positive definite");
      factors_.push_back(llt.matrixL());
    }
  }
}

void ComponentInjector::draw(std::size_t component, CounterStream& rng, std::span<double> out) const {
  if (component >= components()) throw ValidationError("injector: component out of range");
  if (out.size() != dimension_) throw ValidationError("injector: output dimension mismatch");
  const bool partial = !channels_.empty() && channels_.size() < dimension_;
  if (partial) {
    const auto row = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pool_.rows())));
    for (std::size_t j = 0; j < dimension_; ++j) out[j] = pool_(row, static_cast<Eigen::Index>(j));
  }
  const auto m = static_cast<Eigen::Index>(model_.dimension());
  Vector z(m);
  rng.normals({z.data(), static_cast<std::size_t>(m)});
  const Vector v = model_.means.row(static_cast<Eigen::Index>(component)).transpose() + factors_[component] * z;
  for (Eigen::Index j = 0; j < m; ++j) {
    const std::size_t target = channels_.empty() ? static_cast<std::size_t>(j) : channels_[static_cast<std::size_t>(j)];
    out[target] = v[j];
  }
}

}  // namespace fairdiff
