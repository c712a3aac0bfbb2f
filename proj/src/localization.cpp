#include "fairdiff/localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace fairdiff {

GaussianComponent component_of(const GmmModel& model, std::size_t k) {
  if (k >= model.components()) throw ValidationError("component index out of range");
  GaussianComponent c;
  c.mean = model.means.row(static_cast<Eigen::Index>(k)).transpose();
  c.covariance = model.covariances[k];
  if (model.cov_type == CovarianceType::diagonal) {
    c.covariance = Eigen::MatrixXd(c.covariance.diagonal().asDiagonal());
  }
  return c;
}

double kl_gaussian(const GaussianComponent& p, const GaussianComponent& q, bool symmetric) {
  if (symmetric) return 0.5 * (kl_gaussian(p, q, false) + kl_gaussian(q, p, false));
  const Eigen::Index d = p.mean.size();
  if (q.mean.size() != d || p.covariance.rows() != d || p.covariance.cols() != d ||
      q.covariance.rows() != d || q.covariance.cols() != d) {
    throw ValidationError("kl_gaussian: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> lp(p.covariance);
  Eigen::LLT<Eigen::MatrixXd> lq(q.covariance);
  if (lp.info() != Eigen::Success || lq.info() != Eigen::Success) {
    throw NumericalError("kl_gaussian: singular covariance");
  }
  const Eigen::MatrixXd Lq = lq.matrixL();
  const Eigen::MatrixXd Lp = lp.matrixL();
  // tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
  const Eigen::MatrixXd A = lq.matrixL().solve(Lp);
  const Vector diff = q.mean - p.mean;
  const Vector y = lq.matrixL().solve(diff);
  const double log_det_q = 2.0 * Lq.diagonal().array().log().sum();
  const double log_det_p = 2.0 * Lp.diagonal().array().log().sum();
  const double kl = 0.5 * (A.squaredNorm() + y.squaredNorm() - static_cast<double>(d) + log_det_q - log_det_p);
  return std::max(kl, 0.0);
}

Eigen::MatrixXd pairwise_kl(const GmmModel& model) {
  const std::size_t K = model.components();
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  std::vector<GaussianComponent> comps;
  for (std::size_t k = 0; k < K; ++k) comps.push_back(component_of(model, k));
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      if (i != j) table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kl_gaussian(comps[i], comps[j]);
    }
  }
  return table;
}

double separability(const GmmModel& model) {
  const std::size_t K = model.components();
  if (K < 2) throw ValidationError("separability: need at least two components");
  const Eigen::MatrixXd table = pairwise_kl(model);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = i + 1; j < K; ++j) {
      const auto a = static_cast<Eigen::Index>(i);
      const auto b = static_cast<Eigen::Index>(j);
      best = std::min(best, 0.5 * (table(a, b) + table(b, a)));
    }
  }
  return best;
}

std::size_t AttributeAssignment::fit_of(Attribute a) const {
  for (std::size_t i = 0; i < hierarchy.size(); ++i) {
    if (hierarchy[i] == a) return fit_for[i];
  }
  throw ValidationError("attribute '" + std::string(attribute_name(a)) + "' is not assigned");
}

AttributeAssignment assign_attributes(std::span<const FitProfile> fits,
                                      std::span<const Attribute> hierarchy) {
  for (std::size_t i = 0; i < hierarchy.size(); ++i) {
    for (std::size_t j = i + 1; j < hierarchy.size(); ++j) {
      if (hierarchy[i] == hierarchy[j]) throw ValidationError("assign_attributes: duplicate attribute in hierarchy");
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> attrs_by_k;  // class count -> hierarchy positions
  std::map<std::size_t, std::vector<std::size_t>> fits_by_k;
  for (std::size_t i = 0; i < hierarchy.size(); ++i) attrs_by_k[class_count(hierarchy[i])].push_back(i);
  for (std::size_t f = 0; f < fits.size(); ++f) fits_by_k[fits[f].components].push_back(f);

  auto describe = [&] {
    std::ostringstream s;
    s << "fit component counts (";
    for (std::size_t f = 0; f < fits.size(); ++f) s << (f ? ", " : "") << fits[f].components;
    s << ") incompatible with attribute class counts (";
    for (std::size_t i = 0; i < hierarchy.size(); ++i) {
      s << (i ? ", " : "") << attribute_name(hierarchy[i]) << "=" << class_count(hierarchy[i]);
    }
    s << ")";
    return s.str();
  };
  if (fits.size() != hierarchy.size()) throw ValidationError("assign_attributes: " + describe());
  for (const auto& [k, positions] : attrs_by_k) {
    auto it = fits_by_k.find(k);
    if (it == fits_by_k.end() || it->second.size() != positions.size()) {
      throw ValidationError("assign_attributes: " + describe());
    }
  }

  AttributeAssignment out;
  out.hierarchy.assign(hierarchy.begin(), hierarchy.end());
  out.fit_for.assign(hierarchy.size(), 0);
  out.attribute_of_fit.assign(fits.size(), Attribute::age);
  for (const auto& f : fits) out.separability.push_back(f.separability);

  for (const auto& [k, positions] : attrs_by_k) {
    std::vector<std::size_t> ranked = fits_by_k[k];
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      return fits[a].separability > fits[b].separability;
    });
    for (std::size_t r = 0; r < positions.size(); ++r) {
      out.fit_for[positions[r]] = ranked[r];
      out.attribute_of_fit[ranked[r]] = hierarchy[positions[r]];
    }
  }
  return out;
}

AttributeAssignment assign_attributes(std::span<const GmmFit> fits,
                                      std::span<const Attribute> hierarchy) {
  std::vector<FitProfile> profiles;
  std::vector<Eigen::MatrixXd> tables;
  for (const auto& f : fits) {
    const std::size_t K = f.model.components();
    profiles.push_back({K, K >= 2 ? separability(f.model) : 0.0});
    tables.push_back(pairwise_kl(f.model));
  }
  AttributeAssignment out = assign_attributes(std::span<const FitProfile>(profiles), hierarchy);
  out.kl_tables = std::move(tables);
  return out;
}

ComponentNaming name_components(const ComponentInjector& injector, const Denoiser& den,
                                const NoiseSchedule& sched, const Population& pop,
                                Attribute attribute, int t_star, std::size_t n_probe,
                                std::uint64_t seed, const Execution& exec) {
  const std::size_t classes = class_count(attribute);
  const std::size_t K = injector.components();
  if (n_probe == 0) throw ValidationError("name_components: n_probe must be >= 1");
  if (K != classes) {
    throw ValidationError("name_components: fit has " + std::to_string(K) + " components but " +
                          std::string(attribute_name(attribute)) + " has " +
                          std::to_string(classes) + " classes");
  }
  if (t_star < 1 || t_star > sched.steps()) throw ValidationError("name_components: t_star out of range");

  const std::size_t d = injector.dimension();
  std::vector<std::size_t> predicted(K * n_probe);
  parallel_for(K * n_probe, exec, [&](std::size_t index) {
    const std::size_t k = index / n_probe;
    std::vector<double> x(d);
    CounterStream rng(seed, StreamTag::probe_inject, index);
    injector.draw(k, rng, x);
    denoise_range(den, sched, x, t_star, 0, {seed, StreamTag::probe_step, index});
    predicted[index] = bayes_classify(pop, attribute, x).argmax;
  });

  ComponentNaming naming;
  naming.attribute = attribute;
  naming.histogram.assign(K, std::vector<std::size_t>(classes, 0));
  for (std::size_t index = 0; index < predicted.size(); ++index) {
    ++naming.histogram[index / n_probe][predicted[index]];
  }
  for (std::size_t k = 0; k < K; ++k) {
    const auto& h = naming.histogram[k];
    const auto best = static_cast<std::size_t>(std::max_element(h.begin(), h.end()) - h.begin());
    naming.component_class.push_back(static_cast<int>(best));
    naming.majority_fraction.push_back(static_cast<double>(h[best]) / static_cast<double>(n_probe));
  }
  std::vector<int> sorted = naming.component_class;
  std::sort(sorted.begin(), sorted.end());
  naming.bijective = std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
  if (!naming.bijective) {
    std::ostringstream msg;
    msg << "name_components: ambiguous naming for " << attribute_name(attribute) << ":";
    for (std::size_t k = 0; k < K; ++k) {
      msg << " component " << k << " -> " << class_name(attribute, static_cast<std::size_t>(naming.component_class[k]))
          << " (" << naming.majority_fraction[k] << ")";
    }
    throw NamingError(msg.str(), naming);
  }
  return naming;
}

}  // namespace fairdiff
