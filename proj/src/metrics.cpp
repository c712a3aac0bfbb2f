#include "fairdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fairdiff {

std::vector<std::size_t> classify_rows(const Population& pop, Attribute attribute, const RowMatrix& samples) {
  if (samples.rows() > 0 && static_cast<std::size_t>(samples.cols()) != pop.dimension()) {
    throw ValidationError("class_counts: sample dimension does not match the population");
  }
  std::vector<std::size_t> out(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        bayes_classify(pop, attribute, {samples.row(i).data(), static_cast<std::size_t>(samples.cols())}).argmax;
  }
  return out;
}

std::vector<std::size_t> class_counts(const Population& pop, Attribute attribute, const RowMatrix& samples) {
  std::vector<std::size_t> counts(class_count(attribute), 0);
  for (std::size_t c : classify_rows(pop, attribute, samples)) ++counts[c];
  return counts;
}

std::vector<double> proportions(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  std::vector<double> out(counts.size(), 0.0);
  if (total == 0.0) return out;
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / total;
  return out;
}

namespace {

void check_props(std::span<const double> p, const char* what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError(std::string("bias_report: negative proportion in ") + what);
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) throw ValidationError(std::string("bias_report: ") + what + " does not sum to 1");
}

void fill_delta_ratio(std::span<const double> train, std::span<const double> gen,
                      std::vector<double>& delta, std::vector<double>& ratio) {
  delta.resize(train.size());
  ratio.resize(train.size());
  for (std::size_t c = 0; c < train.size(); ++c) {
    delta[c] = gen[c] - train[c];
    ratio[c] = train[c] > 0.0 ? gen[c] / train[c] : std::numeric_limits<double>::infinity();
  }
}

}  // namespace

BiasReport bias_report(Attribute attribute, std::span<const double> train_props,
                       std::span<const double> gen_uncorrected,
                       std::optional<std::vector<double>> gen_corrected, double equalize_tol) {
  if (train_props.size() != gen_uncorrected.size() ||
      (gen_corrected && gen_corrected->size() != train_props.size())) {
    throw ValidationError("bias_report: proportion vectors differ in length");
  }
  check_props(train_props, "train proportions");
  check_props(gen_uncorrected, "uncorrected proportions");
  BiasReport r;
  r.attribute = attribute;
  r.train_props.assign(train_props.begin(), train_props.end());
  r.gen_uncorrected.assign(gen_uncorrected.begin(), gen_uncorrected.end());
  fill_delta_ratio(train_props, gen_uncorrected, r.delta_uncorrected, r.ratio_uncorrected);
  if (gen_corrected) {
    check_props(*gen_corrected, "corrected proportions");
    r.gen_corrected = std::move(gen_corrected);
    r.delta_corrected.emplace();
    r.ratio_corrected.emplace();
    fill_delta_ratio(train_props, *r.gen_corrected, *r.delta_corrected, *r.ratio_corrected);
    const double uniform = 1.0 / static_cast<double>(train_props.size());
    bool equal = true;
    for (double p : *r.gen_corrected) equal = equal && std::abs(p - uniform) <= equalize_tol;
    r.equalized_to_uniform = equal;
  }
  return r;
}

MomentSummary moments(const RowMatrix& samples) {
  if (samples.rows() < 2) throw ValidationError("moments: need at least two samples");
  MomentSummary m;
  m.n = static_cast<std::size_t>(samples.rows());
  m.mean = samples.colwise().mean().transpose();
  const RowMatrix centred = samples.rowwise() - m.mean.transpose();
  m.covariance = centred.transpose() * centred / static_cast<double>(samples.rows() - 1);
  m.covariance = 0.5 * (m.covariance + m.covariance.transpose()).eval();
  return m;
}

MomentSummary class_moments(const Population& pop, Attribute attribute, std::size_t cls) {
  const auto ai = static_cast<std::size_t>(attribute);
  const auto d = static_cast<Eigen::Index>(pop.dimension());
  double mass = 0.0;
  Vector mean = Vector::Zero(d);
  for (const auto& c : pop.components()) {
    if (static_cast<std::size_t>(c.labels[ai]) != cls) continue;
    mass += c.weight;
    mean += c.weight * c.mean;
  }
  if (!(mass > 0.0)) throw ValidationError("class_moments: class has no population mass");
  mean /= mass;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& c : pop.components()) {
    if (static_cast<std::size_t>(c.labels[ai]) != cls) continue;
    const Vector dm = c.mean - mean;
    cov += (c.weight / mass) * (Eigen::MatrixXd(c.cov_diag.asDiagonal()) + dm * dm.transpose());
  }
  return {mean, cov, 0};
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (s + s.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("matrix square root: eigensolve failed");
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-8 * scale) {
    throw NumericalError("matrix square root: input is not positive semidefinite");
  }
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double frechet_gaussian(const MomentSummary& a, const MomentSummary& b) {
  if (a.mean.size() != b.mean.size()) throw ValidationError("frechet_gaussian: dimension mismatch");
  // tr((S1 S2)^{1/2}) = tr((S1^{1/2} S2 S1^{1/2})^{1/2}); the inner product is symmetric PSD.
  const Eigen::MatrixXd r1 = psd_sqrt(a.covariance);
  (void)psd_sqrt(b.covariance);  // rejects non-PSD input
  const Eigen::MatrixXd inner = r1 * b.covariance * r1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("frechet_gaussian: eigensolve failed");
  const double tr_cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_cross;
  if (value < 0.0) {
    if (value > -1e-8) return 0.0;
    throw NumericalError("frechet_gaussian: negative result");
  }
  return value;
}

double purity(std::span<const std::size_t> source_component, std::span<const std::size_t> predicted,
              std::span<const int> component_class) {
  if (source_component.size() != predicted.size()) throw ValidationError("purity: length mismatch");
  if (predicted.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int named = component_class[source_component[i]];
    hits += static_cast<std::size_t>(named) == predicted[i];
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double best_mapping_purity(std::span<const std::size_t> source_component,
                           std::span<const std::size_t> predicted, std::size_t components,
                           std::size_t classes) {
  if (components > classes) throw ValidationError("best_mapping_purity: more components than classes");
  std::vector<int> perm(classes);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    best = std::max(best, purity(source_component, predicted, std::span<const int>(perm.data(), components)));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace fairdiff
