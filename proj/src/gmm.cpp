#include "fairdiff/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>

#include "fairdiff/random.hpp"

namespace fairdiff {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr double kEmptyFraction = 1e-8;

void check_data(const GmmModel& model, const RowMatrix& data) {
  if (static_cast<std::size_t>(data.cols()) != model.dimension()) {
    throw ValidationError("GMM: data dimension " + std::to_string(data.cols()) +
                          " does not match model dimension " + std::to_string(model.dimension()));
  }
}

/// Projects a symmetric matrix onto {S : lambda_min(S) >= floor}.
Eigen::MatrixXd clamp_spectrum(const Eigen::MatrixXd& s, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (s + s.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("GMM: covariance eigensolve failed");
  if (eig.eigenvalues().minCoeff() >= floor) return 0.5 * (s + s.transpose());
  const Vector lambda = eig.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd out = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

CovarianceType parse_covariance_type(std::string_view name) {
  if (name == "diagonal") return CovarianceType::diagonal;
  if (name == "full") return CovarianceType::full;
  throw ValidationError("gmm.cov_type: unknown covariance type '" + std::string(name) + "'");
}

std::string_view covariance_type_name(CovarianceType type) {
  return type == CovarianceType::diagonal ? "diagonal" : "full";
}

GmmModel init_params(const RowMatrix& data, std::size_t K, InitStrategy strategy,
                     std::uint64_t seed, CovarianceType cov_type, double reg_floor) {
  const auto N = static_cast<std::size_t>(data.rows());
  if (K == 0) throw ValidationError("init_params: K must be >= 1");
  if (N < K) {
    throw ValidationError("init_params: need at least K=" + std::to_string(K) + " rows, got " +
                          std::to_string(N));
  }
  const Eigen::Index d = data.cols();
  const Eigen::RowVectorXd mean = data.colwise().mean();
  Vector var = (data.rowwise() - mean).array().square().colwise().mean().transpose();
  var = var.cwiseMax(reg_floor);

  std::vector<std::size_t> chosen;
  chosen.reserve(K);
  if (strategy == InitStrategy::random_points) {
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    CounterStream rng(seed, StreamTag::gmm_init, 0);
    for (std::size_t i = 0; i < K; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(N - i));
      std::swap(idx[i], idx[j]);
      chosen.push_back(idx[i]);
    }
  } else {
    Eigen::Index start = 0;
    const Vector from_mean = (data.rowwise() - mean).rowwise().squaredNorm();
    if (K == 1) from_mean.minCoeff(&start);
    else from_mean.maxCoeff(&start);
    chosen.push_back(static_cast<std::size_t>(start));
    Vector mindist = (data.rowwise() - data.row(start)).rowwise().squaredNorm();
    while (chosen.size() < K) {
      Eigen::Index next = 0;
      mindist.maxCoeff(&next);
      chosen.push_back(static_cast<std::size_t>(next));
      mindist = mindist.cwiseMin((data.rowwise() - data.row(next)).rowwise().squaredNorm());
    }
  }

  GmmModel model;
  model.cov_type = cov_type;
  model.weights = Vector::Constant(static_cast<Eigen::Index>(K), 1.0 / static_cast<double>(K));
  model.means.resize(static_cast<Eigen::Index>(K), d);
  for (std::size_t k = 0; k < K; ++k) {
    model.means.row(static_cast<Eigen::Index>(k)) = data.row(static_cast<Eigen::Index>(chosen[k]));
  }
  model.covariances.assign(K, Eigen::MatrixXd(var.asDiagonal()));
  return model;
}

RowMatrix component_log_densities(const GmmModel& model, const RowMatrix& data) {
  check_data(model, data);
  const Eigen::Index N = data.rows();
  const Eigen::Index d = data.cols();
  const auto K = static_cast<Eigen::Index>(model.components());
  RowMatrix out(N, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& cov = model.covariances[static_cast<std::size_t>(k)];
    const Eigen::RowVectorXd mu = model.means.row(k);
    if (model.cov_type == CovarianceType::diagonal) {
      const Eigen::RowVectorXd var = cov.diagonal().transpose();
      if ((var.array() <= 0.0).any()) throw NumericalError("GMM: non-positive variance");
      const double log_norm = -0.5 * (d * kLog2Pi + var.array().log().sum());
      const Eigen::RowVectorXd inv = var.cwiseInverse();
      for (Eigen::Index n = 0; n < N; ++n) {
        const double q = ((data.row(n) - mu).array().square() * inv.array()).sum();
        out(n, k) = log_norm - 0.5 * q;
      }
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) throw NumericalError("GMM: covariance not positive definite");
      const Eigen::MatrixXd L = llt.matrixL();
      const double log_det = 2.0 * L.diagonal().array().log().sum();
      const double log_norm = -0.5 * (d * kLog2Pi + log_det);
      Eigen::MatrixXd centred = (data.rowwise() - mu).transpose();  // d x N
      llt.matrixL().solveInPlace(centred);
      for (Eigen::Index n = 0; n < N; ++n) out(n, k) = log_norm - 0.5 * centred.col(n).squaredNorm();
    }
  }
  return out;
}

EStepResult e_step(const GmmModel& model, const RowMatrix& data) {
  RowMatrix logp = component_log_densities(model, data);
  const Eigen::Index N = logp.rows();
  const Eigen::Index K = logp.cols();
  for (Eigen::Index k = 0; k < K; ++k) {
    const double w = model.weights[k];
    logp.col(k).array() += w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
  }
  EStepResult out;
  out.loglik = 0.0;
  for (Eigen::Index n = 0; n < N; ++n) {
    const double m = logp.row(n).maxCoeff();
    if (!std::isfinite(m)) throw NumericalError("GMM: datum has zero density under every component");
    auto row = logp.row(n);
    row.array() = (row.array() - m).exp();
    const double s = row.sum();
    row /= s;
    out.loglik += m + std::log(s);
  }
  out.resp.counts = logp.colwise().sum().transpose();
  out.resp.tau = std::move(logp);
  return out;
}

GmmModel m_step(const RowMatrix& data, const Responsibilities& resp, CovarianceType cov_type,
                double reg_floor) {
  const Eigen::Index N = data.rows();
  const Eigen::Index d = data.cols();
  const Eigen::Index K = resp.tau.cols();
  if (resp.tau.rows() != N) throw ValidationError("m_step: responsibilities do not match data");
  const Vector counts = resp.tau.colwise().sum().transpose();
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(counts[k] >= kEmptyFraction * static_cast<double>(N))) {
      throw EmptyComponentError("m_step: component " + std::to_string(k) +
                                " is empty (N_k = " + std::to_string(counts[k]) + ")");
    }
  }
  GmmModel model;
  model.cov_type = cov_type;
  model.weights = counts / counts.sum();
  model.means = (resp.tau.transpose() * data);
  for (Eigen::Index k = 0; k < K; ++k) model.means.row(k) /= counts[k];

  model.covariances.resize(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    const RowMatrix centred = data.rowwise() - model.means.row(k);
    if (cov_type == CovarianceType::diagonal) {
      Vector var = (centred.array().square().colwise() * resp.tau.col(k).array()).colwise().sum().transpose();
      var /= counts[k];
      model.covariances[static_cast<std::size_t>(k)] = var.cwiseMax(reg_floor).asDiagonal();
    } else {
      Eigen::MatrixXd s = centred.transpose() * resp.tau.col(k).asDiagonal() * centred;
      s /= counts[k];
      model.covariances[static_cast<std::size_t>(k)] = clamp_spectrum(s, reg_floor);
    }
  }
  (void)d;
  return model;
}

double log_likelihood(const GmmModel& model, const RowMatrix& data) {
  return e_step(model, data).loglik;
}

namespace {

GmmFit run_em(const RowMatrix& data, GmmModel model, const EmOptions& opts) {
  GmmFit fit;
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 0;; ++iter) {
    EStepResult es = e_step(model, data);
    fit.loglik_trace.push_back(es.loglik);
    const bool done = iter > 0 && std::abs(es.loglik - prev) < opts.tol;
    if (done || fit.iterations >= opts.max_iter) {
      fit.converged = done;
      fit.model = std::move(model);
      fit.resp = std::move(es.resp);
      return fit;
    }
    prev = es.loglik;
    model = m_step(data, es.resp, model.cov_type, opts.reg_floor);
    ++fit.iterations;
  }
}

}  // namespace

GmmFit em_fit(const RowMatrix& data, std::size_t K, CovarianceType cov_type, const EmOptions& opts) {
  if (K == 0) throw ValidationError("em_fit: K must be >= 1");
  if (static_cast<std::size_t>(data.rows()) < K) {
    throw ValidationError("em_fit: need N >= K (N=" + std::to_string(data.rows()) +
                          ", K=" + std::to_string(K) + ")");
  }
  if (opts.n_restarts < 1) throw ValidationError("gmm.restarts: must be >= 1");
  if (opts.max_iter < 1) throw ValidationError("gmm.max_iter: must be >= 1");
  if (!(opts.tol > 0.0)) throw ValidationError("gmm.tol: must be positive");
  if (!(opts.reg_floor > 0.0)) throw ValidationError("gmm.reg_floor: must be positive");

  std::optional<GmmFit> best;
  std::string last_error;
  for (int r = 0; r < opts.n_restarts; ++r) {
    const InitStrategy strategy = r == 0 ? opts.init : InitStrategy::random_points;
    const std::uint64_t seed = splitmix64(opts.seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(r));
    try {
      GmmFit fit = run_em(data, init_params(data, K, strategy, seed, cov_type, opts.reg_floor), opts);
      fit.restart = r;
      if (!best || fit.loglik_trace.back() > best->loglik_trace.back()) best = std::move(fit);
    } catch (const EmptyComponentError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw EmptyComponentError("em_fit: every restart failed; last error: " + last_error);
  return std::move(*best);
}

RowMatrix gmm_sample(const GmmModel& model, std::size_t component, std::size_t n,
                     std::uint64_t seed) {
  if (component >= model.components()) {
    throw ValidationError("gmm_sample: component " + std::to_string(component) + " out of range");
  }
  const auto d = static_cast<Eigen::Index>(model.dimension());
  const auto& cov = model.covariances[component];
  Eigen::MatrixXd factor;
  if (model.cov_type == CovarianceType::diagonal) {
    factor = cov.diagonal().cwiseSqrt().asDiagonal();
  } else {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("gmm_sample: covariance not positive definite");
    factor = llt.matrixL();
  }
  RowMatrix out(static_cast<Eigen::Index>(n), d);
  Vector z(d);
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, StreamTag::gmm_sample, i, static_cast<std::uint32_t>(component));
    rng.normals({z.data(), static_cast<std::size_t>(d)});
    out.row(static_cast<Eigen::Index>(i)) = (model.means.row(static_cast<Eigen::Index>(component)).transpose() + factor * z).transpose();
  }
  return out;
}

}  // namespace fairdiff
