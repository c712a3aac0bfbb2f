#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "fairdiff/common.hpp"

namespace fairdiff {

enum class CovarianceType { diagonal, full };
enum class InitStrategy { random_points, farthest_first };

CovarianceType parse_covariance_type(std::string_view name);
std::string_view covariance_type_name(CovarianceType type);

/// Gaussian mixture parameters. Covariances are stored as full matrices; in
/// diagonal mode the off-diagonal entries are zero and ignored.
struct GmmModel {
  Vector weights;                        // K
  RowMatrix means;                       // K x d
  std::vector<Eigen::MatrixXd> covariances;
  CovarianceType cov_type = CovarianceType::diagonal;

  std::size_t components() const { return static_cast<std::size_t>(weights.size()); }
  std::size_t dimension() const { return static_cast<std::size_t>(means.cols()); }
};

struct Responsibilities {
  RowMatrix tau;   // N x K, rows sum to one
  Vector counts;   // N_k = sum_n tau(n, k)
};

struct EStepResult {
  Responsibilities resp;
  double loglik = 0.0;
};

/// Raised by m_step when a component's effective count N_k falls below
/// 1e-8 N; em_fit treats it as a failed restart.
class EmptyComponentError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct EmOptions {
  double tol = 1e-6;           // absolute log-likelihood change
  int max_iter = 500;
  int n_restarts = 4;
  std::uint64_t seed = 0;
  double reg_floor = 1e-6;
  InitStrategy init = InitStrategy::farthest_first;
};

struct GmmFit {
  GmmModel model;
  std::vector<double> loglik_trace;  // one entry per E-step
  int iterations = 0;                // M-steps performed
  bool converged = false;
  Responsibilities resp;             // consistent with model
  int restart = 0;                   // which restart won
};

/// Means are data rows chosen per strategy; covariances are the data's
/// per-coordinate variance (floored at reg_floor); weights uniform.
///
/// farthest_first starts from the row farthest from the data mean (the row
/// nearest it when K = 1) and repeatedly adds the row with the largest
/// distance to its nearest chosen centre. It is independent of row order up
/// to exact distance ties; the seed is unused.
GmmModel init_params(const RowMatrix& data, std::size_t K, InitStrategy strategy,
                     std::uint64_t seed, CovarianceType cov_type = CovarianceType::diagonal,
                     double reg_floor = 1e-6);

EStepResult e_step(const GmmModel& model, const RowMatrix& data);

GmmModel m_step(const RowMatrix& data, const Responsibilities& resp, CovarianceType cov_type,
                double reg_floor);

/// EM until |delta loglik| < tol or max_iter M-steps. Restart 0 uses
/// opts.init, later restarts use random_points with derived seeds. Returns the
/// restart with the highest final log-likelihood.
GmmFit em_fit(const RowMatrix& data, std::size_t K, CovarianceType cov_type,
              const EmOptions& opts = {});

double log_likelihood(const GmmModel& model, const RowMatrix& data);

/// Per-component log density log N(x_n; mu_k, Sigma_k), N x K.
RowMatrix component_log_densities(const GmmModel& model, const RowMatrix& data);

/// n draws from component k; draw i depends only on (seed, k, i).
RowMatrix gmm_sample(const GmmModel& model, std::size_t component, std::size_t n,
                     std::uint64_t seed);

}  // namespace fairdiff
