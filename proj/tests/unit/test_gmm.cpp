#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"

#include "fairdiff/gmm.hpp"
#include "fairdiff/random.hpp"

using namespace fairdiff;
using doctest::Approx;

namespace {

RowMatrix normal_data(std::size_t n, std::size_t d, std::uint64_t seed) {
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, StreamTag::test, i);
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal();
  }
  return x;
}

/// Two unit-variance clusters at (0, 0) and (6, 0); the first gets weight w.
RowMatrix two_clusters(std::size_t n, double w, std::uint64_t seed) {
  RowMatrix x = normal_data(n, 2, seed);
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, StreamTag::test, i, 1);
    if (rng.uniform() >= w) x(static_cast<Eigen::Index>(i), 0) += 6.0;
  }
  return x;
}

double log_normal_1d(double x, double m, double v) {
  return -0.5 * std::log(2 * std::numbers::pi * v) - 0.5 * (x - m) * (x - m) / v;
}

GmmModel model_1d(std::vector<double> w, std::vector<double> m, std::vector<double> v) {
  GmmModel g;
  const auto K = static_cast<Eigen::Index>(w.size());
  g.weights = Eigen::Map<Vector>(w.data(), K);
  g.means.resize(K, 1);
  for (Eigen::Index k = 0; k < K; ++k) {
    g.means(k, 0) = m[static_cast<std::size_t>(k)];
    g.covariances.push_back(Eigen::MatrixXd::Constant(1, 1, v[static_cast<std::size_t>(k)]));
  }
  return g;
}

}  // namespace

TEST_CASE("parse covariance types") {
  CHECK(parse_covariance_type("diagonal") == CovarianceType::diagonal);
  CHECK(parse_covariance_type("full") == CovarianceType::full);
  CHECK_THROWS_AS(parse_covariance_type("spherical"), ValidationError);
}

TEST_CASE("init_params") {
  const RowMatrix x = two_clusters(500, 0.5, 1);
  const GmmModel one = init_params(x, 1, InitStrategy::farthest_first, 0);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Vector dist = (x.rowwise() - mean).rowwise().norm();
  CHECK((one.means.row(0) - mean).norm() == Approx(dist.minCoeff()));
  CHECK(one.weights[0] == 1.0);

  const GmmModel two = init_params(x, 2, InitStrategy::farthest_first, 0);
  CHECK(std::min(two.means(0, 0), two.means(1, 0)) < 3.0);
  CHECK(std::max(two.means(0, 0), two.means(1, 0)) > 3.0);

  const GmmModel r1 = init_params(x, 3, InitStrategy::random_points, 42);
  const GmmModel r2 = init_params(x, 3, InitStrategy::random_points, 42);
  CHECK(r1.means == r2.means);
  CHECK(init_params(x, 3, InitStrategy::random_points, 43).means != r1.means);
  CHECK_THROWS_AS(init_params(x.topRows(2), 3, InitStrategy::random_points, 1), ValidationError);
}

TEST_CASE("e_step examples") {
  const GmmModel g = model_1d({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0});
  RowMatrix mid(1, 1);
  mid << 0.0;
  const EStepResult r = e_step(g, mid);
  CHECK(r.resp.tau(0, 0) == Approx(0.5));
  CHECK(r.resp.tau(0, 1) == Approx(0.5));

  const GmmModel std1 = model_1d({1.0}, {0.0}, {1.0});
  CHECK(e_step(std1, mid).loglik == Approx(-0.918939).epsilon(1e-6));
  CHECK(e_step(std1, mid).loglik == Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-15));

  RowMatrix pts(3, 1);
  pts << -1.0, 0.5, 2.0;
  const EStepResult single = e_step(std1, pts);
  CHECK((single.resp.tau.array() == 1.0).all());
  CHECK(single.loglik == Approx(log_normal_1d(-1, 0, 1) + log_normal_1d(0.5, 0, 1) + log_normal_1d(2, 0, 1)));
}

TEST_CASE("e_step survives far-separated components") {
  const GmmModel g = model_1d({0.5, 0.5}, {0.0, 1e4}, {1e-6, 1e-6});
  RowMatrix pts(2, 1);
  pts << 5e3, 1e4 + 1e-3;
  const EStepResult r = e_step(g, pts);
  CHECK(std::isfinite(r.loglik));
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(r.resp.tau.row(i).sum() == Approx(1.0).epsilon(1e-12));
  CHECK(r.resp.tau(1, 1) == Approx(1.0));
}

TEST_CASE("log_likelihood") {
  const GmmModel g = model_1d({0.3, 0.7}, {-2.0, 1.0}, {0.5, 2.0});
  const RowMatrix x = normal_data(50, 1, 3);
  CHECK(log_likelihood(g, x) == e_step(g, x).loglik);
  RowMatrix doubled(51, 1);
  doubled.topRows(50) = x;
  doubled(50, 0) = x(0, 0);
  const double point = std::log(0.3 * std::exp(log_normal_1d(x(0, 0), -2, 0.5)) + 0.7 * std::exp(log_normal_1d(x(0, 0), 1, 2)));
  CHECK(log_likelihood(g, doubled) == Approx(log_likelihood(g, x) + point).epsilon(1e-12));

  RowMatrix one(1, 1);
  one << 1.0;
  CHECK(log_likelihood(model_1d({1.0}, {0.0}, {1.0}), one) == Approx(-1.418939).epsilon(1e-6));
  CHECK_THROWS_AS(log_likelihood(g, normal_data(5, 2, 1)), ValidationError);
}

TEST_CASE("m_step examples") {
  const RowMatrix x = two_clusters(400, 0.5, 7);
  Responsibilities hard;
  hard.tau = RowMatrix::Zero(400, 2);
  for (Eigen::Index i = 0; i < 400; ++i) hard.tau(i, x(i, 0) > 3.0 ? 1 : 0) = 1.0;
  hard.counts = hard.tau.colwise().sum().transpose();
  const GmmModel m = m_step(x, hard, CovarianceType::diagonal, 1e-6);
  for (int k = 0; k < 2; ++k) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(2);
    double n = 0;
    for (Eigen::Index i = 0; i < 400; ++i) {
      if (hard.tau(i, k) == 1.0) {
        sum += x.row(i);
        n += 1;
      }
    }
    CHECK((m.means.row(k) - sum / n).norm() < 1e-12);
  }

  Responsibilities uniform;
  uniform.tau = RowMatrix::Constant(400, 2, 0.5);
  uniform.counts = uniform.tau.colwise().sum().transpose();
  const GmmModel u = m_step(x, uniform, CovarianceType::full, 1e-6);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix c = x.rowwise() - mean;
  const Eigen::MatrixXd cov = c.transpose() * c / 400.0;
  CHECK(u.weights[0] == Approx(0.5));
  CHECK(u.weights[1] == Approx(0.5));
  for (int k = 0; k < 2; ++k) {
    CHECK((u.means.row(k) - mean).norm() < 1e-12);
    CHECK((u.covariances[static_cast<std::size_t>(k)] - cov).cwiseAbs().maxCoeff() < 1e-12);
  }

  const RowMatrix same = RowMatrix::Constant(20, 3, 2.5);
  Responsibilities one;
  one.tau = RowMatrix::Ones(20, 1);
  one.counts = Vector::Constant(1, 20.0);
  const GmmModel flat = m_step(same, one, CovarianceType::full, 1e-6);
  CHECK((flat.covariances[0] - 1e-6 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);

  Responsibilities empty;
  empty.tau = RowMatrix::Zero(20, 2);
  empty.tau.col(0).setOnes();
  empty.counts = empty.tau.colwise().sum().transpose();
  CHECK_THROWS_AS(m_step(same, empty, CovarianceType::diagonal, 1e-6), EmptyComponentError);
}

TEST_CASE("full covariance keeps the smallest eigenvalue at the floor") {
  RowMatrix x = normal_data(300, 3, 2);
  x.col(2) = x.col(0);  // rank deficient
  const GmmFit fit = em_fit(x, 2, CovarianceType::full, {.reg_floor = 1e-4});
  for (const auto& c : fit.model.covariances) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    CHECK(eig.eigenvalues().minCoeff() >= 1e-4 - 1e-12);
  }
}

TEST_CASE("em_fit with K = 1 is the maximum-likelihood Gaussian") {
  const RowMatrix x = two_clusters(1000, 0.3, 5);
  const GmmFit fit = em_fit(x, 1, CovarianceType::diagonal, {});
  const Eigen::RowVectorXd mean = x.colwise().mean();
  CHECK((fit.model.means.row(0) - mean).norm() < 1e-12);
  const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().mean();
  CHECK(fit.model.covariances[0].diagonal().transpose().isApprox(var, 1e-12));
  CHECK(fit.model.weights[0] == 1.0);
  CHECK(fit.converged);
  CHECK(fit.iterations <= 2);
}

TEST_CASE("em_fit recovers a separated mixture") {
  const RowMatrix x = two_clusters(10000, 0.4, 11);
  for (CovarianceType type : {CovarianceType::diagonal, CovarianceType::full}) {
    const GmmFit fit = em_fit(x, 2, type, {.seed = 3});
    const Eigen::Index lo = fit.model.means(0, 0) < fit.model.means(1, 0) ? 0 : 1;
    const Eigen::Index hi = 1 - lo;
    CHECK(std::abs(fit.model.means(lo, 0) - 0.0) < 0.1);
    CHECK(std::abs(fit.model.means(lo, 1) - 0.0) < 0.1);
    CHECK(std::abs(fit.model.means(hi, 0) - 6.0) < 0.1);
    CHECK(std::abs(fit.model.means(hi, 1) - 0.0) < 0.1);
    CHECK(std::abs(fit.model.weights[lo] - 0.4) < 0.02);
    CHECK(fit.converged);
  }
  const GmmFit d = em_fit(x, 2, CovarianceType::diagonal, {.seed = 3});
  const GmmFit f = em_fit(x, 2, CovarianceType::full, {.seed = 3});
  auto sorted = [](const GmmFit& g) {
    RowMatrix m = g.model.means;
    if (m(0, 0) > m(1, 0)) m.row(0).swap(m.row(1));
    return m;
  };
  CHECK((sorted(d) - sorted(f)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("EM log-likelihood never decreases") {
  for (std::uint64_t trial = 0; trial < 40; ++trial) {
    CounterStream rng(trial, StreamTag::test, 1000);
    const std::size_t d = 1 + rng.below(6), K = 1 + rng.below(4), n = 50 + rng.below(400);
    RowMatrix x = normal_data(n, d, trial);
    for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)).array() += 4.0 * static_cast<double>(i % K);
    const auto type = trial % 2 ? CovarianceType::full : CovarianceType::diagonal;
    const GmmFit fit = em_fit(x, K, type, {.n_restarts = 2, .seed = trial});
    for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
      CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-9);
    }
  }
}

TEST_CASE("a converged fit is a fixed point") {
  const RowMatrix x = two_clusters(2000, 0.6, 13);
  const GmmFit fit = em_fit(x, 2, CovarianceType::diagonal, {.tol = 1e-8});
  REQUIRE(fit.converged);
  const GmmModel next = m_step(x, fit.resp, fit.model.cov_type, 1e-6);
  CHECK(std::abs(log_likelihood(next, x) - fit.loglik_trace.back()) < 1e-8);
}

TEST_CASE("row permutation leaves the fit unchanged") {
  const RowMatrix x = two_clusters(1500, 0.35, 17);
  RowMatrix reversed = x.colwise().reverse();
  const EmOptions opts{.tol = 1e-10, .n_restarts = 1};
  const GmmFit a = em_fit(x, 2, CovarianceType::diagonal, opts);
  const GmmFit b = em_fit(reversed, 2, CovarianceType::diagonal, opts);
  CHECK((a.model.means - b.model.means).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.model.weights - b.model.weights).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("em_fit preconditions") {
  const RowMatrix x = normal_data(3, 2, 1);
  CHECK_THROWS_AS(em_fit(x, 4, CovarianceType::diagonal, {}), ValidationError);
  CHECK_THROWS_AS(em_fit(x, 0, CovarianceType::diagonal, {}), ValidationError);
  CHECK_THROWS_AS(em_fit(x, 1, CovarianceType::diagonal, {.n_restarts = 0}), ValidationError);
}

TEST_CASE("gmm_sample") {
  GmmModel g = model_1d({0.5, 0.5}, {-3.0, 5.0}, {2.0, 1e-6});
  const RowMatrix a = gmm_sample(g, 0, 100000, 9);
  CHECK(std::abs(a.col(0).mean() + 3.0) < 4 * std::sqrt(2.0 / 100000));
  CHECK(gmm_sample(g, 0, 100000, 9) == a);
  const RowMatrix b = gmm_sample(g, 1, 100, 9);
  CHECK((b.array() - 5.0).abs().maxCoeff() < 1e-2);
  CHECK_THROWS_AS(gmm_sample(g, 2, 10, 9), ValidationError);
}
