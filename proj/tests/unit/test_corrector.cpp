#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "fairdiff/corrector.hpp"
#include "fairdiff/localization.hpp"
#include "fairdiff/metrics.hpp"
#include "test_support.hpp"

using namespace fairdiff;
using doctest::Approx;

namespace {

const NoiseSchedule& schedule() {
  static const NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
  return s;
}

Population binary(double w0, double sep, std::size_t d = 2) {
  ComponentSpec a, b;
  a.mean = Vector::Zero(static_cast<Eigen::Index>(d));
  b.mean = Vector::Zero(static_cast<Eigen::Index>(d));
  a.mean[0] = -sep / 2;
  b.mean[0] = sep / 2;
  a.cov_diag = b.cov_diag = Vector::Ones(static_cast<Eigen::Index>(d));
  a.weight = w0;
  b.weight = 1 - w0;
  a.labels = {0, 0, 0};
  b.labels = {0, 1, 0};
  return Population(d, {a, b});
}

CorrectionPlan plan_for(const Denoiser& den, std::size_t K, std::size_t n, std::size_t n_calib,
                        std::uint64_t seed, std::vector<std::size_t> channels = {}) {
  CorrectionPlan plan;
  plan.t_star = 350;
  plan.pool = calibration_latents(den, schedule(), 350, n_calib, seed);
  plan.fit = em_fit(select_channels(plan.pool, channels), K, CovarianceType::diagonal, {.seed = seed});
  plan.quotas = make_quotas(n, K);
  plan.channels = std::move(channels);
  return plan;
}

}  // namespace

TEST_CASE("make_quotas") {
  CHECK(make_quotas(1000, 2) == std::vector<std::size_t>{500, 500});
  CHECK(make_quotas(1000, 3) == std::vector<std::size_t>{334, 333, 333});
  CHECK(make_quotas(1, 3) == std::vector<std::size_t>{1, 0, 0});
  for (std::size_t n = 1; n < 50; ++n) {
    for (std::size_t K = 1; K < 7; ++K) {
      const auto q = make_quotas(n, K);
      CHECK(std::accumulate(q.begin(), q.end(), std::size_t{0}) == n);
      CHECK(*std::max_element(q.begin(), q.end()) - *std::min_element(q.begin(), q.end()) <= 1);
      CHECK(std::is_sorted(q.rbegin(), q.rend()));
    }
  }
  CHECK_THROWS_AS(make_quotas(0, 2), ValidationError);
}

TEST_CASE("calibrate") {
  const MixtureDenoiser den(binary(0.5, 6.0), schedule());
  const GmmFit fit = calibrate(den, schedule(), 350, 2000, 2, CovarianceType::diagonal, {.seed = 2}, 5);
  CHECK(separability(fit.model) > 1.0);

  // K = 1 reduces to the marginal moments of x_t*.
  const RowMatrix latents = calibration_latents(den, schedule(), 350, 2000, 5);
  const GmmFit one = calibrate(den, schedule(), 350, 2000, 1, CovarianceType::diagonal, {}, 5);
  const MomentSummary m = moments(latents);
  CHECK((one.model.means.row(0).transpose() - m.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(one.model.covariances[0](0, 0) == Approx(m.covariance(0, 0) * 1999.0 / 2000.0).epsilon(1e-10));

  CHECK_THROWS_AS(calibrate(den, schedule(), 350, 19, 2, CovarianceType::diagonal, {}, 5), ValidationError);
  CHECK_THROWS_AS(calibration_latents(den, schedule(), 0, 10, 5), ValidationError);
  CHECK_THROWS_AS(calibration_latents(den, schedule(), 1001, 10, 5), ValidationError);
}

TEST_CASE("calibration latents equal sample_reverse latents for the same stream") {
  const MixtureDenoiser den(binary(0.7, 8.0), schedule());
  const RowMatrix latents = calibration_latents(den, schedule(), 350, 20, 9);
  // Replaying the calibration noise address by hand yields the same state.
  std::vector<double> x(2);
  CounterStream init(9, StreamTag::calib_init, 4);
  init.normals(x);
  denoise_range(den, schedule(), x, 1000, 350, {9, StreamTag::calib_step, 4});
  CHECK(x[0] == latents(4, 0));
  CHECK(x[1] == latents(4, 1));
}

TEST_CASE("corrected_sample honours quotas and is deterministic") {
  const MixtureDenoiser den(binary(0.7, 8.0), schedule());
  CorrectionPlan plan = plan_for(den, 2, 1000, 400, 3);
  plan.quotas = {500, 500};
  const CorrectedBatch a = corrected_sample(den, schedule(), plan, 11);
  CHECK(a.batch.points.rows() == 1000);
  CHECK(std::count(a.source_component.begin(), a.source_component.end(), std::size_t{0}) == 500);
  CHECK(std::count(a.source_component.begin(), a.source_component.end(), std::size_t{1}) == 500);
  for (std::size_t threads : {2u, 5u}) {
    CHECK(corrected_sample(den, schedule(), plan, 11, Execution{threads}).batch.points == a.batch.points);
  }
  plan.quotas = {500};
  CHECK_THROWS_AS(corrected_sample(den, schedule(), plan, 11), ValidationError);
}

TEST_CASE("subset injection keeps the complement from the calibration pool") {
  const MixtureDenoiser den(binary(0.5, 8.0, 3), schedule());
  CorrectionPlan plan = plan_for(den, 2, 10, 300, 4, {0});
  const ComponentInjector injector = make_injector(plan, schedule(), 3);
  for (std::uint64_t i = 0; i < 50; ++i) {
    std::vector<double> x(3);
    CounterStream rng(1, StreamTag::inject, i);
    injector.draw(i % 2, rng, x);
    bool found = false;
    for (Eigen::Index r = 0; r < plan.pool.rows(); ++r) {
      found = found || (plan.pool(r, 1) == x[1] && plan.pool(r, 2) == x[2]);
    }
    CHECK(found);
  }
}

TEST_CASE("isotropic residual injection uses the residual variance") {
  const MixtureDenoiser den(binary(0.5, 8.0), schedule());
  CorrectionPlan plan = plan_for(den, 2, 10, 300, 4);
  plan.injection_cov = InjectionCov::isotropic_residual;
  const ComponentInjector injector = make_injector(plan, schedule(), 2);
  const int n = 40000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(2);
    CounterStream rng(2, StreamTag::inject, static_cast<std::uint64_t>(i));
    injector.draw(1, rng, x);
    s += x[1];
    s2 += x[1] * x[1];
  }
  const double var = s2 / n - (s / n) * (s / n);
  CHECK(var == Approx(1.0 - schedule().alpha_bar(350)).epsilon(0.03));
  CHECK(parse_injection_cov("isotropic_residual") == InjectionCov::isotropic_residual);
  CHECK_THROWS_AS(parse_injection_cov("zero"), ValidationError);
}

TEST_CASE("correction only changes the latent at t_star") {
  const MixtureDenoiser den(binary(0.7, 8.0), schedule());
  CorrectionPlan plan = plan_for(den, 2, 30, 300, 6);
  const testing::TracingDenoiser trace(den);
  const CorrectedBatch out = corrected_sample(trace, schedule(), plan, 13);
  const auto calls = trace.take();
  CHECK(calls.size() == 30u * 350u);
  for (const auto& c : calls) {
    CHECK(c.target == &den);
    CHECK(c.t >= 1);
    CHECK(c.t <= 350);
  }
  // Replay each trajectory from its first traced state with the bare denoiser.
  for (std::size_t j = 0; j < 30; ++j) {
    const auto& first = calls[j * 350];
    REQUIRE(first.t == 350);
    std::vector<double> x = first.x;
    denoise_range(den, schedule(), x, 350, 0, {13, StreamTag::correct_step, j});
    CHECK(x[0] == out.batch.points(static_cast<Eigen::Index>(j), 0));
    CHECK(x[1] == out.batch.points(static_cast<Eigen::Index>(j), 1));
  }
}

TEST_CASE("correction is close to a no-op without bias") {
  const Population pop = binary(0.5, 10.0);
  const MixtureDenoiser den(pop, schedule());
  const std::size_t n = 5000;
  const CorrectionPlan plan = plan_for(den, 2, n, 1000, 8);
  const auto corr = proportions(class_counts(pop, Attribute::gender, corrected_sample(den, schedule(), plan, 8).batch.points));
  const auto unc = proportions(class_counts(pop, Attribute::gender, sample_reverse(den, schedule(), n, 8).points));
  CHECK(std::abs(corr[0] - unc[0]) < 2 * std::sqrt(2 * 0.25 / n));
}

TEST_CASE("purity grows with separation") {
  std::vector<double> purities;
  for (double sep : {2.0, 4.0, 6.0, 8.0}) {
    const Population pop = binary(0.5, sep);
    const MixtureDenoiser den(pop, schedule());
    const CorrectionPlan plan = plan_for(den, 2, 2000, 1000, 21);
    const CorrectedBatch out = corrected_sample(den, schedule(), plan, 21);
    const auto predicted = classify_rows(pop, Attribute::gender, out.batch.points);
    purities.push_back(best_mapping_purity(out.source_component, predicted, 2, 2));
  }
  MESSAGE("purity by separation: " << purities[0] << " " << purities[1] << " " << purities[2] << " " << purities[3]);
  for (std::size_t i = 1; i < purities.size(); ++i) CHECK(purities[i] >= purities[i - 1]);
  CHECK(purities.back() >= 0.9);
}
