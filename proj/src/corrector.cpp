#include "fairdiff/corrector.hpp"

#include <numeric>
#include <string>

namespace fairdiff {

RowMatrix calibration_latents(const Denoiser& den, const NoiseSchedule& sched, int t_star,
                              std::size_t n_calib, std::uint64_t seed, const Execution& exec) {
  if (t_star < 1 || t_star > sched.steps()) {
    throw ValidationError("correct.t_star: " + std::to_string(t_star) + " outside [1, " +
                          std::to_string(sched.steps()) + "]");
  }
  if (n_calib == 0) throw ValidationError("correct.n_calib: must be >= 1");
  const auto d = static_cast<Eigen::Index>(den.dimension());
  RowMatrix latents(static_cast<Eigen::Index>(n_calib), d);
  parallel_for(n_calib, exec, [&](std::size_t i) {
    std::span<double> x(latents.row(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(d));
    CounterStream init(seed, StreamTag::calib_init, i);
    init.normals(x);
    denoise_range(den, sched, x, sched.steps(), t_star, {seed, StreamTag::calib_step, i});
  });
  return latents;
}

RowMatrix select_channels(const RowMatrix& latents, const std::vector<std::size_t>& channels) {
  if (channels.empty()) return latents;
  RowMatrix out(latents.rows(), static_cast<Eigen::Index>(channels.size()));
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c] >= static_cast<std::size_t>(latents.cols())) {
      throw ValidationError("channel index " + std::to_string(channels[c]) + " out of range");
    }
    out.col(static_cast<Eigen::Index>(c)) = latents.col(static_cast<Eigen::Index>(channels[c]));
  }
  return out;
}

GmmFit calibrate(const Denoiser& den, const NoiseSchedule& sched, int t_star, std::size_t n_calib,
                 std::size_t K, CovarianceType cov_type, const EmOptions& opts, std::uint64_t seed,
                 const std::vector<std::size_t>& channels, const Execution& exec) {
  if (K == 0) throw ValidationError("calibrate: K must be >= 1");
  if (n_calib < 10 * K) {
    throw ValidationError("calibrate: n_calib=" + std::to_string(n_calib) + " is below 10*K=" +
                          std::to_string(10 * K));
  }
  const RowMatrix latents = calibration_latents(den, sched, t_star, n_calib, seed, exec);
  return em_fit(select_channels(latents, channels), K, cov_type, opts);
}

std::vector<std::size_t> make_quotas(std::size_t n, std::size_t K) {
  if (n == 0 || K == 0) throw ValidationError("make_quotas: n and K must be >= 1");
  std::vector<std::size_t> quotas(K, n / K);
  for (std::size_t k = 0; k < n % K; ++k) ++quotas[k];
  return quotas;
}

ComponentInjector make_injector(const CorrectionPlan& plan, const NoiseSchedule& sched,
                                std::size_t dimension) {
  if (plan.t_star < 1 || plan.t_star > sched.steps()) throw ValidationError("plan: t_star out of range");
  return ComponentInjector(plan.fit.model, plan.channels, plan.pool, dimension, plan.injection_cov,
                           1.0 - sched.alpha_bar(plan.t_star));
}

CorrectedBatch corrected_sample(const Denoiser& den, const NoiseSchedule& sched,
                                const CorrectionPlan& plan, std::uint64_t seed,
                                const Execution& exec) {
  const std::size_t K = plan.fit.model.components();
  if (plan.quotas.size() != K) {
    throw ValidationError("corrected_sample: " + std::to_string(plan.quotas.size()) +
                          " quotas for " + std::to_string(K) + " components");
  }
  const std::size_t n = std::accumulate(plan.quotas.begin(), plan.quotas.end(), std::size_t{0});
  if (n == 0) throw ValidationError("corrected_sample: quotas sum to zero");
  const ComponentInjector injector = make_injector(plan, sched, den.dimension());

  CorrectedBatch out;
  out.source_component.reserve(n);
  for (std::size_t k = 0; k < K; ++k) out.source_component.insert(out.source_component.end(), plan.quotas[k], k);
  const auto d = static_cast<Eigen::Index>(den.dimension());
  out.batch.points.resize(static_cast<Eigen::Index>(n), d);

  parallel_for(n, exec, [&](std::size_t j) {
    std::span<double> x(out.batch.points.row(static_cast<Eigen::Index>(j)).data(), static_cast<std::size_t>(d));
    CounterStream rng(seed, StreamTag::inject, j);
    injector.draw(out.source_component[j], rng, x);
    denoise_range(den, sched, x, plan.t_star, 0, {seed, StreamTag::correct_step, j});
  });
  return out;
}

}  // namespace fairdiff
