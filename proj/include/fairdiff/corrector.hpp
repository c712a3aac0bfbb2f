#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fairdiff/common.hpp"
#include "fairdiff/diffusion.hpp"
#include "fairdiff/gmm.hpp"
#include "fairdiff/injection.hpp"

namespace fairdiff {

/// How to generate with equal representation from a calibrated mixture.
struct CorrectionPlan {
  int t_star = 350;
  GmmFit fit;
  std::vector<std::size_t> quotas;     // per component
  InjectionCov injection_cov = InjectionCov::fitted;
  std::vector<std::size_t> channels;   // coordinates the fit covers; empty = all
  RowMatrix pool;                      // calibration latents, needed when channels is a subset
};

/// n_calib reverse trajectories from x_T down to noise level t_star.
RowMatrix calibration_latents(const Denoiser& den, const NoiseSchedule& sched, int t_star,
                              std::size_t n_calib, std::uint64_t seed, const Execution& exec = {});

/// Columns of `latents` listed in channels; all columns when channels is empty.
RowMatrix select_channels(const RowMatrix& latents, const std::vector<std::size_t>& channels);

/// Fits a K-component mixture to latents at t_star. Requires n_calib >= 10 K.
GmmFit calibrate(const Denoiser& den, const NoiseSchedule& sched, int t_star, std::size_t n_calib,
                 std::size_t K, CovarianceType cov_type, const EmOptions& opts, std::uint64_t seed,
                 const std::vector<std::size_t>& channels = {}, const Execution& exec = {});

/// Equal split of n over K with the remainder going to the lowest indices.
std::vector<std::size_t> make_quotas(std::size_t n, std::size_t K);

ComponentInjector make_injector(const CorrectionPlan& plan, const NoiseSchedule& sched,
                                std::size_t dimension);

struct CorrectedBatch {
  SampleBatch batch;
  std::vector<std::size_t> source_component;
};

/// quota_k latents from component k are injected at t_star and denoised to 0
/// with the unmodified denoiser. Output rows are grouped by component.
CorrectedBatch corrected_sample(const Denoiser& den, const NoiseSchedule& sched,
                                const CorrectionPlan& plan, std::uint64_t seed,
                                const Execution& exec = {});

}  // namespace fairdiff
