#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "fairdiff/common.hpp"
#include "fairdiff/population.hpp"
#include "fairdiff/random.hpp"

namespace fairdiff {

enum class ScheduleKind { linear };

/// Variance of the reverse-step noise. sqrt_beta: sigma_t^2 = beta_t.
/// tilde_beta: sigma_t^2 = beta_t (1 - abar_{t-1}) / (1 - abar_t).
enum class SigmaRule { sqrt_beta, tilde_beta };

SigmaRule parse_sigma_rule(std::string_view name);
std::string_view sigma_rule_name(SigmaRule rule);

/// beta/alpha/alpha_bar/sigma tables for t = 1..T. alpha_bar(0) is 1 and
/// sigma(1) is 0: the final reverse step adds no noise.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> betas, SigmaRule rule);

  int steps() const { return static_cast<int>(beta_.size()) - 1; }
  SigmaRule sigma_rule() const { return rule_; }
  double beta(int t) const { return beta_[check(t)]; }
  double alpha(int t) const { return alpha_[check(t)]; }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  double sigma(int t) const { return sigma_[check(t)]; }

 private:
  std::size_t check(int t) const;

  SigmaRule rule_;
  std::vector<double> beta_, alpha_, alpha_bar_, sigma_;
};

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end,
                             ScheduleKind kind = ScheduleKind::linear,
                             SigmaRule rule = SigmaRule::sqrt_beta);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Vector forward_diffuse(const Vector& x0, int t, const NoiseSchedule& sched, const Vector& eps);

/// x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t) + sigma_t z.
Vector reverse_step(const Vector& x_t, int t, const Vector& eps_hat, const NoiseSchedule& sched,
                    const Vector& z);

/// E[eps | x_t] when x_0 follows the population and x_t comes from the forward
/// process. Closed form: the marginal of x_t is a mixture of
/// N(sqrt(abar) m_k, abar C_k + (1 - abar) I); each component contributes its
/// Gaussian posterior mean of x_0, weighted by its responsibility.
Vector exact_epsilon(const Population& pop, const Vector& x_t, int t, const NoiseSchedule& sched);

/// Noise predictor eps(x_t, t). Implementations must be deterministic and
/// safe to call concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::size_t dimension() const = 0;
  virtual void predict(std::span<const double> x_t, int t, std::span<double> eps_out) const = 0;

  Vector operator()(const Vector& x_t, int t) const {
    Vector out(x_t.size());
    predict({x_t.data(), static_cast<std::size_t>(x_t.size())}, t,
            {out.data(), static_cast<std::size_t>(out.size())});
    return out;
  }
};

/// exact_epsilon with per-step coefficient tables precomputed for a schedule.
/// Stands in for a trained network; sharpen the population to model a
/// biased one.
class MixtureDenoiser final : public Denoiser {
 public:
  MixtureDenoiser(Population pop, const NoiseSchedule& sched);

  std::size_t dimension() const override { return pop_.dimension(); }
  void predict(std::span<const double> x_t, int t, std::span<double> eps_out) const override;
  const Population& population() const { return pop_; }

 private:
  struct StepTable {
    double sqrt_abar = 0.0;
    double sqrt_one_minus_abar = 0.0;
    std::vector<double> log_norm;  // per component: log w_k - 0.5 sum log(2 pi v)
    RowMatrix inv_var;             // K x d marginal precision
    RowMatrix gain;                // K x d: sqrt(abar) c / v
    RowMatrix centre;              // K x d: sqrt(abar) m
  };

  Population pop_;
  std::vector<StepTable> tables_;  // index t
};

/// w'_k proportional to w_k^gamma; gamma = 1 is the identity.
Population sharpen_mixture(const Population& pop, double gamma);

struct SampleBatch {
  RowMatrix points;
  std::map<int, RowMatrix> recorded_latents;
};

/// Where the per-step noise of one trajectory comes from. Step t draws from
/// CounterStream(seed, tag, trajectory, t).
struct NoiseAddress {
  std::uint64_t seed = 0;
  StreamTag tag = StreamTag::sample_step;
  std::uint64_t trajectory = 0;
};

/// Runs reverse steps t = t_from, ..., t_to + 1 in place, taking x from noise
/// level t_from to t_to. on_state(t, x) fires after each update with the new
/// level t.
void denoise_range(const Denoiser& den, const NoiseSchedule& sched, std::span<double> x,
                   int t_from, int t_to, const NoiseAddress& noise,
                   const std::function<void(int, std::span<const double>)>& on_state = {});

/// n independent trajectories from x_T ~ N(0, I) to x_0. recorded_latents[t]
/// holds x_t for every t in record_at (t = T records the initial draw).
SampleBatch sample_reverse(const Denoiser& den, const NoiseSchedule& sched, std::size_t n,
                           std::uint64_t seed, const std::set<int>& record_at = {},
                           const Execution& exec = {});

/// One Monte-Carlo draw of the L_DM estimator.
struct DmDraw {
  int t = 0;
  Vector x0;
  Vector eps;
  Vector x_t;
};

DmDraw draw_dm_sample(const Population& pop, const NoiseSchedule& sched, std::uint64_t seed,
                      std::size_t index);

/// Mean over n_mc draws of ||eps - den(x_t, t)||^2 with t uniform on 1..T.
double dm_loss(const Denoiser& den, const Population& pop, const NoiseSchedule& sched,
               std::size_t n_mc, std::uint64_t seed);

}  // namespace fairdiff
