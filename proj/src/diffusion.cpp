#include "fairdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace fairdiff {

SigmaRule parse_sigma_rule(std::string_view name) {
  if (name == "sqrt_beta") return SigmaRule::sqrt_beta;
  if (name == "tilde_beta") return SigmaRule::tilde_beta;
  throw ValidationError("diffusion.sigma_rule: unknown rule '" + std::string(name) + "'");
}

std::string_view sigma_rule_name(SigmaRule rule) {
  return rule == SigmaRule::sqrt_beta ? "sqrt_beta" : "tilde_beta";
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas, SigmaRule rule) : rule_(rule) {
  if (betas.empty()) throw ValidationError("noise schedule needs at least one step");
  const std::size_t T = betas.size();
  beta_.assign(T + 1, 0.0);
  alpha_.assign(T + 1, 1.0);
  alpha_bar_.assign(T + 1, 1.0);
  sigma_.assign(T + 1, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double b = betas[t - 1];
    if (!(b > 0.0 && b < 1.0)) throw ValidationError("beta_t must lie in (0, 1)");
    beta_[t] = b;
    alpha_[t] = 1.0 - b;
    alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
    if (t == 1) {
      sigma_[t] = 0.0;
    } else if (rule == SigmaRule::sqrt_beta) {
      sigma_[t] = std::sqrt(b);
    } else {
      sigma_[t] = std::sqrt(b * (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]));
    }
  }
}

std::size_t NoiseSchedule::check(int t) const {
  if (t < 1 || t > steps()) {
    throw ValidationError("step index " + std::to_string(t) + " outside [1, " +
                          std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(t);
}

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end, ScheduleKind kind,
                             SigmaRule rule) {
  if (steps < 1) throw ValidationError("diffusion.T: must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ValidationError("diffusion.beta_start/beta_end: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  switch (kind) {
    case ScheduleKind::linear:
      for (int t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
        betas[static_cast<std::size_t>(t - 1)] = beta_start + frac * (beta_end - beta_start);
      }
      break;
  }
  return NoiseSchedule(std::move(betas), rule);
}

Vector forward_diffuse(const Vector& x0, int t, const NoiseSchedule& sched, const Vector& eps) {
  if (t < 1 || t > sched.steps()) throw ValidationError("forward_diffuse: t out of range");
  if (x0.size() != eps.size()) throw ValidationError("forward_diffuse: dimension mismatch");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Vector reverse_step(const Vector& x_t, int t, const Vector& eps_hat, const NoiseSchedule& sched,
                    const Vector& z) {
  if (t < 1 || t > sched.steps()) throw ValidationError("reverse_step: t out of range");
  if (x_t.size() != eps_hat.size() || x_t.size() != z.size()) {
    throw ValidationError("reverse_step: dimension mismatch");
  }
  const double coef = (1.0 - sched.alpha(t)) / std::sqrt(1.0 - sched.alpha_bar(t));
  return (x_t - coef * eps_hat) / std::sqrt(sched.alpha(t)) + sched.sigma(t) * z;
}

Vector exact_epsilon(const Population& pop, const Vector& x_t, int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) throw ValidationError("exact_epsilon: t out of range");
  if (static_cast<std::size_t>(x_t.size()) != pop.dimension()) {
    throw ValidationError("exact_epsilon: dimension mismatch");
  }
  const double ab = sched.alpha_bar(t);
  if (!(ab < 1.0)) throw ValidationError("exact_epsilon: degenerate alpha_bar = 1");
  const double sa = std::sqrt(ab);
  const Eigen::Index d = x_t.size();

  std::vector<double> logr(pop.size(), -std::numeric_limits<double>::infinity());
  std::vector<Vector> post_mean(pop.size());
  for (std::size_t k = 0; k < pop.size(); ++k) {
    const auto& c = pop[k];
    const Vector var = (ab * c.cov_diag).array() + (1.0 - ab);
    const Vector centre = sa * c.mean;
    if (c.weight > 0.0) {
      logr[k] = std::log(c.weight) +
                log_normal_diag({x_t.data(), static_cast<std::size_t>(d)}, centre, var);
    }
    post_mean[k] = c.mean + (sa * c.cov_diag.array() / var.array() * (x_t - centre).array()).matrix();
  }
  const double m = *std::max_element(logr.begin(), logr.end());
  double total = 0.0;
  for (double& v : logr) total += (v = std::exp(v - m));

  Vector expected = Vector::Zero(d);
  for (std::size_t k = 0; k < pop.size(); ++k) expected += (logr[k] / total) * post_mean[k];
  return (x_t - sa * expected) / std::sqrt(1.0 - ab);
}

MixtureDenoiser::MixtureDenoiser(Population pop, const NoiseSchedule& sched)
    : pop_(std::move(pop)) {
  const int T = sched.steps();
  const auto K = static_cast<Eigen::Index>(pop_.size());
  const auto d = static_cast<Eigen::Index>(pop_.dimension());
  tables_.resize(static_cast<std::size_t>(T) + 1);
  for (int t = 1; t <= T; ++t) {
    const double ab = sched.alpha_bar(t);
    if (!(ab < 1.0)) throw ValidationError("MixtureDenoiser: degenerate alpha_bar = 1");
    auto& tab = tables_[static_cast<std::size_t>(t)];
    tab.sqrt_abar = std::sqrt(ab);
    tab.sqrt_one_minus_abar = std::sqrt(1.0 - ab);
    tab.log_norm.assign(static_cast<std::size_t>(K), -std::numeric_limits<double>::infinity());
    tab.inv_var.resize(K, d);
    tab.gain.resize(K, d);
    tab.centre.resize(K, d);
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto& c = pop_[static_cast<std::size_t>(k)];
      double log_det = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double v = ab * c.cov_diag[j] + (1.0 - ab);
        log_det += std::log(2.0 * std::numbers::pi * v);
        tab.inv_var(k, j) = 1.0 / v;
        tab.gain(k, j) = tab.sqrt_abar * c.cov_diag[j] / v;
        tab.centre(k, j) = tab.sqrt_abar * c.mean[j];
      }
      if (c.weight > 0.0) tab.log_norm[static_cast<std::size_t>(k)] = std::log(c.weight) - 0.5 * log_det;
    }
  }
}

void MixtureDenoiser::predict(std::span<const double> x, int t, std::span<double> eps) const {
  if (t < 1 || static_cast<std::size_t>(t) >= tables_.size()) {
    throw ValidationError("MixtureDenoiser: t out of range");
  }
  const auto& tab = tables_[static_cast<std::size_t>(t)];
  const std::size_t K = pop_.size();
  const std::size_t d = pop_.dimension();

  // Small fixed-size scratch on the stack for the common case.
  constexpr std::size_t kInline = 64;
  double inline_buf[kInline];
  std::vector<double> heap;
  double* logr = inline_buf;
  if (K > kInline) {
    heap.resize(K);
    logr = heap.data();
  }

  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    double q = 0.0;
    const auto ki = static_cast<Eigen::Index>(k);
    for (std::size_t j = 0; j < d; ++j) {
      const auto ji = static_cast<Eigen::Index>(j);
      const double r = x[j] - tab.centre(ki, ji);
      q += r * r * tab.inv_var(ki, ji);
    }
    logr[k] = tab.log_norm[k] - 0.5 * q;
    m = std::max(m, logr[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) total += (logr[k] = std::exp(logr[k] - m));

  for (std::size_t j = 0; j < d; ++j) eps[j] = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double r = logr[k] / total;
    if (r == 0.0) continue;
    const auto ki = static_cast<Eigen::Index>(k);
    const auto& c = pop_[k];
    for (std::size_t j = 0; j < d; ++j) {
      const auto ji = static_cast<Eigen::Index>(j);
      eps[j] += r * (c.mean[ji] + tab.gain(ki, ji) * (x[j] - tab.centre(ki, ji)));
    }
  }
  // eps currently holds E[x_0 | x_t].
  for (std::size_t j = 0; j < d; ++j) {
    eps[j] = (x[j] - tab.sqrt_abar * eps[j]) / tab.sqrt_one_minus_abar;
  }
}

Population sharpen_mixture(const Population& pop, double gamma) {
  if (!(gamma >= 1.0)) throw ValidationError("sharpen_mixture: gamma must be >= 1");
  std::vector<ComponentSpec> comps = pop.components();
  if (gamma == 1.0) return Population(pop.dimension(), std::move(comps));
  // Work in log space so tiny weights do not underflow.
  double m = -std::numeric_limits<double>::infinity();
  std::vector<double> logw(comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    logw[k] = comps[k].weight > 0.0 ? gamma * std::log(comps[k].weight)
                                    : -std::numeric_limits<double>::infinity();
    m = std::max(m, logw[k]);
  }
  double total = 0.0;
  for (double& v : logw) total += (v = std::exp(v - m));
  for (std::size_t k = 0; k < comps.size(); ++k) comps[k].weight = logw[k] / total;
  return Population(pop.dimension(), std::move(comps));
}

void denoise_range(const Denoiser& den, const NoiseSchedule& sched, std::span<double> x,
                   int t_from, int t_to, const NoiseAddress& noise,
                   const std::function<void(int, std::span<const double>)>& on_state) {
  if (t_from > sched.steps() || t_to < 0 || t_to > t_from) {
    throw ValidationError("denoise_range: invalid step range");
  }
  const std::size_t d = x.size();
  std::vector<double> eps(d), z(d);
  for (int t = t_from; t > t_to; --t) {
    den.predict(x, t, eps);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    const double coef = (1.0 - sched.alpha(t)) / std::sqrt(1.0 - sched.alpha_bar(t));
    const double sigma = sched.sigma(t);
    if (sigma > 0.0) {
      CounterStream rng(noise.seed, noise.tag, noise.trajectory, static_cast<std::uint32_t>(t));
      rng.normals(z);
    }
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = (x[j] - coef * eps[j]) * inv_sqrt_alpha + (sigma > 0.0 ? sigma * z[j] : 0.0);
    }
    if (on_state) on_state(t - 1, x);
  }
}

SampleBatch sample_reverse(const Denoiser& den, const NoiseSchedule& sched, std::size_t n,
                           std::uint64_t seed, const std::set<int>& record_at,
                           const Execution& exec) {
  if (n == 0) throw ValidationError("sample_reverse: n must be >= 1");
  const int T = sched.steps();
  for (int t : record_at) {
    if (t < 1 || t > T) {
      throw ValidationError("sample_reverse: record step " + std::to_string(t) + " outside [1, " +
                            std::to_string(T) + "]");
    }
  }
  const auto d = static_cast<Eigen::Index>(den.dimension());
  SampleBatch batch;
  batch.points.resize(static_cast<Eigen::Index>(n), d);
  for (int t : record_at) batch.recorded_latents[t].resize(static_cast<Eigen::Index>(n), d);

  parallel_for(n, exec, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    CounterStream init(seed, StreamTag::sample_init, i);
    std::span<double> x(batch.points.row(row).data(), static_cast<std::size_t>(d));
    init.normals(x);
    auto record = [&](int t, std::span<const double> state) {
      auto it = batch.recorded_latents.find(t);
      if (it == batch.recorded_latents.end()) return;
      std::copy(state.begin(), state.end(), it->second.row(row).data());
    };
    record(T, x);
    denoise_range(den, sched, x, T, 0, {seed, StreamTag::sample_step, i}, record);
  });
  return batch;
}

DmDraw draw_dm_sample(const Population& pop, const NoiseSchedule& sched, std::uint64_t seed,
                      std::size_t index) {
  CounterStream rng(seed, StreamTag::dm_loss, index);
  DmDraw draw;
  draw.t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.steps())));
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t k = pop.size() - 1;
  for (std::size_t c = 0; c < pop.size(); ++c) {
    acc += pop[c].weight;
    if (u < acc) {
      k = c;
      break;
    }
  }
  const auto d = static_cast<Eigen::Index>(pop.dimension());
  draw.x0.resize(d);
  draw.eps.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    draw.x0[j] = pop[k].mean[j] + std::sqrt(pop[k].cov_diag[j]) * rng.normal();
  }
  for (Eigen::Index j = 0; j < d; ++j) draw.eps[j] = rng.normal();
  draw.x_t = forward_diffuse(draw.x0, draw.t, sched, draw.eps);
  return draw;
}

double dm_loss(const Denoiser& den, const Population& pop, const NoiseSchedule& sched,
               std::size_t n_mc, std::uint64_t seed) {
  if (n_mc == 0) throw ValidationError("dm_loss: n_mc must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const DmDraw draw = draw_dm_sample(pop, sched, seed, i);
    const Vector pred = den(draw.x_t, draw.t);
    sum += (draw.eps - pred).squaredNorm();
  }
  return sum / static_cast<double>(n_mc);
}

}  // namespace fairdiff
