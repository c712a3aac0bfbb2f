#include <cmath>
#include <ostream>

#include "fairdiff/experiment.hpp"

namespace fairdiff {

namespace {

struct Checker {
  std::ostream& out;
  int failures = 0;

  void operator()(const char* name, bool ok) {
    out << (ok ? "PASS " : "FAIL ") << name << '\n';
    if (!ok) ++failures;
  }
};

}  // namespace

int run_selftest(std::ostream& out) {
  Checker check{out};

  const NoiseSchedule sched = build_schedule(1000, 1e-4, 0.02);
  check("schedule alpha_bar(350)", std::abs(sched.alpha_bar(350) - 0.28521) < 1e-4);
  check("schedule sigma(1) = 0", sched.sigma(1) == 0.0);

  CounterStream a(7, StreamTag::test, 3), b(7, StreamTag::test, 3), c(7, StreamTag::test, 4);
  const double ua = a.uniform();
  check("stream is addressable", ua == b.uniform() && ua != c.uniform());

  const Population pop = grid_population(grid_preset("fairface-like"));
  const Marginals m = attribute_marginals(pop);
  check("preset marginals", std::abs(m[1][0] - 0.53) < 1e-12 && std::abs(m[2][2] - 0.67) < 1e-12);

  const Population sharp = sharpen_mixture(pop, 1.0);
  bool same = true;
  for (std::size_t k = 0; k < pop.size(); ++k) same = same && std::abs(sharp[k].weight - pop[k].weight) < 1e-12;
  check("gamma = 1 is the identity", same);

  const LabeledBatch data = sample_population(pop, 400, 11);
  const Vector x0 = data.points.row(0).transpose();
  const ClassPosterior post = bayes_classify(pop, Attribute::race, {x0.data(), static_cast<std::size_t>(x0.size())});
  double total = 0.0;
  for (double p : post.posterior) total += p;
  check("posterior sums to one", std::abs(total - 1.0) < 1e-12);

  const GmmFit fit = em_fit(select_channels(data.points, {0, 1}), 2, CovarianceType::diagonal, {});
  bool monotone = true;
  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
    monotone = monotone && fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-9;
  }
  check("EM log-likelihood is non-decreasing", monotone);

  const GaussianComponent p{Vector::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
  const GaussianComponent q{Vector::Ones(1), Eigen::MatrixXd::Identity(1, 1)};
  check("KL of unit shift", std::abs(kl_gaussian(p, q) - 0.5) < 1e-12);

  const MomentSummary s1{Vector::Zero(2), Eigen::MatrixXd::Identity(2, 2), 0};
  const MomentSummary s2{Vector::Ones(2), Eigen::MatrixXd::Identity(2, 2), 0};
  check("Frechet of unit shift", std::abs(frechet_gaussian(s1, s2) - 2.0) < 1e-10);

  const BiasReport r = bias_report(Attribute::gender, std::vector<double>{0.5, 0.5}, std::vector<double>{0.7, 0.3});
  check("deltas sum to zero", std::abs(r.delta_uncorrected[0] + r.delta_uncorrected[1]) < 1e-12);

  out << (check.failures == 0 ? "selftest passed\n" : "selftest failed\n");
  return check.failures;
}

}  // namespace fairdiff
