#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"

#include "fairdiff/metrics.hpp"
#include "fairdiff/random.hpp"

using namespace fairdiff;
using doctest::Approx;

namespace {

Eigen::MatrixXd random_psd(CounterStream& rng, Eigen::Index d, double jitter = 0.1) {
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + jitter * Eigen::MatrixXd::Identity(d, d);
}

MomentSummary summary(Vector m, Eigen::MatrixXd s) { return {std::move(m), std::move(s), 0}; }

Population far_binary() {
  ComponentSpec a, b;
  a.mean = Vector::Zero(2);
  b.mean = Vector::Zero(2);
  a.mean[0] = -50;
  b.mean[0] = 50;
  a.cov_diag = b.cov_diag = Vector::Ones(2);
  a.weight = b.weight = 0.5;
  a.labels = {0, 0, 0};
  b.labels = {0, 1, 0};
  return Population(2, {a, b});
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "fairdiff_test_metrics";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("class_counts") {
  const Population pop = far_binary();
  RowMatrix at_zero(7, 2);
  at_zero.col(0).setConstant(-50.0);
  at_zero.col(1).setZero();
  CHECK(class_counts(pop, Attribute::gender, at_zero) == std::vector<std::size_t>{7, 0});
  CHECK(class_counts(pop, Attribute::gender, RowMatrix(0, 2)) == std::vector<std::size_t>{0, 0});
  CHECK_THROWS_AS(class_counts(pop, Attribute::gender, RowMatrix::Zero(2, 3)), ValidationError);

  const LabeledBatch draws = sample_population(pop, 5000, 3);
  const auto counts = class_counts(pop, Attribute::gender, draws.points);
  CHECK(counts[0] + counts[1] == 5000);
  CHECK(std::abs(static_cast<double>(counts[0]) - 2500.0) < 4 * std::sqrt(5000 * 0.25));
  CHECK(proportions(std::vector<std::size_t>{0, 0}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("bias_report examples") {
  const std::vector<double> half{0.5, 0.5}, biased{0.7, 0.3};
  const BiasReport none = bias_report(Attribute::gender, half, half);
  CHECK(none.delta_uncorrected == std::vector<double>{0.0, 0.0});
  CHECK(none.ratio_uncorrected == std::vector<double>{1.0, 1.0});
  CHECK_FALSE(none.equalized_to_uniform.has_value());

  const BiasReport amp = bias_report(Attribute::gender, biased, std::vector<double>{0.845, 0.155});
  CHECK(amp.delta_uncorrected[0] == Approx(0.145).epsilon(1e-3));
  CHECK(amp.delta_uncorrected[1] == Approx(-0.145).epsilon(1e-3));

  const BiasReport fixed = bias_report(Attribute::gender, biased, std::vector<double>{0.845, 0.155}, half);
  CHECK((*fixed.delta_corrected)[0] == Approx(-0.2));
  CHECK((*fixed.delta_corrected)[1] == Approx(0.2));
  CHECK(fixed.equalized_to_uniform == true);
  CHECK(bias_report(Attribute::gender, half, half, biased).equalized_to_uniform == false);

  const BiasReport zero_train = bias_report(Attribute::race, std::vector<double>{1.0, 0.0, 0.0},
                                            std::vector<double>{0.8, 0.2, 0.0});
  CHECK(std::isinf(zero_train.ratio_uncorrected[1]));

  CHECK_THROWS_AS(bias_report(Attribute::gender, half, std::vector<double>{1.0}), ValidationError);
  CHECK_THROWS_AS(bias_report(Attribute::gender, half, std::vector<double>{0.6, 0.6}), ValidationError);
}

TEST_CASE("bias_report deltas sum to zero") {
  CounterStream rng(4, StreamTag::test, 0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> a(3), b(3);
    double sa = 0, sb = 0;
    for (int c = 0; c < 3; ++c) {
      a[c] = rng.uniform();
      b[c] = rng.uniform();
      sa += a[c];
      sb += b[c];
    }
    for (int c = 0; c < 3; ++c) {
      a[c] /= sa;
      b[c] /= sb;
    }
    const BiasReport r = bias_report(Attribute::race, a, b, a);
    CHECK(std::abs(r.delta_uncorrected[0] + r.delta_uncorrected[1] + r.delta_uncorrected[2]) < 1e-9);
    CHECK(std::abs((*r.delta_corrected)[0] + (*r.delta_corrected)[1] + (*r.delta_corrected)[2]) < 1e-9);
  }
}

TEST_CASE("moments") {
  RowMatrix two(2, 2);
  two << 0, 0, 2, 0;
  const MomentSummary m = moments(two);
  CHECK(m.mean.isApprox(Vector::Unit(2, 0)));
  CHECK(m.covariance(0, 0) == Approx(2.0));
  CHECK(m.covariance(1, 1) == 0.0);
  CHECK(m.covariance(0, 1) == 0.0);
  CHECK_THROWS_AS(moments(RowMatrix::Zero(1, 2)), ValidationError);

  // Duplicating the data keeps the mean and scales the unbiased covariance by 2(n-1)/(2n-1).
  CounterStream rng(5, StreamTag::test, 0);
  RowMatrix x(30, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  RowMatrix dup(60, 3);
  dup << x, x;
  const MomentSummary a = moments(x), b = moments(dup);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((b.covariance - a.covariance * (2.0 * 29.0 / 59.0)).cwiseAbs().maxCoeff() < 1e-12);

  RowMatrix big(100000, 3);
  for (Eigen::Index i = 0; i < big.size(); ++i) big.data()[i] = rng.normal();
  const MomentSummary s = moments(big);
  CHECK(s.mean.cwiseAbs().maxCoeff() < 0.02);
  CHECK((s.covariance - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.05);
  CHECK(s.covariance.isApprox(s.covariance.transpose(), 0.0));
}

TEST_CASE("frechet_gaussian spot values") {
  const auto a = summary(Vector::Zero(3), Eigen::MatrixXd::Identity(3, 3));
  CHECK(frechet_gaussian(a, a) == 0.0);
  Vector m(3);
  m << 1.0, -2.0, 0.5;
  CHECK(frechet_gaussian(a, summary(m, Eigen::MatrixXd::Identity(3, 3))) == Approx(m.squaredNorm()).epsilon(1e-12));
  const auto p = summary(Vector::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0));
  const auto q = summary(Vector::Ones(1), Eigen::MatrixXd::Constant(1, 1, 4.0));
  CHECK(std::abs(frechet_gaussian(p, q) - 2.0) < 1e-12);
  CHECK_THROWS_AS(frechet_gaussian(a, p), ValidationError);
  CHECK_THROWS_AS(frechet_gaussian(a, summary(Vector::Zero(3), -Eigen::MatrixXd::Identity(3, 3))), NumericalError);
}

TEST_CASE("frechet_gaussian symmetry and translation") {
  CounterStream rng(6, StreamTag::test, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(6));
    Vector m1(d), m2(d), v(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      m1[j] = rng.normal();
      m2[j] = rng.normal();
      v[j] = 3 * rng.normal();
    }
    const Eigen::MatrixXd s1 = random_psd(rng, d), s2 = random_psd(rng, d);
    const double f = frechet_gaussian(summary(m1, s1), summary(m2, s2));
    CHECK(f >= 0.0);
    CHECK(std::abs(f - frechet_gaussian(summary(m2, s2), summary(m1, s1))) < 1e-9);
    CHECK(std::abs(f - frechet_gaussian(summary(m1 + v, s1), summary(m2 + v, s2))) < 1e-9);
    const double base = frechet_gaussian(summary(m1, s1), summary(m1, s1));
    CHECK(std::abs(frechet_gaussian(summary(m1, s1), summary(m1 + v, s1)) - base - v.squaredNorm()) < 1e-8);
  }
}

TEST_CASE("frechet_gaussian trace term matches a direct square root") {
  // tr((S1 S2)^{1/2}) equals the sum of square roots of the eigenvalues of S1 S2.
  CounterStream rng(7, StreamTag::test, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::MatrixXd s1 = random_psd(rng, d), s2 = random_psd(rng, d);
    const Eigen::VectorXcd ev = (s1 * s2).eigenvalues();
    double tr_sqrt = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) tr_sqrt += std::sqrt(std::max(ev[i].real(), 0.0));
    const double expected = s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    const Vector z = Vector::Zero(d);
    CHECK(frechet_gaussian(summary(z, s1), summary(z, s2)) == Approx(expected).epsilon(1e-8).scale(1.0));
  }
}

TEST_CASE("psd_sqrt") {
  CounterStream rng(8, StreamTag::test, 0);
  const Eigen::MatrixXd s = random_psd(rng, 4);
  const Eigen::MatrixXd r = psd_sqrt(s);
  CHECK((r * r - s).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(psd_sqrt(-s), NumericalError);
}

TEST_CASE("class_moments of a single-class mixture") {
  const Population pop = far_binary();
  const MomentSummary m = class_moments(pop, Attribute::gender, 1);
  CHECK(m.mean[0] == Approx(50.0));
  CHECK(m.covariance.isApprox(Eigen::MatrixXd::Identity(2, 2)));
  const MomentSummary all = class_moments(pop, Attribute::age, 0);
  CHECK(all.covariance(0, 0) == Approx(1.0 + 2500.0));
  CHECK_THROWS_AS(class_moments(pop, Attribute::race, 2), ValidationError);
}

TEST_CASE("purity") {
  const std::vector<std::size_t> source{0, 0, 1, 1};
  const std::vector<std::size_t> predicted{1, 1, 0, 1};
  CHECK(purity(source, predicted, std::vector<int>{1, 0}) == Approx(0.75));
  CHECK(purity(source, predicted, std::vector<int>{0, 1}) == Approx(0.25));
  CHECK(best_mapping_purity(source, predicted, 2, 2) == Approx(0.75));
}

TEST_CASE("report round trip and csv layout") {
  ReportDocument doc;
  doc.metadata = {"correct", 7, "00ff00ff00ff00ff"};
  BiasReport r = bias_report(Attribute::race, std::vector<double>{0.5, 0.5, 0.0},
                             std::vector<double>{0.6, 0.4, 0.0}, std::vector<double>{0.3, 0.3, 0.4});
  r.counts_uncorrected = {6, 4, 0};
  r.counts_corrected = std::vector<std::size_t>{3, 3, 4};
  r.frechet_uncorrected = {0.25, std::nullopt, std::nullopt};
  r.frechet_corrected = {0.5, 0.1, std::nullopt};
  r.metadata = doc.metadata;
  doc.reports.push_back(r);
  BiasReport minimal = bias_report(Attribute::gender, std::vector<double>{0.7, 0.3}, std::vector<double>{0.8, 0.2});
  minimal.metadata = doc.metadata;
  doc.reports.push_back(minimal);

  const auto dir = temp_dir();
  emit_document(doc, dir / "r.json", ReportFormat::json);
  const ReportDocument back = read_document(dir / "r.json");
  CHECK(back.schema_version == kReportSchemaVersion);
  CHECK(back.metadata == doc.metadata);
  REQUIRE(back.reports.size() == 2);
  CHECK(back.reports[0] == doc.reports[0]);
  CHECK(back.reports[1] == doc.reports[1]);

  emit_report(minimal, dir / "single.json", ReportFormat::json);
  const ReportDocument single = read_document(dir / "single.json");
  REQUIRE(single.reports.size() == 1);
  CHECK(single.reports[0] == minimal);

  emit_document(doc, dir / "r.csv", ReportFormat::csv);
  const std::string csv = read_text(dir / "r.csv");
  CHECK(csv.rfind("attribute,class,train,gen_uncorrected,gen_corrected,delta,ratio\n", 0) == 0);
  CHECK(csv.find("race,other,0.0,0.0,0.4,0.4,inf\n") != std::string::npos);
  CHECK(csv.find("gender,male,0.7,0.8,,0.10000000000000009,1.142857142857143\n") != std::string::npos);
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 1 + 3 + 2);

  emit_document(doc, dir / "again.json", ReportFormat::json);
  CHECK(read_text(dir / "again.json") == read_text(dir / "r.json"));

  auto j = nlohmann::json::parse(read_text(dir / "r.json"));
  j["schema_version"] = 2;
  CHECK_THROWS_AS(document_from_json(j), ValidationError);
  CHECK_THROWS_AS(read_document(dir / "missing.json"), IoError);
  CHECK_THROWS_AS(write_text(dir / "no_such_dir" / "x.txt", "x"), IoError);
}
