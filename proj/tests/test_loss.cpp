#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tested/loss.hpp"

using namespace tested;

namespace {

const double kE = std::exp(1.0);

// log-sum-exp in long double, shifted by the max.
double ce_oracle(const std::vector<double>& z, int y) {
  long double top = z[0];
  for (double v : z) top = std::max<long double>(top, v);
  long double s = 0;
  for (double v : z) s += std::exp(static_cast<long double>(v) - top);
  return static_cast<double>(top + std::log(s) - z[static_cast<std::size_t>(y)]);
}

}  // namespace

TEST_CASE("cross-entropy of uniform logits is log 5") {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(5);
  for (StanceLabel y : kAllLabels) CHECK(std::abs(loss_ce(z, y) - std::log(5.0)) < 1e-12);
}

TEST_CASE("cross-entropy with large logits stays finite") {
  Eigen::VectorXd z(5);
  z << 50, 0, 0, 0, 0;
  CHECK(std::abs(loss_ce(z, StanceLabel::Positive) - std::log1p(4 * std::exp(-50.0))) < 1e-9);
  CHECK(std::abs(loss_ce(z, StanceLabel::Negative) - (50.0 + std::log1p(4 * std::exp(-50.0)))) < 1e-6);
  z[0] = 1000;
  CHECK(std::isfinite(loss_ce(z, StanceLabel::Negative)));
  z[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(loss_ce(z, StanceLabel::Negative), NumericalError);
}

TEST_CASE("cross-entropy matches a long double oracle") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 8);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd z(5);
    std::vector<double> v(5);
    for (int i = 0; i < 5; ++i) v[static_cast<std::size_t>(i)] = z[i] = g(rng);
    const int y = t % 5;
    const double got = loss_ce(z, kAllLabels[static_cast<std::size_t>(y)]);
    CHECK(std::abs(got - ce_oracle(v, y)) < 1e-9);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("contrastive pair examples") {
  Eigen::Vector2d a(1, 0), b(-1, 0), c(0, 1);
  CHECK(std::abs(loss_cl_pair(a, a, 1, 0.5)) < 1e-12);
  CHECK(std::abs(loss_cl_pair(a, b, 1, 0.5) - (kE - 1 / kE)) < 1e-12);
  CHECK(std::abs(loss_cl_pair(a, a, -1, 0.5) - (std::exp(0.5) - 1)) < 1e-12);
  CHECK(std::abs(loss_cl_pair(a, b, -1, 0.5)) < 1e-12);
  CHECK(std::abs(loss_cl_pair(a, c, -1, 0.5)) < 1e-12);
  CHECK(std::abs(loss_cl_pair(a, c, 1, 0.5) - (kE - 1)) < 1e-12);
  CHECK_THROWS_AS(loss_cl_pair(a, Eigen::Vector2d::Zero().eval(), 1, 0.5), NumericalError);
}

TEST_CASE("contrastive pair is scale invariant") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> s(0.01, 100);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd a(6), b(6);
    for (int i = 0; i < 6; ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
    }
    const int p = t % 2 ? 1 : -1;
    const double base = loss_cl_pair(a, b, p, 0.2);
    CHECK(std::abs(loss_cl_pair((s(rng) * a).eval(), (s(rng) * b).eval(), p, 0.2) - base) < 1e-12);
  }
}

TEST_CASE("contrastive pair stays within its bounds") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (int t = 0; t < 2000; ++t) {
    Eigen::VectorXd a(4), b(4);
    for (int i = 0; i < 4; ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
    }
    const double same = loss_cl_pair(a, b, 1, 0.5);
    const double diff = loss_cl_pair(a, b, -1, 0.5);
    CHECK(same >= 0.0);
    CHECK(same <= kE - 1 / kE + 1e-12);
    CHECK(diff >= 0.0);
    CHECK(diff <= std::exp(0.5) - 1 + 1e-12);
  }
}

TEST_CASE("contrastive slope matches a central difference away from the kink") {
  for (double cos : {-0.9, -0.3, 0.1, 0.49, 0.51, 0.8}) {
    for (int p : {1, -1}) {
      const double h = 1e-6;
      const double fd =
          (contrastive_from_cosine(cos + h, p, 0.5) - contrastive_from_cosine(cos - h, p, 0.5)) / (2 * h);
      CHECK(std::abs(contrastive_slope(cos, p, 0.5) - fd) < 1e-6);
    }
  }
}

TEST_CASE("batch loss is the mean over unordered pairs") {
  Eigen::MatrixXd reps(3, 2);
  reps << 1, 0, 0, 1, -1, 0;
  const std::vector<StanceLabel> labels{StanceLabel::Positive, StanceLabel::Positive, StanceLabel::Negative};
  // pairs: (0,1) same cos 0, (0,2) diff cos -1, (1,2) diff cos 0
  const double want = (kE - 1 + 0.0 + 0.0) / 3.0;
  CHECK(std::abs(loss_cl_batch(reps, PairMatrix(labels), 0.5) - want) < 1e-12);
}

TEST_CASE("batch loss matches the pairwise oracle") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> lab(0, 4);
  for (int t = 0; t < 50; ++t) {
    const int b = 2 + t % 9;
    Eigen::MatrixXd reps(b, 5);
    std::vector<std::vector<double>> rv(static_cast<std::size_t>(b), std::vector<double>(5));
    std::vector<StanceLabel> labels;
    std::vector<int> li;
    for (int i = 0; i < b; ++i) {
      for (int d = 0; d < 5; ++d) rv[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] = reps(i, d) = g(rng);
      li.push_back(lab(rng));
      labels.push_back(kAllLabels[static_cast<std::size_t>(li.back())]);
    }
    const double beta = (t % 3) * 0.25;
    CHECK(std::abs(loss_cl_batch(reps, PairMatrix(labels), beta) - oracle::cl_batch(rv, li, beta)) < 1e-12);
  }
}

TEST_CASE("batch loss needs two rows and a matching pair matrix") {
  Eigen::MatrixXd one(1, 2);
  one << 1, 0;
  const std::vector<StanceLabel> l1{StanceLabel::Positive};
  CHECK_THROWS_AS(loss_cl_batch(one, PairMatrix(l1), 0.5), DataError);
  Eigen::MatrixXd two(2, 2);
  two << 1, 0, 0, 1;
  const std::vector<StanceLabel> l3{StanceLabel::Positive, StanceLabel::Positive, StanceLabel::Other};
  CHECK_THROWS_AS(loss_cl_batch(two, PairMatrix(l3), 0.5), DataError);
}

TEST_CASE("pair matrix is symmetric with a positive diagonal") {
  const std::vector<StanceLabel> labels{StanceLabel::Positive, StanceLabel::Other, StanceLabel::Positive,
                                        StanceLabel::Neutral};
  PairMatrix p(labels);
  CHECK(p.size() == 4);
  CHECK(p.matrix() == p.matrix().transpose());
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(p(i, i) == 1);
  CHECK(p(0, 2) == 1);
  CHECK(p(0, 1) == -1);
  CHECK(p(1, 3) == -1);
}
