#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "eirm/error.hpp"
#include "eirm/kernel.hpp"
#include "eirm/rng.hpp"
#include "eirm/transforms.hpp"

using namespace eirm;
using doctest::Approx;

namespace {

ResponseTable table_of(int persons, int items, const std::vector<Response>& recs) {
  ResponseTable t;
  for (int j = 0; j < persons; ++j) t.person_ids.push_back("p" + std::to_string(j));
  for (int i = 0; i < items; ++i) t.item_ids.push_back("i" + std::to_string(i));
  t.records = recs;
  t.category_scale = true;
  return t;
}

}  // namespace

TEST_CASE("cumulative probability values") {
  CHECK(kernel::grm_cum_prob(1, 0, 0, 0) == 0.5);
  CHECK(kernel::grm_cum_prob(2, -1, 1, 0) == Approx(0.01798620996).epsilon(1e-10));
  CHECK(kernel::grm_cum_prob(1, 1, 0, 0) == Approx(0.7310585786).epsilon(1e-10));
  CHECK_THROWS_AS(kernel::grm_cum_prob(1, NAN, 0, 0), ValidationError);
  CHECK_THROWS_AS(kernel::grm_cum_prob(0, 0, 0, 0), ValidationError);
}

TEST_CASE("category probabilities") {
  const double cuts[] = {-1.0, 1.0};
  auto p = kernel::grm_category_probs(1, cuts, 0, 0);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == Approx(0.2689414214).epsilon(1e-9));
  CHECK(p[1] == Approx(0.4621171573).epsilon(1e-9));
  CHECK(p[2] == Approx(0.2689414214).epsilon(1e-9));
  CHECK(kernel::grm_category_probs(1, cuts, 20, 0)[2] > 0.999);
  const double one[] = {0.0};
  auto q = kernel::grm_category_probs(1, one, 0.5, 0);
  CHECK(q[0] == Approx(0.3775406688).epsilon(1e-9));
  CHECK(q[1] == Approx(0.6224593312).epsilon(1e-9));
  const double bad[] = {1.0, 1.0};
  CHECK_THROWS_AS(kernel::grm_category_probs(1, bad, 0, 0), ValidationError);
}

TEST_CASE("dichotomous probability") {
  CHECK(kernel::dichotomous_prob(1, 0, 0) == 0.5);
  CHECK(kernel::dichotomous_prob(1.5, 0.5, -0.2) == Approx(0.6106392339).epsilon(1e-9));
  CHECK(kernel::dichotomous_prob(1, 2, 1) == Approx(0.9525741268).epsilon(1e-9));
  CHECK_THROWS_AS(kernel::dichotomous_prob(1, INFINITY, 0), ValidationError);
}

TEST_CASE("log discrimination predictor") {
  const double g[] = {0.579, -0.401}, x[] = {1, 1};
  CHECK(kernel::log_disc_predictor(g, x, 0) == Approx(1.1948253212).epsilon(1e-9));
  const double g0[] = {0.0}, x0[] = {1.0};
  CHECK(kernel::log_disc_predictor(g0, x0, 0) == 1.0);
  CHECK_THROWS_AS(kernel::log_disc_predictor(g, x0, 0), ValidationError);
}

TEST_CASE("conditional log-likelihood") {
  ModelParams mp;
  mp.a = Eigen::VectorXd::Ones(1);
  mp.b = Eigen::VectorXd::Zero(1);
  mp.theta = Eigen::VectorXd::Zero(1);
  const double cuts[] = {-1.0, 1.0};
  mp.thresholds = ThresholdSet::shared(cuts);
  CHECK(conditional_loglik(table_of(1, 1, {{0, 0, 2}}), mp) == Approx(-0.7719368329).epsilon(1e-9));
  CHECK(conditional_loglik(table_of(1, 1, {}), mp) == 0.0);
  CHECK_THROWS_AS(conditional_loglik(table_of(2, 1, {{0, 0, 2}}), mp), ValidationError);

  // Additivity over cells.
  ModelParams two = mp;
  two.a = Eigen::Vector2d(1.3, 0.7);
  two.b = Eigen::Vector2d(0.2, -0.4);
  two.theta = Eigen::Vector2d(0.5, -1.1);
  auto both = conditional_loglik(table_of(2, 2, {{0, 0, 1}, {1, 1, 3}}), two);
  auto c1 = std::log(kernel::grm_category_probs(1.3, cuts, 0.5, 0.2)[0]);
  auto c2 = std::log(kernel::grm_category_probs(0.7, cuts, -1.1, -0.4)[2]);
  CHECK(both == Approx(c1 + c2).epsilon(1e-12));
}

TEST_CASE("theta + b shift invariance and thread independence") {
  Rng rng = make_stream(11, 0);
  std::normal_distribution<double> n01;
  const int J = 40, I = 6;
  std::vector<Response> recs;
  std::uniform_int_distribution<int> cat(1, 4);
  for (int j = 0; j < J; ++j)
    for (int i = 0; i < I; ++i) recs.push_back({j, i, cat(rng)});
  auto t = table_of(J, I, recs);
  ModelParams mp;
  mp.a = Eigen::VectorXd::NullaryExpr(I, [&] { return std::exp(0.3 * n01(rng)); });
  mp.b = Eigen::VectorXd::NullaryExpr(I, [&] { return n01(rng); });
  mp.theta = Eigen::VectorXd::NullaryExpr(J, [&] { return n01(rng); });
  const double cuts[] = {-1.2, 0.1, 0.9};
  mp.thresholds = ThresholdSet::shared(cuts);
  const double base = conditional_loglik(t, mp);
  ModelParams shifted = mp;
  shifted.theta.array() += 0.73;
  shifted.b.array() -= 0.73;
  CHECK(conditional_loglik(t, shifted) == Approx(base).epsilon(1e-12));
  CHECK(conditional_loglik(t, mp, 4) == base);
  CHECK(conditional_loglik(t, mp, 3) == base);
}

TEST_CASE("K = 2 graded model with alpha = 0 equals the dichotomous model") {
  const double zero[] = {0.0};
  for (double theta : {-2.0, -0.3, 0.0, 1.7}) {
    for (double a : {0.4, 1.0, 2.5}) {
      auto p = kernel::grm_category_probs(a, zero, theta, 0.35);
      CHECK(p[1] == Approx(kernel::dichotomous_prob(a, theta, 0.35)).epsilon(1e-14));
    }
  }
}

TEST_CASE("category term stays finite in the tails") {
  // Far below the lowest cutpoint and far above the highest.
  const double cuts[] = {-1.0, 1.0};
  auto lo = kernel::category_term(3, 3, 0, 4.0 * (-1.0 - (-300.0)));
  CHECK(std::isfinite(lo.log_prob));
  CHECK(lo.log_prob < -1000);
  auto mid = kernel::category_term(2, 3, 4.0 * (1 - 50), 4.0 * (-1 - 50));
  CHECK(std::isfinite(mid.log_prob));
  CHECK(mid.log_prob == Approx(-196.0 + std::log1p(-std::exp(-8.0))).epsilon(1e-13));
  (void)cuts;
}

TEST_CASE("category term derivatives match differences") {
  const double h = 1e-6;
  for (int k = 1; k <= 4; ++k) {
    const double u = 0.8, l = -0.6;
    auto t = kernel::category_term(k, 4, u, l);
    const double du = (kernel::category_term(k, 4, u + h, l).log_prob - kernel::category_term(k, 4, u - h, l).log_prob) / (2 * h);
    const double dl = (kernel::category_term(k, 4, u, l + h).log_prob - kernel::category_term(k, 4, u, l - h).log_prob) / (2 * h);
    CHECK(t.d_upper == Approx(du).epsilon(1e-7));
    CHECK(t.d_lower == Approx(dl).epsilon(1e-7));
  }
}

TEST_CASE("transforms") {
  CHECK(transform::log_cosh(1000.0) == Approx(1000.0 - std::log(2.0)));
  CHECK(transform::log_cosh(0.3) == Approx(std::log(std::cosh(0.3))).epsilon(1e-14));
  const double z[] = {-0.4, 0.2, -1.0};
  double alpha[3], back[3];
  transform::ordered(z, alpha);
  CHECK(alpha[1] > alpha[0]);
  CHECK(alpha[2] > alpha[1]);
  transform::ordered_inverse(alpha, back);
  for (int k = 0; k < 3; ++k) CHECK(back[k] == Approx(z[k]).epsilon(1e-14));
  const double flat[] = {0.0, 0.0};
  double w[2];
  CHECK_THROWS_AS(transform::ordered_inverse(flat, w), ValidationError);
  CHECK_THROWS_AS(transform::positive_inverse(0.0), ValidationError);
  CHECK_THROWS_AS(transform::correlation_inverse(1.0), ValidationError);
  CHECK(transform::correlation(transform::correlation_inverse(0.8)) == Approx(0.8).epsilon(1e-15));
}

TEST_CASE("log Jacobians match finite-difference determinants") {
  Rng rng = make_stream(17, 0);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-6;
  for (int rep = 0; rep < 20; ++rep) {
    // (log sigma, atanh rho) -> (sigma, rho)
    const double s = u(rng), w = u(rng);
    Eigen::Matrix2d jac;
    jac << (transform::positive(s + h) - transform::positive(s - h)) / (2 * h), 0.0, 0.0,
        (transform::correlation(w + h) - transform::correlation(w - h)) / (2 * h);
    CHECK(std::log(std::abs(jac.determinant())) ==
          Approx(transform::positive_log_jacobian(s) + transform::correlation_log_jacobian(w)).epsilon(1e-7));
    // ordered cutpoints
    const std::vector<double> z{u(rng), u(rng), u(rng)};
    Eigen::Matrix3d j3;
    for (int c = 0; c < 3; ++c) {
      auto up = z, down = z;
      up[c] += h;
      down[c] -= h;
      double a_up[3], a_down[3];
      transform::ordered(up, a_up);
      transform::ordered(down, a_down);
      for (int r = 0; r < 3; ++r) j3(r, c) = (a_up[r] - a_down[r]) / (2 * h);
    }
    CHECK(std::log(std::abs(j3.determinant())) == Approx(transform::ordered_log_jacobian(z)).epsilon(1e-7));
  }
}
