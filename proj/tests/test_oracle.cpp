#include <doctest.h>

#include <cmath>

#include "eirm/kernel.hpp"
#include "eirm/posterior.hpp"
#include "eirm/simulate.hpp"
#include "oracle/fixtures.hpp"
#include "oracle/naive_posterior.hpp"
#include "support.hpp"

using namespace eirm;

TEST_CASE("conditional log-likelihood matches the brute-force fixture") {
  const auto fixture = testing::read_json(testing::oracle_dir() / "loglik_cases.json");
  const auto& cases = fixture.at("cases");
  REQUIRE(cases.size() == 200);
  double worst = 0.0;
  for (const auto& c : cases) {
    const auto lc = oracle::loglik_case(c);
    const double got = conditional_loglik(lc.table, lc.params);
    worst = std::max(worst, std::abs(got - lc.expected));
  }
  MESSAGE("worst absolute difference " << worst);
  CHECK(worst < 1e-10);
}

namespace {

// Drop a scattering of cells but keep every person and item present.
ResponseTable thin(const ResponseTable& t, std::uint64_t seed) {
  ResponseTable out = t;
  out.records.clear();
  Rng rng = make_stream(seed, 9);
  std::bernoulli_distribution keep(0.8);
  for (const auto& r : t.records) {
    if (keep(rng) || r.item == r.person % static_cast<int>(t.n_items()) || r.person == 0) out.records.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("log density equals the naive posterior in both parameterizations") {
  for (Family fam : {Family::grm_rating_scale, Family::grm_free_threshold, Family::two_pl, Family::one_pl}) {
    for (auto par : {Parameterization::noncentered, Parameterization::centered}) {
      auto sim = simulate(testing::small_config(fam, 9, 5, 17));
      auto table = thin(sim.model, 3);
      const Posterior post(testing::framing_spec(fam, par), table, sim.design);
      Rng rng = make_stream(5, 0);
      for (int rep = 0; rep < 10; ++rep) {
        const Eigen::VectorXd z = testing::uniform_point(post.dimension(), 1.5, rng);
        const double got = post.log_density(z);
        const double want = static_cast<double>(oracle::log_density(post, table, sim.design, z));
        // The centered rating-scale basis drops a constant volume factor.
        const double offset =
            par == Parameterization::centered && fam == Family::grm_rating_scale ? 0.5 * std::log(5.0) : 0.0;
        INFO(to_string(fam), " ", to_string(par));
        CHECK(got + offset == doctest::Approx(want).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("one person, one item, all-zero point") {
  // Hand-assembled terms at z = 0: sigma = 1, rho = 0, alpha = (0, 1, 2).
  ResponseTable t;
  t.person_ids = {"p"};
  t.item_ids = {"q"};
  t.records = {{0, 0, 3}};
  t.category_scale = true;
  t.scale = {1, 4};
  ItemDesign d;
  d.n_categories = 4;
  d.items = {{"q", false, 1, "", {}}};
  ModelSpec spec;
  spec.family = Family::grm_rating_scale;
  const Posterior post(spec, t, d);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(post.dimension());
  auto F = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double lik = std::log(F(2.0) - F(1.0));
  const double ln2pi = std::log(2.0 * M_PI);
  const double normal0 = -0.5 * ln2pi;
  auto t3 = [](double x) {
    return std::lgamma(2.0) - std::lgamma(1.5) - 0.5 * std::log(3.0 * M_PI) - std::log(2.5) -
           2.0 * std::log(1.0 + x * x / (3.0 * 6.25));
  };
  double want = lik + t3(0) + t3(1) + t3(2);
  want += normal0 - std::log(0.5);                 // gamma0
  want += normal0 * 2;                             // e0, e1
  want += normal0;                                 // theta
  want += std::log(2.0) + normal0 - 0.5;           // sigma_b ~ half-normal(1) at 1
  want += std::log(2.0) + normal0 - std::log(0.5) - 0.5 / 0.25;  // sigma_a ~ half-normal(0.5) at 1
  want += std::log(0.5);                           // rho uniform
  CHECK(post.log_density(z) == doctest::Approx(want).epsilon(1e-13));
}
