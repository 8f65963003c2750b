#include <doctest.h>

#include <cmath>
#include <numbers>

#include "eirm/analysis.hpp"
#include "eirm/diagnostics.hpp"
#include "eirm/sampler.hpp"
#include "eirm/error.hpp"
#include "eirm/posterior.hpp"
#include "eirm/simulate.hpp"
#include "support.hpp"

using namespace eirm;

namespace {

const Family kFamilies[] = {Family::grm_rating_scale, Family::grm_free_threshold, Family::two_pl, Family::one_pl};
const Parameterization kForms[] = {Parameterization::noncentered, Parameterization::centered};

}  // namespace

TEST_CASE("gradient matches central differences") {
  for (Family fam : kFamilies) {
    for (auto form : kForms) {
      auto sim = simulate(testing::small_config(fam, 30, 6, 23));
      const Posterior post(testing::framing_spec(fam, form), sim.model, sim.design);
      Rng rng = make_stream(2, 1);
      double worst = 0.0;
      for (int rep = 0; rep < 8; ++rep) {
        const Eigen::VectorXd z = testing::uniform_point(post.dimension(), 1.0, rng);
        worst = std::max(worst, testing::gradient_error(post.gradient(z), testing::fd_gradient(post, z)));
      }
      INFO(to_string(fam), " ", to_string(form));
      CHECK(worst < 1e-6);
    }
  }
}

TEST_CASE("value and gradient do not depend on the thread count") {
  auto sim = simulate(testing::small_config(Family::grm_rating_scale, 300, 8, 4));
  const auto spec = testing::framing_spec(Family::grm_rating_scale);
  const Posterior one(spec, sim.model, sim.design, 1);
  const Posterior four(spec, sim.model, sim.design, 4);
  Rng rng = make_stream(8, 0);
  const Eigen::VectorXd z = testing::uniform_point(one.dimension(), 1.0, rng);
  Eigen::VectorXd g1, g4;
  const double v1 = one.log_density_gradient(z, g1);
  const double v4 = four.log_density_gradient(z, g4);
  CHECK(v1 == v4);
  CHECK(g1 == g4);
  // Value-only and value-with-gradient paths agree.
  CHECK(one.log_density(z) == doctest::Approx(v1).epsilon(1e-14));
}

TEST_CASE("unconstrain inverts state") {
  for (Family fam : kFamilies) {
    for (auto form : kForms) {
      auto sim = simulate(testing::small_config(fam, 12, 5, 6));
      const Posterior post(testing::framing_spec(fam, form), sim.model, sim.design);
      Rng rng = make_stream(3, 3);
      const Eigen::VectorXd z = testing::uniform_point(post.dimension(), 2.0, rng);
      const auto s = post.state(z);
      const Eigen::VectorXd back = post.unconstrain(s);
      INFO(to_string(fam), " ", to_string(form));
      CHECK((back - z).cwiseAbs().maxCoeff() < 1e-12);
      // Constrained view: ordering, positivity, |rho| < 1.
      for (Eigen::Index r = 0; r < s.thresholds.rows(); ++r)
        for (Eigen::Index k = 1; k < s.thresholds.cols(); ++k) CHECK(s.thresholds(r, k) > s.thresholds(r, k - 1));
      if (post.layout().log_sigma_b >= 0) CHECK(s.sigma_b > 0);
      if (post.layout().log_sigma_a >= 0) CHECK(s.sigma_a > 0);
      CHECK(std::abs(s.rho) < 1);
    }
  }
}

TEST_CASE("both forms give the same constrained draw for the same state") {
  auto sim = simulate(testing::small_config(Family::grm_rating_scale, 10, 4, 9));
  const Posterior nc(testing::framing_spec(Family::grm_rating_scale, Parameterization::noncentered), sim.model, sim.design);
  const Posterior ce(testing::framing_spec(Family::grm_rating_scale, Parameterization::centered), sim.model, sim.design);
  Rng rng = make_stream(1, 1);
  const Eigen::VectorXd z = testing::uniform_point(nc.dimension(), 1.0, rng);
  const Eigen::VectorXd zc = ce.unconstrain(nc.state(z));
  CHECK((nc.constrain(z) - ce.constrain(zc)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(nc.parameter_names() == ce.parameter_names());
}

TEST_CASE("dimension at survey scale") {
  auto cfg = testing::small_config(Family::grm_rating_scale, 1000, 76, 1);
  cfg.fraction_negative = 30.0 / 76.0;
  auto sim = simulate(cfg);
  ModelSpec spec = testing::framing_spec(Family::grm_rating_scale);
  spec.n_categories = 4;
  const Posterior post(spec, sim.model, sim.design);
  CHECK(post.dimension() == 3 + 1 + 2 + 152 + 1000 + 3);
  CHECK(post.layout().n_gamma == 2);

  add_rd_covariates(sim.design);
  spec.disc_covariates = {"negative", std::string(kCenteredPosition), std::string(kNegativeByPosition)};
  const Posterior rd(spec, sim.model, sim.design);
  CHECK(rd.layout().n_gamma == 4);
  auto names = rd.parameter_names();
  CHECK(names[static_cast<std::size_t>(rd.layout().gamma + 3)] == "gamma3");
}

TEST_CASE("one-parameter model has no discrimination block") {
  auto sim = simulate(testing::small_config(Family::one_pl, 10, 4, 2));
  ModelSpec spec;
  spec.family = Family::one_pl;
  const Posterior post(spec, sim.model, sim.design);
  CHECK(post.layout().gamma < 0);
  CHECK(post.layout().zeta1 < 0);
  CHECK(post.layout().log_sigma_a < 0);
  CHECK(post.layout().atanh_rho < 0);
  CHECK(post.layout().n_beta == 1);  // intercept only
}

TEST_CASE("construction errors") {
  auto sim = simulate(testing::small_config(Family::grm_rating_scale, 10, 4, 2));
  ModelSpec spec = testing::framing_spec(Family::grm_rating_scale);
  spec.disc_covariates = {"missing"};
  CHECK_THROWS_AS(Posterior(spec, sim.model, sim.design), ValidationError);
  spec = testing::framing_spec(Family::grm_rating_scale);
  spec.n_categories = 5;
  CHECK_THROWS_AS(Posterior(spec, sim.model, sim.design), ValidationError);
  spec = testing::framing_spec(Family::two_pl);
  CHECK_THROWS_AS(Posterior(spec, sim.model, sim.design), ValidationError);
  // Raw values are not categories.
  CHECK_THROWS_AS(Posterior(testing::framing_spec(Family::grm_rating_scale), sim.raw, sim.design), ValidationError);

  const Posterior post(testing::framing_spec(Family::grm_rating_scale), sim.model, sim.design);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(post.dimension());
  z[0] = NAN;
  CHECK_THROWS_AS(post.log_density(z), ValidationError);
  CHECK_THROWS_AS(post.gradient(Eigen::VectorXd::Zero(3)), ValidationError);
  Eigen::VectorXd g;
  CHECK(std::isnan(post.log_density_gradient(z, g)));
}

TEST_CASE("small residual scale penalizes discrimination residuals") {
  auto sim = simulate(testing::small_config(Family::grm_rating_scale, 20, 4, 5));
  const Posterior post(testing::framing_spec(Family::grm_rating_scale, Parameterization::centered), sim.model,
                       sim.design);
  const auto& L = post.layout();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(post.dimension());
  z[L.log_sigma_a] = -6.0;
  double last = post.log_density(z);
  for (double dev : {0.01, 0.02, 0.04, 0.08}) {
    z[L.zeta1] = dev;  // gamma = 0, so the residual equals ln a_1
    const double now = post.log_density(z);
    CHECK(now < last);
    last = now;
  }
}

TEST_CASE("symmetric items get symmetric gradients") {
  // Two items with identical columns and covariates.
  ResponseTable t;
  t.item_ids = {"a", "b"};
  t.category_scale = true;
  t.scale = {1, 4};
  const int cats[] = {1, 2, 4, 3, 2, 2, 1, 4};
  for (int j = 0; j < 8; ++j) {
    t.person_ids.push_back("p" + std::to_string(j));
    t.records.push_back({j, 0, cats[j]});
    t.records.push_back({j, 1, cats[j]});
  }
  ItemDesign d;
  d.n_categories = 4;
  d.items = {{"a", false, 1, "", {}}, {"b", false, 2, "", {}}};
  ModelSpec spec;
  for (auto form : kForms) {
    spec.parameterization = form;
    const Posterior post(spec, t, d);
    const auto& L = post.layout();
    Rng rng = make_stream(4, 4);
    Eigen::VectorXd z = testing::uniform_point(post.dimension(), 1.0, rng);
    z[L.zeta1 + 1] = z[L.zeta1];
    if (form == Parameterization::noncentered) {
      z[L.zeta0 + 1] = z[L.zeta0];
    } else {
      z[L.zeta0 + 1] = 0.0;  // Helmert coordinate: equal locations
    }
    auto g = post.gradient(z);
    CHECK(g[L.zeta1] == doctest::Approx(g[L.zeta1 + 1]).epsilon(1e-12));
    if (form == Parameterization::noncentered) CHECK(g[L.zeta0] == doctest::Approx(g[L.zeta0 + 1]).epsilon(1e-12));
    else CHECK(std::abs(g[L.zeta0 + 1]) < 1e-10);
  }
}

TEST_CASE("model spec json") {
  auto spec = ModelSpec::from_json(nlohmann::json::parse(
      R"({"family":"two_pl","location_covariates":["negative"],"disc_covariates":["negative"],"parameterization":"centered","priors":{"sd_disc":0.3}})"));
  CHECK(spec.family == Family::two_pl);
  CHECK(spec.parameterization == Parameterization::centered);
  CHECK(spec.priors.sd_disc == 0.3);
  CHECK(ModelSpec::from_json(spec.to_json()).to_json() == spec.to_json());
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json::parse(R"({"family":"three_pl"})")), ValidationError);
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json::parse(R"({"family":"one_pl","disc_covariates":["negative"]})")),
                  ValidationError);
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json::parse(R"({"priors":{"gamma":-1}})")), ValidationError);
  CHECK_THROWS_AS(parameterization_from_string("sideways"), ValidationError);
}

TEST_CASE("a zero covariate column sees only its prior") {
  auto sim = simulate(testing::small_config(Family::two_pl, 30, 6, 12));
  sim.design.add_covariate("zero", std::vector<double>(6, 0.0));
  auto spec = testing::framing_spec(Family::two_pl);
  spec.disc_covariates.push_back("zero");
  spec.location_covariates.push_back("zero");
  const Posterior post(spec, sim.model, sim.design);
  Rng rng = make_stream(14, 0);
  const Eigen::VectorXd z = testing::uniform_point(post.dimension(), 1.0, rng);
  const Eigen::VectorXd g = post.gradient(z);
  const auto& L = post.layout();
  const Eigen::Index gk = L.gamma + L.n_gamma - 1, bk = L.beta + L.n_beta - 1;
  CHECK(g[gk] == doctest::Approx(-z[gk] / (spec.priors.gamma * spec.priors.gamma)).epsilon(1e-12));
  CHECK(g[bk] == doctest::Approx(-z[bk] / (spec.priors.beta * spec.priors.beta)).epsilon(1e-12));
}

TEST_CASE("with no responses the sampler reproduces the priors") {
  auto sim = simulate(testing::small_config(Family::two_pl, 5, 6, 15));
  ResponseTable empty = sim.model;
  empty.records.clear();
  empty.person_ids.clear();
  const Posterior post(testing::framing_spec(Family::two_pl), empty, sim.design);
  SamplerConfig sc;
  sc.seed = 16;
  const auto summary = summarize(run_mcmc(post, sc));
  const double half = std::sqrt(2 / std::numbers::pi);
  struct Expect {
    const char* name;
    double mean, sd;
  };
  const Expect expect[] = {{"sigma_b", half, std::sqrt(1 - 2 / std::numbers::pi)},
                           {"sigma_a", 0.5 * half, 0.5 * std::sqrt(1 - 2 / std::numbers::pi)},
                           {"rho_ab", 0.0, 1 / std::sqrt(3.0)},
                           {"beta0", 0.0, 1.0},
                           {"beta1", 0.0, 1.0},
                           {"gamma0", 0.0, 0.5},
                           {"gamma1", 0.0, 0.5}};
  for (const auto& e : expect) {
    const auto* row = summary.find(e.name);
    REQUIRE(row != nullptr);
    INFO(e.name, " mean ", row->mean, " sd ", row->sd, " ess ", row->ess_bulk);
    CHECK(std::abs(row->mean - e.mean) < 3 * e.sd / std::sqrt(row->ess_bulk));
    CHECK(row->sd == doctest::Approx(e.sd).epsilon(0.1));
  }
}

TEST_CASE("two-category graded model with vanishing discrimination spread nests the one-parameter model") {
  const auto sim = simulate(testing::small_config(Family::one_pl, 40, 6, 18));
  ModelSpec grm;
  grm.family = Family::grm_rating_scale;
  ModelSpec rasch;
  rasch.family = Family::one_pl;
  const Posterior pg(grm, sim.model, sim.design);
  const Posterior pr(rasch, sim.model, sim.design);
  const auto& G = pg.layout();
  const auto& R = pr.layout();
  Rng rng = make_stream(19, 0);
  // Coordinates only the graded model has stay fixed: alpha = 0, gamma0 = 0, sigma_a = e^-20.
  const Eigen::VectorXd extra = testing::uniform_point(G.dimension, 1.0, rng);
  auto graded_point = [&](const Eigen::VectorXd& zr) {
    Eigen::VectorXd z = extra;
    z[G.thresholds] = 0.0;
    z[G.gamma] = 0.0;
    z[G.log_sigma_a] = -20.0;
    z[G.log_sigma_b] = zr[R.log_sigma_b];
    z.segment(G.theta, G.n_persons) = zr.segment(R.theta, R.n_persons);
    z.segment(G.zeta0, G.n_items) = zr.segment(R.zeta0, R.n_items);
    return z;
  };
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd z1 = testing::uniform_point(R.dimension, 1.0, rng);
    Eigen::VectorXd z2 = testing::uniform_point(R.dimension, 1.0, rng);
    z1[R.beta] = z2[R.beta] = 0.0;
    const double d_rasch = pr.log_density(z1) - pr.log_density(z2);
    const double d_graded = pg.log_density(graded_point(z1)) - pg.log_density(graded_point(z2));
    CHECK(std::abs(d_rasch - d_graded) < 1e-3);
  }
}
