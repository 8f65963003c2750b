#include <doctest.h>

#include <cmath>
#include <random>

#include "eirm/diagnostics.hpp"
#include "eirm/error.hpp"
#include "eirm/rng.hpp"
#include "support.hpp"

using namespace eirm;

namespace {

std::vector<double> normal_draws(std::size_t n, double mean, std::uint64_t stream) {
  Rng rng = make_stream(101, stream);
  std::normal_distribution<double> d(mean, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("type-7 quantiles") {
  std::vector<double> v{4, 1, 3, 2};
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
  CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK_THROWS_AS(quantile({}, 0.5), ValidationError);
  CHECK_THROWS_AS(quantile(v, 1.5), ValidationError);
}

TEST_CASE("identical chains have no between-chain variance") {
  // Each chain repeats one half-sequence, so every split half is the same
  // sample and the between-half term vanishes: R-hat reduces to the
  // finite-n factor sqrt((n - 1) / n) of the half length n.
  auto half = normal_draws(250, 0.0, 1);
  std::vector<double> chain = half;
  chain.insert(chain.end(), half.begin(), half.end());
  ChainDraws same{chain, chain, chain, chain};
  const double r = split_rhat(same);
  CHECK(r == doctest::Approx(std::sqrt(249.0 / 250.0)).epsilon(1e-14));
  CHECK(std::abs(r - 1.0) < 0.005);
}

TEST_CASE("separated chains give large R-hat") {
  ChainDraws chains{normal_draws(500, 0.0, 2), normal_draws(500, 5.0, 3)};
  CHECK(split_rhat(chains) > 1.5);
  // Well-mixed chains sit near 1.
  ChainDraws good{normal_draws(1000, 0.0, 4), normal_draws(1000, 0.0, 5), normal_draws(1000, 0.0, 6)};
  CHECK(split_rhat(good) < 1.01);
}

TEST_CASE("ESS of independent and autocorrelated draws") {
  ChainDraws iid{normal_draws(1000, 0, 7), normal_draws(1000, 0, 8), normal_draws(1000, 0, 9), normal_draws(1000, 0, 10)};
  const double e = ess_bulk(iid);
  CHECK(std::abs(e - 4000.0) / 4000.0 < 0.15);
  CHECK(e <= 4000.0);

  // AR(1) with phi = 0.5: integrated autocorrelation time (1 + phi) / (1 - phi) = 3.
  ChainDraws ar;
  for (int c = 0; c < 4; ++c) {
    auto eps = normal_draws(5000, 0, 20 + c);
    std::vector<double> x(eps.size());
    x[0] = eps[0] / std::sqrt(1 - 0.25);
    for (std::size_t t = 1; t < x.size(); ++t) x[t] = 0.5 * x[t - 1] + eps[t];
    ar.push_back(x);
  }
  CHECK(std::abs(ess(ar) - 20000.0 / 3.0) / (20000.0 / 3.0) < 0.15);
}

TEST_CASE("degenerate inputs") {
  ChainDraws flat{std::vector<double>(10, 2.0), std::vector<double>(10, 2.0)};
  CHECK(std::isnan(split_rhat(flat)));
  CHECK(std::isnan(ess_bulk(flat)));
  ChainDraws shortc{{1.0, 2.0, 3.0}, {1.0, 2.0, 4.0}};
  CHECK(std::isnan(split_rhat(shortc)));

  PosteriorDraws d;
  d.n_chains = 2;
  d.n_samples = 50;
  d.names = {"fixed", "moving"};
  d.info.resize(100);
  d.info[3].divergent = true;
  auto moving = normal_draws(100, 0, 30);
  for (int i = 0; i < 100; ++i) {
    d.values.push_back(1.5);
    d.values.push_back(moving[static_cast<std::size_t>(i)]);
  }
  const auto s = summarize(d);
  REQUIRE(s.rows.size() == 2);
  CHECK(s.rows[0].constant);
  CHECK(std::isnan(s.rows[0].rhat));
  CHECK(s.rows[0].q50 == 1.5);
  CHECK(!s.rows[1].constant);
  CHECK(s.divergences == 1);
  CHECK(s.total_draws == 100);
  // Divergences, the constant parameter and the low ESS all warn.
  CHECK(s.warnings.size() >= 3);
  CHECK(s.find("moving") == &s.rows[1]);
  CHECK(s.find("nothing") == nullptr);
}

TEST_CASE("rank normalization averages ties") {
  ChainDraws c{{1.0, 2.0, 2.0, 3.0}};
  auto z = rank_normalize(c);
  CHECK(z[0][1] == z[0][2]);
  CHECK(z[0][0] < z[0][1]);
  CHECK(z[0][0] == doctest::Approx(-z[0][3]));
}

TEST_CASE("summary csv layout") {
  PosteriorDraws d;
  d.n_chains = 1;
  d.n_samples = 4;
  d.names = {"x"};
  d.values = {1, 2, 3, 4};
  d.info.resize(4);
  auto dir = testing::scratch_dir("summary_csv");
  write_summary_csv(summarize(d), dir / "s.csv");
  auto t = csv::read_file(dir / "s.csv");
  CHECK(t.header == std::vector<std::string>{"parameter", "mean", "sd", "q2.5", "q50", "q97.5", "rhat", "ess_bulk"});
  CHECK(t.rows[0][1] == "2.5");
}
