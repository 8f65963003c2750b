// End-to-end acceptance checks, one PASS/FAIL line per criterion.
// Exit status is the number of failed criteria. The lines are also written to
// acceptance_report.txt in the working directory.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "eirm/analysis.hpp"
#include "eirm/diagnostics.hpp"
#include "eirm/kernel.hpp"
#include "eirm/mml.hpp"
#include "eirm/posterior.hpp"
#include "eirm/sampler.hpp"
#include "eirm/simulate.hpp"
#include "oracle/fixtures.hpp"
#include "support.hpp"

using namespace eirm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool waived = false;
};

int failures = 0;
std::vector<int> selected;  // empty: all
std::ofstream report_file;

void emit(const std::string& line) {
  std::cout << line << std::endl;
  if (report_file) report_file << line << std::endl;
}

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) return;
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  const char* status = !o.pass ? "FAIL" : o.waived ? "WAIVED" : "PASS";
  emit(fmt::format("{} criterion {:>2} {}: {} [{:.1f}s]", status, id, name, o.detail, secs));
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

ItemDesign framed(int n, int first_negative) {
  ItemDesign d;
  for (int i = 1; i <= n; ++i) d.items.push_back({"q" + std::to_string(i), i >= first_negative, i, "", {}});
  return d;
}

// ---------------------------------------------------------------- 1

Outcome likelihood_oracle() {
  const auto fixture = testing::read_json(testing::oracle_dir() / "loglik_cases.json");
  const auto& cases = fixture.at("cases");
  double worst = 0;
  for (const auto& c : cases) {
    const auto lc = oracle::loglik_case(c);
    worst = std::max(worst, std::abs(conditional_loglik(lc.table, lc.params) - lc.expected));
  }
  return {cases.size() == 200 && worst < 1e-10, fmt::format("{} cases, max |diff| {:.2e}", cases.size(), worst)};
}

// ---------------------------------------------------------------- 2

Outcome gradients() {
  double worst = 0;
  std::string where;
  for (Family fam : {Family::grm_rating_scale, Family::grm_free_threshold, Family::two_pl, Family::one_pl}) {
    for (auto form : {Parameterization::noncentered, Parameterization::centered}) {
      const auto sim = simulate(testing::small_config(fam, 40, 8, 13));
      const Posterior post(testing::framing_spec(fam, form), sim.model, sim.design);
      Rng rng = make_stream(29, static_cast<std::uint64_t>(fam) * 2 + static_cast<std::uint64_t>(form));
      for (int rep = 0; rep < 50; ++rep) {
        const Eigen::VectorXd z = testing::uniform_point(post.dimension(), 1.0, rng);
        const double e = testing::gradient_error(post.gradient(z), testing::fd_gradient(post, z));
        if (e > worst) {
          worst = e;
          where = fmt::format("{}/{}", to_string(fam), to_string(form));
        }
      }
    }
  }
  return {worst < 1e-5, fmt::format("4 families x 2 forms x 50 points, max rel err {:.2e} ({})", worst, where)};
}

// ---------------------------------------------------------------- 3

Outcome normalization() {
  Rng rng = make_stream(31, 0);
  std::uniform_real_distribution<double> u(-3, 3), la(-1.5, 1.5), gap(0.05, 2.0);
  std::uniform_int_distribution<int> kdist(2, 7);
  double worst_sum = 0;
  int violations = 0;
  for (int d = 0; d < 1000; ++d) {
    const int K = kdist(rng);
    std::vector<double> alpha{u(rng)};
    for (int k = 1; k < K - 1; ++k) alpha.push_back(alpha.back() + gap(rng));
    const double a = std::exp(la(rng)), b = u(rng), theta = 2 * u(rng);
    const auto p = kernel::grm_category_probs(a, alpha, theta, b);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
    for (double v : p) violations += v >= 0 ? 0 : 1;
    for (int k = 1; k < K - 1; ++k) {
      violations += kernel::grm_cum_prob(a, alpha[k], theta, b) >= kernel::grm_cum_prob(a, alpha[k - 1], theta, b) ? 0 : 1;
    }
    const double shifted = theta + std::abs(u(rng)) + 1e-3;
    for (int k = 0; k < K - 1; ++k) {
      violations += kernel::grm_cum_prob(a, alpha[k], shifted, b) <= kernel::grm_cum_prob(a, alpha[k], theta, b) ? 0 : 1;
    }
    const double p1 = kernel::dichotomous_prob(a, theta, b);
    worst_sum = std::max(worst_sum, std::abs(p1 + (1 - p1) - 1.0));
  }
  return {worst_sum < 1e-12 && violations == 0,
          fmt::format("1000 draws, max |sum - 1| {:.2e}, monotonicity violations {}", worst_sum, violations)};
}

// ---------------------------------------------------------------- 4

Outcome sampler_calibration() {
  double worst_mean = 0, worst_var = 0, worst_rhat = 0;
  {
    const testing::GaussianTarget target(Eigen::VectorXd::Zero(10), Eigen::MatrixXd::Identity(10, 10));
    SamplerConfig cfg;
    cfg.seed = 41;
    const auto draws = run_mcmc(target, cfg);
    for (std::size_t k = 0; k < 10; ++k) {
      const auto v = draws.parameter(k);
      worst_mean = std::max(worst_mean, std::abs(mean_of(v)));
      worst_var = std::max(worst_var, std::abs(var_of(v) - 1.0));
    }
    for (const auto& row : summarize(draws).rows) worst_rhat = std::max(worst_rhat, row.rhat);
  }
  double corr_err = 0;
  {
    Eigen::Matrix2d cov;
    cov << 1.0, 0.8, 0.8, 1.0;
    const testing::GaussianTarget target(Eigen::Vector2d(1.0, -2.0), cov);
    SamplerConfig cfg;
    cfg.seed = 43;
    const auto draws = run_mcmc(target, cfg);
    const auto x = draws.parameter(0), y = draws.parameter(1);
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my);
    corr_err = std::abs(sxy / (x.size() - 1) / std::sqrt(var_of(x) * var_of(y)) - 0.8);
    worst_mean = std::max({worst_mean, std::abs(mx - 1.0), std::abs(my + 2.0)});
    worst_var = std::max({worst_var, std::abs(var_of(x) - 1.0), std::abs(var_of(y) - 1.0)});
    for (const auto& row : summarize(draws).rows) worst_rhat = std::max(worst_rhat, row.rhat);
  }
  return {worst_mean < 0.05 && worst_var < 0.1 && corr_err < 0.05 && worst_rhat < 1.01,
          fmt::format("max |mean err| {:.3f}, max |var err| {:.3f}, |corr err| {:.3f}, max R-hat {:.4f}", worst_mean,
                      worst_var, corr_err, worst_rhat)};
}

// ---------------------------------------------------------------- 5

Outcome recovery() {
  SimConfig c;  // J = 1000, I = 40, K = 4, gamma (0.6, -0.4), beta 1.4, sd 0.7 / 0.2, rho 0.2
  c.seed = 51;
  SamplerConfig s;
  s.n_chains = 1;
  s.n_warmup = 300;
  s.n_samples = 300;
  s.seed = 52;
  const auto report = recovery_study(c, s, 20, 1, Parameterization::centered);
  const auto* g = report.find("gamma1");
  if (g == nullptr) return {false, "no gamma1 row"};
  const auto* sa = report.find("sigma_a");
  const int div = std::accumulate(report.divergences.begin(), report.divergences.end(), 0);
  return {std::abs(g->bias) < 0.1 && g->coverage >= 0.8,
          fmt::format("20 replicates, gamma1 bias {:+.4f}, rmse {:.4f}, coverage {:.2f}; sigma_a bias {:+.4f}; "
                      "divergences {}",
                      g->bias, g->rmse, g->coverage, sa ? sa->bias : NAN, div)};
}

// ---------------------------------------------------------------- 6

Outcome mml() {
  SimConfig c;
  c.n_persons = 2000;
  c.n_items = 10;
  c.seed = 61;
  const auto sim = simulate(c);
  const auto est = fit_mml(sim.model, sim.design, MmlVariant::rating_scale);
  const Eigen::VectorXd b_true = sim.b.array() - sim.b.mean();
  const double rmse_a = std::sqrt((est.a - sim.a).squaredNorm() / 10);
  const double rmse_b = std::sqrt((est.b - b_true).squaredNorm() / 10);
  bool monotone = true;
  for (std::size_t t = 1; t < est.loglik_trace.size(); ++t) monotone &= est.loglik_trace[t] >= est.loglik_trace[t - 1] - 1e-8;

  const auto fixture = testing::read_json(testing::oracle_dir() / "mml_toy.json");
  ItemDesign toy_design;
  const auto toy = oracle::mml_toy_table(fixture, toy_design);
  MmlOptions opt;
  opt.tolerance = 1e-8;
  opt.max_iterations = 5000;
  const auto te = fit_mml(toy, toy_design, MmlVariant::rating_scale, QuadratureRule::rectangle(), opt);
  const auto& mle = fixture.at("mle");
  double toy_err = 0;
  for (int i = 0; i < 2; ++i) {
    toy_err = std::max({toy_err, std::abs(te.a[i] - mle.at("a")[i].get<double>()),
                        std::abs(te.b[i] - mle.at("b")[i].get<double>()),
                        std::abs(te.thresholds(0, i) - mle.at("cuts")[i].get<double>())});
  }
  return {rmse_a < 0.15 && rmse_b < 0.15 && monotone && toy_err < 1e-2,
          fmt::format("RMSE a {:.4f}, RMSE b {:.4f}, monotone trace {} ({} iterations), toy max |diff| {:.2e}", rmse_a,
                      rmse_b, monotone ? "yes" : "no", est.iterations, toy_err)};
}

// ---------------------------------------------------------------- 7

Outcome randomization() {
  const ItemDesign design = framed(76, 47);
  constexpr int kReps = 200, kB = 999;
  std::vector<double> null_p;
  int rejected = 0;
  for (int r = 0; r < kReps; ++r) {
    Rng rng = make_stream(71, static_cast<std::uint64_t>(r));
    std::normal_distribution<double> noise(0.0, 0.2);
    Eigen::VectorXd flat(76), jump(76);
    for (int i = 0; i < 76; ++i) {
      flat[i] = 0.3 + noise(rng);
      jump[i] = 0.3 + (design.items[static_cast<std::size_t>(i)].negative ? -0.4 : 0.0) + noise(rng);
    }
    null_p.push_back(randomization_test(flat, design, kB, 1000 + r).p_value);
    rejected += randomization_test(jump, design, kB, 5000 + r).p_value < 0.05 ? 1 : 0;
  }
  std::sort(null_p.begin(), null_p.end());
  double ks = 0;
  for (int i = 0; i < kReps; ++i) {
    ks = std::max({ks, (i + 1.0) / kReps - null_p[static_cast<std::size_t>(i)],
                   null_p[static_cast<std::size_t>(i)] - static_cast<double>(i) / kReps});
  }
  const double critical = 1.6276 / std::sqrt(static_cast<double>(kReps));
  const double power = static_cast<double>(rejected) / kReps;
  return {ks < critical && power >= 0.9,
          fmt::format("null KS D {:.4f} (critical {:.4f} at 0.01), power under -0.4 jump {:.3f}", ks, critical, power)};
}

// ---------------------------------------------------------------- 8

Outcome published_values() {
  // The survey data are not shipped, so only the effect transforms are checked.
  const auto ssis = effect_transforms(-0.401, 0.226);
  const auto scbe = effect_transforms(-0.261, 0.217);
  const bool ok = std::abs(100 * ssis.percent_change + 33) < 0.5 && std::abs(100 * scbe.percent_change + 23) < 0.5;
  return {ok,
          fmt::format("survey dataset not available, fit reproduction not run; effect transforms give {:.1f}% and "
                      "{:.1f}% decrease",
                      -100 * ssis.percent_change, -100 * scbe.percent_change),
          true};
}

// ---------------------------------------------------------------- 9

double fitted_gamma1(const ResponseTable& model, const ItemDesign& design) {
  const Posterior post(testing::framing_spec(Family::grm_rating_scale, Parameterization::centered), model, design);
  SamplerConfig s;
  s.n_chains = 1;
  s.n_warmup = 400;
  s.n_samples = 600;
  s.seed = 92;
  const auto draws = run_mcmc(post, s);
  return mean_of(draws.parameter(static_cast<std::size_t>(draws.find("gamma1"))));
}

Outcome careless() {
  SimConfig c;
  c.seed = 91;
  const auto sim = simulate(c);
  const SurveyConfig survey = c.survey();
  const double clean = fitted_gamma1(sim.model, sim.design);

  // 150 straight-liners answer every raw item with one category.
  ResponseTable raw = sim.raw;
  Rng rng = make_stream(93, 0);
  std::uniform_int_distribution<int> pick(survey.response_min, survey.response_max);
  const int base = static_cast<int>(raw.person_ids.size());
  for (int j = 0; j < 150; ++j) {
    raw.person_ids.push_back(fmt::format("s{:03d}", j + 1));
    const int v = pick(rng);
    for (int i = 0; i < c.n_items; ++i) raw.records.push_back({base + j, i, v});
  }
  const auto filtered = careless_filter(raw, sim.design, 0.15);
  int liners_left = 0;
  for (const auto& id : filtered.kept.person_ids) liners_left += id[0] == 's' ? 1 : 0;
  const double kept = fitted_gamma1(prepare_for_model(filtered.kept, sim.design, survey), sim.design);
  const double delta = kept - clean;
  return {std::abs(delta) < 0.05,
          fmt::format("clean gamma1 {:.4f}, filtered {:.4f}, change {:+.4f}; excluded {}, straight-liners left {}", clean,
                      kept, delta, filtered.excluded_person_ids.size(), liners_left)};
}

// ---------------------------------------------------------------- 10

void run_or_throw(const std::string& cmd) {
  if (testing::run_command(cmd) != 0) throw std::runtime_error("command failed: " + cmd);
}

// Every command once into `root`, with fixed seeds.
void pipeline(const fs::path& root, const fs::path& inputs) {
  const std::string cli = testing::cli_path();
  const auto data = root / "data";
  run_or_throw(cli + " --out " + data.string() + " simulate --config " + (inputs / "sim.json").string());
  const std::string args = " --responses " + (data / "responses.csv").string() + " --items " +
                           (data / "items.csv").string() + " --survey " + (data / "survey.json").string();
  run_or_throw(cli + " --threads 2 --out " + (root / "desc").string() + " fit-descriptive" + args);
  run_or_throw(cli + " --seed 7 --threads 2 --out " + (root / "expl").string() + " fit-explanatory --draws-csv" + args +
               " --model " + (inputs / "model.json").string() + " --sampler " + (inputs / "sampler.json").string());
  run_or_throw(cli + " --seed 8 --out " + (root / "rnd").string() + " analyze randomization --b 300 --estimates " +
               (root / "desc" / "point_estimates.csv").string());
  run_or_throw(cli + " --out " + (root / "care").string() + " analyze careless" + args);
  run_or_throw(cli + " --out " + (root / "read").string() + " analyze readability --items " +
               (inputs / "items_text.csv").string());
  run_or_throw(cli + " --out " + (root / "eff").string() + " analyze effects --summary " +
               (root / "expl" / "summary.csv").string());
  run_or_throw(cli + " --seed 9 --out " + (root / "reps").string() + " simulate --replicates 2 --config " +
               (inputs / "sim.json").string());
}

Outcome determinism() {
  const auto base = testing::scratch_dir("acceptance_determinism");
  const auto inputs = base / "inputs";
  fs::create_directories(inputs);
  {
    std::ofstream(inputs / "sim.json") << R"({"n_persons": 200, "n_items": 16, "seed": 17})";
    std::ofstream(inputs / "model.json")
        << testing::framing_spec(Family::grm_rating_scale).to_json().dump();
    SamplerConfig s;
    s.n_chains = 2;
    s.n_warmup = 150;
    s.n_samples = 150;
    std::ofstream(inputs / "sampler.json") << s.to_json().dump();
    std::ofstream items(inputs / "items_text.csv");
    items << "item_id,negative,position,text\n";
    const char* texts[] = {"Gets along with others.", "Helps classmates.", "Finishes work on time.",
                           "Does not follow rules.", "Bullies others.", "Fights with peers."};
    for (int i = 0; i < 6; ++i) items << "q" << i + 1 << "," << (i >= 3 ? 1 : 0) << "," << i + 1 << ",\"" << texts[i] << "\"\n";
  }
  pipeline(base / "run1", inputs);
  pipeline(base / "run2", inputs);

  int compared = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(base / "run1")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), base / "run1");
    const auto other = base / "run2" / rel;
    bool same;
    if (rel.filename() == "manifest.json") {
      // Wall-clock duration and input paths are the only run-specific fields.
      auto a = testing::read_json(entry.path()), b = testing::read_json(other);
      for (auto* m : {&a, &b}) {
        m->erase("duration_seconds");
        for (auto& in : (*m)["inputs"]) in.erase("path");
      }
      same = a == b;
    } else {
      same = fs::exists(other) && testing::slurp(entry.path()) == testing::slurp(other);
    }
    ++compared;
    if (!same) {
      ++differing;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  return {compared > 20 && differing == 0,
          fmt::format("{} output files compared across two runs, {} differ{}", compared, differing,
                      first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  for (int k = 1; k < argc; ++k) selected.push_back(std::atoi(argv[k]));
  report_file.open("acceptance_report.txt");
  report(1, "likelihood oracle", likelihood_oracle);
  report(2, "gradient vs finite differences", gradients);
  report(3, "normalization and monotonicity", normalization);
  report(4, "sampler calibration", sampler_calibration);
  report(5, "parameter recovery", recovery);
  report(6, "MML recovery", mml);
  report(7, "randomization test", randomization);
  report(8, "published values", published_values);
  report(9, "careless filter robustness", careless);
  report(10, "determinism", determinism);
  emit(failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures));
  return failures;
}
