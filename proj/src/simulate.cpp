#include "eirm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "eirm/analysis.hpp"
#include "eirm/diagnostics.hpp"
#include "eirm/error.hpp"
#include "eirm/parallel.hpp"
#include "eirm/posterior.hpp"
#include "eirm/rng.hpp"

namespace eirm {

void SimConfig::validate() const {
  if (n_persons < 1 || n_items < 1) throw ValidationError("simulate: n_persons and n_items must be >= 1");
  if (n_categories < 2) throw ValidationError("simulate: n_categories must be >= 2");
  if (!(fraction_negative >= 0.0 && fraction_negative <= 1.0)) {
    throw ValidationError("simulate: fraction_negative must lie in [0, 1]");
  }
  if (!(sigma_a >= 0.0) || !(sigma_b >= 0.0)) throw ValidationError("simulate: sigma_a and sigma_b must be >= 0");
  if (!(std::abs(rho) <= 1.0)) throw ValidationError("simulate: |rho| must be <= 1");
  if (is_graded(family)) {
    if (static_cast<int>(alpha.size()) != n_categories - 1) {
      throw ValidationError(fmt::format("simulate: alpha needs {} entries for K = {}", n_categories - 1, n_categories));
    }
    for (std::size_t k = 1; k < alpha.size(); ++k) {
      if (!(alpha[k] > alpha[k - 1])) throw ValidationError("simulate: alpha must be strictly increasing");
    }
    if (beta.size() > 1) throw ValidationError("simulate: graded families take at most one beta (negative)");
  } else {
    if (n_categories != 2) throw ValidationError("simulate: dichotomous families require n_categories = 2");
    if (beta.size() > 2) throw ValidationError("simulate: dichotomous families take at most beta = [intercept, negative]");
  }
  if (family == Family::one_pl && !gamma.empty()) {
    throw ValidationError("simulate: one_pl has no discrimination equation; set gamma to []");
  }
  if (family != Family::one_pl && gamma.empty()) throw ValidationError("simulate: gamma needs an intercept");
  if (gamma.size() > 4) throw ValidationError("simulate: gamma takes at most 4 entries");
  if (gamma.size() > 2 && !rd_layout) {
    throw ValidationError("simulate: position terms in gamma require rd_layout");
  }
  const int n_negative = static_cast<int>(std::lround(fraction_negative * n_items));
  if (gamma.size() > 2 && (n_negative == 0 || n_negative == n_items)) {
    throw ValidationError("simulate: position terms need both positive and negative items");
  }
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  SimConfig c;
  try {
    c.n_persons = j.value("n_persons", j.value("J", c.n_persons));
    c.n_items = j.value("n_items", j.value("I", c.n_items));
    c.n_categories = j.value("n_categories", j.value("K", c.n_categories));
    c.fraction_negative = j.value("fraction_negative", c.fraction_negative);
    if (j.contains("family")) c.family = family_from_string(j.at("family").get<std::string>());
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.gamma = j.value("gamma", c.gamma);
    c.sigma_b = j.value("sigma_b", c.sigma_b);
    c.sigma_a = j.value("sigma_a", c.sigma_a);
    c.rho = j.value("rho", j.value("rho_ab", c.rho));
    c.seed = j.value("seed", c.seed);
    c.rd_layout = j.value("rd_layout", c.rd_layout);
    c.response_min = j.value("response_min", c.response_min);
    c.reverse_worded = j.value("reverse_worded", c.reverse_worded);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("simulation config: {}", e.what()));
  }
  c.validate();
  return c;
}

nlohmann::json SimConfig::to_json() const {
  return {{"n_persons", n_persons},
          {"n_items", n_items},
          {"n_categories", n_categories},
          {"fraction_negative", fraction_negative},
          {"family", std::string(to_string(family))},
          {"alpha", alpha},
          {"beta", beta},
          {"gamma", gamma},
          {"sigma_b", sigma_b},
          {"sigma_a", sigma_a},
          {"rho", rho},
          {"seed", seed},
          {"rd_layout", rd_layout},
          {"response_min", response_min},
          {"reverse_worded", reverse_worded}};
}

SurveyConfig SimConfig::survey() const {
  SurveyConfig s;
  s.survey_name = "simulated";
  s.response_min = response_min;
  s.response_max = response_min + n_categories - 1;
  s.reverse_code_negative = reverse_worded;
  return s;
}

std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
  return splitmix64(splitmix64(seed) ^ splitmix64(0x5bd1e995ULL + static_cast<std::uint64_t>(replicate)));
}

namespace {

std::string padded_id(char prefix, int index, int count) {
  const int width = static_cast<int>(std::to_string(count).size());
  return fmt::format("{}{:0{}}", prefix, index, width);
}

}  // namespace

SimOutput simulate(const SimConfig& config) {
  config.validate();
  const int n_items = config.n_items;
  const int n_persons = config.n_persons;
  const int K = config.n_categories;
  Rng rng = make_stream(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  SimOutput out;
  const int n_negative = static_cast<int>(std::lround(config.fraction_negative * n_items));
  std::vector<bool> negative(static_cast<std::size_t>(n_items), false);
  if (config.rd_layout) {
    for (int i = n_items - n_negative; i < n_items; ++i) negative[static_cast<std::size_t>(i)] = true;
  } else {
    std::vector<int> order(static_cast<std::size_t>(n_items));
    std::iota(order.begin(), order.end(), 0);
    for (int i = n_items - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    }
    for (int i = 0; i < n_negative; ++i) negative[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
  }
  out.design.n_categories = K;
  for (int i = 0; i < n_items; ++i) {
    ItemInfo info;
    info.id = padded_id('i', i + 1, n_items);
    info.negative = negative[static_cast<std::size_t>(i)];
    info.position = i + 1;
    out.design.items.push_back(std::move(info));
  }

  std::vector<double> centered(static_cast<std::size_t>(n_items), 0.0);
  if (config.gamma.size() > 2) centered = build_rd_design(out.design).centered_position;

  out.zeta0.resize(n_items);
  out.zeta1.resize(n_items);
  out.a.resize(n_items);
  out.b.resize(n_items);
  const double chol = std::sqrt(std::max(0.0, 1.0 - config.rho * config.rho));
  for (int i = 0; i < n_items; ++i) {
    const double e0 = normal(rng);
    const double e1 = normal(rng);
    out.zeta0[i] = config.sigma_b * e0;
    out.zeta1[i] = config.sigma_a * (config.rho * e0 + chol * e1);
  }
  for (int i = 0; i < n_items; ++i) {
    const double neg = negative[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    double loc = out.zeta0[i];
    if (is_graded(config.family)) {
      if (!config.beta.empty()) loc += config.beta[0] * neg;
    } else {
      if (!config.beta.empty()) loc += config.beta[0];
      if (config.beta.size() > 1) loc += config.beta[1] * neg;
    }
    out.b[i] = loc;
    if (config.family == Family::one_pl) {
      out.a[i] = 1.0;
      out.zeta1[i] = 0.0;
      continue;
    }
    const double c = centered[static_cast<std::size_t>(i)];
    const double x[4] = {1.0, neg, c, neg * c};
    double eta = out.zeta1[i];
    for (std::size_t g = 0; g < config.gamma.size(); ++g) eta += config.gamma[g] * x[g];
    out.a[i] = std::exp(eta);
  }

  if (config.family == Family::grm_rating_scale) {
    out.thresholds = Eigen::Map<const Eigen::RowVectorXd>(config.alpha.data(), K - 1);
  } else if (config.family == Family::grm_free_threshold) {
    out.thresholds.resize(n_items, K - 1);
    for (int i = 0; i < n_items; ++i) {
      for (int k = 0; k < K - 1; ++k) out.thresholds(i, k) = config.alpha[static_cast<std::size_t>(k)] - out.b[i];
    }
  }

  out.theta.resize(n_persons);
  for (int j = 0; j < n_persons; ++j) out.theta[j] = normal(rng);

  const SurveyConfig survey = config.survey();
  ResponseTable& raw = out.raw;
  raw.survey_name = survey.survey_name;
  raw.scale = {survey.response_min, survey.response_max};
  raw.raw_min = survey.response_min;
  raw.category_scale = false;
  for (const auto& it : out.design.items) raw.item_ids.push_back(it.id);
  for (int j = 0; j < n_persons; ++j) raw.person_ids.push_back(padded_id('p', j + 1, n_persons));
  raw.records.reserve(static_cast<std::size_t>(n_items) * n_persons);

  std::vector<double> probs;
  for (int j = 0; j < n_persons; ++j) {
    for (int i = 0; i < n_items; ++i) {
      int category;
      if (is_graded(config.family)) {
        std::vector<double> row(static_cast<std::size_t>(K - 1));
        for (int k = 0; k < K - 1; ++k) {
          row[static_cast<std::size_t>(k)] =
              out.thresholds.rows() == 1 ? out.thresholds(0, k) : out.thresholds(i, k);
        }
        const double b = config.family == Family::grm_free_threshold ? 0.0 : out.b[i];
        probs = kernel::grm_category_probs(out.a[i], row, out.theta[j], b);
      } else {
        const double p1 = kernel::dichotomous_prob(out.a[i], out.theta[j], out.b[i]);
        probs = {1.0 - p1, p1};
      }
      const double u = uniform(rng);
      double cum = 0.0;
      category = K;
      for (int k = 0; k < K; ++k) {
        cum += probs[static_cast<std::size_t>(k)];
        if (u < cum) {
          category = k + 1;
          break;
        }
      }
      int value = survey.response_min + category - 1;
      if (config.reverse_worded && negative[static_cast<std::size_t>(i)]) {
        value = survey.response_min + survey.response_max - value;
      }
      raw.records.push_back({j, i, value});
    }
  }
  out.model = prepare_for_model(raw, out.design, survey);
  return out;
}

void write_simulation(const SimConfig& config, const SimOutput& sim, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_responses_csv(sim.raw, dir / "responses.csv");
  write_items_csv(sim.design, dir / "items.csv");
  {
    std::ofstream out(dir / "survey.json", std::ios::binary);
    out << config.survey().to_json().dump(2) << '\n';
  }
  nlohmann::json truth;
  truth["config"] = config.to_json();
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < sim.design.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    items.push_back({{"item_id", sim.design.items[i].id},
                     {"position", sim.design.items[i].position},
                     {"negative", sim.design.items[i].negative ? 1 : 0},
                     {"a", sim.a[idx]},
                     {"b", sim.b[idx]},
                     {"zeta0", sim.zeta0[idx]},
                     {"zeta1", sim.zeta1[idx]}});
  }
  truth["items"] = items;
  std::vector<std::vector<double>> thresholds;
  for (Eigen::Index r = 0; r < sim.thresholds.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < sim.thresholds.cols(); ++k) row.push_back(sim.thresholds(r, k));
    thresholds.push_back(row);
  }
  truth["thresholds"] = thresholds;
  truth["theta"] = std::vector<double>(sim.theta.data(), sim.theta.data() + sim.theta.size());
  std::ofstream out(dir / "truth.json", std::ios::binary);
  out << truth.dump(2) << '\n';
}

const RecoveryRow* RecoveryReport::find(std::string_view parameter) const {
  for (const auto& r : rows) {
    if (r.parameter == parameter) return &r;
  }
  return nullptr;
}

namespace {

const char* const kDiscTerms[] = {"negative", kCenteredPosition.data(), kNegativeByPosition.data()};

ModelSpec recovery_spec(const SimConfig& config, Parameterization parameterization) {
  ModelSpec spec;
  spec.parameterization = parameterization;
  spec.family = config.family;
  spec.n_categories = config.n_categories;
  const bool framing_location = config.family == Family::grm_rating_scale ? !config.beta.empty()
                                                                          : !is_graded(config.family) && config.beta.size() > 1;
  if (framing_location) spec.location_covariates = {"negative"};
  for (std::size_t g = 1; g < config.gamma.size(); ++g) spec.disc_covariates.push_back(kDiscTerms[g - 1]);
  return spec;
}

std::vector<std::pair<std::string, double>> recovery_truths(const SimConfig& config) {
  std::vector<std::pair<std::string, double>> out;
  if (config.family == Family::grm_rating_scale) {
    for (std::size_t k = 0; k < config.alpha.size(); ++k) out.emplace_back(fmt::format("alpha[<={}]", k + 1), config.alpha[k]);
  }
  if (is_graded(config.family)) {
    if (config.family == Family::grm_rating_scale && !config.beta.empty()) out.emplace_back("beta1", config.beta[0]);
  } else {
    out.emplace_back("beta0", config.beta.empty() ? 0.0 : config.beta[0]);
    if (config.beta.size() > 1) out.emplace_back("beta1", config.beta[1]);
  }
  for (std::size_t g = 0; g < config.gamma.size(); ++g) out.emplace_back(fmt::format("gamma{}", g), config.gamma[g]);
  if (config.family != Family::grm_free_threshold) out.emplace_back("sigma_b", config.sigma_b);
  if (config.family != Family::one_pl) out.emplace_back("sigma_a", config.sigma_a);
  if (config.family != Family::grm_free_threshold && config.family != Family::one_pl) {
    out.emplace_back("rho_ab", config.rho);
  }
  return out;
}

}  // namespace

RecoveryReport recovery_study(const SimConfig& config, const SamplerConfig& sampler, int replicates, int threads,
                              Parameterization parameterization) {
  config.validate();
  sampler.validate();
  if (replicates < 1) throw ValidationError("recovery_study: replicates must be >= 1");
  const ModelSpec spec = recovery_spec(config, parameterization);
  const auto truths = recovery_truths(config);

  struct Replicate {
    std::vector<double> mean, lower, upper;
    int divergences = 0;
  };
  std::vector<Replicate> results(static_cast<std::size_t>(replicates));
  parallel_for(results.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      SimConfig sim_config = config;
      sim_config.seed = replicate_seed(config.seed, static_cast<int>(r));
      SimOutput sim = simulate(sim_config);
      if (config.gamma.size() > 2) add_rd_covariates(sim.design);
      const Posterior posterior(spec, sim.model, sim.design);
      SamplerConfig sc = sampler;
      sc.seed = replicate_seed(sampler.seed, static_cast<int>(r));
      sc.threads = 1;
      const PosteriorDraws draws = run_mcmc(posterior, sc);
      Replicate& rep = results[r];
      rep.divergences = draws.divergences();
      for (const auto& [name, truth] : truths) {
        const int p = draws.find(name);
        if (p < 0) throw ValidationError(fmt::format("recovery_study: fitted model has no parameter {}", name));
        std::vector<double> v = draws.parameter(static_cast<std::size_t>(p));
        rep.mean.push_back(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
        std::sort(v.begin(), v.end());
        rep.lower.push_back(quantile_sorted(v, 0.025));
        rep.upper.push_back(quantile_sorted(v, 0.975));
      }
    }
  });

  RecoveryReport report;
  report.replicates = replicates;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    RecoveryRow row;
    row.parameter = truths[t].first;
    row.truth = truths[t].second;
    double bias = 0.0, sq = 0.0, covered = 0.0;
    for (const auto& rep : results) {
      row.estimate.push_back(rep.mean[t]);
      row.lower.push_back(rep.lower[t]);
      row.upper.push_back(rep.upper[t]);
      const double err = rep.mean[t] - row.truth;
      bias += err;
      sq += err * err;
      if (rep.lower[t] <= row.truth && row.truth <= rep.upper[t]) covered += 1.0;
    }
    row.bias = bias / replicates;
    row.rmse = std::sqrt(sq / replicates);
    row.coverage = covered / replicates;
    report.rows.push_back(std::move(row));
  }
  for (const auto& rep : results) report.divergences.push_back(rep.divergences);
  return report;
}

void write_recovery_csv(const RecoveryReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  csv::Writer w(out);
  w.row({"parameter", "truth", "bias", "rmse", "coverage95", "replicates"});
  for (const auto& r : report.rows) {
    w.row({r.parameter, csv::format_double(r.truth), csv::format_double(r.bias), csv::format_double(r.rmse),
           csv::format_double(r.coverage), std::to_string(report.replicates)});
  }
}

}  // namespace eirm
