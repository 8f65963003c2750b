#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "eirm/analysis.hpp"
#include "eirm/csv.hpp"
#include "eirm/data.hpp"
#include "eirm/diagnostics.hpp"
#include "eirm/draws_io.hpp"
#include "eirm/error.hpp"
#include "eirm/mml.hpp"
#include "eirm/model_spec.hpp"
#include "eirm/posterior.hpp"
#include "eirm/sampler.hpp"
#include "eirm/simulate.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace eirm::cli {
namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumerical = 3, kStrictWarning = 4 };

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  fs::path out = ".";
  bool strict = false;
};

struct StrictFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  out << j.dump(2) << '\n';
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
}

// Warnings go to stderr and the manifest; under --strict they end the run
// after the outputs are written.
void report_warnings(const std::vector<std::string>& warnings, RunManifest& manifest) {
  for (const auto& w : warnings) {
    std::cerr << "warning: " << w << '\n';
    manifest.add_warning(w);
  }
}

void finish(const Globals& g, RunManifest& manifest, const fs::path& dir, bool had_warnings) {
  manifest.write(dir);
  if (g.strict && had_warnings) throw StrictFailure("warnings present and --strict given");
}

// Per-person and per-item blocks (theta[...], zeta0[...]) are collapsed to a
// count per block and kind; structural parameters pass through unchanged.
std::vector<std::string> condense_warnings(const std::vector<std::string>& warnings) {
  struct Group {
    int count = 0;
    std::string first;
  };
  std::vector<std::string> out;
  std::vector<std::pair<std::string, Group>> groups;
  for (const auto& w : warnings) {
    const auto colon = w.find(": ");
    const auto bracket = w.find('[');
    const bool indexed = colon != std::string::npos && bracket != std::string::npos && bracket < colon &&
                         w.compare(bracket, 3, "[<=") != 0;
    if (!indexed) {
      out.push_back(w);
      continue;
    }
    const std::string kind = w.find("R-hat") != std::string::npos ? "R-hat above threshold" : "bulk ESS below threshold";
    const std::string key = w.substr(0, bracket) + ": " + kind;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) {
      groups.push_back({key, {0, w}});
      it = groups.end() - 1;
    }
    ++it->second.count;
  }
  for (const auto& [key, g] : groups) {
    out.push_back(fmt::format("{} for {} parameter(s), e.g. {}", key, g.count, g.first));
  }
  return out;
}

std::vector<ItemEstimate> item_estimates(const ItemDesign& design, const Eigen::VectorXd& a) {
  std::vector<ItemEstimate> out;
  for (std::size_t i = 0; i < design.size(); ++i) {
    const auto& it = design.items[i];
    out.push_back({it.id, it.position, it.negative, a[static_cast<Eigen::Index>(i)]});
  }
  return out;
}

// ---------------------------------------------------------------- descriptive

struct DataArgs {
  fs::path responses;
  fs::path items;
  fs::path survey;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--responses", d.responses, "long-format responses CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--items", d.items, "item metadata CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--survey", d.survey, "survey config JSON (response bounds, columns)")->check(CLI::ExistingFile);
}

SurveyConfig load_survey(const DataArgs& d, RunManifest& manifest) {
  SurveyConfig cfg;
  if (!d.survey.empty()) {
    cfg = SurveyConfig::from_json(read_json(d.survey));
    manifest.add_input("survey", d.survey);
  }
  manifest.add_input("responses", d.responses);
  manifest.add_input("items", d.items);
  manifest.set_config("survey", cfg.to_json());
  return cfg;
}

struct DescriptiveArgs {
  DataArgs data;
  std::string variant = "rating_scale";
  int max_iterations = 500;
  double tolerance = 1e-5;
};

void cmd_fit_descriptive(const Globals& g, const DescriptiveArgs& args) {
  RunManifest manifest("fit-descriptive");
  const SurveyConfig survey = load_survey(args.data, manifest);
  Dataset ds = ingest(args.data.responses, args.data.items, survey);
  const ResponseTable model = prepare_for_model(ds.table, ds.design, survey);

  MmlOptions opt;
  opt.max_iterations = args.max_iterations;
  opt.tolerance = args.tolerance;
  opt.threads = g.threads;
  const MmlVariant variant = mml_variant_from_string(args.variant);
  manifest.set_config("mml", {{"variant", std::string(to_string(variant))},
                              {"max_iterations", opt.max_iterations},
                              {"tolerance", opt.tolerance},
                              {"quadrature", {{"rule", "rectangle"}, {"nodes", 61}, {"lo", -6.0}, {"hi", 6.0}}}});
  const MmlEstimates est = fit_mml(model, ds.design, variant, QuadratureRule::rectangle(), opt);

  std::vector<std::string> warnings = ds.warnings;
  if (!est.converged) {
    warnings.push_back(fmt::format("EM stopped after {} iterations without meeting tolerance {}",
                                   est.iterations, opt.tolerance));
  }

  prepare_out(g.out);
  write_point_estimates_csv(est, ds.design, g.out / "point_estimates.csv");
  write_thresholds_csv(est, ds.design, g.out / "thresholds.csv");
  write_loglik_trace_csv(est, g.out / "loglik_trace.csv");
  const auto a_hat = item_estimates(ds.design, est.a);
  write_boxplot_csv(a_hat, g.out / "boxplot.csv");
  write_scatter_csv(a_hat, g.out / "scatter.csv");
  write_json({{"variant", std::string(to_string(variant))},
              {"loglik", est.loglik},
              {"iterations", est.iterations},
              {"converged", est.converged},
              {"n_persons", model.n_persons()},
              {"n_items", model.n_items()}},
             g.out / "fit.json");
  for (const char* f : {"point_estimates.csv", "thresholds.csv", "loglik_trace.csv", "boxplot.csv", "scatter.csv",
                        "fit.json"}) {
    manifest.add_output(f);
  }
  report_warnings(warnings, manifest);
  finish(g, manifest, g.out, !warnings.empty());
}

// ---------------------------------------------------------------- explanatory

struct ExplanatoryArgs {
  DataArgs data;
  fs::path model;
  fs::path sampler;
  bool rd = false;
  bool draws_csv = false;
  std::string parameterization;
};

void cmd_fit_explanatory(const Globals& g, const ExplanatoryArgs& args) {
  RunManifest manifest("fit-explanatory");
  const SurveyConfig survey = load_survey(args.data, manifest);
  Dataset ds = ingest(args.data.responses, args.data.items, survey);
  const ResponseTable table = prepare_for_model(ds.table, ds.design, survey);

  ModelSpec spec = ModelSpec::from_json(read_json(args.model));
  manifest.add_input("model", args.model);
  if (!args.parameterization.empty()) spec.parameterization = parameterization_from_string(args.parameterization);
  if (args.rd) {
    add_rd_covariates(ds.design);
    for (std::string_view term : {kCenteredPosition, kNegativeByPosition}) {
      if (std::find(spec.disc_covariates.begin(), spec.disc_covariates.end(), term) == spec.disc_covariates.end()) {
        spec.disc_covariates.emplace_back(term);
      }
    }
    spec.validate();
  }
  SamplerConfig sc;
  if (!args.sampler.empty()) {
    sc = SamplerConfig::from_json(read_json(args.sampler));
    manifest.add_input("sampler", args.sampler);
  }
  if (g.seed) sc.seed = *g.seed;
  sc.threads = g.threads;
  sc.validate();
  manifest.set_seed(sc.seed);
  manifest.set_config("model", spec.to_json());
  manifest.set_config("sampler", sc.to_json());
  manifest.set_config("rd", args.rd);

  const Posterior posterior(spec, table, ds.design, g.threads);
  const PosteriorDraws draws = run_mcmc(posterior, sc);
  const SummaryTable summary = summarize(draws);
  const auto predictions = predict_item_params(draws, spec, ds.design);

  prepare_out(g.out);
  write_summary_csv(summary, g.out / "summary.csv");
  write_draws_binary(draws, g.out / "draws.bin");
  write_sampler_csv(draws, g.out / "sampler.csv");
  write_predictions_csv(predictions, g.out / "predictions.csv");
  std::vector<ItemInterval> intervals;
  for (const auto& p : predictions) {
    intervals.push_back({p.item_id, p.position, p.negative, p.a_median, p.a_lower, p.a_upper});
  }
  write_interval_csv(intervals, g.out / "intervals.csv");
  for (const char* f : {"summary.csv", "draws.bin", "sampler.csv", "predictions.csv", "intervals.csv"}) {
    manifest.add_output(f);
  }
  if (args.draws_csv) {
    write_draws_csv(draws, g.out / "draws.csv");
    manifest.add_output("draws.csv");
  }

  std::vector<std::string> warnings = ds.warnings;
  const auto condensed = condense_warnings(summary.warnings);
  warnings.insert(warnings.end(), condensed.begin(), condensed.end());
  json diag{{"divergences", summary.divergences},
            {"total_draws", summary.total_draws},
            {"step_size", draws.step_size},
            {"warnings", summary.warnings}};
  write_json(diag, g.out / "diagnostics.json");
  manifest.add_output("diagnostics.json");
  report_warnings(warnings, manifest);
  finish(g, manifest, g.out, !warnings.empty());
}

// ---------------------------------------------------------------- analyze

struct RandomizationArgs {
  fs::path estimates;
  std::string column = "a_hat";
  int b = 1000;
};

void cmd_randomization(const Globals& g, const RandomizationArgs& args) {
  RunManifest manifest("analyze randomization");
  manifest.add_input("estimates", args.estimates);
  const csv::Table t = csv::read_file(args.estimates);
  const std::string src = args.estimates.string();
  const int c_id = t.require_column("item_id", src);
  const int c_pos = t.require_column("position", src);
  const int c_neg = t.column("negative") >= 0 ? t.column("negative") : t.require_column("framing", src);
  const int c_a = t.require_column(args.column, src);

  struct Row {
    ItemInfo info;
    double a;
  };
  std::vector<Row> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    Row row;
    row.info.id = f[c_id];
    try {
      row.info.position = std::stoi(f[c_pos]);
      row.a = std::stod(f[c_a]);
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("{}: line {}: non-numeric position or {}", src, r + 2, args.column));
    }
    const std::string& neg = f[c_neg];
    row.info.negative = neg == "1" || neg == "negative";
    if (!(row.a > 0.0)) throw ValidationError(fmt::format("{}: line {}: discrimination must be positive", src, r + 2));
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.info.position < y.info.position; });
  ItemDesign design;
  Eigen::VectorXd log_a(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    design.items.push_back(rows[i].info);
    log_a[static_cast<Eigen::Index>(i)] = std::log(rows[i].a);
  }

  const std::uint64_t seed = g.seed.value_or(1);
  manifest.set_seed(seed);
  manifest.set_config("randomization", {{"b", args.b}, {"column", args.column}});
  const PermutationResult res = randomization_test(log_a, design, args.b, seed, g.threads);

  prepare_out(g.out);
  json j = res.to_json();
  j["boundary"] = build_rd_design(design).boundary;
  j["statistic"] = "RD framing coefficient on log discrimination";
  write_json(j, g.out / "randomization.json");
  {
    std::ofstream out(g.out / "permutation_distribution.csv", std::ios::binary);
    csv::Writer w(out);
    w.row({"replicate", "statistic"});
    for (std::size_t r = 0; r < res.statistics.size(); ++r) {
      w.row({std::to_string(r + 1), csv::format_double(res.statistics[r])});
    }
  }
  manifest.add_output("randomization.json");
  manifest.add_output("permutation_distribution.csv");
  finish(g, manifest, g.out, false);
}

struct CarelessArgs {
  DataArgs data;
  double quantile = 0.15;
};

void cmd_careless(const Globals& g, const CarelessArgs& args) {
  RunManifest manifest("analyze careless");
  const SurveyConfig survey = load_survey(args.data, manifest);
  Dataset ds = ingest(args.data.responses, args.data.items, survey);
  manifest.set_config("careless", {{"quantile", args.quantile}, {"sd", "sample (n-1)"}, {"rule", "exclude sd <= threshold"}});
  const CarelessResult res = careless_filter(ds.table, ds.design, args.quantile);

  prepare_out(g.out);
  write_responses_csv(res.kept, g.out / "filtered_responses.csv");
  {
    std::ofstream out(g.out / "person_sd.csv", std::ios::binary);
    csv::Writer w(out);
    w.row({"person_id", "sd", "excluded"});
    for (std::size_t p = 0; p < ds.table.n_persons(); ++p) {
      const bool gone = std::find(res.excluded_person_ids.begin(), res.excluded_person_ids.end(),
                                  ds.table.person_ids[p]) != res.excluded_person_ids.end();
      w.row({ds.table.person_ids[p], csv::format_double(res.person_sd[p]), gone ? "1" : "0"});
    }
  }
  write_json({{"quantile", args.quantile},
              {"threshold", res.threshold},
              {"n_persons", ds.table.n_persons()},
              {"n_excluded", res.excluded_person_ids.size()},
              {"n_kept", res.kept.n_persons()},
              {"excluded_person_ids", res.excluded_person_ids}},
             g.out / "careless.json");
  for (const char* f : {"filtered_responses.csv", "person_sd.csv", "careless.json"}) manifest.add_output(f);
  report_warnings(ds.warnings, manifest);
  finish(g, manifest, g.out, !ds.warnings.empty());
}

struct ReadabilityArgs {
  fs::path items;
};

void cmd_readability(const Globals& g, const ReadabilityArgs& args) {
  RunManifest manifest("analyze readability");
  manifest.add_input("items", args.items);
  manifest.set_config("readability", {{"formula", "flesch-kincaid grade"},
                                      {"syllables", "vowel groups (aeiouy), silent final e, minimum 1"}});
  ItemDesign design = parse_items(csv::read_file(args.items), args.items.string());
  std::stable_sort(design.items.begin(), design.items.end(),
                   [](const ItemInfo& x, const ItemInfo& y) { return x.position < y.position; });
  for (const auto& it : design.items) {
    if (it.text.empty()) throw ValidationError(fmt::format("item '{}' has no text", it.id));
  }

  prepare_out(g.out);
  Eigen::VectorXd grade(static_cast<Eigen::Index>(design.size()));
  {
    std::ofstream out(g.out / "readability.csv", std::ios::binary);
    csv::Writer w(out);
    w.row({"item_id", "position", "framing", "words", "sentences", "syllables", "grade"});
    for (std::size_t i = 0; i < design.size(); ++i) {
      const auto& it = design.items[i];
      const Readability r = readability(it.text);
      grade[static_cast<Eigen::Index>(i)] = r.grade;
      w.row({it.id, std::to_string(it.position), std::string(framing_label(it.negative)), std::to_string(r.words),
             std::to_string(r.sentences), std::to_string(r.syllables), csv::format_double(r.grade)});
    }
  }
  const RdDesign rd = build_rd_design(design);
  const OlsFit fit = ols(grade, rd.matrix());
  const std::vector<std::string> terms = {"intercept", "negative", "position_c", "negative_x_position_c"};
  json coef = json::array();
  for (std::size_t c = 0; c < terms.size(); ++c) {
    const auto k = static_cast<Eigen::Index>(c);
    coef.push_back({{"term", terms[c]}, {"estimate", fit.coefficients[k]}, {"std_error", fit.standard_errors[k]}});
  }
  write_json({{"boundary", rd.boundary}, {"n_items", fit.n}, {"residual_variance", fit.residual_variance},
              {"coefficients", coef}},
             g.out / "readability_rd.json");
  manifest.add_output("readability.csv");
  manifest.add_output("readability_rd.json");
  finish(g, manifest, g.out, false);
}

struct EffectsArgs {
  fs::path summary;
  std::optional<double> gamma1;
  std::optional<double> sigma_a;
  std::string parameter = "gamma1";
};

void cmd_effects(const Globals& g, const EffectsArgs& args) {
  RunManifest manifest("analyze effects");
  double gamma1 = 0.0, sigma_a = 0.0;
  if (!args.summary.empty()) {
    manifest.add_input("summary", args.summary);
    const csv::Table t = csv::read_file(args.summary);
    const std::string src = args.summary.string();
    const int c_name = t.require_column("parameter", src);
    const int c_mean = t.require_column("mean", src);
    std::optional<double> found_g, found_s;
    for (const auto& row : t.rows) {
      if (row[c_name] == args.parameter) found_g = std::stod(row[c_mean]);
      if (row[c_name] == "sigma_a") found_s = std::stod(row[c_mean]);
    }
    if (!found_g || !found_s) {
      throw ValidationError(fmt::format("{}: needs rows '{}' and 'sigma_a'", src, args.parameter));
    }
    gamma1 = *found_g;
    sigma_a = *found_s;
  }
  if (args.gamma1) gamma1 = *args.gamma1;
  if (args.sigma_a) sigma_a = *args.sigma_a;
  if (args.summary.empty() && (!args.gamma1 || !args.sigma_a)) {
    throw ValidationError("effects: give --summary, or both --gamma1 and --sigma-a");
  }
  const EffectSize e = effect_transforms(gamma1, sigma_a);
  prepare_out(g.out);
  write_json({{"gamma1", gamma1},
              {"sigma_a", sigma_a},
              {"percent_change", 100.0 * e.percent_change},
              {"discrimination_ratio", std::exp(gamma1)},
              {"standardized", e.standardized}},
             g.out / "effects.json");
  manifest.set_config("effects", {{"parameter", args.parameter}});
  manifest.add_output("effects.json");
  finish(g, manifest, g.out, false);
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  fs::path config;
  int replicates = 1;
  bool recovery = false;
  fs::path sampler;
  std::string parameterization = "noncentered";
};

void cmd_simulate(const Globals& g, const SimulateArgs& args) {
  RunManifest manifest("simulate");
  SimConfig cfg;
  if (!args.config.empty()) {
    cfg = SimConfig::from_json(read_json(args.config));
    manifest.add_input("config", args.config);
  }
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  if (args.replicates < 1) throw ValidationError("--replicates must be >= 1");
  manifest.set_seed(cfg.seed);
  manifest.set_config("simulation", cfg.to_json());
  manifest.set_config("replicates", args.replicates);
  prepare_out(g.out);

  if (args.replicates == 1) {
    const SimOutput sim = simulate(cfg);
    write_simulation(cfg, sim, g.out);
    for (const char* f : {"responses.csv", "items.csv", "survey.json", "truth.json"}) manifest.add_output(f);
  } else {
    for (int r = 0; r < args.replicates; ++r) {
      SimConfig rc = cfg;
      rc.seed = replicate_seed(cfg.seed, r);
      const std::string name = fmt::format("rep_{:03d}", r + 1);
      const fs::path dir = g.out / name;
      prepare_out(dir);
      write_simulation(rc, simulate(rc), dir);
      RunManifest sub("simulate");
      sub.set_seed(rc.seed);
      sub.set_config("simulation", rc.to_json());
      sub.set_config("replicate", r + 1);
      for (const char* f : {"responses.csv", "items.csv", "survey.json", "truth.json"}) sub.add_output(f);
      sub.write(dir);
      manifest.add_output(name);
    }
  }

  if (args.recovery) {
    SamplerConfig sc;
    if (!args.sampler.empty()) {
      sc = SamplerConfig::from_json(read_json(args.sampler));
      manifest.add_input("sampler", args.sampler);
    }
    if (g.seed) sc.seed = *g.seed;
    sc.validate();
    const Parameterization par = parameterization_from_string(args.parameterization);
    manifest.set_config("sampler", sc.to_json());
    manifest.set_config("parameterization", std::string(to_string(par)));
    const RecoveryReport report = recovery_study(cfg, sc, args.replicates, g.threads, par);
    write_recovery_csv(report, g.out / "recovery.csv");
    manifest.add_output("recovery.csv");
  }
  finish(g, manifest, g.out, false);
}

int run(int argc, char** argv) {
  CLI::App app{"Explanatory item response models: descriptive MML fits, Bayesian explanatory fits, "
               "framing analyses and simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed (overrides config seeds)");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--strict", g.strict, "treat warnings as errors (exit code 4)");

  DescriptiveArgs desc;
  auto* fd = app.add_subcommand("fit-descriptive", "separate graded response model per item by marginal maximum likelihood");
  add_data_options(fd, desc.data);
  fd->add_option("--variant", desc.variant, "rating_scale or free_threshold")
      ->check(CLI::IsMember({"rating_scale", "free_threshold"}));
  fd->add_option("--max-iter", desc.max_iterations)->check(CLI::PositiveNumber);
  fd->add_option("--tol", desc.tolerance)->check(CLI::PositiveNumber);

  ExplanatoryArgs expl;
  auto* fe = app.add_subcommand("fit-explanatory", "explanatory item response model by MCMC");
  add_data_options(fe, expl.data);
  fe->add_option("--model", expl.model, "model spec JSON")->required()->check(CLI::ExistingFile);
  fe->add_option("--sampler", expl.sampler, "sampler config JSON")->check(CLI::ExistingFile);
  fe->add_flag("--rd", expl.rd, "add centred position and framing x position to the discrimination equation");
  fe->add_flag("--draws-csv", expl.draws_csv, "also write draws in long CSV form");
  fe->add_option("--parameterization", expl.parameterization, "centered or noncentered (overrides the model spec)")
      ->check(CLI::IsMember({"centered", "noncentered"}));

  auto* an = app.add_subcommand("analyze", "follow-up analyses");
  an->require_subcommand(1);
  an->fallthrough();
  RandomizationArgs rnd;
  auto* ar = an->add_subcommand("randomization", "permutation test of the framing discontinuity in log discrimination");
  ar->add_option("--estimates", rnd.estimates, "per-item estimates CSV (item_id, position, negative, a_hat)")
      ->required()
      ->check(CLI::ExistingFile);
  ar->add_option("--column", rnd.column, "discrimination column");
  ar->add_option("--b", rnd.b, "number of permutations")->check(CLI::PositiveNumber);
  CarelessArgs care;
  auto* ac = an->add_subcommand("careless", "drop low-variability respondents");
  add_data_options(ac, care.data);
  ac->add_option("--quantile", care.quantile, "fraction of the SD distribution to exclude")->check(CLI::Range(0.0, 1.0));
  ReadabilityArgs read;
  auto* ad = an->add_subcommand("readability", "Flesch-Kincaid grade per item and its discontinuity at the framing switch");
  ad->add_option("--items", read.items, "item metadata CSV with a text column")->required()->check(CLI::ExistingFile);
  EffectsArgs eff;
  auto* ae = an->add_subcommand("effects", "percent change and standardized framing effect");
  ae->add_option("--summary", eff.summary, "summary CSV from fit-explanatory")->check(CLI::ExistingFile);
  ae->add_option("--gamma1", eff.gamma1);
  ae->add_option("--sigma-a", eff.sigma_a);
  ae->add_option("--parameter", eff.parameter, "summary row holding the framing coefficient");

  SimulateArgs sim;
  auto* sm = app.add_subcommand("simulate", "synthetic survey data with known parameters");
  sm->add_option("--config", sim.config, "simulation config JSON")->check(CLI::ExistingFile);
  sm->add_option("--replicates", sim.replicates)->check(CLI::PositiveNumber);
  sm->add_flag("--recovery", sim.recovery, "fit every replicate and write recovery.csv");
  sm->add_option("--sampler", sim.sampler, "sampler config JSON for --recovery")->check(CLI::ExistingFile);
  sm->add_option("--parameterization", sim.parameterization)->check(CLI::IsMember({"centered", "noncentered"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fd) cmd_fit_descriptive(g, desc);
    else if (*fe) cmd_fit_explanatory(g, expl);
    else if (*ar) cmd_randomization(g, rnd);
    else if (*ac) cmd_careless(g, care);
    else if (*ad) cmd_readability(g, read);
    else if (*ae) cmd_effects(g, eff);
    else if (*sm) cmd_simulate(g, sim);
  } catch (const StrictFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStrictWarning;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace
}  // namespace eirm::cli

int main(int argc, char** argv) { return eirm::cli::run(argc, argv); }
