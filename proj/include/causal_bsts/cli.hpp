#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "causal_bsts/impact.hpp"
#include "causal_bsts/io.hpp"
#include "causal_bsts/simlab.hpp"

#ifndef CAUSAL_BSTS_VERSION
#define CAUSAL_BSTS_VERSION "0.1.0"
#endif

namespace causal_bsts::cli {

using json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kParse = 1, kValidation = 2, kSampler = 3 };

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path.string() + "'");
  f << text;
}

inline json interval_json(const Interval& iv) {
  return json{{"mean", iv.mean}, {"lower", iv.lower}, {"upper", iv.upper}};
}

// Flags shared by analyze and power; unset flags leave the file values alone.
struct CommonFlags {
  std::optional<std::string> input, model, intervention, out_dir;
  std::optional<Index> niter;
  std::optional<double> burn, alpha, expected_model_size;
  std::optional<std::uint64_t> seed;
  bool stock = false;
  bool standardize = false;
  bool center_covariates = false;
};

inline void add_common(CLI::App& app, CommonFlags& f) {
  app.add_option("--input", f.input, "CSV file: time, target, covariates...");
  app.add_option("--intervention", f.intervention, "first post-period point: YYYY-MM-DD or 1-based row");
  app.add_option("--niter", f.niter, "MCMC iterations (default 10000)");
  app.add_option("--burn", f.burn, "burn-in fraction (default 0.1)");
  app.add_option("--alpha", f.alpha, "interval level is 1 - alpha (default 0.05)");
  app.add_option("--seed", f.seed, "random seed (default 1)");
  app.add_option("--model", f.model, "config file or a manifest.json from an earlier run");
  app.add_option("--expected-model-size", f.expected_model_size, "prior expected number of covariates (default 3)");
  app.add_option("--out-dir", f.out_dir, "output directory (default .)");
  app.add_flag("--stock", f.stock, "the target is a stock; report averages, not sums");
  app.add_flag("--standardize", f.standardize, "fit on the standardized target");
  app.add_flag("--center-covariates", f.center_covariates, "subtract pre-period covariate means before fitting");
}

// defaults <- config file (or manifest) <- flags
inline io::RunConfig resolve_config(const CommonFlags& f) {
  io::RunConfig cfg;
  if (f.model) {
    const std::string text = io::read_file(*f.model);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      json manifest;
      try {
        manifest = json::parse(text);
      } catch (const json::exception& e) {
        throw ParseError(*f.model + ": invalid manifest JSON: " + e.what());
      }
      if (!manifest.contains("config") || !manifest["config"].is_string())
        throw ParseError(*f.model + ": manifest has no 'config' string");
      io::apply_config_text(cfg, manifest["config"].get<std::string>(), *f.model);
      if (manifest.contains("input") && manifest["input"].is_string() && !manifest["input"].get<std::string>().empty())
        cfg.input = manifest["input"].get<std::string>();
    } else {
      io::apply_config_text(cfg, text, *f.model);
    }
  }
  auto& a = cfg.analysis;
  if (f.niter) a.niter = *f.niter;
  if (f.burn) a.burn_frac = *f.burn;
  if (f.alpha) a.alpha = *f.alpha;
  if (f.seed) a.seed = *f.seed;
  if (f.expected_model_size) a.model.regression.expected_model_size = *f.expected_model_size;
  if (f.stock) cfg.kind = QuantityKind::Stock;
  if (f.standardize) a.standardize = true;
  if (f.center_covariates) cfg.center_covariates = true;
  if (f.intervention) cfg.intervention = *f.intervention;
  if (f.input) cfg.input = *f.input;
  io::check_config(cfg);
  return cfg;
}

struct LoadedInput {
  ObservedSeries series;
  std::string checksum;
};

inline LoadedInput load_input(const io::RunConfig& cfg) {
  if (!cfg.input) throw ValidationError("no input file; pass --input <file.csv>");
  LoadedInput in;
  const std::string bytes = io::read_file(*cfg.input);
  in.checksum = sha256_hex(bytes);
  std::istringstream ss(bytes);
  in.series = io::read_csv(ss, *cfg.input);
  return in;
}

inline json manifest_json(const std::string& command, const io::RunConfig& cfg, const std::string& checksum,
                          double wall_seconds) {
  json m;
  m["schema_version"] = 1;
  m["command"] = command;
  m["version"] = CAUSAL_BSTS_VERSION;
  m["input"] = cfg.input.value_or("");
  m["input_sha256"] = checksum;
  m["seed"] = cfg.analysis.seed;
  m["config"] = io::config_text(cfg);
  m["wall_seconds"] = wall_seconds;
  return m;
}

inline json report_json(const ObservedSeries& s, const io::RunConfig& cfg, const AnalysisResult& r) {
  const ImpactReport& rep = r.impact.report;
  json j;
  j["schema_version"] = 1;
  j["n"] = s.n;
  j["m"] = s.m();
  j["J"] = s.num_covariates();
  j["target"] = s.target_name;
  j["covariates"] = s.covariate_names;
  j["intervention"] = {{"row", s.n + 1}, {"time", s.time_labels[static_cast<std::size_t>(s.n)]}};
  j["niter"] = cfg.analysis.niter;
  j["burn"] = r.trace.meta.burn;
  j["draws"] = rep.draws;
  j["alpha"] = rep.alpha;
  j["kind"] = rep.kind == QuantityKind::Flow ? "flow" : "stock";
  j["cumulative_interpretable"] = rep.cumulative_interpretable;

  const Vector& obs = r.impact.series.observed;
  double observed_total = 0.0;
  Index observed_count = 0;
  for (Index t = 0; t < obs.size(); ++t)
    if (!is_missing(obs(t))) {
      observed_total += obs(t);
      ++observed_count;
    }
  j["observed_total"] = observed_total;
  j["observed_average"] = observed_count ? observed_total / static_cast<double>(observed_count) : kNaN;
  j["absolute_effect"] = interval_json(rep.abs_effect);
  j["relative_effect"] = interval_json(rep.rel_effect);
  j["average_effect"] = interval_json(rep.average_effect);
  j["tail_probability"] = rep.tail_prob;
  j["significant"] = rep.significant;
  j["excluded_relative_draws"] = rep.excluded_relative_draws;
  j["missing_post_points"] = rep.missing_post_points;

  const auto& params = r.trace.params;
  const double nd = static_cast<double>(params.size());
  double sigma_sq = 0.0;
  for (const auto& p : params) sigma_sq += p.sigma_eps_sq;
  j["observation_variance_mean"] = sigma_sq / nd;
  json comps = json::array();
  for (std::size_t i = 0; i < r.trace.components.size(); ++i) {
    json c;
    c["component"] = component_name(r.trace.components[i]);
    const Index q = params.empty() ? 0 : params[0].component_variances[i].size();
    if (q > 0) {
      std::vector<double> mean(static_cast<std::size_t>(q), 0.0);
      for (const auto& p : params)
        for (Index k = 0; k < q; ++k) mean[static_cast<std::size_t>(k)] += p.component_variances[i](k) / nd;
      c["variance_mean"] = mean;
    }
    comps.push_back(c);
  }
  j["components"] = comps;
  const Index J = s.num_covariates();
  bool has_static = false;
  for (const auto& c : r.trace.components) has_static = has_static || std::holds_alternative<StaticRegression>(c);
  if (has_static && J > 0) {
    std::vector<double> incl(static_cast<std::size_t>(J), 0.0), beta(static_cast<std::size_t>(J), 0.0);
    for (const auto& p : params)
      for (Index k = 0; k < J; ++k) {
        incl[static_cast<std::size_t>(k)] += p.rho[static_cast<std::size_t>(k)] / nd;
        beta[static_cast<std::size_t>(k)] += p.beta(k) / nd;
      }
    j["inclusion_probabilities"] = incl;
    j["coefficient_means"] = beta;
    std::vector<std::string> dropped;
    for (Index k : r.trace.forced_out) dropped.push_back(s.covariate_names[static_cast<std::size_t>(k)]);
    j["forced_out"] = dropped;
  }
  j["warnings"] = rep.warnings;
  return j;
}

inline std::string bands_csv(const ObservedSeries& s, const ImpactSeries& b) {
  std::ostringstream out;
  out << "t,observed,cf_mean,cf_lower,cf_upper,point_mean,point_lower,point_upper,cum_mean,cum_lower,cum_upper\n";
  for (Index h = 0; h < b.observed.size(); ++h) {
    out << s.time_labels[static_cast<std::size_t>(s.n + h)] << ',' << io::csv_number(b.observed(h));
    for (const Band* band : {&b.counterfactual, &b.pointwise, &b.cumulative})
      out << ',' << io::csv_number(band->mean(h)) << ',' << io::csv_number(band->lower(h)) << ','
          << io::csv_number(band->upper(h));
    out << '\n';
  }
  return out.str();
}

inline std::string human_summary(const ObservedSeries& s, const AnalysisResult& r) {
  const ImpactReport& rep = r.impact.report;
  const Index h = s.post_length();
  const auto level = static_cast<int>(std::lround(100.0 * (1.0 - rep.alpha)));
  auto iv = [](const Interval& x) { return io::round3(x.mean) + " [" + io::round3(x.lower) + ", " + io::round3(x.upper) + "]"; };
  const Band& avg_cf = r.impact.series.counterfactual;
  double cf_total = 0.0, obs_total = 0.0;
  Index count = 0;
  for (Index t = 0; t < h; ++t)
    if (!is_missing(r.impact.series.observed(t))) {
      obs_total += r.impact.series.observed(t);
      cf_total += avg_cf.mean(t);
      ++count;
    }
  std::ostringstream out;
  out << "Post-period: " << h << " points from " << s.time_labels[static_cast<std::size_t>(s.n)] << "; "
      << rep.draws << " posterior draws; " << level << "% intervals\n";
  if (count > 0) {
    out << "Observed average:        " << io::round3(obs_total / static_cast<double>(count)) << "\n";
    out << "Counterfactual average:  " << io::round3(cf_total / static_cast<double>(count)) << "\n";
  }
  out << "Average effect:          " << iv(rep.average_effect) << "\n";
  if (rep.cumulative_interpretable) {
    out << "Cumulative effect:       " << iv(rep.abs_effect) << "\n";
    out << "Relative effect:         " << iv(rep.rel_effect) << "\n";
  }
  out << "Tail probability:        " << io::round3(rep.tail_prob) << "\n";
  out << "Verdict:                 "
      << (rep.significant ? "the effect is distinguishable from zero" : "no effect distinguishable from zero") << "\n";
  for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
  return out.str();
}

inline int cmd_analyze(const CommonFlags& f, const std::optional<std::string>& trace_path, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  io::RunConfig cfg = resolve_config(f);
  LoadedInput in = load_input(cfg);
  if (!cfg.intervention) throw ValidationError("no intervention; pass --intervention <date|row>");
  in.series.n = io::resolve_intervention(in.series, *cfg.intervention);
  if (cfg.center_covariates) io::center_covariates(in.series, in.series.n);
  io::bind_covariates(cfg, in.series.num_covariates());
  const AnalysisResult r = analyze(in.series, cfg.analysis, cfg.kind);

  const std::filesystem::path dir = f.out_dir.value_or(".");
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_json(in.series, cfg, r).dump(2) + "\n");
  write_text(dir / "bands.csv", bands_csv(in.series, r.impact.series));
  if (trace_path) {
    std::ofstream t(*trace_path, std::ios::binary);
    if (!t) throw ValidationError("cannot write '" + *trace_path + "'");
    write_trace(t, r.trace);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(dir / "manifest.json", manifest_json("analyze", cfg, in.checksum, wall).dump(2) + "\n");
  out << human_summary(in.series, r);
  return kOk;
}

inline int cmd_power(const CommonFlags& f, const std::optional<std::string>& pseudo, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  io::RunConfig cfg = resolve_config(f);
  if (pseudo) cfg.pseudo_intervention = *pseudo;
  if (!cfg.pseudo_intervention)
    throw ValidationError("no pseudo-intervention; usage: power --input <file.csv> --pseudo-intervention <date|row>");
  LoadedInput in = load_input(cfg);
  ObservedSeries series = in.series;
  if (cfg.intervention) {
    // Only the pre-intervention data take part in a retrospective power analysis.
    const Index n = io::resolve_intervention(series, *cfg.intervention);
    series.y.conservativeResize(n);
    series.x.conservativeResize(n, Eigen::NoChange);
    series.time_labels.resize(static_cast<std::size_t>(n));
    series.time_index.resize(static_cast<std::size_t>(n));
  }
  const Index pseudo_n = io::resolve_intervention(series, *cfg.pseudo_intervention);
  if (cfg.center_covariates) io::center_covariates(series, pseudo_n);
  io::bind_covariates(cfg, series.num_covariates());
  const PowerReport p = power_analysis(series, cfg.analysis, pseudo_n);

  const std::filesystem::path dir = f.out_dir.value_or(".");
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "t,horizon,cf_cum_mean,cf_cum_lower,cf_cum_upper,half_width,observed_cum\n";
  for (Index h = 0; h < p.half_width.size(); ++h)
    csv << series.time_labels[static_cast<std::size_t>(pseudo_n + h)] << ',' << h + 1 << ','
        << io::csv_number(p.cumulative_counterfactual.mean(h)) << ','
        << io::csv_number(p.cumulative_counterfactual.lower(h)) << ','
        << io::csv_number(p.cumulative_counterfactual.upper(h)) << ',' << io::csv_number(p.half_width(h)) << ','
        << io::csv_number(p.observed_cumsum(h)) << '\n';
  write_text(dir / "power.csv", csv.str());
  const Index last = p.half_width.size() - 1;
  const double cf_total = p.cumulative_counterfactual.mean(last);
  json j;
  j["schema_version"] = 1;
  j["pseudo_n"] = pseudo_n;
  j["m"] = series.m();
  j["J"] = series.num_covariates();
  j["horizons"] = p.half_width.size();
  j["alpha"] = cfg.analysis.alpha;
  j["minimal_detectable_effect"] = p.minimal_detectable_effect;
  j["minimal_detectable_relative_effect"] = cf_total > 0.0 ? p.minimal_detectable_effect / cf_total : kNaN;
  write_text(dir / "power.json", j.dump(2) + "\n");
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(dir / "manifest.json", manifest_json("power", cfg, in.checksum, wall).dump(2) + "\n");

  out << "Pseudo-intervention at " << series.time_labels[static_cast<std::size_t>(pseudo_n)] << ", "
      << p.half_width.size() << " horizons\n";
  out << "Minimal detectable cumulative effect: " << io::round3(p.minimal_detectable_effect);
  if (cf_total > 0.0) out << " (" << io::round3(100.0 * p.minimal_detectable_effect / cf_total) << "% of the counterfactual total)";
  out << "\n";
  return kOk;
}

struct SimFlags {
  std::string experiment;
  std::optional<Index> nsims, niter, break_at;
  std::optional<double> burn, alpha, effect_size, initial_level;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

inline std::string accuracy_csv(const simlab::AccuracyResult& a) {
  std::ostringstream csv;
  csv << "horizon,mean_abs_pct_error,sem,lower,upper\n";
  const Vector lo = a.lower(), hi = a.upper();
  for (Index t = 0; t < a.mean_error.size(); ++t)
    csv << t + 1 << ',' << io::csv_number(a.mean_error(t)) << ',' << io::csv_number(a.sem(t)) << ','
        << io::csv_number(lo(t)) << ',' << io::csv_number(hi(t)) << '\n';
  return csv.str();
}

inline int cmd_simulate(const SimFlags& f, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::string> known{"power", "coverage", "accuracy", "accuracy-break"};
  if (std::find(known.begin(), known.end(), f.experiment) == known.end())
    throw ValidationError("unknown experiment '" + f.experiment + "'; expected power, coverage, accuracy or accuracy-break");
  simlab::SimConfig sim;
  simlab::EngineConfig engine;
  if (f.seed) sim.seed = *f.seed;
  if (f.initial_level) sim.initial_level = *f.initial_level;
  if (f.niter) engine.niter = *f.niter;
  if (f.burn) engine.burn_frac = *f.burn;
  if (f.alpha) engine.alpha = *f.alpha;
  sim.n_sims = f.nsims.value_or(f.experiment == "power" ? 200 : 100);
  sim.effect_size = f.effect_size.value_or(0.1);
  if (f.break_at) sim.break_at = *f.break_at;
  if (sim.n_sims < 1) throw ValidationError("--nsims must be positive");
  if (engine.niter < 1 || !(engine.burn_frac >= 0.0 && engine.burn_frac < 1.0) ||
      !(engine.alpha > 0.0 && engine.alpha < 1.0))
    throw ValidationError("invalid sampler settings");

  const std::filesystem::path dir = f.out_dir.value_or(".");
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["schema_version"] = 1;
  manifest["command"] = "simulate";
  manifest["experiment"] = f.experiment;
  manifest["version"] = CAUSAL_BSTS_VERSION;
  manifest["seed"] = sim.seed;
  manifest["nsims"] = sim.n_sims;
  manifest["niter"] = engine.niter;
  manifest["burn"] = engine.burn_frac;
  manifest["alpha"] = engine.alpha;
  manifest["initial_level"] = sim.initial_level;
  std::string file;
  std::ostringstream csv;
  Index failures = 0;

  if (f.experiment == "power") {
    const std::vector<double> effects{0.0, 0.001, 0.01, 0.1, 1.0};
    const auto rows = simlab::power_experiment(effects, sim.n_sims, sim, engine);
    csv << "effect_size,detections,replicates,failures,rate,lower,upper\n";
    for (const auto& r : rows) {
      csv << io::format_double(r.effect_size) << ',' << r.detections << ',' << r.replicates << ',' << r.failures
          << ',' << io::csv_number(r.rate) << ',' << io::csv_number(r.lower) << ',' << io::csv_number(r.upper) << '\n';
      out << "effect " << io::round3(r.effect_size) << ": detected " << r.detections << "/" << r.replicates << " ("
          << io::round3(r.rate) << ", 95% [" << io::round3(r.lower) << ", " << io::round3(r.upper) << "])\n";
      failures = std::max(failures, r.failures);
    }
    file = "power.csv";
  } else if (f.experiment == "coverage") {
    manifest["effect_size"] = sim.effect_size;
    const auto cov = simlab::coverage_experiment(sim, engine);
    csv << "horizon,coverage\n";
    for (Index t = 0; t < cov.coverage.size(); ++t) csv << t + 1 << ',' << io::csv_number(cov.coverage(t)) << '\n';
    failures = cov.failures;
    out << "coverage over " << cov.replicates << " replicates: min " << io::round3(cov.coverage.minCoeff()) << ", mean "
        << io::round3(cov.coverage.mean()) << "\n";
    file = "coverage.csv";
  } else {
    manifest["effect_size"] = sim.effect_size;
    const bool with_break = f.experiment == "accuracy-break";
    if (with_break) manifest["break_at"] = sim.break_at.value_or(90);
    const auto acc = simlab::accuracy_experiment(sim, engine, with_break);
    csv << accuracy_csv(acc);
    failures = acc.failures;
    out << "mean absolute percentage error over " << acc.replicates << " replicates: first horizon "
        << io::round3(acc.mean_error(0)) << ", last " << io::round3(acc.mean_error(acc.mean_error.size() - 1)) << "\n";
    file = with_break ? "accuracy_break.csv" : "accuracy.csv";
  }
  if (failures > 0) out << "warning: " << failures << " replicate(s) failed and were left out\n";
  write_text(dir / file, csv.str());
  manifest["failures"] = failures;
  manifest["output"] = file;
  manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return kOk;
}

// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian structural time-series causal impact analysis", "causal_impact"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CAUSAL_BSTS_VERSION);

  CommonFlags af, pf;
  std::optional<std::string> trace_path, pseudo;
  auto* analyze_cmd = app.add_subcommand("analyze", "estimate the effect of an intervention");
  add_common(*analyze_cmd, af);
  analyze_cmd->add_option("--trace", trace_path, "also dump the MCMC trace (binary) to this file");

  auto* power_cmd = app.add_subcommand("power", "retrospective power analysis at a pseudo-intervention");
  add_common(*power_cmd, pf);
  power_cmd->add_option("--pseudo-intervention", pseudo, "pseudo-intervention point: YYYY-MM-DD or 1-based row");

  SimFlags sf;
  auto* sim_cmd = app.add_subcommand("simulate", "run a simulation experiment on synthetic data");
  sim_cmd->add_option("experiment", sf.experiment, "power | coverage | accuracy | accuracy-break")->required();
  sim_cmd->add_option("--nsims", sf.nsims, "replicates (default 200 for power, 100 otherwise)");
  sim_cmd->add_option("--niter", sf.niter, "MCMC iterations per replicate (default 1200)");
  sim_cmd->add_option("--burn", sf.burn, "burn-in fraction per replicate");
  sim_cmd->add_option("--alpha", sf.alpha, "interval level is 1 - alpha (default 0.05)");
  sim_cmd->add_option("--seed", sf.seed, "master seed");
  sim_cmd->add_option("--effect-size", sf.effect_size, "relative lift for coverage/accuracy (default 0.1)");
  sim_cmd->add_option("--break-at", sf.break_at, "post-period step after which the coefficient walk sd triples (default 90)");
  sim_cmd->add_option("--initial-level", sf.initial_level, "starting value of the random-walk level (default 10)");
  sim_cmd->add_option("--out-dir", sf.out_dir, "output directory (default .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << CAUSAL_BSTS_VERSION << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kValidation;
  }

  try {
    if (*analyze_cmd) return cmd_analyze(af, trace_path, out);
    if (*power_cmd) return cmd_power(pf, pseudo, out);
    return cmd_simulate(sf, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const NumericalError& e) {
    err << "sampler failure: " << e.what() << "\n";
    return kSampler;
  } catch (const Error& e) {
    err << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kValidation;
  }
}

}  // namespace causal_bsts::cli
