#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "causal_bsts/config.hpp"
#include "causal_bsts/impact.hpp"
#include "causal_bsts/series.hpp"

namespace causal_bsts::io {

// ---------------------------------------------------------------------------
// Text helpers.

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// Shortest text that reads back to the same double; "NaN", "inf", "-inf" for
// non-finite values.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

// Empty cell for missing values, shortest round-trip text otherwise.
inline std::string csv_number(double v) { return is_missing(v) ? std::string() : format_double(v); }

// Three significant digits, for the human-readable summary only.
inline std::string round3(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "NA" : format_double(v);
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.3g", v);
  return buf.data();
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dates.

// Days since 1970-01-01 for an exact YYYY-MM-DD string.
inline std::optional<std::int64_t> parse_iso_date(std::string_view s) {
  s = trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  const auto y = parse_int(s.substr(0, 4)), m = parse_int(s.substr(5, 2)), d = parse_int(s.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year(static_cast<int>(*y)),
                                        std::chrono::month(static_cast<unsigned>(*m)),
                                        std::chrono::day(static_cast<unsigned>(*d))};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days(ymd).time_since_epoch().count();
}

// ---------------------------------------------------------------------------
// CSV input.

// Splits one CSV record. Double quotes group fields containing commas; a
// doubled quote inside a quoted field is a literal quote.
inline std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

inline bool is_missing_token(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

// Reads the target/covariate table. First column: ISO date or integer time;
// second: target (empty or NA = missing); the rest: covariates. The
// intervention is resolved separately, so n is left at 0.
inline ObservedSeries read_csv(std::istream& in, const std::string& source = "input") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_record(line);
      break;
    }
  }
  if (header.empty()) throw ParseError(source + ": empty file, expected a header row");
  if (header.size() < 2)
    throw ParseError(source + ": header has " + std::to_string(header.size()) +
                     " column(s); need a time column and a target column");
  const std::size_t ncols = header.size();

  ObservedSeries s;
  s.target_name = header[1];
  s.covariate_names.assign(header.begin() + 2, header.end());
  std::vector<double> y;
  std::vector<std::vector<double>> rows;
  std::optional<bool> dates;
  Index row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv_record(line);
    const std::string where = source + ": line " + std::to_string(line_no) + " (row " + std::to_string(row) + ")";
    if (fields.size() != ncols)
      throw ParseError(where + ": expected " + std::to_string(ncols) + " fields, found " +
                       std::to_string(fields.size()));
    const std::string& tf = fields[0];
    std::int64_t ti = 0;
    if (auto d = parse_iso_date(tf); d && dates.value_or(true)) {
      dates = true;
      ti = *d;
    } else if (auto k = parse_int(tf); k && !dates.value_or(false)) {
      dates = false;
      ti = *k;
    } else {
      throw ParseError(where + ", column '" + header[0] + "': cannot parse '" + tf +
                       (dates.value_or(false) ? "' as a YYYY-MM-DD date" : "' as a date or integer index"));
    }
    s.time_labels.push_back(tf);
    s.time_index.push_back(ti);

    std::vector<double> vals(ncols - 1);
    for (std::size_t c = 1; c < ncols; ++c) {
      if (is_missing_token(fields[c])) {
        vals[c - 1] = kNaN;
        continue;
      }
      const auto v = parse_double(fields[c]);
      if (!v) throw ParseError(where + ", column '" + header[c] + "': cannot parse '" + fields[c] + "' as a number");
      vals[c - 1] = *v;
    }
    y.push_back(vals[0]);
    rows.emplace_back(vals.begin() + 1, vals.end());
  }
  if (y.empty()) throw ParseError(source + ": no data rows after the header");
  const Index m = static_cast<Index>(y.size()), J = static_cast<Index>(ncols - 2);
  s.y = Eigen::Map<const Vector>(y.data(), m);
  s.x.resize(m, J);
  for (Index t = 0; t < m; ++t)
    for (Index j = 0; j < J; ++j) s.x(t, j) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline ObservedSeries read_csv_file(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_csv(in, path);
}

// Resolves an intervention given as a date in the time column or as a
// 1-based row number; the named point is the first post-period point, so
// the returned n (pre-period length) is one less.
inline Index resolve_intervention(const ObservedSeries& s, std::string_view spec) {
  const std::string text(trim(spec));
  if (text.empty()) throw ValidationError("intervention is empty");
  const Index m = s.m();
  if (parse_iso_date(text)) {
    for (Index t = 0; t < m; ++t)
      if (s.time_labels[static_cast<std::size_t>(t)] == text) {
        if (t == 0) throw ValidationError("intervention " + text + " is the first row; the pre-period would be empty");
        return t;
      }
    throw ValidationError("intervention date " + text + " does not match any row of the time column");
  }
  const auto row = parse_int(text);
  if (!row) throw ValidationError("intervention '" + text + "' is neither a YYYY-MM-DD date nor a row number");
  if (*row < 2 || *row > m)
    throw ValidationError("intervention row " + text + " outside [2, " + std::to_string(m) + "]");
  return static_cast<Index>(*row - 1);
}

// ---------------------------------------------------------------------------
// Configuration file: one `key = value` per line, `#` starts a comment.
// Components are listed in order with `component = <name> key=value ...`.

struct RunConfig {
  AnalysisConfig analysis;
  bool explicit_model = false;  // components given; otherwise the default model
  QuantityKind kind = QuantityKind::Flow;
  // Subtract pre-period covariate means before fitting.
  bool center_covariates = false;
  std::optional<std::string> intervention;
  std::optional<std::string> pseudo_intervention;
  std::optional<std::string> input;
};

namespace detail {

inline ScaledVariancePrior parse_prior(const std::string& text, const std::string& where) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ParseError(where + ": prior must be 'nu,sd_rel', got '" + text + "'");
  const auto nu = parse_double(parts[0]), rel = parse_double(parts[1]);
  if (!nu || !rel) throw ParseError(where + ": cannot parse prior '" + text + "'");
  if (!(*nu > 0.0) || !(*rel > 0.0)) throw ValidationError(where + ": prior nu and sd_rel must be positive");
  return {*nu, *rel};
}

inline std::string prior_text(const ScaledVariancePrior& p) {
  return format_double(p.nu) + "," + format_double(p.sd_guess_rel);
}

inline double need_double(const std::string& v, const std::string& where) {
  const auto d = parse_double(v);
  if (!d) throw ParseError(where + ": cannot parse '" + v + "' as a number");
  return *d;
}

inline std::int64_t need_int(const std::string& v, const std::string& where) {
  const auto d = parse_int(v);
  if (!d) throw ParseError(where + ": cannot parse '" + v + "' as an integer");
  return *d;
}

inline bool need_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError(where + ": expected true or false, got '" + v + "'");
}

inline ComponentSpec parse_component(const std::string& text, const std::string& where) {
  std::istringstream ss(text);
  std::string name;
  ss >> name;
  std::vector<std::pair<std::string, std::string>> kv;
  for (std::string tok; ss >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key=value, got '" + tok + "'");
    kv.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  auto unknown = [&](const std::string& k) {
    return ParseError(where + ": unknown parameter '" + k + "' for component " + name);
  };
  if (name == "local_level") {
    LocalLevel c;
    for (const auto& [k, v] : kv) {
      if (k == "level_prior") c.level_prior = parse_prior(v, where);
      else throw unknown(k);
    }
    return c;
  }
  if (name == "local_linear_trend") {
    LocalLinearTrend c;
    for (const auto& [k, v] : kv) {
      if (k == "level_prior") c.level_prior = parse_prior(v, where);
      else if (k == "slope_prior") c.slope_prior = parse_prior(v, where);
      else throw unknown(k);
    }
    return c;
  }
  if (name == "semi_local_linear_trend") {
    SemiLocalLinearTrend c;
    for (const auto& [k, v] : kv) {
      if (k == "D") c.D = need_double(v, where);
      else if (k == "rho") c.rho = need_double(v, where);
      else if (k == "level_prior") c.level_prior = parse_prior(v, where);
      else if (k == "slope_prior") c.slope_prior = parse_prior(v, where);
      else throw unknown(k);
    }
    return c;
  }
  if (name == "seasonal") {
    Seasonal c;
    for (const auto& [k, v] : kv) {
      if (k == "seasons") c.seasons = static_cast<int>(need_int(v, where));
      else if (k == "duration") c.duration = static_cast<int>(need_int(v, where));
      else if (k == "prior") c.prior = parse_prior(v, where);
      else throw unknown(k);
    }
    return c;
  }
  if (name == "static_regression") {
    if (!kv.empty()) throw unknown(kv.front().first);
    return StaticRegression{};
  }
  if (name == "dynamic_regression") {
    DynamicRegression c;
    for (const auto& [k, v] : kv) {
      if (k == "prior") c.prior = parse_prior(v, where);
      else throw unknown(k);
    }
    return c;
  }
  throw ParseError(where + ": unknown component '" + name + "'");
}

inline std::string component_text(const ComponentSpec& c) {
  std::string out = component_name(c);
  if (const auto* p = std::get_if<LocalLevel>(&c)) {
    out += " level_prior=" + prior_text(p->level_prior);
  } else if (const auto* p = std::get_if<LocalLinearTrend>(&c)) {
    out += " level_prior=" + prior_text(p->level_prior) + " slope_prior=" + prior_text(p->slope_prior);
  } else if (const auto* p = std::get_if<SemiLocalLinearTrend>(&c)) {
    out += " D=" + format_double(p->D) + " rho=" + format_double(p->rho) +
           " level_prior=" + prior_text(p->level_prior) + " slope_prior=" + prior_text(p->slope_prior);
  } else if (const auto* p = std::get_if<Seasonal>(&c)) {
    out += " seasons=" + std::to_string(p->seasons) + " duration=" + std::to_string(p->duration) +
           " prior=" + prior_text(p->prior);
  } else if (const auto* p = std::get_if<DynamicRegression>(&c)) {
    out += " prior=" + prior_text(p->prior);
  }
  return out;
}

}  // namespace detail

// Applies the settings in `text` on top of `cfg`. A file that lists any
// component replaces the component list of `cfg`.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool components_reset = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const std::string where = source + ": line " + std::to_string(line_no);
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    auto& a = cfg.analysis;
    auto& reg = a.model.regression;
    if (key == "niter") a.niter = detail::need_int(value, where);
    else if (key == "burn") a.burn_frac = detail::need_double(value, where);
    else if (key == "alpha") a.alpha = detail::need_double(value, where);
    else if (key == "seed") a.seed = static_cast<std::uint64_t>(detail::need_int(value, where));
    else if (key == "standardize") a.standardize = detail::need_bool(value, where);
    else if (key == "stock") cfg.kind = detail::need_bool(value, where) ? QuantityKind::Stock : QuantityKind::Flow;
    else if (key == "center_covariates") cfg.center_covariates = detail::need_bool(value, where);
    else if (key == "intervention") cfg.intervention = value;
    else if (key == "pseudo_intervention") cfg.pseudo_intervention = value;
    else if (key == "input") cfg.input = value;
    else if (key == "expected_model_size") reg.expected_model_size = detail::need_double(value, where);
    else if (key == "inclusion_probs") {
      reg.inclusion_probs.clear();
      if (!value.empty())
        for (const auto& p : split(value, ',')) reg.inclusion_probs.push_back(detail::need_double(p, where));
    } else if (key == "prior_g") reg.g = detail::need_double(value, where);
    else if (key == "prior_w") reg.w = detail::need_double(value, where);
    else if (key == "prior_nu_eps") reg.nu_eps = detail::need_double(value, where);
    else if (key == "prior_expected_r2") reg.expected_R2 = detail::need_double(value, where);
    else if (key == "observation_prior") a.model.observation_prior = detail::parse_prior(value, where);
    else if (key == "component") {
      if (!components_reset) {
        a.model.components.clear();
        components_reset = true;
      }
      a.model.components.push_back(detail::parse_component(value, where));
      cfg.explicit_model = true;
    } else {
      throw ParseError(where + ": unknown key '" + key + "'");
    }
  }
}

inline void check_config(const RunConfig& cfg) {
  const auto& a = cfg.analysis;
  if (a.niter < 1) throw ValidationError("niter must be positive");
  if (!(a.burn_frac >= 0.0 && a.burn_frac < 1.0)) throw ValidationError("burn must lie in [0, 1)");
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  const auto& r = a.model.regression;
  if (!(r.expected_model_size >= 0.0)) throw ValidationError("expected_model_size must be non-negative");
  for (double p : r.inclusion_probs)
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("inclusion probabilities must lie in [0, 1]");
  if (!(r.g > 0.0)) throw ValidationError("prior_g must be positive");
  if (!(r.w >= 0.0 && r.w <= 1.0)) throw ValidationError("prior_w must lie in [0, 1]");
  if (!(r.nu_eps > 0.0)) throw ValidationError("prior_nu_eps must be positive");
  if (!(r.expected_R2 > 0.0 && r.expected_R2 < 1.0)) throw ValidationError("prior_expected_r2 must lie in (0, 1)");
}

// Fills in the covariate count of regression components (the config file
// does not state it) or builds the default model.
inline void bind_covariates(RunConfig& cfg, Index J) {
  auto& comps = cfg.analysis.model.components;
  if (!cfg.explicit_model) {
    comps = default_model_spec(J).components;
    return;
  }
  for (auto& c : comps) {
    if (auto* s = std::get_if<StaticRegression>(&c)) s->num_covariates = J;
    else if (auto* d = std::get_if<DynamicRegression>(&c)) d->num_covariates = J;
  }
}

// Subtracts each covariate's mean over the first n rows from the whole
// column. The coefficient prior is built from X'X, so covariates far from
// zero relative to their spread otherwise pull the coefficients to zero.
inline void center_covariates(ObservedSeries& s, Index n) {
  if (n < 1) return;
  for (Index j = 0; j < s.x.cols(); ++j) s.x.col(j).array() -= s.x.col(j).head(n).mean();
}

// Every setting with its resolved value, in the format apply_config_text reads.
inline std::string config_text(const RunConfig& cfg) {
  const auto& a = cfg.analysis;
  const auto& r = a.model.regression;
  std::ostringstream out;
  out << "niter = " << a.niter << "\n";
  out << "burn = " << format_double(a.burn_frac) << "\n";
  out << "alpha = " << format_double(a.alpha) << "\n";
  out << "seed = " << a.seed << "\n";
  out << "standardize = " << (a.standardize ? "true" : "false") << "\n";
  out << "stock = " << (cfg.kind == QuantityKind::Stock ? "true" : "false") << "\n";
  out << "center_covariates = " << (cfg.center_covariates ? "true" : "false") << "\n";
  if (cfg.intervention) out << "intervention = " << *cfg.intervention << "\n";
  if (cfg.pseudo_intervention) out << "pseudo_intervention = " << *cfg.pseudo_intervention << "\n";
  out << "expected_model_size = " << format_double(r.expected_model_size) << "\n";
  out << "inclusion_probs = ";
  for (std::size_t k = 0; k < r.inclusion_probs.size(); ++k)
    out << (k ? "," : "") << format_double(r.inclusion_probs[k]);
  out << "\n";
  out << "prior_g = " << format_double(r.g) << "\n";
  out << "prior_w = " << format_double(r.w) << "\n";
  out << "prior_nu_eps = " << format_double(r.nu_eps) << "\n";
  out << "prior_expected_r2 = " << format_double(r.expected_R2) << "\n";
  out << "observation_prior = " << detail::prior_text(a.model.observation_prior) << "\n";
  for (const auto& c : a.model.components) out << "component = " << detail::component_text(c) << "\n";
  return out.str();
}

}  // namespace causal_bsts::io
