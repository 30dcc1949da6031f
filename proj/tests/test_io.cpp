#include <sstream>

#include <gtest/gtest.h>

#include "causal_bsts/io.hpp"

using namespace causal_bsts;
using namespace causal_bsts::io;

namespace {

ObservedSeries parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in, "test.csv");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Text, NumbersRoundTripShortest) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678, 0.0}) EXPECT_EQ(*parse_double(format_double(v)), v);
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(csv_number(kNaN), "");
  EXPECT_FALSE(parse_double("1.5x"));
  EXPECT_FALSE(parse_double(""));
  EXPECT_EQ(*parse_double(" 2 "), 2.0);
  EXPECT_EQ(*parse_int("42"), 42);
  EXPECT_FALSE(parse_int("4.2"));
  EXPECT_EQ(round3(0.123456), "0.123");
  EXPECT_EQ(round3(12345.0), "1.23e+04");
}

TEST(Text, IsoDatesCountDaysFromEpoch) {
  EXPECT_EQ(*parse_iso_date("1970-01-01"), 0);
  EXPECT_EQ(*parse_iso_date("1970-01-02"), 1);
  EXPECT_EQ(*parse_iso_date("2000-03-01") - *parse_iso_date("2000-02-28"), 2);  // leap year
  EXPECT_FALSE(parse_iso_date("2014-02-30"));
  EXPECT_FALSE(parse_iso_date("2014-1-01"));
  EXPECT_FALSE(parse_iso_date("12"));
}

TEST(Csv, QuotedFieldsAndMissingTokens) {
  const auto f = split_csv_record(R"(a,"b,c","d ""q""",)");
  ASSERT_EQ(f.size(), 4U);
  EXPECT_EQ(f[1], "b,c");
  EXPECT_EQ(f[2], "d \"q\"");
  EXPECT_EQ(f[3], "");
  for (const char* t : {"", "NA", "NaN", "nan", "null"}) EXPECT_TRUE(is_missing_token(t)) << t;
  EXPECT_FALSE(is_missing_token("0"));
}

TEST(Csv, ReadsDatesTargetAndCovariates) {
  const auto s = parse(
      "date,sales,x1,x2\n"
      "2020-01-01,1.5,3,4\n"
      "\n"
      "2020-01-02,NA,5,6\n"
      "2020-01-03,2.5,7,8\r\n");
  EXPECT_EQ(s.m(), 3);
  EXPECT_EQ(s.num_covariates(), 2);
  EXPECT_EQ(s.target_name, "sales");
  EXPECT_EQ(s.covariate_names[1], "x2");
  EXPECT_TRUE(std::isnan(s.y(1)));
  EXPECT_EQ(s.x(2, 1), 8.0);
  EXPECT_EQ(s.time_index[1] - s.time_index[0], 1);
  EXPECT_EQ(s.time_labels[2], "2020-01-03");
}

TEST(Csv, IntegerTimeAndNoCovariates) {
  const auto s = parse("t,y\n10,1\n11,2\n12,3\n");
  EXPECT_EQ(s.num_covariates(), 0);
  EXPECT_EQ(s.time_index[0], 10);
}

TEST(Csv, ErrorsNameTheLineAndColumn) {
  EXPECT_NE(error_of("").find("empty file"), std::string::npos);
  EXPECT_NE(error_of("t\n1\n").find("header has 1"), std::string::npos);
  EXPECT_NE(error_of("t,y\n").find("no data rows"), std::string::npos);
  EXPECT_NE(error_of("t,y,x\n1,2,3\n2,3\n").find("line 3 (row 2): expected 3 fields"), std::string::npos);
  EXPECT_NE(error_of("t,y,x\n1,2,abc\n").find("column 'x'"), std::string::npos);
  EXPECT_NE(error_of("t,y\n2020-01-01,1\n5,2\n").find("YYYY-MM-DD"), std::string::npos);
  EXPECT_NE(error_of("t,y\nmonday,1\n").find("column 't'"), std::string::npos);
}

TEST(Intervention, DateOrRowNamesFirstPostPoint) {
  const auto s = parse("date,y\n2020-01-01,1\n2020-01-02,2\n2020-01-03,3\n2020-01-04,4\n");
  EXPECT_EQ(resolve_intervention(s, "2020-01-03"), 2);
  EXPECT_EQ(resolve_intervention(s, "3"), 2);
  EXPECT_EQ(resolve_intervention(s, "4"), 3);
  EXPECT_THROW(resolve_intervention(s, "2020-01-01"), ValidationError);
  EXPECT_THROW(resolve_intervention(s, "2021-01-01"), ValidationError);
  EXPECT_THROW(resolve_intervention(s, "1"), ValidationError);
  EXPECT_THROW(resolve_intervention(s, "5"), ValidationError);
  EXPECT_THROW(resolve_intervention(s, "soon"), ValidationError);
}

TEST(Config, ParsesKeysAndComponents) {
  RunConfig cfg;
  apply_config_text(cfg,
                    "# comment\n"
                    "niter = 500\n"
                    "burn = 0.2  # trailing\n"
                    "seed = 9\n"
                    "stock = true\n"
                    "expected_model_size = 1.5\n"
                    "inclusion_probs = 0.1,0.9\n"
                    "component = local_linear_trend level_prior=5,0.2\n"
                    "component = seasonal seasons=7 duration=2\n"
                    "component = static_regression\n",
                    "m.cfg");
  EXPECT_EQ(cfg.analysis.niter, 500);
  EXPECT_DOUBLE_EQ(cfg.analysis.burn_frac, 0.2);
  EXPECT_EQ(cfg.analysis.seed, 9U);
  EXPECT_EQ(cfg.kind, QuantityKind::Stock);
  EXPECT_EQ(cfg.analysis.model.regression.inclusion_probs.size(), 2U);
  ASSERT_EQ(cfg.analysis.model.components.size(), 3U);
  EXPECT_DOUBLE_EQ(std::get<LocalLinearTrend>(cfg.analysis.model.components[0]).level_prior.nu, 5.0);
  EXPECT_EQ(std::get<Seasonal>(cfg.analysis.model.components[1]).duration, 2);
  EXPECT_TRUE(cfg.explicit_model);
  bind_covariates(cfg, 2);
  EXPECT_EQ(std::get<StaticRegression>(cfg.analysis.model.components[2]).num_covariates, 2);
}

TEST(Config, RoundTripsThroughText) {
  RunConfig cfg;
  apply_config_text(cfg,
                    "alpha = 0.1\ncenter_covariates = yes\nintervention = 2020-02-01\n"
                    "component = semi_local_linear_trend D=0.5 rho=0.3\ncomponent = dynamic_regression prior=8,0.05\n",
                    "a");
  const std::string text = config_text(cfg);
  RunConfig again;
  apply_config_text(again, text, "b");
  EXPECT_EQ(config_text(again), text);
  EXPECT_TRUE(again.center_covariates);
  EXPECT_EQ(*again.intervention, "2020-02-01");
}

TEST(Config, DefaultModelWhenNoComponentsGiven) {
  RunConfig cfg;
  bind_covariates(cfg, 3);
  ASSERT_EQ(cfg.analysis.model.components.size(), 2U);
  EXPECT_TRUE(std::holds_alternative<LocalLevel>(cfg.analysis.model.components[0]));
  RunConfig none;
  bind_covariates(none, 0);
  EXPECT_EQ(none.analysis.model.components.size(), 1U);
}

TEST(Config, RejectsMalformedAndInvalidSettings) {
  RunConfig cfg;
  EXPECT_THROW(apply_config_text(cfg, "niter 5\n", "x"), ParseError);
  EXPECT_THROW(apply_config_text(cfg, "bogus = 1\n", "x"), ParseError);
  EXPECT_THROW(apply_config_text(cfg, "niter = many\n", "x"), ParseError);
  EXPECT_THROW(apply_config_text(cfg, "component = wavelet\n", "x"), ParseError);
  EXPECT_THROW(apply_config_text(cfg, "component = local_level scale=2\n", "x"), ParseError);
  EXPECT_THROW(apply_config_text(cfg, "observation_prior = 1\n", "x"), ParseError);
  RunConfig bad;
  bad.analysis.alpha = 1.5;
  EXPECT_THROW(check_config(bad), ValidationError);
  bad.analysis.alpha = 0.05;
  bad.analysis.burn_frac = 1.0;
  EXPECT_THROW(check_config(bad), ValidationError);
}

TEST(Covariates, CenteringUsesPrePeriodMeans) {
  auto s = parse("t,y,x\n1,1,10\n2,2,12\n3,3,20\n");
  center_covariates(s, 2);
  EXPECT_DOUBLE_EQ(s.x(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(s.x(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.x(2, 0), 9.0);
}
