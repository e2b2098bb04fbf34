#include <algorithm>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "arqsec/experiment.hpp"

using namespace arqsec;

namespace {

bool has_field(const std::vector<ConfigIssue>& v, const std::string& f) {
  return std::any_of(v.begin(), v.end(), [&](const ConfigIssue& i) { return i.field == f; });
}

std::string to_csv(const ExperimentSpec& spec, unsigned jobs) {
  std::ostringstream os;
  write_csv(os, spec, run_experiment(spec, jobs).table);
  return os.str();
}

const char* kTemporal = R"(kind = TemporalAdaptation
master_seed = 5
seeds = 2
[TemporalAdaptation]
alpha = 0.5
frames = 1000
ergodic_samples = 1000
rate_step = 0.5
grid_points = 40
)";

const char* kSecrecy = R"(kind = CrownSecrecy
master_seed = 11
seeds = 20
output = secrecy.csv
[CrownSecrecy]
gamma_ab = 0.005
gamma_ba = 0.009
gamma_ae = 0.004, 0.02
n_init = 10, 100
n_data = 500
width = 24
)";

}  // namespace

TEST(Validate, AlphaOutOfRangeNamesTheField) {
  std::string text = kTemporal;
  text.replace(text.find("alpha = 0.5"), 11, "alpha = 1.5");
  const auto v = validate_text(text);
  ASSERT_EQ(v.issues.size(), 1u);
  EXPECT_EQ(v.issues[0].field, "TemporalAdaptation.alpha");
  EXPECT_FALSE(v.spec);
}

TEST(Validate, SeedIsMandatory) {
  const auto v = validate_text("kind = DelayLimited\n[DelayLimited]\nk = 1\nr0 = 1\nsnr_db = 0\n");
  ASSERT_EQ(v.issues.size(), 1u);
  EXPECT_EQ(v.issues[0].field, "master_seed");
  EXPECT_NE(v.issues[0].message.find("explicit seed"), std::string::npos);
}

TEST(Validate, LinkProbabilitiesParseExactly) {
  const auto v = validate_text(kSecrecy);
  ASSERT_TRUE(v.spec) << v.issues.front().message;
  const auto& c = std::get<CrownSecrecyParams>(v.spec->params);
  EXPECT_EQ(c.gamma_ab, 0.005);
  EXPECT_EQ(c.gamma_ba, 0.009);
  ASSERT_EQ(c.gamma_ae.size(), 2u);
  EXPECT_EQ(c.gamma_ae[0], 0.004);
  EXPECT_EQ(c.width, 24u);
  EXPECT_EQ(v.spec->seeds, 20u);
  EXPECT_EQ(v.spec->output, "secrecy.csv");
}

TEST(Validate, ReportsEveryIssueAtOnce) {
  const auto v = validate_text(
      "kind = CrownSecrecy\nmaster_seed = x\nsamples = 5000\nbogus = 1\n"
      "[CrownSecrecy]\ngamma_ab = 2\ngamma_ae = 0.1, -1\nn_init = 2.5\nwidth = 32\ncolor = red\n");
  for (const char* f : {"master_seed", "bogus", "samples", "CrownSecrecy.gamma_ab", "CrownSecrecy.gamma_ae",
                        "CrownSecrecy.n_init", "CrownSecrecy.width", "CrownSecrecy.color"})
    EXPECT_TRUE(has_field(v.issues, f)) << f;
  EXPECT_FALSE(v.spec);
}

TEST(Validate, SectionMustMatchKind) {
  EXPECT_TRUE(has_field(validate_text("kind = DelayLimited\nmaster_seed = 1\n").issues, "section"));
  const auto v = validate_text("kind = DelayLimited\nmaster_seed = 1\n[RateCurves]\nk = 1\nr0 = 1\nsnr_db = 0\n");
  EXPECT_TRUE(has_field(v.issues, "section"));
  EXPECT_TRUE(has_field(validate_text("kind = Plot\nmaster_seed = 1\n").issues, "kind"));
}

TEST(Validate, SyntaxErrors) {
  std::vector<ConfigIssue> issues;
  parse_config("kind = A\nkind = B\n[X\njunk\n[Y]\n[Z]\n", issues);
  EXPECT_TRUE(has_field(issues, "kind"));
  EXPECT_TRUE(has_field(issues, "line 3"));
  EXPECT_TRUE(has_field(issues, "line 4"));
  EXPECT_TRUE(has_field(issues, "line 6"));
  issues.clear();
  parse_config("# arqsec-spec: {not json\n", issues);
  EXPECT_TRUE(has_field(issues, "line 1"));
}

TEST(Validate, CommentsAndWhitespace) {
  const auto v = validate_text(
      "; header\nkind = DelayLimited   # trailing\n  master_seed=7\n\n[ DelayLimited ]\n"
      "k = 1, 2\nr0 = 1\nsnr_db = 0, 10\n");
  ASSERT_TRUE(v.spec);
  EXPECT_EQ(v.spec->master_seed, 7u);
  EXPECT_EQ(std::get<DelayParams>(v.spec->params).k.size(), 2u);
}

TEST(Csv, FieldQuoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
  EXPECT_EQ(fmt_num(0.1), "0.1");
  EXPECT_EQ(fmt_num(std::nan("")), "nan");
}

TEST(Run, RateCurvesColumns) {
  const auto v = validate_text(
      "kind = RateCurves\nmaster_seed = 3\nsamples = 2000\n[RateCurves]\nsnr_db = 0, 10\nrc = 0, 3, 7\n"
      "r0_step = 0.5\np_points = 4\n");
  ASSERT_TRUE(v.spec);
  const auto t = run_experiment(*v.spec).table;
  ASSERT_GE(t.header.size(), 6u);
  const std::vector<std::string> lead(t.header.begin(), t.header.begin() + 6);
  EXPECT_EQ(lead, (std::vector<std::string>{"snr_db", "rc", "cs", "ce", "std_err_cs", "std_err_ce"}));
  EXPECT_EQ(t.rows.size(), 6u);
  for (const auto& r : t.rows) EXPECT_EQ(r.size(), t.header.size());
}

TEST(Run, EveryKindRunsAtSmallScale) {
  const char* docs[] = {
      "kind = DumbAntenna\nmaster_seed = 1\nsamples = 1000\n[DumbAntenna]\nn = 1, 2\nrho_trials = 1000\n"
      "r0_step = 1\np_points = 2\n",
      kTemporal,
      "kind = DelayLimited\nmaster_seed = 1\nsamples = 1000\n[DelayLimited]\nk = 2\nr0 = 1\nsnr_db = 10\n",
      "kind = CrownAttack\nmaster_seed = 1\nseeds = 50\n[CrownAttack]\nattacks = inject, replay, inject_ack\n"
      "write_trace = true\n",
  };
  for (const char* d : docs) {
    const auto v = validate_text(d);
    ASSERT_TRUE(v.spec) << d;
    const auto out = run_experiment(*v.spec);
    EXPECT_FALSE(out.table.rows.empty()) << d;
  }
}

TEST(Run, OutputIndependentOfJobs) {
  for (const char* d : {kSecrecy, kTemporal}) {
    const auto spec = *validate_text(d).spec;
    EXPECT_EQ(to_csv(spec, 1), to_csv(spec, 3));
  }
}

TEST(Run, EmbeddedSpecReproducesFile) {
  const auto spec = *validate_text(kSecrecy).spec;
  const std::string csv = to_csv(spec, 1);
  EXPECT_EQ(csv.rfind("# arqsec-spec: ", 0), 0u);
  const auto again = validate_text(csv);
  ASSERT_TRUE(again.spec) << again.issues.front().field << ": " << again.issues.front().message;
  EXPECT_EQ(again.spec->to_json(), spec.to_json());
  EXPECT_EQ(to_csv(*again.spec, 1), csv);
}

TEST(Run, SecrecyTraceFromFirstPoint) {
  std::string text = kSecrecy;
  text += "write_trace = true\n";
  const auto out = run_experiment(*validate_text(text).spec);
  ASSERT_TRUE(out.trace);
  EXPECT_FALSE(out.trace->events.empty());
  EXPECT_EQ(out.table.rows.size(), 4u);
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }),
               std::runtime_error);
  std::vector<int> out(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { out[i] = static_cast<int>(i); });
  for (int i = 0; i < 100; ++i) EXPECT_EQ(out[i], i);
}

TEST(Validate, DelaySweepFrameBudget) {
  const auto v = validate_text(
      "kind = DelayLimited\nmaster_seed = 1\nsamples = 100000\n[DelayLimited]\nk = 8\nr0 = 4\nsnr_db = 0\n");
  ASSERT_EQ(v.issues.size(), 1u);
  EXPECT_EQ(v.issues[0].field, "DelayLimited.r0");
}
