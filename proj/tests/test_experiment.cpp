#include "sgswe/experiment.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace sgswe;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sgswe_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == name) return static_cast<int>(k);
    }
    return -1;
  }
};

Csv read_csv(const fs::path& p) {
  Csv c;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) c.header.push_back(cell);
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::vector<double> row;
    for (std::string cell; std::getline(ls, cell, ',');) row.push_back(cell.empty() ? std::nan("") : std::stod(cell));
    c.rows.push_back(row);
  }
  return c;
}

Settings settings_from(const std::string& text) {
  Settings st;
  std::istringstream in(text);
  parse_config(in, "test.cfg", st);
  return st;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SGSWE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunOptions short_ex3(const fs::path& out) {
  const Settings st = settings_from("experiment = ex3\nt-final = 0.004\nsamples = 2000\nout = " + out.string() + "\n");
  return build_options(st);
}

}  // namespace

TEST(Config, ParseReal) {
  EXPECT_DOUBLE_EQ(parse_real("1/800", "dx"), 1.0 / 800.0);
  EXPECT_DOUBLE_EQ(parse_real(" 0.15 ", "t"), 0.15);
  EXPECT_DOUBLE_EQ(parse_real("2.5e-1", "t"), 0.25);
  EXPECT_THROW(parse_real("1/0", "dx"), ConfigError);
  EXPECT_THROW(parse_real("abc", "dx"), ConfigError);
  EXPECT_THROW(parse_real("1.5x", "dx"), ConfigError);
  EXPECT_EQ(parse_integer("17", "M"), 17);
  EXPECT_THROW(parse_integer("17.5", "M"), ConfigError);
  EXPECT_TRUE(parse_bool("yes", "flag"));
  EXPECT_FALSE(parse_bool("false", "flag"));
  EXPECT_THROW(parse_bool("maybe", "flag"), ConfigError);
}

TEST(Config, CommentsAndUnderscores) {
  const Settings st = settings_from("# a comment\n\nexperiment = ex3   # trailing\nt_final = 0.1\n");
  EXPECT_EQ(*st.get("experiment"), "ex3");
  EXPECT_EQ(*st.get("t-final"), "0.1");
  EXPECT_EQ(st.origin.at("t-final"), "test.cfg:4");
}

TEST(Config, UnknownKeyNamesTheLine) {
  try {
    settings_from("experiment = ex1\nbogus = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("test.cfg:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos) << e.what();
  }
  EXPECT_THROW(settings_from("experiment ex1\n"), ConfigError);
}

TEST(Config, Ex1Preset) {
  Settings st;
  st.set("experiment", "ex1", "command line");
  st.set("K", "9", "command line");
  st.set("dx", "1/800", "command line");
  const RunOptions o = build_options(st);
  EXPECT_EQ(o.scenario.g, 1.0);
  EXPECT_EQ(o.scenario.theta, 1.3);
  EXPECT_EQ(o.scenario.t_final, 0.8);
  EXPECT_EQ(o.scenario.K, 9);
  EXPECT_EQ(o.scenario.cells(), 1600);
  EXPECT_EQ(o.solver.g, 1.0);
  EXPECT_EQ(o.solver.theta, 1.3);
}

TEST(Config, Ex3Preset) {
  Settings st;
  st.set("experiment", "ex3", "command line");
  const RunOptions o = build_options(st);
  EXPECT_EQ(o.scenario.g, 2.0);
  EXPECT_EQ(o.scenario.theta, 1.0);
  EXPECT_EQ(o.scenario.alpha, 3.0);
  EXPECT_EQ(o.scenario.beta, 1.0);
  EXPECT_EQ(o.scenario.dx, 1.0 / 400.0);
  EXPECT_EQ(o.scenario.t_final, 0.15);
  EXPECT_EQ(o.scenario.cells(), 400);
  EXPECT_EQ(o.level, 0.99);
}

TEST(Config, OverridesAndRangeChecks) {
  Settings st = settings_from("experiment = ex3\nK = 5\n");
  st.set("K", "13", "command line");
  RunOptions o = build_options(st);
  EXPECT_EQ(o.scenario.K, 13);
  EXPECT_GE(o.scenario.M, min_quadrature_size(13));

  EXPECT_THROW(build_options(Settings{}), ConfigError);
  auto rejects = [](const std::string& text, const std::string& fragment) {
    try {
      build_options(settings_from(text));
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  rejects("experiment = ex1\nM = 5\n", "M >= ceil(3K/2) - 1 = 13");
  rejects("experiment = ex4\n", "ex4");
  rejects("experiment = ex1\ndx = 0.3\n", "dx");
  rejects("experiment = ex1\ntheta = 2.5\n", "theta");
  rejects("experiment = ex1\ncollocation = 3\n", "S must be >= K");
  rejects("experiment = ex1\nlevel = 1\n", "level");
  rejects("experiment = ex1\nalpha = -1\n", "alpha");
}

TEST(Output, RowsHeaderAndDeterminism) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  RunOptions oa = short_ex3(a), ob = short_ex3(b);
  oa.negative_region = ob.negative_region = true;
  const ExperimentResult ra = run_experiment(oa);
  run_experiment(ob);
  for (const char* f : {"ex3_sg.csv", "ex3_diagnostics.csv", "ex3_negative_region.csv", "ex3_plot.gp"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const Csv sg = read_csv(a / "ex3_sg.csv");
  EXPECT_EQ(slurp(a / "ex3_sg.csv").substr(0, slurp(a / "ex3_sg.csv").find('\n')), kFieldCsvHeader);
  ASSERT_EQ(sg.rows.size(), 400u);
  for (const auto& r : sg.rows) ASSERT_EQ(r.size(), sg.header.size());
  EXPECT_NEAR(sg.rows.front()[0], 0.5 / 400.0, 1e-15);
  EXPECT_EQ(read_csv(a / "ex3_diagnostics.csv").rows.size(), ra.steps.size());
  ASSERT_TRUE(ra.negative.has_value());
  const Csv neg = read_csv(a / "ex3_negative_region.csv");
  ASSERT_EQ(neg.rows.size(), 1u);
  EXPECT_EQ(neg.rows[0][0], 17.0);
  EXPECT_NEAR(neg.rows[0][1], 0.946822249806, 1e-9);

  // another seed moves the sampled bands but nothing else
  RunOptions oc = short_ex3(scratch("det_c"));
  oc.seed = 7;
  run_experiment(oc);
  EXPECT_NE(slurp(a / "ex3_sg.csv"), slurp(oc.out / "ex3_sg.csv"));
  EXPECT_EQ(slurp(a / "ex3_diagnostics.csv"), slurp(oc.out / "ex3_diagnostics.csv"));
}

TEST(Output, SeventeenSignificantDigits) {
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(format_real(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Output, CollocationCsv) {
  const fs::path out = scratch("sc");
  Settings st = settings_from("experiment = ex1\ndx = 1/50\nt-final = 0.05\ncollocation = 12\nsamples = 500\n");
  st.set("out", out.string(), "command line");
  const ExperimentResult r = run_experiment(build_options(st));
  ASSERT_TRUE(r.collocation.has_value());
  const Csv sc = read_csv(out / "ex1_sc.csv");
  EXPECT_EQ(sc.rows.size(), 100u);
  EXPECT_NE(slurp(out / "ex1_plot.gp").find("ex1_sc.csv"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const fs::path out = scratch("cli");
  EXPECT_EQ(run_cli("--experiment ex3 --t-final 0.002 --samples 200 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "ex3_sg.csv"));
  EXPECT_EQ(run_cli("--experiment ex3 --M 5 --out " + out.string()), 2);
  EXPECT_EQ(run_cli("--out " + out.string()), 2);
  EXPECT_NE(run_cli("--no-such-flag 1"), 0);

  const fs::path cfg = out / "run.cfg";
  std::ofstream(cfg) << "experiment = ex3\nt-final = 1\nsamples = 100\n";
  // the command line wins over the file
  EXPECT_EQ(run_cli("--config " + cfg.string() + " --t-final 0.001 --dx 1/100 --out " + (out / "merged").string()), 0);
  EXPECT_EQ(read_csv(out / "merged" / "ex3_sg.csv").rows.size(), 100u);
  std::ofstream(cfg) << "experiment = ex3\nwidth = 3\n";
  EXPECT_EQ(run_cli("--config " + cfg.string()), 2);
}

TEST(Ex2, BandStaysNearRestOutsidePulse) {
  const fs::path out = scratch("ex2");
  Settings st;
  st.set("experiment", "ex2", "command line");
  st.set("out", out.string(), "command line");
  run_experiment(build_options(st));
  const Csv sg = read_csv(out / "ex2_sg.csv");
  const int x = sg.column("x"), lo = sg.column("w_lo"), hi = sg.column("w_hi");
  ASSERT_GE(std::min({x, lo, hi}), 0);
  double worst = 0.0;
  for (const auto& r : sg.rows) {
    if (r[x] >= 0.1 && r[x] <= 0.2) continue;
    worst = std::max({worst, std::abs(r[lo] - 1.0), std::abs(r[hi] - 1.0)});
  }
  EXPECT_LE(worst, 0.0012);
}
