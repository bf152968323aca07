#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "etcb/experiment.hpp"

using namespace etcb;

namespace {

struct Result {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Result run(const std::string& args) {
  const std::string cmd = std::string(ETCB_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string write_temp(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("etcb_cli_" + name);
  std::ofstream(p) << body;
  return p.string();
}

std::string config(const std::string& name) { return std::string(ETCB_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST(Cli, QuboSwapMatrix) {
  const std::string m = write_temp("swap.txt", "# swap\n2\n0 1\n1 0\n");
  const Result r = run("qubo --matrix " + m + " --solver brute");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream is(r.out);
  const CsvTable t = CsvTable::read(is);
  EXPECT_EQ(t.number(0, "value"), 2.0);
  EXPECT_EQ(t.text(0, "assignment"), "1 1");
}

TEST(Cli, QuboSdpReportsRelaxation) {
  const std::string m = write_temp("swap2.txt", "2\n0 1\n1 0\n");
  const Result r = run("qubo --matrix " + m + " --solver sdp_gw --trials 8");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream is(r.out);
  const CsvTable t = CsvTable::read(is);
  EXPECT_NEAR(t.number(0, "relaxation_value"), 2.0, 1e-6);
}

TEST(Cli, BadMatrixIsInputError) {
  const std::string m = write_temp("bad.txt", "3\n1 2\n");
  const Result r = run("qubo --matrix " + m);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("error,input,"), std::string::npos) << r.out;
  EXPECT_EQ(run("qubo --matrix /no/such/file").status, 2);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").status, 64);
  EXPECT_EQ(run("frobnicate").status, 64);
  EXPECT_EQ(run("qubo").status, 64);
}

TEST(Cli, SimulateToySystem) {
  const Result r = run("simulate --rounds 5 --seed 3");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream is(r.out);
  const CsvTable t = CsvTable::read(is);
  EXPECT_EQ(t.size(), 5u);
  EXPECT_EQ(t.number(0, "x0"), 0.0);
  EXPECT_EQ(t.kind(), "trajectory");
}

TEST(Cli, SimulateIsDeterministic) {
  const std::string sys = config("toy.sys");
  EXPECT_EQ(run("simulate --rounds 20 --seed 4 --system " + sys).out,
            run("simulate --rounds 20 --seed 4 --system " + sys).out);
}

TEST(Cli, EstimateReportsError) {
  const Result r = run("estimate --H 400 --L 2 --seed 2");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("block,row,col,value"), std::string::npos);
  EXPECT_NE(r.out.find("rel_error,"), std::string::npos);
  EXPECT_EQ(run("estimate --H 3 --L 3").status, 2);
}

TEST(Cli, EtcRunRow) {
  const Result r = run("etc-run --T 80 --solver sign_iter --seed 5");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream is(r.out);
  const CsvTable t = CsvTable::read(is);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.number(0, "H"), 19.0);
  EXPECT_EQ(t.number(0, "L"), 4.0);
  const double sum = t.number(0, "r1") + t.number(0, "r2") + t.number(0, "r3");
  EXPECT_NEAR(t.number(0, "regret"), 0.5 * sum, 1e-9 * (1 + std::abs(t.number(0, "regret"))));
}

TEST(Cli, SweepWritesOutputFile) {
  const auto out = std::filesystem::temp_directory_path() / "etcb_cli_sweep.csv";
  std::filesystem::remove(out);
  const std::string cfg = write_temp(
      "sweep.cfg", "kind = qubo_compare\nsystem = random\nT = 5 6\ntrials_grid = 1 4\n"
                   "replicates = 2\n");
  const Result r = run("sweep --config " + cfg + " --out " + out.string() + " --workers 1");
  ASSERT_EQ(r.status, 0) << r.out;
  std::ifstream in(out);
  const CsvTable t = CsvTable::read(in);
  EXPECT_EQ(t.kind(), "qubo_compare");
  EXPECT_EQ(t.size(), 2u * 2u * 2u * 2u);
}

TEST(Cli, SweepRequiresKnownKind) {
  const std::string cfg = write_temp("nokind.cfg", "T = 5\n");
  EXPECT_EQ(run("sweep --config " + cfg).status, 2);
  EXPECT_EQ(run("sweep --config " + config("pe_check.cfg") + " --out /no/such/dir/x.csv").status,
            2);
}

TEST(Cli, PeCheckFraction) {
  const std::string cfg =
      write_temp("pe.cfg", "kind = pe_check\np = 1\nL = 1\nH = 200\nreplicates = 3\n");
  const Result r = run("pe-check --config " + cfg);
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("pe_pass_fraction,1"), std::string::npos) << r.out;
}

TEST(Cli, BenchmarkTable) {
  const std::string cfg = write_temp(
      "bench.cfg", "kind = benchmark\nT = 30 60\nsolvers = sdp_gw sign_iter\nreplicates = 1\n");
  const Result r = run("benchmark --config " + cfg + " --seed 2");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream is(r.out);
  const CsvTable t = CsvTable::read(is);
  EXPECT_EQ(t.size(), 4u);
}
