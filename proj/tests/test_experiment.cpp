#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "etcb/experiment.hpp"

using namespace etcb;

namespace {

ExperimentConfig small_sweep() {
  ExperimentConfig c;
  c.kind = ExperimentKind::regret_sweep;
  c.T = {40, 60};
  c.replicates = 3;
  c.solvers = {SolverKind::sdp_gw, SolverKind::sign_iter};
  c.solver.trials = 16;
  c.solver.restarts = 16;
  c.seed = 3;
  c.workers = 1;
  return c;
}

std::string to_csv(const CsvTable& t) {
  std::ostringstream os;
  t.write(os);
  return os.str();
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("etcb_test_" + name);
}

}  // namespace

TEST(RandomSystem, HitsTargetRadius) {
  for (double rho : {0.1, 0.5, 0.9}) {
    const SystemParams s = random_stable_system(5, 3, rho, 0.01, 0.01, CounterRng(4));
    EXPECT_NEAR(s.rho_A(), rho, 1e-8);
    EXPECT_EQ(s.A().rows(), 5);
    EXPECT_EQ(s.B().cols(), 3);
    EXPECT_EQ(s.C().rows(), 3);
  }
  const SystemParams a = random_stable_system(4, 2, 0.5, 0.1, 0.1, CounterRng(9));
  const SystemParams b = random_stable_system(4, 2, 0.5, 0.1, 0.1, CounterRng(9));
  EXPECT_TRUE(a.A() == b.A() && a.B() == b.B() && a.C() == b.C());
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
  std::vector<int> hit(100, 0);
  parallel_for(100, 3, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 2,
                            [](std::size_t i) {
                              if (i == 7) throw InputError("boom");
                            }),
               InputError);
}

TEST(ConfigFile, ParsesEveryKey) {
  std::stringstream ss(
      "kind = regret_sweep\nid = demo\nsystem = random\nn = 4\np = 1\ntarget_rho = 0.7\n"
      "noise_w = 0.2\nnoise_z = 0.3\nT = 100:100:300\nc1 = 0.8\nc2 = 1.2\nreplicates = 4\n"
      "seed = 12\nsolvers = sign_iter brute\noracle_solver = sign_iter\ntrials = 7\n"
      "restarts = 9\nmax_iters = 11\nsdp_rank = 5\nsdp_tol = 1e-6\nmax_sweeps = 50\n"
      "bound_rho = 0.9\ntimeout_ms = 100\ntimings = true\nworkers = 2\noutput = out.csv\n");
  const ExperimentConfig c = experiment_from_keyvalues(KeyValues::parse(ss));
  EXPECT_EQ(c.kind, ExperimentKind::regret_sweep);
  EXPECT_EQ(c.id, "demo");
  EXPECT_EQ(c.source, SystemSource::random);
  EXPECT_EQ(c.n, 4);
  EXPECT_EQ(c.p, 1);
  EXPECT_EQ(c.target_rho, std::vector<double>{0.7});
  EXPECT_EQ(c.T, (std::vector<Index>{100, 200, 300}));
  EXPECT_EQ(c.solvers, (std::vector<SolverKind>{SolverKind::sign_iter, SolverKind::brute}));
  EXPECT_EQ(c.oracle_solver, SolverKind::sign_iter);
  EXPECT_EQ(c.solver.trials, 7);
  EXPECT_EQ(c.solver.restarts, 9);
  EXPECT_EQ(c.solver.max_iters, 11);
  EXPECT_EQ(c.solver.rank, 5);
  EXPECT_EQ(c.solver.max_sweeps, 50);
  EXPECT_EQ(*c.bound_rho, 0.9);
  EXPECT_EQ(c.timeout_ms, 100);
  EXPECT_TRUE(c.record_timings);
  EXPECT_EQ(c.workers, 2u);
  EXPECT_EQ(c.output, "out.csv");
  EXPECT_EQ(c.seed, 12u);
}

TEST(ConfigFile, RejectsBadValues) {
  std::stringstream kind("kind = nonsense\n");
  EXPECT_THROW(experiment_from_keyvalues(KeyValues::parse(kind)), InputError);
  std::stringstream src("kind = pe_check\nsystem = moon\n");
  EXPECT_THROW(experiment_from_keyvalues(KeyValues::parse(src)), InputError);
  std::stringstream knob("kind = pe_check\ntrials = 0\n");
  EXPECT_THROW(experiment_from_keyvalues(KeyValues::parse(knob)), InputError);
}

TEST(ConfigFile, ShippedConfigsLoad) {
  for (const char* name : {"regret_sweep.cfg", "estimation_sweep.cfg", "qubo_compare.cfg",
                           "grid_search.cfg", "pe_check.cfg", "benchmark.cfg"}) {
    const ExperimentConfig c = load_experiment(std::string(ETCB_CONFIG_DIR) + "/" + name);
    EXPECT_NO_THROW(c.validate()) << name;
  }
}

TEST(Validation, ScheduleAndSizeChecks) {
  ExperimentConfig c = small_sweep();
  c.T = {2};
  EXPECT_THROW(c.validate(), InputError);
  ExperimentConfig q;
  q.kind = ExperimentKind::qubo_compare;
  q.p = 2;
  q.T = {13};
  EXPECT_THROW(q.validate(), InputError);
  q.T = {12};
  EXPECT_NO_THROW(q.validate());
  ExperimentConfig e;
  e.kind = ExperimentKind::estimation_sweep;
  EXPECT_THROW(e.validate(), InputError);
}

TEST(Validation, UnwritableOutputFailsBeforeCompute) {
  ExperimentConfig c = small_sweep();
  c.T = {2000};
  c.c1 = 1.0;
  c.output = "/nonexistent_dir/x.csv";
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(run_experiment(c), InputError);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
}

TEST(RegretSweep, RowsCoverGridInCanonicalOrder) {
  const ExperimentConfig c = small_sweep();
  const CsvTable t = regret_sweep(c);
  ASSERT_EQ(t.size(), 2u * 3u * 2u);
  EXPECT_EQ(t.columns(), regret_columns());
  for (std::size_t i = 1; i < t.size(); ++i) {
    const auto key = [&](std::size_t r) {
      return std::make_tuple(t.number(r, "T"), t.number(r, "seed"), t.text(r, "solver"));
    };
    EXPECT_LT(key(i - 1), key(i));
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(t.text(i, "status"), "ok");
    const double regret = t.number(i, "regret");
    const double sum = t.number(i, "r1") + t.number(i, "r2") + t.number(i, "r3");
    EXPECT_NEAR(regret, 0.5 * sum, 1e-9 * (1 + std::abs(regret)));
    EXPECT_NEAR(regret, t.number(i, "oracle_value") - t.number(i, "policy_value"),
                1e-9 * (1 + std::abs(regret)));
    EXPECT_LE(t.number(i, "r3_abs"), t.number(i, "bound_r23"));
    EXPECT_EQ(t.number(i, "runtime_ms"), 0.0);
  }
}

TEST(RegretSweep, IndependentOfWorkerCount) {
  ExperimentConfig c = small_sweep();
  const std::string one = to_csv(regret_sweep(c));
  c.workers = 3;
  EXPECT_EQ(to_csv(regret_sweep(c)), one);
}

TEST(RegretSweep, TimeoutProducesStatusRows) {
  ExperimentConfig c = small_sweep();
  c.T = {800};
  c.replicates = 1;
  c.solvers = {SolverKind::sdp_gw};
  c.timeout_ms = 1;
  const CsvTable t = regret_sweep(c);
  ASSERT_GE(t.size(), 1u);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t.text(i, "status"), "timeout");
}

TEST(Csv, RoundTripByColumnName) {
  const CsvTable t = regret_sweep(small_sweep());
  std::stringstream ss(to_csv(t));
  const CsvTable back = CsvTable::read(ss);
  EXPECT_EQ(back.kind(), "regret_sweep");
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    EXPECT_EQ(back.number(i, "regret"), t.number(i, "regret"));
  EXPECT_THROW(back.column("missing"), InputError);
  EXPECT_EQ(to_csv(t).rfind(std::string("# ") + kCsvSchema, 0), 0u);
}

TEST(Csv, RunExperimentWritesFile) {
  ExperimentConfig c;
  c.kind = ExperimentKind::pe_check;
  c.p = 1;
  c.H = {50};
  c.L = {1, 2};
  c.replicates = 2;
  c.output = temp_path("pe.csv").string();
  run_experiment(c);
  std::ifstream in(c.output);
  const CsvTable t = CsvTable::read(in);
  EXPECT_EQ(t.size(), 4u);
  std::filesystem::remove(c.output);
}

TEST(EstimationSweep, GridAndPrefixConsistency) {
  ExperimentConfig c;
  c.kind = ExperimentKind::estimation_sweep;
  c.source = SystemSource::random;
  c.n = 3;
  c.p = 2;
  c.target_rho = {0.3, 0.8};
  c.H = {100, 200};
  c.L = {2, 4};
  c.replicates = 3;
  c.workers = 1;
  const CsvTable t = estimation_sweep(c);
  EXPECT_EQ(t.size(), 2u * 2u * 2u * 3u);
  // the H = 100 estimate equals a direct fit on the first 101 rounds
  const SystemParams sys = experiment_system(c, 0.3);
  CounterRng ar = make_stream(c.seed, 0, StreamRole::actions);
  const MatrixXd u = sample_rademacher_actions(2, 201, ar);
  const Trajectory tr = simulate_trajectory(sys, u, c.seed, 0);
  const MarkovParams est =
      estimate_markov(build_covariates(u.leftCols(101), tr.rewards.head(101), 2), 2, 2);
  const double rel = estimation_error(est, true_markov(sys, 2)).relative;
  bool found = false;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.number(i, "rho_A") == 0.3 && t.number(i, "H") == 100 && t.number(i, "L") == 2 &&
        t.number(i, "seed") == 0) {
      EXPECT_NEAR(t.number(i, "rel_error"), rel, 1e-12);
      found = true;
    }
  EXPECT_TRUE(found);
}

TEST(QuboCompare, RatiosWithinUnitInterval) {
  ExperimentConfig c;
  c.kind = ExperimentKind::qubo_compare;
  c.source = SystemSource::random;
  c.p = 2;
  c.n = 3;
  c.T = {5, 7};
  c.trials_grid = {1, 10};
  c.replicates = 4;
  c.workers = 1;
  const CsvTable t = qubo_compare(c);
  EXPECT_EQ(t.size(), 2u * 4u * 2u * 2u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_LE(t.number(i, "ratio"), 1.0 + 1e-12);
    EXPECT_GE(t.number(i, "relaxation_value"), t.number(i, "brute_value") - 1e-6);
  }
}

TEST(PeCheck, PassFraction) {
  ExperimentConfig c;
  c.kind = ExperimentKind::pe_check;
  c.p = 2;
  c.H = {3000};
  c.L = {1, 2};
  c.replicates = 10;
  const CsvTable t = pe_check(c);
  EXPECT_EQ(t.size(), 20u);
  EXPECT_GE(pe_pass_fraction(t), 0.9);
  for (std::size_t i = 0; i < t.size(); ++i)
    EXPECT_LE(t.number(i, "lambda_max"), t.number(i, "lambda_max_cap"));
}

TEST(GridSearch, SingleCellAndEvaluationCount) {
  ExperimentConfig c;
  c.kind = ExperimentKind::grid_search;
  c.T0 = 150;
  c.c1_exponents = {0.0};
  c.c2_grid = {1.0};
  c.replicates = 2;
  c.solver.trials = 16;
  c.workers = 1;
  const GridResult one = grid_search(toy_system(), c, 1);
  ASSERT_EQ(one.cells.size(), 1u);
  EXPECT_EQ(one.best, 0u);
  EXPECT_EQ(one.evaluations, 2);
  c.c1_exponents = {0.0, -0.1};
  c.c2_grid = {0.75, 1.0, 1.25};
  const GridResult full = grid_search(toy_system(), c, 1);
  EXPECT_EQ(full.cells.size(), 6u);
  EXPECT_EQ(full.evaluations, 12);
  for (std::size_t i = 1; i < full.cells.size(); ++i)
    EXPECT_LE(full.cells[i - 1].c1, full.cells[i].c1);
  for (const GridCell& g : full.cells)
    EXPECT_GE(g.mean_regret, full.cells[full.best].mean_regret);
}

TEST(GridSearch, TiesResolveToSmallerConstants) {
  ExperimentConfig c;
  c.kind = ExperimentKind::grid_search;
  c.T0 = 100;
  c.c1_exponents = {0.0, 0.01};
  c.c2_grid = {1.0, 1.01};
  c.replicates = 1;
  c.workers = 1;
  // B = 0 makes every regret zero
  const SystemParams flat = SystemParams::create(0.5 * MatrixXd::Identity(2, 2),
                                                 MatrixXd::Zero(2, 2), MatrixXd::Ones(2, 2),
                                                 MatrixXd::Zero(2, 2), 0);
  const GridResult r = grid_search(flat, c, 1);
  EXPECT_EQ(r.best, 0u);
  EXPECT_EQ(r.cells[0].c2, 1.0);
}
