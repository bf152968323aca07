// Command-line front end. Every subcommand writes CSV to --out (or stdout)
// and reports failures as a single `error,<code>,<message>` line on stderr.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "etcb/etc.hpp"
#include "etcb/experiment.hpp"
#include "etcb/markov.hpp"
#include "etcb/qubo.hpp"
#include "etcb/system_io.hpp"

namespace {

using namespace etcb;

struct Common {
  std::string config;
  std::optional<long long> seed;
  std::optional<long long> workers;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "key-value config file");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--workers", c.workers, "worker threads (0 = all cores)");
  cmd->add_option("--out", c.out, "output CSV path (default: stdout)");
}

/// Writes through to --out when given, else stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw InputError("cannot write output file: " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

SystemParams cli_system(const std::string& path) {
  return path.empty() ? toy_system() : load_system(path);
}

std::uint64_t cli_seed(const Common& c, std::uint64_t fallback = 1) {
  if (!c.seed) return fallback;
  if (*c.seed < 0) throw InputError("seed must be nonnegative");
  return static_cast<std::uint64_t>(*c.seed);
}

ExperimentConfig experiment_config(const Common& c, std::optional<ExperimentKind> kind) {
  KeyValues kv;
  std::string base = ".";
  if (!c.config.empty()) {
    kv = KeyValues::load(c.config);
    const auto dir = std::filesystem::path(c.config).parent_path();
    if (!dir.empty()) base = dir.string();
  }
  if (!kv.has("kind")) {
    if (!kind) throw InputError("config must set kind");
    kv.set("kind", to_string(*kind));
  }
  ExperimentConfig cfg = experiment_from_keyvalues(kv, base);
  if (kind && cfg.kind != *kind)
    throw InputError("config kind is " + to_string(cfg.kind) + ", expected " +
                     to_string(*kind));
  if (c.seed) cfg.seed = cli_seed(c);
  if (c.workers) {
    if (*c.workers < 0) throw InputError("workers must be nonnegative");
    cfg.workers = static_cast<unsigned>(*c.workers);
  }
  if (!c.out.empty()) cfg.output = c.out;
  return cfg;
}

int run_table(const ExperimentConfig& cfg) {
  const CsvTable t = run_experiment(cfg);
  if (cfg.output.empty()) t.write(std::cout);
  return 0;
}

/// Reads `m` then m*m row-major entries, whitespace separated; `#` comments.
MatrixXd read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open matrix file: " + path);
  std::stringstream clean;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    clean << line << '\n';
  }
  long long m = 0;
  if (!(clean >> m) || m < 1) throw InputError("matrix file must start with a positive dimension");
  MatrixXd w(m, m);
  for (long long i = 0; i < m; ++i)
    for (long long j = 0; j < m; ++j)
      if (!(clean >> w(i, j)))
        throw InputError("matrix file needs " + std::to_string(m * m) + " entries");
  std::string extra;
  if (clean >> extra) throw InputError("matrix file has trailing data: " + extra);
  return w;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explore-then-commit for bandits with latent linear dynamics"};
  app.require_subcommand(1);

  // simulate
  Common sim_c;
  std::string sim_system;
  long long sim_rounds = 100;
  auto* sim = app.add_subcommand("simulate", "simulate one Rademacher-driven trajectory");
  add_common(sim, sim_c, false);
  sim->add_option("--system", sim_system, "system config (default: built-in toy system)");
  sim->add_option("--rounds", sim_rounds, "number of rounds T+1")->check(CLI::PositiveNumber);

  // estimate
  Common est_c;
  std::string est_system;
  long long est_H = 500, est_L = 2;
  auto* est = app.add_subcommand("estimate", "estimate Markov parameters from one trajectory");
  add_common(est, est_c, false);
  est->add_option("--system", est_system, "system config (default: built-in toy system)");
  est->add_option("--H", est_H, "exploration length");
  est->add_option("--L", est_L, "truncation length");

  // etc-run
  Common run_c;
  std::string run_system, run_solver = "sdp_gw";
  long long run_T = 200;
  std::optional<long long> run_H, run_L;
  double run_c1 = 1.0, run_c2 = 1.0;
  long long run_rep = 0;
  auto* run = app.add_subcommand("etc-run", "run explore-then-commit once and report regret");
  add_common(run, run_c, false);
  run->add_option("--system", run_system, "system config (default: built-in toy system)");
  run->add_option("--T", run_T, "horizon");
  run->add_option("--H", run_H, "exploration length (default: round(c1 T^(2/3)))");
  run->add_option("--L", run_L, "truncation length (default: max(1, round(c2 log T)))");
  run->add_option("--c1", run_c1, "exploration constant");
  run->add_option("--c2", run_c2, "truncation constant");
  run->add_option("--solver", run_solver, "commit solver: brute, sign_iter, sdp_gw");
  run->add_option("--replicate", run_rep, "replicate index");

  // experiment-driven subcommands
  Common bench_c, grid_c, sweep_c, pe_c;
  auto* bench = app.add_subcommand("benchmark", "oracle benchmark values per T and solver");
  add_common(bench, bench_c);
  auto* grid = app.add_subcommand("grid-search", "grid search for the schedule constants");
  add_common(grid, grid_c);
  auto* sweep = app.add_subcommand("sweep", "run the experiment described by --config");
  add_common(sweep, sweep_c);
  sweep->needs(sweep->get_option("--config"));
  auto* pe = app.add_subcommand("pe-check", "persistence-of-excitation check");
  add_common(pe, pe_c);

  // qubo
  Common q_c;
  std::string q_matrix, q_solver = "sdp_gw";
  long long q_trials = 256, q_restarts = 256, q_iters = 200;
  auto* qubo = app.add_subcommand("qubo", "maximize s'Ws over s in {-1,+1}^m");
  add_common(qubo, q_c, false);
  qubo->add_option("--matrix", q_matrix, "matrix file: dimension, then row-major entries")
      ->required();
  qubo->add_option("--solver", q_solver, "brute, sign_iter, sdp_gw or vertex_ascent");
  qubo->add_option("--trials", q_trials, "rounding trials");
  qubo->add_option("--restarts", q_restarts, "sign-iteration restarts");
  qubo->add_option("--max-iters", q_iters, "sign-iteration steps per restart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error,usage," << e.what() << "\n";
    return 64;
  }

  try {
    if (*sim) {
      const SystemParams sys = cli_system(sim_system);
      const std::uint64_t seed = cli_seed(sim_c);
      CounterRng arng = make_stream(seed, 0, StreamRole::actions);
      const MatrixXd actions = sample_rademacher_actions(sys.p(), sim_rounds, arng);
      const Trajectory tr = simulate_trajectory(sys, actions, seed, 0);
      Output out(sim_c.out);
      auto& os = out.stream();
      os << "# " << kCsvSchema << " kind=trajectory\n" << "t";
      for (Index i = 0; i < sys.p(); ++i) os << ",u" << i;
      for (Index i = 0; i < sys.n(); ++i) os << ",x" << i;
      os << ",reward_noise,reward\n";
      for (Index t = 0; t < tr.rounds(); ++t) {
        os << t;
        for (Index i = 0; i < sys.p(); ++i) os << ',' << fmt(tr.actions(i, t));
        for (Index i = 0; i < sys.n(); ++i) os << ',' << fmt(tr.states(i, t));
        os << ',' << fmt(tr.reward_noise[t]) << ',' << fmt(tr.rewards[t]) << '\n';
      }
      return 0;
    }
    if (*est) {
      const SystemParams sys = cli_system(est_system);
      detail::require(est_H - est_L >= 1 && est_L >= 1, "need L >= 1 and H - L >= 1");
      const std::uint64_t seed = cli_seed(est_c);
      CounterRng arng = make_stream(seed, 0, StreamRole::actions);
      const MatrixXd actions = sample_rademacher_actions(sys.p(), est_H + 1, arng);
      const Trajectory tr = simulate_trajectory(sys, actions, seed, 0);
      const CovariateSet cov = build_covariates(actions, tr.rewards, est_L);
      const MarkovParams g = estimate_markov(cov, sys.p(), est_L);
      const EstimationError e = estimation_error(g, true_markov(sys, est_L));
      Output out(est_c.out);
      write_markov_csv(out.stream(), g);
      std::cerr << "rel_error," << fmt(e.relative) << "\nrank_deficient,"
                << (g.rank_deficient() ? 1 : 0) << "\n";
      return 0;
    }
    if (*run) {
      const SystemParams sys = cli_system(run_system);
      EtcConfig cfg;
      cfg.T = run_T;
      cfg.H = run_H ? *run_H : schedule_H(run_T, run_c1);
      cfg.L = run_L ? *run_L : schedule_L(run_T, run_c2);
      cfg.commit_solver = parse_solver(run_solver);
      cfg.seed = cli_seed(run_c);
      detail::require(run_rep >= 0, "replicate must be nonnegative");
      cfg.replicate = static_cast<std::uint64_t>(run_rep);
      cfg.validate();
      const EtcRunRecord rec = run_etc(sys, cfg);
      const OracleContext ctx = build_oracle(sys, cfg.T, cfg.H, SolverKind::sdp_gw,
                                             cfg.commit_solver, cfg.solver, cfg.seed);
      RegretRow row;
      row.T = cfg.T;
      row.H = cfg.H;
      row.L = cfg.L;
      row.replicate = run_rep;
      row.solver = cfg.commit_solver;
      row.report = evaluate_regret(sys, ctx, rec);
      row.realized_commit_reward = rec.realized_commit_reward;
      ExperimentConfig shown;
      shown.id = "etc_run";
      CsvTable t("regret_sweep", regret_columns());
      t.add(regret_row_cells(shown, row));
      Output out(run_c.out);
      t.write(out.stream());
      return 0;
    }
    if (*bench) return run_table(experiment_config(bench_c, ExperimentKind::benchmark));
    if (*grid) return run_table(experiment_config(grid_c, ExperimentKind::grid_search));
    if (*sweep) return run_table(experiment_config(sweep_c, std::nullopt));
    if (*pe) {
      ExperimentConfig cfg = experiment_config(pe_c, ExperimentKind::pe_check);
      const CsvTable t = run_experiment(cfg);
      if (cfg.output.empty()) t.write(std::cout);
      std::cerr << "pe_pass_fraction," << fmt(pe_pass_fraction(t)) << "\n";
      return 0;
    }
    if (*qubo) {
      const DenseSymmetric w(read_matrix_file(q_matrix));
      SolverOptions opt;
      opt.trials = q_trials;
      opt.restarts = q_restarts;
      opt.max_iters = q_iters;
      const std::uint64_t seed = cli_seed(q_c);
      const QuboSolution sol = solve_qubo(w, parse_solver(q_solver), opt,
                                          make_stream(seed, 0, StreamRole::rounding));
      Output out(q_c.out);
      auto& os = out.stream();
      os << "# " << kCsvSchema << " kind=qubo\n"
         << "solver,value,relaxation_value,gw_bound,assignment\n"
         << to_string(sol.solver) << ',' << fmt(sol.value) << ','
         << (sol.relaxation_value ? fmt(*sol.relaxation_value) : "") << ','
         << (sol.gw_bound ? fmt(*sol.gw_bound) : "") << ',';
      for (Index i = 0; i < sol.assignment.size(); ++i)
        os << (i ? " " : "") << (sol.assignment[i] > 0 ? "1" : "-1");
      os << '\n';
      return 0;
    }
  } catch (const etcb::Error& e) {
    std::cerr << "error," << e.code() << "," << e.what() << "\n";
    return e.code() == "input" ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error,internal," << e.what() << "\n";
    return 4;
  }
  return 0;
}
