#pragma once

// Seeded, parallel experiment runners that emit versioned CSV tables.
//
// Every table starts with one comment line
//   # etcb-csv v1 kind=<kind> columns=<c1>,<c2>,...
// followed by a header row; consumers select columns by name. Rows are written
// in a canonical order independent of worker scheduling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "etcb/deadline.hpp"
#include "etcb/error.hpp"
#include "etcb/etc.hpp"
#include "etcb/keyvalue.hpp"
#include "etcb/lds.hpp"
#include "etcb/markov.hpp"
#include "etcb/qubo.hpp"
#include "etcb/rng.hpp"
#include "etcb/system_io.hpp"
#include "etcb/toeplitz.hpp"

namespace etcb {

inline constexpr const char* kCsvSchema = "etcb-csv v1";

// ---------------------------------------------------------------------------
// Random systems

/// A with i.i.d. N(0, 1/n) entries rescaled to spectral radius target_rho,
/// B ~ N(0, 1/n), C ~ N(0, 1/p), Sigma_w = w_std^2 I, sigma_z = z_std.
inline SystemParams random_stable_system(Index n, Index p, double target_rho, double w_std,
                                         double z_std, CounterRng rng) {
  detail::require(n >= 1 && p >= 1, "n and p must be positive");
  detail::require(target_rho > 0.0 && target_rho < 1.0, "target rho must lie in (0, 1)");
  detail::require(w_std >= 0.0 && z_std >= 0.0, "noise levels must be nonnegative");
  const double sa = 1.0 / std::sqrt(static_cast<double>(n));
  const double sc = 1.0 / std::sqrt(static_cast<double>(p));
  const auto draw = [&](Index r, Index c, double scale) {
    MatrixXd m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
    return m;
  };
  for (int attempt = 0; attempt < 100; ++attempt) {
    MatrixXd a = draw(n, n, sa);
    const double rho = spectral_radius(a);
    if (!(rho > 1e-12)) continue;
    a *= target_rho / rho;
    MatrixXd b = draw(n, p, sa);
    MatrixXd c = draw(p, n, sc);
    return SystemParams::create(std::move(a), std::move(b), std::move(c),
                                w_std * w_std * MatrixXd::Identity(n, n), z_std);
  }
  throw DiagnosticError("random system draw degenerate 100 times in a row");
}

// ---------------------------------------------------------------------------
// Parallel fan-out

/// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
/// exception thrown by any task is rethrown after all workers stop.
inline void parallel_for(std::size_t count, unsigned workers,
                         const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        if (failed.load()) return;
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline unsigned default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

// ---------------------------------------------------------------------------
// Configuration

enum class ExperimentKind {
  regret_sweep,
  estimation_sweep,
  qubo_compare,
  grid_search,
  pe_check,
  benchmark
};

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::regret_sweep: return "regret_sweep";
    case ExperimentKind::estimation_sweep: return "estimation_sweep";
    case ExperimentKind::qubo_compare: return "qubo_compare";
    case ExperimentKind::grid_search: return "grid_search";
    case ExperimentKind::pe_check: return "pe_check";
    case ExperimentKind::benchmark: return "benchmark";
  }
  return "unknown";
}

inline ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::regret_sweep, ExperimentKind::estimation_sweep,
                 ExperimentKind::qubo_compare, ExperimentKind::grid_search,
                 ExperimentKind::pe_check, ExperimentKind::benchmark})
    if (to_string(k) == s) return k;
  throw InputError("unknown experiment kind: " + s);
}

enum class SystemSource { toy, random, file };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::regret_sweep;
  std::string id;  // experiment column; defaults to the kind name

  SystemSource source = SystemSource::toy;
  std::string system_file;
  Index n = 3;
  Index p = 2;
  std::vector<double> target_rho{0.5};
  double w_std = 0.01;
  double z_std = 0.01;
  bool system_per_replicate = false;

  std::vector<Index> T{200, 400, 600, 800, 1000, 1200, 1400, 1500};
  std::vector<Index> H;  // explicit exploration lengths (estimation, pe_check)
  std::vector<Index> L;  // explicit truncation lengths (estimation, pe_check)
  double c1 = 1.0;
  double c2 = 1.0;

  Index replicates = 20;
  std::uint64_t seed = 1;
  std::vector<SolverKind> solvers{SolverKind::sdp_gw};
  SolverKind oracle_solver = SolverKind::sdp_gw;
  SolverOptions solver;
  std::vector<Index> trials_grid{1, 10, 30};  // qubo_compare
  std::optional<double> bound_rho;

  // grid search
  Index T0 = 1500;
  std::vector<double> c1_exponents{0.0, 0.02, -0.02, 0.05, -0.05, 0.1, -0.1};
  std::vector<double> c2_grid{0.75, 1.0, 1.25};
  Index grid_repetitions = 1;

  long long timeout_ms = 0;
  bool record_timings = false;
  unsigned workers = 0;  // 0 = hardware concurrency
  std::string output;

  void validate() const {
    detail::require(replicates >= 1, "replicates must be at least 1");
    detail::require(!solvers.empty(), "solver list must be nonempty");
    detail::require(timeout_ms >= 0, "timeout_ms must be nonnegative");
    for (double r : target_rho)
      detail::require(r > 0.0 && r < 1.0, "target_rho values must lie in (0, 1)");
    detail::require(!target_rho.empty(), "target_rho list must be nonempty");
    detail::require(n >= 1 && p >= 1, "n and p must be positive");
    if (source == SystemSource::file)
      detail::require(!system_file.empty(), "system = file needs system_file");
    switch (kind) {
      case ExperimentKind::regret_sweep:
      case ExperimentKind::benchmark:
      case ExperimentKind::qubo_compare:
        detail::require(!T.empty(), "T grid must be nonempty");
        for (Index t : T) detail::require(t >= 1, "T values must be positive");
        break;
      case ExperimentKind::estimation_sweep:
      case ExperimentKind::pe_check:
        detail::require(!H.empty() && !L.empty(), "H and L grids must be nonempty");
        for (Index l : L) detail::require(l >= 1, "L values must be positive");
        for (Index h : H) detail::require(h >= 2, "H values must be at least 2");
        break;
      case ExperimentKind::grid_search:
        detail::require(!c1_exponents.empty() && !c2_grid.empty(), "empty grid");
        detail::require(T0 >= 2, "T0 must be at least 2");
        detail::require(grid_repetitions >= 1, "grid_repetitions must be at least 1");
        break;
    }
    if (kind == ExperimentKind::regret_sweep) {
      for (Index t : T) {
        const Index h = schedule_H(t, c1);
        const Index l = schedule_L(t, c2);
        detail::require(h < t && l <= h && h - l >= 1,
                        "schedule gives invalid (H, L) at T = " + std::to_string(t));
      }
      for (SolverKind s : solvers)
        detail::require(s != SolverKind::vertex_ascent,
                        "vertex_ascent cannot run the commit phase");
    }
    if (kind == ExperimentKind::qubo_compare) {
      for (Index t : T)
        detail::require(p * (t + 1) <= kBruteForceMaxDim,
                        "qubo_compare needs p(T+1) <= 26 for the brute-force oracle");
      for (Index r : trials_grid) detail::require(r >= 1, "trials must be positive");
    }
  }
};

namespace detail {
inline std::vector<Index> to_index(const std::vector<long long>& v) {
  return {v.begin(), v.end()};
}
}  // namespace detail

/// Reads an experiment config. A relative system_file resolves against `base_dir`.
inline ExperimentConfig experiment_from_keyvalues(const KeyValues& kv,
                                                  const std::string& base_dir = ".") {
  ExperimentConfig c;
  c.kind = parse_kind(kv.get("kind"));
  c.id = kv.get("id", to_string(c.kind));
  const std::string src = kv.get("system", "toy");
  if (src == "toy") c.source = SystemSource::toy;
  else if (src == "random") c.source = SystemSource::random;
  else if (src == "file") c.source = SystemSource::file;
  else throw InputError("system must be toy, random or file, got: " + src);
  if (kv.has("system_file")) {
    std::filesystem::path f = kv.get("system_file");
    if (f.is_relative()) f = std::filesystem::path(base_dir) / f;
    c.system_file = f.string();
  }
  c.n = kv.get_int("n", c.n);
  c.p = kv.get_int("p", c.p);
  if (kv.has("target_rho")) c.target_rho = kv.get_doubles("target_rho");
  c.w_std = kv.get_double("noise_w", c.w_std);
  c.z_std = kv.get_double("noise_z", c.z_std);
  c.system_per_replicate = kv.get_bool("system_per_replicate", c.system_per_replicate);
  if (kv.has("T")) c.T = detail::to_index(kv.get_ints("T"));
  if (kv.has("H")) c.H = detail::to_index(kv.get_ints("H"));
  if (kv.has("L")) c.L = detail::to_index(kv.get_ints("L"));
  c.c1 = kv.get_double("c1", c.c1);
  c.c2 = kv.get_double("c2", c.c2);
  c.replicates = kv.get_int("replicates", c.replicates);
  const long long seed = kv.get_int("seed", static_cast<long long>(c.seed));
  detail::require(seed >= 0, "seed must be nonnegative");
  c.seed = static_cast<std::uint64_t>(seed);
  if (kv.has("solvers")) {
    c.solvers.clear();
    for (const auto& w : kv.get_words("solvers")) c.solvers.push_back(parse_solver(w));
  }
  if (kv.has("oracle_solver")) c.oracle_solver = parse_solver(kv.get("oracle_solver"));
  c.solver.trials = kv.get_int("trials", c.solver.trials);
  c.solver.restarts = kv.get_int("restarts", c.solver.restarts);
  c.solver.max_iters = kv.get_int("max_iters", c.solver.max_iters);
  c.solver.rank = kv.get_int("sdp_rank", c.solver.rank);
  c.solver.tol = kv.get_double("sdp_tol", c.solver.tol);
  c.solver.max_sweeps = kv.get_int("max_sweeps", c.solver.max_sweeps);
  detail::require(c.solver.trials >= 1 && c.solver.restarts >= 1 &&
                      c.solver.max_iters >= 1 && c.solver.max_sweeps >= 1 &&
                      c.solver.tol > 0.0 && c.solver.rank >= 0,
                  "solver knobs must be positive");
  if (kv.has("trials_grid")) c.trials_grid = detail::to_index(kv.get_ints("trials_grid"));
  if (kv.has("bound_rho")) c.bound_rho = kv.get_double("bound_rho");
  c.T0 = kv.get_int("T0", c.T0);
  if (kv.has("c1_exponents")) c.c1_exponents = kv.get_doubles("c1_exponents");
  if (kv.has("c2_grid")) c.c2_grid = kv.get_doubles("c2_grid");
  c.grid_repetitions = kv.get_int("grid_repetitions", c.grid_repetitions);
  c.timeout_ms = kv.get_int("timeout_ms", c.timeout_ms);
  c.record_timings = kv.get_bool("timings", c.record_timings);
  const long long workers = kv.get_int("workers", 0);
  detail::require(workers >= 0, "workers must be nonnegative");
  c.workers = static_cast<unsigned>(workers);
  c.output = kv.get("output", "");
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  return experiment_from_keyvalues(KeyValues::load(path), dir.empty() ? "." : dir.string());
}

/// System used by replicate `index` at spectral radius `rho` (random source).
inline SystemParams experiment_system(const ExperimentConfig& c, double rho,
                                      std::uint64_t index = 0) {
  switch (c.source) {
    case SystemSource::toy: return toy_system(c.w_std);
    case SystemSource::file: return load_system(c.system_file);
    case SystemSource::random:
      return random_stable_system(c.n, c.p, rho, c.w_std, c.z_std,
                                  make_stream(c.seed, index, StreamRole::system));
  }
  throw InputError("unknown system source");
}

// ---------------------------------------------------------------------------
// CSV

/// Row-oriented table with a fixed column list.
class CsvTable {
 public:
  CsvTable(std::string kind, std::vector<std::string> columns)
      : kind_(std::move(kind)), columns_(std::move(columns)) {}

  const std::string& kind() const noexcept { return kind_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }

  void add(std::vector<std::string> row) {
    detail::require(row.size() == columns_.size(), "CSV row has the wrong arity");
    rows_.push_back(std::move(row));
  }

  /// Position of a named column.
  std::size_t column(const std::string& name) const {
    const auto it = std::find(columns_.begin(), columns_.end(), name);
    if (it == columns_.end()) throw InputError("no CSV column named " + name);
    return static_cast<std::size_t>(it - columns_.begin());
  }
  double number(std::size_t row, const std::string& name) const {
    return KeyValues::to_double(rows_.at(row).at(column(name)), name);
  }
  const std::string& text(std::size_t row, const std::string& name) const {
    return rows_.at(row).at(column(name));
  }

  void write(std::ostream& os) const {
    os << "# " << kCsvSchema << " kind=" << kind_ << " columns=";
    for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << columns_[i];
    os << '\n';
    for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << columns_[i];
    os << '\n';
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    }
  }

  static CsvTable read(std::istream& in) {
    std::string line;
    std::string kind;
    std::vector<std::string> cols;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line[0] == '#') {
        if (const auto k = line.find("kind="); k != std::string::npos) {
          const auto e = line.find(' ', k);
          kind = line.substr(k + 5, e == std::string::npos ? e : e - k - 5);
        }
        continue;
      }
      cols = split_csv(line);
      break;
    }
    detail::require(!cols.empty(), "CSV has no header row");
    CsvTable t(kind, cols);
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      t.add(split_csv(line));
    }
    return t;
  }

 private:
  static std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur.push_back(ch);
      }
    }
    out.push_back(cur);
    return out;
  }

  std::string kind_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

namespace detail {
inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}
inline std::string fmt(long long v) { return std::to_string(v); }
inline std::string fmt_index(Index v) { return std::to_string(v); }
inline std::string fmt_ms(double ms, bool enabled) {
  return enabled ? fmt(std::round(ms * 1000.0) / 1000.0) : "0";
}
inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return ms_since(t0);
}
inline Deadline run_deadline(const ExperimentConfig& c) {
  return Deadline::after(std::chrono::milliseconds(c.timeout_ms));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Regret sweep

inline const std::vector<std::string>& regret_columns() {
  static const std::vector<std::string> cols{
      "experiment", "seed",   "T",        "H",         "L",       "solver",
      "status",     "oracle_value", "policy_value", "regret", "r1", "r2",
      "r3",         "epsilon", "bound_r1", "bound_r23", "r3_abs",
      "realized_commit_reward", "oracle_solver", "runtime_ms"};
  return cols;
}

struct RegretRow {
  Index T = 0, H = 0, L = 0;
  Index replicate = 0;
  SolverKind solver = SolverKind::sdp_gw;
  bool timed_out = false;
  RegretReport report;
  double realized_commit_reward = 0.0;
  double runtime_ms = 0.0;
};

inline std::vector<std::string> regret_row_cells(const ExperimentConfig& c,
                                                 const RegretRow& r) {
  const auto num = [&](double v) { return r.timed_out ? std::string("0") : detail::fmt(v); };
  const RegretReport& rep = r.report;
  return {c.id,
          detail::fmt_index(r.replicate),
          detail::fmt_index(r.T),
          detail::fmt_index(r.H),
          detail::fmt_index(r.L),
          to_string(r.solver),
          r.timed_out ? "timeout" : "ok",
          num(rep.terms.oracle_value),
          num(rep.terms.policy_value),
          num(rep.terms.regret),
          num(rep.terms.r1),
          num(rep.terms.r2),
          num(rep.terms.r3),
          num(rep.epsilon),
          num(rep.bounds.bound_r1),
          num(rep.bounds.bound_r23),
          num(rep.r3_abs),
          num(r.realized_commit_reward),
          to_string(c.oracle_solver),
          detail::fmt_ms(r.runtime_ms, c.record_timings)};
}

/// One row per (T, replicate, solver). The oracle u* and the true-parameter
/// commit optimum are solved once per T (per solver for the latter) and
/// shared by all replicates.
inline std::vector<RegretRow> regret_sweep_rows(const ExperimentConfig& c,
                                                const SystemParams& sys) {
  struct Schedule {
    Index T, H, L;
  };
  std::vector<Schedule> ctx;
  for (Index t : c.T) ctx.push_back({t, schedule_H(t, c.c1), schedule_L(t, c.c2)});

  // oracle jobs: (T index, solver index)
  std::vector<std::pair<std::size_t, std::size_t>> oracle_jobs;
  for (std::size_t i = 0; i < ctx.size(); ++i)
    for (std::size_t s = 0; s < c.solvers.size(); ++s) oracle_jobs.emplace_back(i, s);
  std::vector<std::shared_ptr<OracleContext>> oracle_out(oracle_jobs.size());
  std::vector<char> oracle_timeout(oracle_jobs.size(), 0);
  const unsigned workers = c.workers ? c.workers : default_workers();

  // u* is identical for every solver, so it is solved once per T and copied.
  std::vector<std::optional<QuboSolution>> u_star(ctx.size());
  std::vector<char> star_timeout(ctx.size(), 0);
  parallel_for(ctx.size(), workers, [&](std::size_t i) {
    try {
      const RewardQuadratic s_T = build_true_reward(sys, ctx[i].T);
      const CounterRng rng = make_stream(c.seed, kOracleReplicate, StreamRole::rounding);
      u_star[i] = oracle_actions(s_T, c.oracle_solver, c.solver, rng.split(0),
                                 detail::run_deadline(c));
    } catch (const TimeoutError&) {
      star_timeout[i] = 1;
    }
  });
  parallel_for(oracle_jobs.size(), workers, [&](std::size_t j) {
    const auto [i, s] = oracle_jobs[j];
    if (star_timeout[i]) {
      oracle_timeout[j] = 1;
      return;
    }
    try {
      auto octx = std::make_shared<OracleContext>(OracleContext{
          ctx[i].T, ctx[i].H, build_true_reward(sys, ctx[i].T),
          build_true_reward(sys, ctx[i].T - ctx[i].H - 1), *u_star[i], {}});
      const CounterRng rng = make_stream(c.seed, kOracleReplicate, StreamRole::rounding);
      octx->u_tilde = oracle_actions(octx->s_sub, c.solvers[s], c.solver, rng.split(1),
                                     detail::run_deadline(c));
      oracle_out[j] = std::move(octx);
    } catch (const TimeoutError&) {
      oracle_timeout[j] = 1;
    }
  });

  std::vector<RegretRow> rows;
  for (std::size_t j = 0; j < oracle_jobs.size(); ++j) {
    const auto [i, s] = oracle_jobs[j];
    for (Index rep = 0; rep < c.replicates; ++rep) {
      RegretRow r;
      r.T = ctx[i].T;
      r.H = ctx[i].H;
      r.L = ctx[i].L;
      r.replicate = rep;
      r.solver = c.solvers[s];
      r.timed_out = oracle_timeout[j] != 0;
      rows.push_back(r);
    }
  }
  // run index -> oracle job index
  std::vector<std::size_t> job_of(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) job_of[k] = k / static_cast<std::size_t>(c.replicates);

  parallel_for(rows.size(), workers, [&](std::size_t k) {
    RegretRow& r = rows[k];
    if (r.timed_out) return;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      EtcConfig cfg;
      cfg.T = r.T;
      cfg.H = r.H;
      cfg.L = r.L;
      cfg.commit_solver = r.solver;
      cfg.solver = c.solver;
      cfg.seed = c.seed;
      cfg.replicate = static_cast<std::uint64_t>(r.replicate);
      const EtcRunRecord rec = run_etc(sys, cfg, detail::run_deadline(c));
      r.report = evaluate_regret(sys, *oracle_out[job_of[k]], rec, c.bound_rho);
      r.realized_commit_reward = rec.realized_commit_reward;
    } catch (const TimeoutError&) {
      r.timed_out = true;
    }
    r.runtime_ms = detail::elapsed_ms(t0);
  });

  std::stable_sort(rows.begin(), rows.end(), [](const RegretRow& a, const RegretRow& b) {
    return std::make_tuple(a.T, a.replicate, to_string(a.solver)) <
           std::make_tuple(b.T, b.replicate, to_string(b.solver));
  });
  return rows;
}

inline CsvTable regret_sweep(const ExperimentConfig& c) {
  const SystemParams sys = experiment_system(c, c.target_rho.front());
  CsvTable t("regret_sweep", regret_columns());
  for (const auto& r : regret_sweep_rows(c, sys)) t.add(regret_row_cells(c, r));
  return t;
}

// ---------------------------------------------------------------------------
// Oracle benchmark values

inline CsvTable benchmark(const ExperimentConfig& c) {
  const SystemParams sys = experiment_system(c, c.target_rho.front());
  struct Job {
    Index T;
    Index replicate;
    SolverKind solver;
    bool timed_out = false;
    QuboSolution sol;
    double ms = 0.0;
  };
  std::vector<Job> jobs;
  for (Index t : c.T)
    for (Index rep = 0; rep < c.replicates; ++rep)
      for (SolverKind s : c.solvers) jobs.push_back({t, rep, s, false, {}, 0.0});
  parallel_for(jobs.size(), c.workers ? c.workers : default_workers(), [&](std::size_t k) {
    Job& j = jobs[k];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const RewardQuadratic s_T = build_true_reward(sys, j.T);
      j.sol = oracle_actions(
          s_T, j.solver, c.solver,
          make_stream(c.seed, static_cast<std::uint64_t>(j.replicate), StreamRole::rounding),
          detail::run_deadline(c));
    } catch (const TimeoutError&) {
      j.timed_out = true;
    }
    j.ms = detail::elapsed_ms(t0);
  });
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    return std::make_tuple(a.T, a.replicate, to_string(a.solver)) <
           std::make_tuple(b.T, b.replicate, to_string(b.solver));
  });
  CsvTable t("benchmark", {"experiment", "seed", "T", "solver", "status", "value",
                           "relaxation_value", "runtime_ms"});
  for (const auto& j : jobs) {
    const auto num = [&](double v) { return j.timed_out ? std::string("0") : detail::fmt(v); };
    t.add({c.id, detail::fmt_index(j.replicate), detail::fmt_index(j.T), to_string(j.solver),
           j.timed_out ? "timeout" : "ok", num(j.sol.value),
           j.sol.relaxation_value ? num(*j.sol.relaxation_value) : "",
           detail::fmt_ms(j.ms, c.record_timings)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Estimation sweep

struct EstimationRow {
  double rho = 0.0;
  Index L = 0, H = 0, replicate = 0;
  bool timed_out = false;
  EstimationError error;
  bool rank_deficient = false;
  double ms = 0.0;
};

/// One trajectory of length max(H) + 1 per (rho, replicate); shorter H use its
/// prefix. With a random source the system is drawn once per rho from the
/// same stream (so only the spectral scaling differs) unless
/// system_per_replicate is set.
inline std::vector<EstimationRow> estimation_sweep_rows(const ExperimentConfig& c) {
  const Index h_max = *std::max_element(c.H.begin(), c.H.end());
  struct Task {
    std::size_t rho_index;
    Index replicate;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < c.target_rho.size(); ++i)
    for (Index rep = 0; rep < c.replicates; ++rep) tasks.push_back({i, rep});
  std::vector<std::vector<EstimationRow>> out(tasks.size());
  parallel_for(tasks.size(), c.workers ? c.workers : default_workers(), [&](std::size_t k) {
    const Task& task = tasks[k];
    const double rho = c.target_rho[task.rho_index];
    const SystemParams sys = experiment_system(
        c, rho, c.system_per_replicate ? static_cast<std::uint64_t>(task.replicate) : 0);
    const auto rep = static_cast<std::uint64_t>(task.replicate);
    CounterRng action_rng = make_stream(c.seed, rep, StreamRole::actions);
    const MatrixXd actions = sample_rademacher_actions(sys.p(), h_max + 1, action_rng);
    const Trajectory traj = simulate_trajectory(sys, actions, c.seed, rep);
    const Deadline deadline = detail::run_deadline(c);
    for (Index l : c.L) {
      const MarkovParams truth = true_markov(sys, l);
      for (Index h : c.H) {
        if (h - l < 1) continue;
        EstimationRow row;
        row.rho = rho;
        row.L = l;
        row.H = h;
        row.replicate = task.replicate;
        const auto t0 = std::chrono::steady_clock::now();
        if (deadline.expired()) {
          row.timed_out = true;
          out[k].push_back(row);
          continue;
        }
        const CovariateSet cov =
            build_covariates(actions.leftCols(h + 1), traj.rewards.head(h + 1), l);
        const MarkovParams est = estimate_markov(cov, sys.p(), l);
        row.error = estimation_error(est, truth);
        row.rank_deficient = est.rank_deficient();
        row.ms = detail::elapsed_ms(t0);
        out[k].push_back(row);
      }
    }
  });
  std::vector<EstimationRow> rows;
  for (auto& v : out) rows.insert(rows.end(), v.begin(), v.end());
  std::stable_sort(rows.begin(), rows.end(), [](const EstimationRow& a, const EstimationRow& b) {
    return std::make_tuple(a.rho, a.L, a.H, a.replicate) <
           std::make_tuple(b.rho, b.L, b.H, b.replicate);
  });
  return rows;
}

inline CsvTable estimation_sweep(const ExperimentConfig& c) {
  CsvTable t("estimation_sweep", {"experiment", "rho_A", "seed", "H", "L", "status",
                                  "rel_error", "frobenius", "rank_deficient", "runtime_ms"});
  for (const auto& r : estimation_sweep_rows(c)) {
    const auto num = [&](double v) { return r.timed_out ? std::string("0") : detail::fmt(v); };
    t.add({c.id, detail::fmt(r.rho), detail::fmt_index(r.replicate), detail::fmt_index(r.H),
           detail::fmt_index(r.L), r.timed_out ? "timeout" : "ok", num(r.error.relative),
           num(r.error.frobenius), r.rank_deficient ? "1" : "0",
           detail::fmt_ms(r.ms, c.record_timings)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// QUBO comparison against brute force

struct QuboCompareRow {
  Index T = 0, replicate = 0;
  SolverKind solver = SolverKind::sdp_gw;
  Index trials = 0;
  bool timed_out = false;
  double value = 0.0, brute = 0.0, relaxation = 0.0;
  double ms = 0.0;
};

/// Per (T, seed): the oracle objective of a random system solved by brute
/// force, by SDP+GW with r rounding trials and by sign iteration with r
/// restarts, for every r in trials_grid.
inline std::vector<QuboCompareRow> qubo_compare_rows(const ExperimentConfig& c) {
  struct Task {
    Index T, replicate;
  };
  std::vector<Task> tasks;
  for (Index t : c.T)
    for (Index rep = 0; rep < c.replicates; ++rep) tasks.push_back({t, rep});
  std::vector<std::vector<QuboCompareRow>> out(tasks.size());
  parallel_for(tasks.size(), c.workers ? c.workers : default_workers(), [&](std::size_t k) {
    const Task task = tasks[k];
    const auto rep = static_cast<std::uint64_t>(task.replicate);
    const SystemParams sys = experiment_system(c, c.target_rho.front(), rep);
    const RewardQuadratic s_T = build_true_reward(sys, task.T, 0.0);
    const auto w = s_T.qubo();
    const Deadline deadline = detail::run_deadline(c);
    const auto t0 = std::chrono::steady_clock::now();
    const auto mark_timeout = [&] {
      for (Index r : c.trials_grid)
        for (SolverKind s : {SolverKind::sdp_gw, SolverKind::sign_iter}) {
          QuboCompareRow row{task.T, task.replicate, s, r};
          row.timed_out = true;
          out[k].push_back(row);
        }
    };
    try {
      const QuboSolution brute = brute_force_max(w, deadline);
      const CounterRng rng = make_stream(c.seed, rep, StreamRole::rounding);
      const Index rank = c.solver.rank > 0 ? c.solver.rank : default_sdp_rank(w.dim());
      const ElliptopeSolution rel = solve_elliptope_sdp(w, rank, c.solver.tol,
                                                        c.solver.max_sweeps, rng.split(0),
                                                        deadline);
      const double brute_ms = detail::elapsed_ms(t0);
      for (Index r : c.trials_grid) {
        auto t1 = std::chrono::steady_clock::now();
        const QuboSolution gw = gw_round(rel.factor, w, r, rng.split(1), deadline);
        QuboCompareRow a{task.T, task.replicate, SolverKind::sdp_gw, r};
        a.value = gw.value;
        a.brute = brute.value;
        a.relaxation = rel.value;
        a.ms = detail::elapsed_ms(t1) + brute_ms;
        out[k].push_back(a);
        t1 = std::chrono::steady_clock::now();
        const QuboSolution si =
            sign_iteration(w, r, c.solver.max_iters, rng.split(2), deadline);
        QuboCompareRow b{task.T, task.replicate, SolverKind::sign_iter, r};
        b.value = si.value;
        b.brute = brute.value;
        b.relaxation = rel.value;
        b.ms = detail::elapsed_ms(t1);
        out[k].push_back(b);
      }
    } catch (const TimeoutError&) {
      out[k].clear();
      mark_timeout();
    }
  });
  std::vector<QuboCompareRow> rows;
  for (auto& v : out) rows.insert(rows.end(), v.begin(), v.end());
  std::stable_sort(rows.begin(), rows.end(), [](const QuboCompareRow& a, const QuboCompareRow& b) {
    return std::make_tuple(a.T, a.replicate, to_string(a.solver), a.trials) <
           std::make_tuple(b.T, b.replicate, to_string(b.solver), b.trials);
  });
  return rows;
}

/// value / brute, with 0/0 read as 1.
inline double solution_ratio(double value, double brute) {
  if (brute == 0.0) return value == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return value / brute;
}

inline CsvTable qubo_compare(const ExperimentConfig& c) {
  CsvTable t("qubo_compare", {"experiment", "seed", "T", "solver", "trials", "status", "value",
                              "brute_value", "ratio", "relaxation_value", "runtime_ms"});
  for (const auto& r : qubo_compare_rows(c)) {
    const auto num = [&](double v) { return r.timed_out ? std::string("0") : detail::fmt(v); };
    t.add({c.id, detail::fmt_index(r.replicate), detail::fmt_index(r.T), to_string(r.solver),
           detail::fmt_index(r.trials), r.timed_out ? "timeout" : "ok", num(r.value),
           num(r.brute), num(solution_ratio(r.value, r.brute)), num(r.relaxation),
           detail::fmt_ms(r.ms, c.record_timings)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Persistence-of-excitation check

struct PeRow {
  Index replicate = 0, L = 0, H = 0;
  double lambda_min = 0.0, lambda_max = 0.0;
};

/// lambda_min / lambda_max of the gram from Rademacher actions alone.
inline std::vector<PeRow> pe_check_rows(const ExperimentConfig& c) {
  std::vector<std::tuple<Index, Index, Index>> tasks;
  for (Index l : c.L)
    for (Index h : c.H)
      for (Index rep = 0; rep < c.replicates; ++rep) tasks.emplace_back(l, h, rep);
  std::vector<PeRow> rows(tasks.size());
  parallel_for(tasks.size(), c.workers ? c.workers : default_workers(), [&](std::size_t k) {
    const auto [l, h, rep] = tasks[k];
    detail::require(h - l >= 1, "pe_check needs H - L >= 1");
    CounterRng rng = make_stream(c.seed, static_cast<std::uint64_t>(rep), StreamRole::actions);
    const MatrixXd actions = sample_rademacher_actions(c.p, h + 1, rng);
    const CovariateSet cov = build_covariates(actions, VectorXd::Zero(h + 1), l);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov.gram, Eigen::EigenvaluesOnly);
    rows[k] = {rep, l, h, es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
  });
  std::stable_sort(rows.begin(), rows.end(), [](const PeRow& a, const PeRow& b) {
    return std::make_tuple(a.L, a.H, a.replicate) < std::make_tuple(b.L, b.H, b.replicate);
  });
  return rows;
}

inline CsvTable pe_check(const ExperimentConfig& c) {
  CsvTable t("pe_check", {"experiment", "seed", "p", "L", "H", "lambda_min", "lambda_max",
                          "pe_threshold", "lambda_max_cap", "pe_pass"});
  for (const auto& r : pe_check_rows(c)) {
    const double thr = static_cast<double>(r.H - r.L) / 4.0;
    const double cap = static_cast<double>(c.p * c.p * r.L * (r.H - r.L));
    t.add({c.id, detail::fmt_index(r.replicate), detail::fmt_index(c.p), detail::fmt_index(r.L),
           detail::fmt_index(r.H), detail::fmt(r.lambda_min), detail::fmt(r.lambda_max),
           detail::fmt(thr), detail::fmt(cap), r.lambda_min >= thr ? "1" : "0"});
  }
  return t;
}

/// Fraction of rows whose lambda_min reaches (H - L) / 4.
inline double pe_pass_fraction(const CsvTable& t) {
  if (t.size() == 0) return 0.0;
  double pass = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) pass += t.number(i, "pe_pass");
  return pass / static_cast<double>(t.size());
}

// ---------------------------------------------------------------------------
// Grid search over (c1, c2)

struct GridCell {
  double c1_exponent = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  Index H = 0;
  Index L = 0;
  double mean_regret = 0.0;
  bool feasible = true;
  bool timed_out = false;
};

struct GridResult {
  std::vector<GridCell> cells;  // c1 ascending, then c2 ascending
  std::size_t best = 0;
  Index evaluations = 0;  // ETC runs performed
};

/// Mean regret at T0 over `replicates` seeds for every grid cell. The
/// arg-min wins; ties go to the smaller c1, then the smaller c2.
inline GridResult grid_search(const SystemParams& sys, const ExperimentConfig& c,
                              std::uint64_t seed) {
  detail::require(!c.c1_exponents.empty() && !c.c2_grid.empty(), "empty grid");
  const SolverKind solver = c.solvers.front();
  GridResult res;
  for (double e : c.c1_exponents)
    for (double c2 : c.c2_grid) {
      GridCell cell;
      cell.c1_exponent = e;
      cell.c1 = std::pow(static_cast<double>(c.T0), e);
      cell.c2 = c2;
      cell.H = schedule_H(c.T0, cell.c1);
      cell.L = schedule_L(c.T0, c2);
      cell.feasible = cell.H < c.T0 && cell.L <= cell.H && cell.H - cell.L >= 1;
      res.cells.push_back(cell);
    }
  std::sort(res.cells.begin(), res.cells.end(), [](const GridCell& a, const GridCell& b) {
    return std::tie(a.c1, a.c2) < std::tie(b.c1, b.c2);
  });
  const unsigned workers = c.workers ? c.workers : default_workers();

  // u* once; the true commit optimum once per distinct H
  const RewardQuadratic s_T = build_true_reward(sys, c.T0);
  const CounterRng orng = make_stream(seed, kOracleReplicate, StreamRole::rounding);
  const QuboSolution u_star = oracle_actions(s_T, c.oracle_solver, c.solver, orng.split(0));
  std::vector<Index> hs;
  for (const auto& cell : res.cells)
    if (cell.feasible) hs.push_back(cell.H);
  std::sort(hs.begin(), hs.end());
  hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
  std::vector<std::shared_ptr<OracleContext>> octx(hs.size());
  parallel_for(hs.size(), workers, [&](std::size_t i) {
    auto ctx = std::make_shared<OracleContext>(OracleContext{
        c.T0, hs[i], s_T, build_true_reward(sys, c.T0 - hs[i] - 1), u_star, {}});
    ctx->u_tilde = oracle_actions(ctx->s_sub, solver, c.solver, orng.split(1));
    octx[i] = std::move(ctx);
  });

  std::vector<std::pair<std::size_t, Index>> runs;
  for (std::size_t i = 0; i < res.cells.size(); ++i)
    if (res.cells[i].feasible)
      for (Index rep = 0; rep < c.replicates; ++rep) runs.emplace_back(i, rep);
  std::vector<double> regret(runs.size(), 0.0);
  std::vector<char> timeout(runs.size(), 0);
  parallel_for(runs.size(), workers, [&](std::size_t k) {
    const auto [i, rep] = runs[k];
    const GridCell& cell = res.cells[i];
    const auto h_it = std::lower_bound(hs.begin(), hs.end(), cell.H);
    const OracleContext& ctx = *octx[static_cast<std::size_t>(h_it - hs.begin())];
    EtcConfig cfg;
    cfg.T = c.T0;
    cfg.H = cell.H;
    cfg.L = cell.L;
    cfg.commit_solver = solver;
    cfg.solver = c.solver;
    cfg.seed = seed;
    cfg.replicate = static_cast<std::uint64_t>(rep);
    try {
      const EtcRunRecord rec = run_etc(sys, cfg, detail::run_deadline(c));
      regret[k] = evaluate_regret(sys, ctx, rec, c.bound_rho).terms.regret;
    } catch (const TimeoutError&) {
      timeout[k] = 1;
    }
  });
  res.evaluations = static_cast<Index>(runs.size());
  for (std::size_t k = 0; k < runs.size(); ++k) {
    GridCell& cell = res.cells[runs[k].first];
    cell.mean_regret += regret[k] / static_cast<double>(c.replicates);
    if (timeout[k]) cell.timed_out = true;
  }
  bool found = false;
  for (std::size_t i = 0; i < res.cells.size(); ++i) {
    const GridCell& cell = res.cells[i];
    if (!cell.feasible || cell.timed_out) continue;
    // strict comparison keeps the earlier (smaller c1, then c2) cell on ties
    if (!found || cell.mean_regret < res.cells[res.best].mean_regret) {
      res.best = i;
      found = true;
    }
  }
  if (!found) throw DiagnosticError("no grid cell produced a regret estimate");
  return res;
}

inline CsvTable grid_search_table(const ExperimentConfig& c) {
  CsvTable t("grid_search", {"experiment", "target_rho", "repetition", "T0", "c1_exponent",
                             "c1", "c2", "H", "L", "status", "mean_regret", "selected"});
  const bool per_rho = c.source == SystemSource::random;
  const std::vector<double> rhos = per_rho ? c.target_rho : std::vector<double>{0.0};
  for (double rho : rhos)
    for (Index g = 0; g < c.grid_repetitions; ++g) {
      const auto gi = static_cast<std::uint64_t>(g);
      const SystemParams sys = experiment_system(c, rho, gi);
      const double shown_rho = per_rho ? rho : sys.rho_A();
      const GridResult res = grid_search(sys, c, c.seed + gi * 0x9E3779B9ull);
      for (std::size_t i = 0; i < res.cells.size(); ++i) {
        const GridCell& cell = res.cells[i];
        const std::string status =
            !cell.feasible ? "infeasible" : (cell.timed_out ? "timeout" : "ok");
        t.add({c.id, detail::fmt(shown_rho), detail::fmt_index(g), detail::fmt_index(c.T0),
               detail::fmt(cell.c1_exponent), detail::fmt(cell.c1), detail::fmt(cell.c2),
               detail::fmt_index(cell.H), detail::fmt_index(cell.L), status,
               status == "ok" ? detail::fmt(cell.mean_regret) : "0",
               i == res.best ? "1" : "0"});
      }
    }
  return t;
}

// ---------------------------------------------------------------------------

inline CsvTable run_experiment_table(const ExperimentConfig& c) {
  c.validate();
  switch (c.kind) {
    case ExperimentKind::regret_sweep: return regret_sweep(c);
    case ExperimentKind::estimation_sweep: return estimation_sweep(c);
    case ExperimentKind::qubo_compare: return qubo_compare(c);
    case ExperimentKind::grid_search: return grid_search_table(c);
    case ExperimentKind::pe_check: return pe_check(c);
    case ExperimentKind::benchmark: return benchmark(c);
  }
  throw InputError("unknown experiment kind");
}

/// Validates the config and the output path, then computes and writes.
inline CsvTable run_experiment(const ExperimentConfig& c) {
  c.validate();
  std::ofstream out;
  if (!c.output.empty()) {
    out.open(c.output, std::ios::out | std::ios::trunc);
    if (!out) throw InputError("cannot write output file: " + c.output);
  }
  CsvTable t = run_experiment_table(c);
  if (out.is_open()) {
    t.write(out);
    if (!out) throw InputError("failed writing output file: " + c.output);
  }
  return t;
}

}  // namespace etcb
