#pragma once

// Subcommand dispatch for the opdyn executable. Every artifact is a CSV whose
// first line records the config hash and seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "opdyn/agent_sim.hpp"
#include "opdyn/config.hpp"
#include "opdyn/error.hpp"
#include "opdyn/experiments.hpp"
#include "opdyn/format.hpp"
#include "opdyn/meanfield.hpp"
#include "opdyn/measures.hpp"
#include "opdyn/moments.hpp"

namespace opdyn {

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate", "meanfield", "moments", "concentrate", "compare"};
  return names;
}

/// Hash of everything that can change an artifact's contents. The output
/// directory and the worker count are excluded.
inline std::uint64_t artifact_hash(const RunConfig& cfg) {
  auto j = serialize(cfg);
  j.erase("output_dir");
  j["concentrate"].erase("threads");
  return fnv1a64(j.dump());
}

namespace detail {

class ArtifactWriter {
 public:
  ArtifactWriter(const RunConfig& cfg, std::string command, std::ostream& log)
      : dir_(cfg.output_dir), log_(log) {
    header_ = "# opdyn command=" + command + " config_hash=" + format_hex64(artifact_hash(cfg)) +
              " seed=" + std::to_string(cfg.seed) + "\n";
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail("cli", "cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& body) {
    const auto path = dir_ / name;
    std::ofstream os(path, std::ios::binary);
    os << header_ << body;
    if (!os) fail("cli", "cannot write " + path.string());
    log_ << "wrote " << path.string() << "\n";
  }

 private:
  std::filesystem::path dir_;
  std::ostream& log_;
  std::string header_;
};

inline std::pair<double, double> meanfield_domain(const RunConfig& cfg) {
  if (cfg.meanfield.hi > cfg.meanfield.lo) return {cfg.meanfield.lo, cfg.meanfield.hi};
  return support_hull(cfg.initial, cfg.kernel.environment);
}

inline SimConfig sim_config(const RunConfig& cfg) {
  SimConfig sim;
  sim.n = cfg.simulate.n;
  sim.kernel = cfg.kernel;
  sim.initial = cfg.initial;
  sim.horizon = cfg.simulate.tau;
  sim.snapshot_times = cfg.simulate.snapshot_times;
  sim.seed = cfg.seed;
  sim.symmetric = cfg.simulate.symmetric;
  sim.allow_self = cfg.simulate.allow_self;
  return sim;
}

inline std::vector<GridSnapshot> solve_meanfield(const RunConfig& cfg, double horizon, std::vector<double> times,
                                                 std::ostream& log) {
  const auto [lo, hi] = meanfield_domain(cfg);
  const auto& mf = cfg.meanfield;
  SolverConfig solver{lo, hi, mf.cells, mf.dt, horizon, std::move(times), mf.scheme};
  std::size_t next_report = 1;
  const double report_every = horizon / 10.0;
  return integrate_with(initial_on_grid(cfg.initial, lo, hi, mf.cells), cfg.kernel, solver,
                        [&](double t, std::span<const double>) {
                          if (report_every > 0.0 && t >= report_every * static_cast<double>(next_report)) {
                            log << "meanfield: t=" << format_real(t) << "\n";
                            ++next_report;
                          }
                        });
}

inline MomentParams moment_params(const RunConfig& cfg) {
  const auto* internal = std::get_if<ConstantWeight>(&cfg.kernel.internal);
  const auto* external = std::get_if<ConstantWeight>(&cfg.kernel.external);
  if (!internal) fail("moments", "moment system requires a constant internal weight");
  if (cfg.kernel.alpha < 1.0 && !external) fail("moments", "moment system requires a constant external weight");
  if (initial_dim(cfg.initial) != 1) fail("moments", "moment system is implemented along the first axis of d = 1");
  MomentParams p;
  p.alpha = cfg.kernel.alpha;
  p.omega = internal->omega;
  p.upsilon = external ? external->omega : 0.0;
  for (int k = 1; k <= cfg.moments.K; ++k) {
    p.initial_moments.push_back(initial_moment(cfg.initial, k));
    if (has_environment(cfg.kernel.environment)) p.env_moments.push_back(env_moment(cfg.kernel.environment, k));
  }
  return p;
}

inline void cmd_simulate(const RunConfig& cfg, ArtifactWriter& out, std::ostream& log) {
  const auto sim = sim_config(cfg);
  std::size_t emitted = 0;
  const auto result = run_with(sim, [&](const SimState& s) {
    if (s.update_count % (100 * sim.n) == 0) log << "simulate: t=" << format_real(s.t) << "\n";
  });
  std::ostringstream os;
  write_measure_header(os);
  for (const auto& snap : result.snapshots) {
    write_measure_rows(os, snap.t, snap.measure);
    ++emitted;
  }
  log << "simulate: " << emitted << " snapshots, " << result.final_state.update_count << " jumps\n";
  out.write("trajectory.csv", os.str());
}

inline void cmd_meanfield(const RunConfig& cfg, ArtifactWriter& out, std::ostream& log) {
  const auto snaps = solve_meanfield(cfg, cfg.meanfield.T, cfg.meanfield.snapshot_times, log);
  std::ostringstream summary;
  summary << "t,mass,mean,variance,sup_density\n";
  for (const auto& s : snaps) {
    std::ostringstream os;
    write_measure_header(os);
    write_measure_rows(os, s.t, s.measure);
    out.write("meanfield_t" + format_real(s.t) + ".csv", os.str());
    summary << format_real(s.t) << ',' << format_real(s.measure.total_mass()) << ','
            << format_real(moment(s.measure, 1)) << ',' << format_real(variance(s.measure)) << ','
            << format_real(sup_density(s.measure)) << '\n';
  }
  out.write("meanfield_summary.csv", summary.str());
}

inline void cmd_moments(const RunConfig& cfg, ArtifactWriter& out, std::ostream& log) {
  const auto p = moment_params(cfg);
  const auto traj = integrate_moments(p, cfg.moments.T, cfg.moments.dt, cfg.moments.record_every);
  std::ostringstream os;
  os << "t,k,value\n";
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    for (int k = 1; k <= traj.order(); ++k)
      os << format_real(traj.times[i]) << ',' << k << ',' << format_real(traj.at(k, i)) << '\n';
  out.write("moments.csv", os.str());

  if (p.alpha < 1.0) {
    const auto lim = limit_moments(p);
    std::ostringstream ls;
    ls << "k,value\n";
    for (std::size_t k = 0; k < lim.size(); ++k) ls << k + 1 << ',' << format_real(lim[k]) << '\n';
    out.write("limits.csv", ls.str());
  } else {
    log << "moments: alpha = 1, limits.csv not written (limit recursion requires alpha_bar > 0)\n";
  }
}

inline void cmd_concentrate(const RunConfig& cfg, ArtifactWriter& out, std::ostream& log) {
  if (cfg.concentrate.replicas < 20)
    log << "concentrate: warning: fewer than 20 replicas per n; tail estimates will be coarse\n";
  ConcentrationConfig cc;
  cc.kernel = cfg.kernel;
  cc.initial = cfg.initial;
  cc.horizon = cfg.concentrate.tau;
  cc.sample_times = cfg.concentrate.sample_times;
  cc.n_list = cfg.concentrate.n_list;
  cc.replicas = cfg.concentrate.replicas;
  cc.eps_list = cfg.concentrate.eps_list;
  cc.base_seed = cfg.seed;
  cc.threads = cfg.concentrate.threads;
  cc.lo = cfg.meanfield.lo;
  cc.hi = cfg.meanfield.hi;
  cc.cells = cfg.concentrate.cells;
  cc.dt = cfg.concentrate.dt;
  cc.scheme = cfg.concentrate.scheme;
  cc.check_discretization = cfg.concentrate.check_discretization;

  log << "concentrate: " << cc.n_list.size() * cc.replicas << " replicas on " << cc.threads << " worker(s)\n";
  const auto tbl = run_concentration(cc);
  if (!tbl.within_theorem_hypotheses) log << "concentrate: kernel is outside theorem hypotheses\n";

  std::string labels = "# within_theorem_hypotheses=" + std::string(tbl.within_theorem_hypotheses ? "true" : "false") +
                       " discretization_error=" + format_real(tbl.discretization_error) + "\n";
  if (!tbl.within_theorem_hypotheses) labels += "# outside theorem hypotheses\n";

  std::ostringstream dev;
  dev << labels << "n,replica,D\n";
  for (const auto& r : tbl.rows) dev << r.n << ',' << r.replica << ',' << format_real(r.D) << '\n';
  out.write("deviations.csv", dev.str());

  auto eps_list = cc.eps_list;
  if (eps_list.empty()) {
    const auto med = median_by_n(tbl);
    eps_list.push_back(med[std::min<std::size_t>(1, med.size() - 1)].second);
  }
  std::ostringstream rates, fits;
  rates << labels << "eps,n,tail_prob\n";
  fits << "eps,slope,stderr\n";
  for (double eps : eps_list) {
    for (const auto& pt : tail_points(tbl, eps))
      rates << format_real(eps) << ',' << pt.n << ',' << format_real(pt.prob) << '\n';
    try {
      const auto fit = tail_rates(tbl, eps);
      fits << format_real(eps) << ',' << format_real(fit.slope) << ',' << format_real(fit.stderr_slope) << '\n';
      log << "concentrate: eps=" << format_real(eps) << " slope=" << format_real(fit.slope)
          << " stderr=" << format_real(fit.stderr_slope) << "\n";
    } catch (const Error& e) {
      fits << format_real(eps) << ",nan,nan\n";
      log << "concentrate: eps=" << format_real(eps) << ": " << e.what() << "\n";
    }
  }
  rates << fits.str();
  out.write("rates.csv", rates.str());
}

inline void cmd_compare(const RunConfig& cfg, ArtifactWriter& out, std::ostream& log) {
  if (initial_dim(cfg.initial) != 1) fail("cli", "compare requires d = 1");
  const auto sim = sim_config(cfg);
  const auto particles = run(sim);
  const auto field = solve_meanfield(cfg, sim.horizon, sim.snapshot_times, log);
  std::ostringstream os;
  os << "t,W1\n";
  for (std::size_t s = 0; s < particles.size(); ++s)
    os << format_real(particles[s].t) << ',' << format_real(wasserstein1_1d(particles[s].measure, field[s].measure))
       << '\n';
  out.write("compare.csv", os.str());
}

}  // namespace detail

/// Runs one subcommand, writing artifacts under cfg.output_dir. Module
/// failures propagate as opdyn::Error.
inline void dispatch(const RunConfig& cfg, const std::string& command, std::ostream& log = std::cerr) {
  using namespace detail;
  void (*handler)(const RunConfig&, ArtifactWriter&, std::ostream&) = nullptr;
  if (command == "simulate") handler = cmd_simulate;
  if (command == "meanfield") handler = cmd_meanfield;
  if (command == "moments") handler = cmd_moments;
  if (command == "concentrate") handler = cmd_concentrate;
  if (command == "compare") handler = cmd_compare;
  if (!handler) throw ConfigError({"unknown subcommand \"" + command + "\""});
  ArtifactWriter out(cfg, command, log);
  handler(cfg, out, log);
}

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Full command line: `opdyn <command> --config <path> [--seed] [--out] [--threads]`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"opdyn: opinion dynamics simulator, mean-field solver and moment system"};
  std::string command, config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<unsigned> threads;
  app.add_option("command", command, "simulate | meanfield | moments | concentrate | compare")->required();
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_option("--threads", threads, "replica workers (concentrate only)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }
  if (std::find(subcommands().begin(), subcommands().end(), command) == subcommands().end()) {
    err << "error: unknown subcommand \"" << command << "\"\n" << app.help();
    return kExitConfig;
  }

  RunConfig cfg;
  try {
    std::ifstream is(config_path, std::ios::binary);
    if (!is) throw ConfigError({"cannot read config file " + config_path});
    std::ostringstream text;
    text << is.rdbuf();
    cfg = parse_config(text.str());
  } catch (const ConfigError& e) {
    err << "config error:\n";
    for (const auto& v : e.violations()) err << "  " << v << "\n";
    return kExitConfig;
  }
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.output_dir = *out_dir;
  if (threads) cfg.concentrate.threads = *threads;

  try {
    dispatch(cfg, command, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error [" << e.module() << "]: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace opdyn
