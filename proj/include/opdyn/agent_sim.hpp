#pragma once

// Event-driven simulation of the finite-population gossip process. Each of
// the n agents carries a rate-1 Poisson clock, so jumps arrive at rate n.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "opdyn/error.hpp"
#include "opdyn/kernels.hpp"
#include "opdyn/measures.hpp"

namespace opdyn {

// ---------------------------------------------------------------------------
// Initial laws mu_0.

struct InitialUniform {
  double a = 0.0;
  double b = 1.0;
  bool operator==(const InitialUniform&) const = default;
};

/// iid draws from a finite atomic law (any dimension).
struct InitialAtoms {
  AtomicMeasure law;
  bool operator==(const InitialAtoms&) const = default;
};

struct InitialGrid {
  GridMeasure1D density;
  bool operator==(const InitialGrid&) const = default;
};

using InitialLaw = std::variant<InitialUniform, InitialAtoms, InitialGrid>;

inline std::size_t initial_dim(const InitialLaw& law) {
  if (const auto* atoms = std::get_if<InitialAtoms>(&law)) return atoms->law.dim();
  return 1;
}

inline void validate(const InitialLaw& law) {
  std::visit(detail::overloaded{
                 [](const InitialUniform& u) {
                   if (!(u.b > u.a)) detail::fail("agent_sim", "uniform initial law requires b > a");
                 },
                 [](const InitialAtoms& a) {
                   if (a.law.empty() || !a.law.is_normalized(1e-9))
                     detail::fail("agent_sim", "initial atoms must be a normalized non-empty measure");
                 },
                 [](const InitialGrid& g) {
                   if (!g.density.is_normalized()) detail::fail("agent_sim", "initial grid must be normalized");
                 },
             },
             law);
}

/// Smallest interval containing the support (first coordinate).
inline std::pair<double, double> initial_hull(const InitialLaw& law) {
  return std::visit(detail::overloaded{
                        [](const InitialUniform& u) { return std::pair{u.a, u.b}; },
                        [](const InitialAtoms& a) {
                          double lo = a.law.position(0)[0], hi = lo;
                          for (std::size_t i = 0; i < a.law.size(); ++i) {
                            lo = std::min(lo, a.law.position(i)[0]);
                            hi = std::max(hi, a.law.position(i)[0]);
                          }
                          return std::pair{lo, hi};
                        },
                        [](const InitialGrid& g) { return std::pair{g.density.lo(), g.density.hi()}; },
                    },
                    law);
}

/// m^(k)_0 along the first axis.
inline double initial_moment(const InitialLaw& law, int k) {
  return std::visit(detail::overloaded{
                        [&](const InitialUniform& u) {
                          return (detail::ipow(u.b, k + 1) - detail::ipow(u.a, k + 1)) / ((k + 1) * (u.b - u.a));
                        },
                        [&](const InitialAtoms& a) {
                          double acc = 0.0;
                          for (std::size_t i = 0; i < a.law.size(); ++i)
                            acc += a.law.weight(i) * detail::ipow(a.law.position(i)[0], k);
                          return acc / a.law.total_mass();
                        },
                        [&](const InitialGrid& g) { return moment(g.density, k) / g.density.total_mass(); },
                    },
                    law);
}

/// mu_0 realized on the grid (lo, hi, m).
inline GridMeasure1D initial_on_grid(const InitialLaw& law, double lo, double hi, std::size_t m) {
  return std::visit(detail::overloaded{
                        [&](const InitialUniform& u) { return GridMeasure1D::uniform(lo, hi, m, u.a, u.b); },
                        [&](const InitialAtoms& a) {
                          if (a.law.dim() != 1) detail::fail("agent_sim", "grid initial law must be 1-D");
                          return bin_to_grid(a.law, lo, hi, m);
                        },
                        [&](const InitialGrid& g) {
                          if (g.density.lo() == lo && g.density.hi() == hi && g.density.size() == m)
                            return g.density;
                          return bin_to_grid(to_atoms(g.density), lo, hi, m);
                        },
                    },
                    law);
}

/// Draws iid initial opinions; histogram laws precompute their inverse CDF.
class InitialSampler {
 public:
  explicit InitialSampler(const InitialLaw& law) : law_(law) {
    if (const auto* g = std::get_if<InitialGrid>(&law))
      grid_sampler_ = detail::CellSampler::from_cells(g->density.lo(), g->density.hi(), g->density.cells());
  }

  void operator()(Rng& rng, std::span<double> out) const {
    std::visit(detail::overloaded{
                   [&](const InitialUniform& u) { out[0] = std::uniform_real_distribution<double>(u.a, u.b)(rng); },
                   [&](const InitialAtoms& a) {
                     const double u = std::uniform_real_distribution<double>(0.0, a.law.total_mass())(rng);
                     double acc = 0.0;
                     std::size_t pick = a.law.size() - 1;
                     for (std::size_t i = 0; i < a.law.size(); ++i) {
                       acc += a.law.weight(i);
                       if (u < acc) {
                         pick = i;
                         break;
                       }
                     }
                     const auto p = a.law.position(pick);
                     std::copy(p.begin(), p.end(), out.begin());
                   },
                   [&](const InitialGrid&) { out[0] = grid_sampler_(rng); },
               },
               law_);
  }

 private:
  const InitialLaw& law_;
  detail::CellSampler grid_sampler_;
};

// ---------------------------------------------------------------------------

struct SimConfig {
  std::size_t n = 1000;
  KernelSpec kernel;
  InitialLaw initial = InitialUniform{};
  double horizon = 10.0;
  std::vector<double> snapshot_times;  // sorted, within [0, horizon]
  std::uint64_t seed = 0;
  bool symmetric = false;
  bool allow_self = false;

  void validate() const {
    if (n < 2) detail::fail("agent_sim", "need at least two agents");
    kernel.validate();
    opdyn::validate(initial);
    if (!(horizon >= 0.0)) detail::fail("agent_sim", "horizon must be >= 0");
    if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end()))
      detail::fail("agent_sim", "snapshot times must be sorted");
    for (double s : snapshot_times)
      if (s < 0.0 || s > horizon) detail::fail("agent_sim", "snapshot times must lie in [0, horizon]");
    const std::size_t env_dim = environment_dim(kernel.environment);
    if (env_dim != 0 && env_dim != initial_dim(initial))
      detail::fail("agent_sim", "environment dimension differs from opinion dimension");
  }

  bool operator==(const SimConfig&) const = default;
};

/// One stochastic replica.
struct SimState {
  std::size_t dim = 1;
  std::vector<double> opinions;  // n * dim, row-major
  double t = 0.0;
  Rng rng;
  std::uint64_t update_count = 0;

  std::size_t size() const noexcept { return opinions.size() / dim; }
  std::span<const double> opinion(std::size_t a) const { return {opinions.data() + a * dim, dim}; }
  std::span<double> opinion(std::size_t a) { return {opinions.data() + a * dim, dim}; }

  AtomicMeasure empirical() const { return AtomicMeasure::empirical(dim, opinions); }
};

/// Draws n iid initial opinions from cfg.initial using a generator seeded
/// with cfg.seed.
inline SimState make_state(const SimConfig& cfg) {
  SimState s;
  s.dim = initial_dim(cfg.initial);
  s.rng.seed(cfg.seed);
  s.opinions.resize(cfg.n * s.dim);
  const InitialSampler sample(cfg.initial);
  for (std::size_t a = 0; a < cfg.n; ++a) sample(s.rng, s.opinion(a));
  return s;
}

namespace detail {

inline double next_interarrival(SimState& s) {
  return std::exponential_distribution<double>(static_cast<double>(s.size()))(s.rng);
}

// Applies one opinion update without touching the clock.
inline void jump(SimState& s, const KernelSpec& k, bool symmetric, bool allow_self, std::vector<double>& scratch) {
  const std::size_t n = s.size();
  const auto a = std::uniform_int_distribution<std::size_t>(0, n - 1)(s.rng);
  std::size_t b;
  if (allow_self) {
    b = std::uniform_int_distribution<std::size_t>(0, n - 1)(s.rng);
  } else {
    b = std::uniform_int_distribution<std::size_t>(0, n - 2)(s.rng);
    if (b >= a) ++b;
  }
  const std::size_t d = s.dim;
  scratch.resize(2 * d);
  std::span<double> old_a(scratch.data(), d), old_b(scratch.data() + d, d);
  std::copy_n(s.opinion(a).begin(), d, old_a.begin());
  std::copy_n(s.opinion(b).begin(), d, old_b.begin());

  if (draw_internal_branch(k, s.rng)) {
    const double w = internal_weight(k, old_a, old_b, s.rng);
    convex(old_a, old_b, w, s.opinion(a));
    if (symmetric) convex(old_b, old_a, w, s.opinion(b));
  } else {
    double env_scratch = 0.0;
    const auto e = sample_environment(k.environment, s.rng, env_scratch);
    if (e.size() != d) fail("kernels", "environment dimension mismatch");
    const double u = external_weight(k, old_a, e, s.rng);
    convex(old_a, e, u, s.opinion(a));
  }
  ++s.update_count;
}

}  // namespace detail

/// One jump: advance the clock by Exp(rate n), then update one agent (two if
/// `symmetric` and the internal branch fires).
inline void step(SimState& s, const KernelSpec& k, bool symmetric = false, bool allow_self = false) {
  if (s.size() < 2) detail::fail("agent_sim", "need at least two agents");
  thread_local std::vector<double> scratch;
  s.t += detail::next_interarrival(s);
  detail::jump(s, k, symmetric, allow_self, scratch);
}

struct Snapshot {
  double t = 0.0;
  AtomicMeasure measure;
};

struct SimRun {
  std::vector<Snapshot> snapshots;
  SimState final_state;  // state at the last jump <= horizon
};

/// Runs to the horizon. `on_jump(const SimState&)` is called after every jump.
/// Snapshot s records the state after all jumps at times <= s.
template <class OnJump>
SimRun run_with(const SimConfig& cfg, OnJump&& on_jump) {
  cfg.validate();
  SimRun out;
  SimState s = make_state(cfg);
  std::vector<double> scratch;
  std::size_t next = 0;
  const auto& times = cfg.snapshot_times;
  for (;;) {
    const double t_next = s.t + detail::next_interarrival(s);
    while (next < times.size() && times[next] < t_next) out.snapshots.push_back({times[next++], s.empirical()});
    if (t_next > cfg.horizon) break;
    s.t = t_next;
    detail::jump(s, cfg.kernel, cfg.symmetric, cfg.allow_self, scratch);
    on_jump(static_cast<const SimState&>(s));
  }
  out.final_state = std::move(s);
  return out;
}

inline SimRun run_with_state(const SimConfig& cfg) {
  return run_with(cfg, [](const SimState&) {});
}

inline std::vector<Snapshot> run(const SimConfig& cfg) { return run_with_state(cfg).snapshots; }

/// n^-1 sum_a |X^a - mean|^2.
inline double dispersion(const SimState& s) {
  const std::size_t n = s.size();
  if (n < 2) detail::fail("agent_sim", "need at least two agents");
  double acc = 0.0;
  for (std::size_t c = 0; c < s.dim; ++c) {
    double mean = 0.0;
    for (std::size_t a = 0; a < n; ++a) mean += s.opinions[a * s.dim + c];
    mean /= static_cast<double>(n);
    for (std::size_t a = 0; a < n; ++a) {
      const double d = s.opinions[a * s.dim + c] - mean;
      acc += d * d;
    }
  }
  return acc / static_cast<double>(n);
}

/// Opinion mean along each coordinate.
inline std::vector<double> mean_opinion(const SimState& s) {
  std::vector<double> mean(s.dim, 0.0);
  for (std::size_t a = 0; a < s.size(); ++a)
    for (std::size_t c = 0; c < s.dim; ++c) mean[c] += s.opinions[a * s.dim + c];
  for (double& m : mean) m /= static_cast<double>(s.size());
  return mean;
}

}  // namespace opdyn
