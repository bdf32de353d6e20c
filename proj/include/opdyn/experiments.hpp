#pragma once

// Concentration harness: how far does the n-agent empirical measure stray
// from the mean-field solution over [0, tau], and how fast do the tails of
// that deviation shrink with n.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "opdyn/agent_sim.hpp"
#include "opdyn/error.hpp"
#include "opdyn/format.hpp"
#include "opdyn/kernels.hpp"
#include "opdyn/meanfield.hpp"
#include "opdyn/measures.hpp"

namespace opdyn {

struct ConcentrationConfig {
  KernelSpec kernel;
  InitialLaw initial = InitialUniform{0.0, 10.0};
  double horizon = 5.0;
  std::vector<double> sample_times;  // empty: 20 equispaced points in [0, horizon]
  std::vector<std::size_t> n_list{100, 300, 1000, 3000};
  std::size_t replicas = 100;
  std::vector<double> eps_list;
  std::uint64_t base_seed = 0;
  unsigned threads = 1;

  // Mean-field reference. lo >= hi selects the hull of mu_0 and psi.
  double lo = 0.0;
  double hi = 0.0;
  std::size_t cells = 2000;
  double dt = 0.005;
  Scheme scheme = Scheme::RK4;
  bool check_discretization = true;

  bool operator==(const ConcentrationConfig&) const = default;
};

struct DeviationRow {
  std::size_t n = 0;
  std::size_t replica = 0;
  double D = 0.0;  // max over sample times of W1(mu^n_t, mu_t)
};

struct DeviationTable {
  std::vector<DeviationRow> rows;  // ordered by (n, replica)
  bool within_theorem_hypotheses = true;
  double discretization_error = 0.0;
  double domain_diameter = 0.0;
};

inline std::vector<double> equispaced(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = count == 1 ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  if (count > 1) out.back() = hi;
  return out;
}

/// Hull of supp mu_0 and supp psi (first coordinate).
inline std::pair<double, double> support_hull(const InitialLaw& initial, const EnvironmentSpec& env) {
  auto [lo, hi] = initial_hull(initial);
  std::visit(detail::overloaded{
                 [](const NoEnvironment&) {},
                 [&](const EnvironmentAtom& a) {
                   lo = std::min(lo, a.point.at(0));
                   hi = std::max(hi, a.point.at(0));
                 },
                 [&](const EnvironmentUniform& u) {
                   lo = std::min(lo, u.a);
                   hi = std::max(hi, u.b);
                 },
                 [&](const EnvironmentGrid& g) {
                   lo = std::min(lo, g.density().lo());
                   hi = std::max(hi, g.density().hi());
                 },
                 [&](const BumpEnvironment& b) {
                   lo = std::min(lo, b.a());
                   hi = std::max(hi, b.b());
                 },
             },
             env);
  return {lo, hi};
}

namespace detail {

// Runs task(i) for i in [0, count) on `threads` workers. Results must be
// written to slots owned by i, so ordering never depends on scheduling.
template <class Task>
void parallel_for(std::size_t count, unsigned threads, Task&& task) {
  threads = std::max(1u, threads);
  if (threads == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < count; i = next++) task(i);
      } catch (...) {
        errors[w] = std::current_exception();
        next = count;
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

inline DeviationTable run_concentration(const ConcentrationConfig& cfg) {
  if (initial_dim(cfg.initial) != 1) detail::fail("experiments", "concentration requires d = 1");
  if (cfg.n_list.empty() || cfg.replicas == 0) detail::fail("experiments", "need populations and replicas");
  const auto times = cfg.sample_times.empty() ? equispaced(0.0, cfg.horizon, 20) : cfg.sample_times;

  double lo = cfg.lo, hi = cfg.hi;
  if (!(hi > lo)) std::tie(lo, hi) = support_hull(cfg.initial, cfg.kernel.environment);

  SolverConfig solver{lo, hi, cfg.cells, cfg.dt, cfg.horizon, times, cfg.scheme};
  const auto reference = integrate(initial_on_grid(cfg.initial, lo, hi, cfg.cells), cfg.kernel, solver);

  DeviationTable table;
  table.within_theorem_hypotheses = cfg.kernel.lipschitz();
  table.domain_diameter = hi - lo;

  if (cfg.check_discretization) {
    // Coarser solve at half resolution in space and time bounds the error.
    SolverConfig coarse = solver;
    coarse.cells = std::max<std::size_t>(2, cfg.cells / 2);
    coarse.dt = std::min(0.1, 2.0 * cfg.dt);
    const auto rough = integrate(initial_on_grid(cfg.initial, lo, hi, coarse.cells), cfg.kernel, coarse);
    for (std::size_t s = 0; s < times.size(); ++s)
      table.discretization_error =
          std::max(table.discretization_error, wasserstein1_1d(rough[s].measure, reference[s].measure));
  }

  const std::size_t R = cfg.replicas;
  table.rows.resize(cfg.n_list.size() * R);
  detail::parallel_for(table.rows.size(), cfg.threads, [&](std::size_t index) {
    const std::size_t n = cfg.n_list[index / R];
    SimConfig sim;
    sim.n = n;
    sim.kernel = cfg.kernel;
    sim.initial = cfg.initial;
    sim.horizon = cfg.horizon;
    sim.snapshot_times = times;
    sim.seed = cfg.base_seed + index;
    sim.allow_self = true;
    const auto snaps = run(sim);
    double D = 0.0;
    for (std::size_t s = 0; s < snaps.size(); ++s)
      D = std::max(D, wasserstein1_1d(snaps[s].measure, reference[s].measure));
    table.rows[index] = DeviationRow{n, index % R, D};
  });

  if (cfg.check_discretization) {
    double min_d = table.rows.front().D;
    for (const auto& r : table.rows) min_d = std::min(min_d, r.D);
    if (table.discretization_error >= 0.1 * min_d)
      detail::fail("experiments", "mean-field reference too coarse: refinement error " +
                                      format_real(table.discretization_error) + " is not below 10% of min D " +
                                      format_real(min_d) + "; increase cells or decrease dt");
  }
  return table;
}

/// Per-n medians of D, ascending in n.
inline std::vector<std::pair<std::size_t, double>> median_by_n(const DeviationTable& tbl) {
  std::map<std::size_t, std::vector<double>> groups;
  for (const auto& r : tbl.rows) groups[r.n].push_back(r.D);
  std::vector<std::pair<std::size_t, double>> out;
  for (auto& [n, ds] : groups) {
    std::sort(ds.begin(), ds.end());
    const std::size_t k = ds.size();
    out.emplace_back(n, k % 2 ? ds[k / 2] : 0.5 * (ds[k / 2 - 1] + ds[k / 2]));
  }
  return out;
}

/// Number of consecutive n pairs where the median fails to decrease strictly.
inline int median_inversions(const DeviationTable& tbl) {
  const auto med = median_by_n(tbl);
  int inversions = 0;
  for (std::size_t i = 1; i < med.size(); ++i)
    if (!(med[i].second < med[i - 1].second)) ++inversions;
  return inversions;
}

struct TailPoint {
  std::size_t n = 0;
  double prob = 0.0;
  std::size_t replicas = 0;
};

struct TailFit {
  double eps = 0.0;
  std::vector<TailPoint> points;  // every n, including degenerate tails
  double slope = 0.0;             // d log P(D >= eps) / dn
  double stderr_slope = 0.0;
};

/// Empirical P(D >= eps) for every n in the table, ascending in n.
inline std::vector<TailPoint> tail_points(const DeviationTable& tbl, double eps) {
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> counts;  // n -> (hits, total)
  for (const auto& r : tbl.rows) {
    auto& c = counts[r.n];
    c.first += r.D >= eps ? 1 : 0;
    c.second += 1;
  }
  std::vector<TailPoint> out;
  for (const auto& [n, c] : counts)
    out.push_back(TailPoint{n, static_cast<double>(c.first) / static_cast<double>(c.second), c.second});
  return out;
}

/// Fits log P(D >= eps) = a + slope * n over the n values whose empirical tail
/// lies strictly inside (0, 1). Weighted least squares with binomial
/// delta-method variances Var(log p) = (1 - p) / (R p).
inline TailFit tail_rates(const DeviationTable& tbl, double eps) {
  TailFit fit;
  fit.eps = eps;
  fit.points = tail_points(tbl, eps);
  double sw = 0.0, swx = 0.0, swy = 0.0;
  std::vector<std::pair<double, std::pair<double, double>>> usable;  // (w, (x, y))
  for (const auto& pt : fit.points) {
    const double p = pt.prob;
    if (p > 0.0 && p < 1.0) {
      const double w = static_cast<double>(pt.replicas) * p / (1.0 - p);
      const double x = static_cast<double>(pt.n), y = std::log(p);
      usable.push_back({w, {x, y}});
      sw += w;
      swx += w * x;
      swy += w * y;
    }
  }
  if (usable.size() < 2) detail::fail("experiments", "eps outside resolvable range; adjust eps_list or R");
  const double xbar = swx / sw, ybar = swy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [w, xy] : usable) {
    sxx += w * (xy.first - xbar) * (xy.first - xbar);
    sxy += w * (xy.first - xbar) * (xy.second - ybar);
  }
  fit.slope = sxy / sxx;
  fit.stderr_slope = std::sqrt(1.0 / sxx);
  return fit;
}

}  // namespace opdyn
