#pragma once

// Interaction kernels: with probability alpha the activated agent moves to
// (1 - w) x + w y, w drawn from the internal weight law evaluated at (x, y);
// otherwise it observes an environment signal e ~ psi and moves to
// (1 - u) x + u e, u drawn from the external weight law at (x, e).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "opdyn/error.hpp"
#include "opdyn/measures.hpp"

namespace opdyn {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Weight laws. Every law depends on (x, y) only through |x - y|, so all are
// symmetric in their arguments.

struct ConstantWeight {
  double omega = 0.0;
  bool operator==(const ConstantWeight&) const = default;
};

/// omega0 if |x - y| <= radius, else 0.
struct BoundedConfidence {
  double omega0 = 0.5;
  double radius = 1.0;
  bool operator==(const BoundedConfidence&) const = default;
};

/// omega0 * exp(-|x - y|^2 / sigma^2).
struct GaussianWeight {
  double omega0 = 0.5;
  double sigma = 1.0;
  bool operator==(const GaussianWeight&) const = default;
};

/// State-independent finite mixture: omega_j with probability p_j.
struct WeightMixture {
  std::vector<double> omegas;
  std::vector<double> probs;
  bool operator==(const WeightMixture&) const = default;
};

using WeightLaw = std::variant<ConstantWeight, BoundedConfidence, GaussianWeight, WeightMixture>;

namespace detail {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline bool in_unit(double w) { return w >= 0.0 && w <= 1.0; }
}  // namespace detail

/// Throws on parameters outside the admissible ranges.
inline void validate(const WeightLaw& law) {
  std::visit(detail::overloaded{
                 [](const ConstantWeight& c) {
                   if (!detail::in_unit(c.omega)) detail::fail("kernels", "constant weight must lie in [0,1]");
                 },
                 [](const BoundedConfidence& b) {
                   if (!(b.omega0 > 0.0 && b.omega0 < 1.0))
                     detail::fail("kernels", "bounded-confidence omega0 must lie in (0,1)");
                   if (!(b.radius > 0.0)) detail::fail("kernels", "bounded-confidence radius must be > 0");
                 },
                 [](const GaussianWeight& g) {
                   if (!detail::in_unit(g.omega0)) detail::fail("kernels", "gaussian omega0 must lie in [0,1]");
                   if (!(g.sigma > 0.0)) detail::fail("kernels", "gaussian sigma must be > 0");
                 },
                 [](const WeightMixture& m) {
                   if (m.omegas.empty() || m.omegas.size() != m.probs.size())
                     detail::fail("kernels", "mixture needs matching non-empty omegas/probs");
                   double total = 0.0;
                   for (std::size_t j = 0; j < m.omegas.size(); ++j) {
                     if (!detail::in_unit(m.omegas[j])) detail::fail("kernels", "mixture weights must lie in [0,1]");
                     if (!(m.probs[j] >= 0.0)) detail::fail("kernels", "mixture probabilities must be >= 0");
                     total += m.probs[j];
                   }
                   if (std::abs(total - 1.0) > 1e-12) detail::fail("kernels", "mixture probabilities must sum to 1");
                 },
             },
             law);
}

inline bool is_deterministic(const WeightLaw& law) { return !std::holds_alternative<WeightMixture>(law); }

/// Globally Lipschitz in (x, y); bounded confidence is the exception.
inline bool is_lipschitz(const WeightLaw& law) { return !std::holds_alternative<BoundedConfidence>(law); }

/// Calls f(omega, probability) for every branch of the law at `distance`.
template <class F>
void for_each_branch(const WeightLaw& law, double distance, F&& f) {
  std::visit(detail::overloaded{
                 [&](const ConstantWeight& c) { f(c.omega, 1.0); },
                 [&](const BoundedConfidence& b) { f(distance <= b.radius ? b.omega0 : 0.0, 1.0); },
                 [&](const GaussianWeight& g) {
                   f(g.omega0 * std::exp(-distance * distance / (g.sigma * g.sigma)), 1.0);
                 },
                 [&](const WeightMixture& m) {
                   for (std::size_t j = 0; j < m.omegas.size(); ++j) f(m.omegas[j], m.probs[j]);
                 },
             },
             law);
}

/// Draws omega ~ law(. | distance). The generator is touched only by mixtures.
inline double sample_weight(const WeightLaw& law, double distance, Rng& rng) {
  if (const auto* m = std::get_if<WeightMixture>(&law)) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (std::size_t j = 0; j < m->omegas.size(); ++j) {
      acc += m->probs[j];
      if (u < acc) return m->omegas[j];
    }
    return m->omegas.back();
  }
  double w = 0.0;
  for_each_branch(law, distance, [&](double omega, double) { w = omega; });
  return w;
}

// ---------------------------------------------------------------------------
// Environments.

struct NoEnvironment {
  bool operator==(const NoEnvironment&) const = default;
};

struct EnvironmentAtom {
  std::vector<double> point;
  bool operator==(const EnvironmentAtom&) const = default;
};

struct EnvironmentUniform {
  double a = 0.0;
  double b = 1.0;
  bool operator==(const EnvironmentUniform&) const = default;
};

namespace detail {

// Composite Simpson on [a, b] with an even number of intervals.
template <class F>
double simpson(F&& f, double a, double b, int intervals) {
  if (intervals % 2) ++intervals;
  const double h = (b - a) / intervals;
  double acc = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Inverse-CDF sampler over histogram cells with uniform jitter inside a cell.
struct CellSampler {
  double lo = 0.0;
  double h = 1.0;
  std::vector<double> cumulative;

  static CellSampler from_cells(double lo, double hi, std::span<const double> cells) {
    CellSampler s;
    s.lo = lo;
    s.h = (hi - lo) / static_cast<double>(cells.size());
    s.cumulative.resize(cells.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < cells.size(); ++i) s.cumulative[i] = (acc += cells[i]);
    for (double& c : s.cumulative) c /= acc;
    return s;
  }

  double operator()(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto cell = static_cast<std::size_t>(it - cumulative.begin());
    return lo + (static_cast<double>(cell) + unit(rng)) * h;
  }
};

}  // namespace detail

/// Histogram environment; the inverse-CDF sampler is built once.
class EnvironmentGrid {
 public:
  explicit EnvironmentGrid(GridMeasure1D density)
      : density_(std::move(density)),
        sampler_(std::make_shared<const detail::CellSampler>(
            detail::CellSampler::from_cells(density_.lo(), density_.hi(), density_.cells()))) {
    if (!(density_.total_mass() > 0.0)) detail::fail("kernels", "environment grid has zero mass");
  }

  const GridMeasure1D& density() const noexcept { return density_; }
  double sample(Rng& rng) const { return (*sampler_)(rng); }

  bool operator==(const EnvironmentGrid& o) const { return density_ == o.density_; }

 private:
  GridMeasure1D density_;
  std::shared_ptr<const detail::CellSampler> sampler_;
};

/// Normalized smooth bump exp(-1 / (1 - u^2)) on (a, b), u the affine map of
/// (a, b) onto (-1, 1). On (2, 4) this is exp(-(1 - (x - 3)^2)^-1).
class BumpEnvironment {
 public:
  static constexpr int kQuadratureIntervals = 20000;
  static constexpr std::size_t kSamplerCells = 4096;

  BumpEnvironment(double a = 2.0, double b = 4.0) : a_(a), b_(b) {
    if (!(b > a)) detail::fail("kernels", "bump support requires b > a");
    auto cache = std::make_shared<Cache>();
    cache->normalization = detail::simpson([&](double x) { return raw(x); }, a_, b_, kQuadratureIntervals);
    std::vector<double> cells(kSamplerCells);
    const double h = (b_ - a_) / static_cast<double>(kSamplerCells);
    for (std::size_t i = 0; i < kSamplerCells; ++i) {
      const double l = a_ + static_cast<double>(i) * h;
      cells[i] = detail::simpson([&](double x) { return raw(x); }, l, l + h, 8);
    }
    cache->sampler = detail::CellSampler::from_cells(a_, b_, cells);
    cache_ = std::move(cache);
  }

  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }

  /// Unnormalized density.
  double raw(double x) const {
    const double u = (2.0 * x - a_ - b_) / (b_ - a_);
    const double s = 1.0 - u * u;
    return s > 0.0 ? std::exp(-1.0 / s) : 0.0;
  }
  double density(double x) const { return raw(x) / cache_->normalization; }
  double normalization() const noexcept { return cache_->normalization; }

  /// Mass of [l, r] intersected with the support.
  double mass(double l, double r) const {
    l = std::max(l, a_);
    r = std::min(r, b_);
    if (!(r > l)) return 0.0;
    const int intervals = std::max(16, static_cast<int>(std::ceil(kQuadratureIntervals * (r - l) / (b_ - a_))));
    return detail::simpson([&](double x) { return raw(x); }, l, r, intervals + intervals % 2) / cache_->normalization;
  }

  /// The density is symmetric about the midpoint, so the first moment is exact.
  double moment(int k) const {
    if (k == 1) return 0.5 * (a_ + b_);
    return detail::simpson([&](double x) { return detail::ipow(x, k) * raw(x); }, a_, b_,
                           kQuadratureIntervals) /
           cache_->normalization;
  }

  double sample(Rng& rng) const { return cache_->sampler(rng); }

  bool operator==(const BumpEnvironment& o) const { return a_ == o.a_ && b_ == o.b_; }

 private:
  struct Cache {
    double normalization = 1.0;
    detail::CellSampler sampler;
  };
  double a_;
  double b_;
  std::shared_ptr<const Cache> cache_;
};

using EnvironmentSpec =
    std::variant<NoEnvironment, EnvironmentAtom, EnvironmentUniform, EnvironmentGrid, BumpEnvironment>;

inline bool has_environment(const EnvironmentSpec& e) { return !std::holds_alternative<NoEnvironment>(e); }

/// Dimension of the environment's support (0 for none).
inline std::size_t environment_dim(const EnvironmentSpec& e) {
  if (std::holds_alternative<NoEnvironment>(e)) return 0;
  if (const auto* atom = std::get_if<EnvironmentAtom>(&e)) return atom->point.size();
  return 1;
}

/// n^(k) = integral of (y . z)^k dpsi(y), z the first coordinate axis.
inline double env_moment(const EnvironmentSpec& e, int k) {
  if (k < 1) detail::fail("kernels", "environment moment order must be >= 1");
  return std::visit(
      detail::overloaded{
          [](const NoEnvironment&) -> double { detail::fail("kernels", "environment required"); },
          [&](const EnvironmentAtom& atom) { return detail::ipow(atom.point.at(0), k); },
          [&](const EnvironmentUniform& u) {
            return (detail::ipow(u.b, k + 1) - detail::ipow(u.a, k + 1)) / ((k + 1) * (u.b - u.a));
          },
          [&](const EnvironmentGrid& g) { return moment(g.density(), k) / g.density().total_mass(); },
          [&](const BumpEnvironment& b) { return b.moment(k); },
      },
      e);
}

/// The environment as weighted atoms for the deterministic solver. Continuous
/// environments are integrated over the cells of the grid (lo, hi, m) and
/// placed at the cell centres.
inline AtomicMeasure environment_atoms(const EnvironmentSpec& e, double lo, double hi, std::size_t m) {
  return std::visit(
      detail::overloaded{
          [](const NoEnvironment&) -> AtomicMeasure { detail::fail("kernels", "environment required"); },
          [](const EnvironmentAtom& atom) {
            if (atom.point.size() != 1) detail::fail("kernels", "solver environments must be 1-D");
            return AtomicMeasure::delta(atom.point[0]);
          },
          [&](const EnvironmentUniform& u) { return to_atoms(GridMeasure1D::uniform(lo, hi, m, u.a, u.b)); },
          [](const EnvironmentGrid& g) {
            auto atoms = to_atoms(g.density());
            const double total = atoms.total_mass();
            std::vector<double> ws(atoms.weights().begin(), atoms.weights().end());
            for (double& w : ws) w /= total;
            return AtomicMeasure(std::vector<double>(atoms.positions().begin(), atoms.positions().end()),
                                 std::move(ws));
          },
          [&](const BumpEnvironment& b) {
            const double h = (hi - lo) / static_cast<double>(m);
            std::vector<double> cells(m);
            double total = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              const double l = lo + static_cast<double>(i) * h;
              total += cells[i] = b.mass(l, l + h);
            }
            for (double& c : cells) c /= total;
            return to_atoms(GridMeasure1D(lo, hi, std::move(cells)));
          },
      },
      e);
}

// ---------------------------------------------------------------------------

/// Full interaction kernel.
struct KernelSpec {
  double alpha = 1.0;
  WeightLaw internal = ConstantWeight{0.5};
  WeightLaw external = ConstantWeight{0.0};
  EnvironmentSpec environment = NoEnvironment{};

  void validate() const {
    if (!detail::in_unit(alpha)) detail::fail("kernels", "alpha must lie in [0,1]");
    opdyn::validate(internal);
    opdyn::validate(external);
    if (alpha < 1.0 && !has_environment(environment)) detail::fail("kernels", "environment required");
    if (const auto* u = std::get_if<EnvironmentUniform>(&environment); u && !(u->b > u->a))
      detail::fail("kernels", "uniform environment requires b > a");
    if (const auto* atom = std::get_if<EnvironmentAtom>(&environment); atom && atom->point.empty())
      detail::fail("kernels", "environment atom needs coordinates");
  }

  bool lipschitz() const { return is_lipschitz(internal) && (alpha == 1.0 || is_lipschitz(external)); }

  bool operator==(const KernelSpec&) const = default;
};

namespace detail {

inline double distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() == 1) return std::abs(x[0] - y[0]);
  double d2 = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) d2 += (x[c] - y[c]) * (x[c] - y[c]);
  return std::sqrt(d2);
}

inline void convex(std::span<const double> x, std::span<const double> y, double w, std::span<double> out) {
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = (1.0 - w) * x[c] + w * y[c];
}

}  // namespace detail

/// omega ~ theta^i(. | x, y).
inline double internal_weight(const KernelSpec& k, std::span<const double> x, std::span<const double> y,
                              Rng& rng) {
  return sample_weight(k.internal, detail::distance(x, y), rng);
}

inline double internal_weight(const KernelSpec& k, double x, double y, Rng& rng) {
  return internal_weight(k, std::span<const double>(&x, 1), std::span<const double>(&y, 1), rng);
}

/// upsilon ~ theta^e(. | x, e).
inline double external_weight(const KernelSpec& k, std::span<const double> x, std::span<const double> e,
                              Rng& rng) {
  return sample_weight(k.external, detail::distance(x, e), rng);
}

/// Draws an environment signal. Atoms are returned by reference; 1-D
/// continuous laws are sampled into `scratch`.
inline std::span<const double> sample_environment(const EnvironmentSpec& e, Rng& rng, double& scratch) {
  return std::visit(
      detail::overloaded{
          [](const NoEnvironment&) -> std::span<const double> { detail::fail("kernels", "environment required"); },
          [](const EnvironmentAtom& atom) { return std::span<const double>(atom.point); },
          [&](const EnvironmentUniform& u) {
            scratch = std::uniform_real_distribution<double>(u.a, u.b)(rng);
            return std::span<const double>(&scratch, 1);
          },
          [&](const EnvironmentGrid& g) {
            scratch = g.sample(rng);
            return std::span<const double>(&scratch, 1);
          },
          [&](const BumpEnvironment& b) {
            scratch = b.sample(rng);
            return std::span<const double>(&scratch, 1);
          },
      },
      e);
}

/// True when the next update uses the internal (agent-agent) branch.
inline bool draw_internal_branch(const KernelSpec& k, Rng& rng) {
  if (k.alpha >= 1.0) return true;
  if (k.alpha <= 0.0) return false;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < k.alpha;
}

/// Draws the new opinion of an agent at `x` that observes `y`, into `out`.
inline void apply_update(const KernelSpec& k, std::span<const double> x, Rng& rng, std::span<const double> y,
                         std::span<double> out) {
  if (draw_internal_branch(k, rng)) {
    const double w = internal_weight(k, x, y, rng);
    detail::convex(x, y, w, out);
    return;
  }
  if (!has_environment(k.environment)) detail::fail("kernels", "environment required");
  double scratch = 0.0;
  const auto e = sample_environment(k.environment, rng, scratch);
  if (e.size() != x.size()) detail::fail("kernels", "environment dimension mismatch");
  const double u = external_weight(k, x, e, rng);
  detail::convex(x, e, u, out);
}

inline double apply_update(const KernelSpec& k, double x, Rng& rng, double y) {
  double out = 0.0;
  apply_update(k, std::span<const double>(&x, 1), rng, std::span<const double>(&y, 1), std::span<double>(&out, 1));
  return out;
}

}  // namespace opdyn
