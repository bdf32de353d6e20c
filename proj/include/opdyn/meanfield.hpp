#pragma once

// Deterministic solver for the measure-valued ODE  d mu/dt = F(mu) - mu  on a
// uniform 1-D histogram. F pushes mu x mu (and mu x psi) forward through the
// interaction kernel; every deposit at a point z is split linearly between
// the two cell centres bracketing z, which conserves mass and mean exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "opdyn/error.hpp"
#include "opdyn/kernels.hpp"
#include "opdyn/measures.hpp"

namespace opdyn {

enum class Scheme { Euler, RK4 };

struct SolverConfig {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t cells = 1000;
  double dt = 0.01;
  double horizon = 10.0;
  std::vector<double> snapshot_times;  // empty: only the horizon
  Scheme scheme = Scheme::Euler;

  void validate() const {
    if (!(hi > lo)) detail::fail("meanfield", "grid requires hi > lo");
    if (cells < 2) detail::fail("meanfield", "grid requires at least 2 cells");
    if (!(dt > 0.0 && dt <= 0.1)) detail::fail("meanfield", "dt must lie in (0, 0.1]");
    if (!(horizon >= 0.0)) detail::fail("meanfield", "horizon must be >= 0");
    if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end()))
      detail::fail("meanfield", "snapshot times must be sorted");
    for (double s : snapshot_times)
      if (s < 0.0 || s > horizon) detail::fail("meanfield", "snapshot times must lie in [0, horizon]");
  }

  bool operator==(const SolverConfig&) const = default;
};

/// F(.) for a fixed kernel and grid. Deterministic weights are evaluated at
/// cell centres, so the internal branch depends only on the cell offset and
/// is tabulated once at construction.
class InteractionOperator {
 public:
  InteractionOperator(const KernelSpec& kernel, double lo, double hi, std::size_t m)
      : m_(m), lo_(lo), h_((hi - lo) / static_cast<double>(m)), ext_weight_(kernel.external) {
    kernel.validate();
    if (m < 2) detail::fail("meanfield", "grid requires at least 2 cells");
    build_internal(kernel);
    if (kernel.alpha < 1.0) build_external(kernel);
  }

  std::size_t size() const noexcept { return m_; }

  /// out = F(in). Pair terms are divided by the total mass of `in`, so F is
  /// homogeneous of degree one and total mass is neutrally stable under the
  /// flow instead of following dM/dt = M^2 - M.
  void apply(std::span<const double> in, std::span<double> out) const {
    if (in.size() != m_ || out.size() != m_) detail::fail("meanfield", "grid size mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    const double* __restrict src = in.data();
    double* __restrict dst = out.data();
    const auto m = static_cast<std::ptrdiff_t>(m_);

    double total = 0.0;
    for (std::ptrdiff_t i = 0; i < m; ++i) total += src[i];
    if (!(total > 0.0)) detail::fail("meanfield", "F requires positive total mass");
    const double inv_total = 1.0 / total;

    // Pairs whose deposit stays on the source cell (zero displacement).
    if (stay_far_ != 0.0 || !stay_corrections_.empty()) {
      stay_buffer_.assign(m_, stay_far_);
      double* __restrict acc = stay_buffer_.data();
      for (const auto& [d, c] : stay_corrections_) {
        const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, -d), i1 = std::min(m, m - d);
        const double cs = c * inv_total;
        for (std::ptrdiff_t i = i0; i < i1; ++i) acc[i] += cs * src[i + d];
      }
      for (std::ptrdiff_t i = 0; i < m; ++i) dst[i] += src[i] * acc[i];
    }

    for (const Tap& tap : taps_) {
      const std::ptrdiff_t d = tap.offset;
      const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, -d), i1 = std::min(m, m - d);
      const std::ptrdiff_t len = i1 - i0;
      const double* __restrict a = src + i0;
      const double* __restrict b = src + i0 + d;
      double* __restrict o = dst + i0 + tap.shift;
      const double lower = tap.lower * inv_total, upper = tap.upper * inv_total;
      for (std::ptrdiff_t k = 0; k < len; ++k) o[k] += lower * (a[k] * b[k]);
      if (upper != 0.0)
        for (std::ptrdiff_t k = 0; k < len; ++k) o[k + 1] += upper * (a[k] * b[k]);
    }

    for (const Tap& tap : ext_taps_) {
      const std::ptrdiff_t d = tap.offset;
      const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, psi_lo_ - d), i1 = std::min(m, psi_hi_ - d);
      if (i1 <= i0) continue;
      const std::ptrdiff_t len = i1 - i0;
      const double* __restrict a = src + i0;
      const double* __restrict b = psi_.data() + i0 + d;
      double* __restrict o = dst + i0 + tap.shift;
      const double lower = tap.lower, upper = tap.upper;
      for (std::ptrdiff_t k = 0; k < len; ++k) o[k] += lower * (a[k] * b[k]);
      if (upper != 0.0)
        for (std::ptrdiff_t k = 0; k < len; ++k) o[k + 1] += upper * (a[k] * b[k]);
    }
    if (!env_index_.empty()) apply_external(src, dst);
  }

  GridMeasure1D operator()(const GridMeasure1D& g) const {
    std::vector<double> out(m_);
    apply(g.cells(), out);
    clamp_roundoff(out);
    return GridMeasure1D(g.lo(), g.hi(), std::move(out));
  }

  /// Replaces negative values no larger than 1e-12 in magnitude by zero.
  static void clamp_roundoff(std::span<double> v) {
    for (double& x : v)
      if (x < 0.0 && x >= -1e-12) x = 0.0;
  }

 private:
  struct Tap {
    std::ptrdiff_t offset;  // partner cell j - i
    std::ptrdiff_t shift;   // floor of the displacement, in cells
    double lower;           // coefficient deposited at i + shift
    double upper;           // coefficient deposited at i + shift + 1
  };

  void build_internal(const KernelSpec& kernel) {
    if (kernel.alpha == 0.0) return;
    const auto m = static_cast<std::ptrdiff_t>(m_);
    std::vector<double> stay(2 * m_ - 1, 0.0);
    for (std::ptrdiff_t d = -(m - 1); d <= m - 1; ++d) {
      const double dist = static_cast<double>(std::abs(d)) * h_;
      for_each_branch(kernel.internal, dist, [&](double omega, double p) {
        const double coef = kernel.alpha * p;
        if (coef == 0.0) return;
        const double s = omega * static_cast<double>(d);
        if (s == 0.0) {
          stay[static_cast<std::size_t>(d + m - 1)] += coef;
          return;
        }
        push_tap(taps_, d, omega, coef);
      });
    }
    stay_far_ = stay.back();
    for (std::ptrdiff_t d = -(m - 1); d <= m - 1; ++d) {
      const double c = stay[static_cast<std::size_t>(d + m - 1)] - stay_far_;
      if (c != 0.0) stay_corrections_.emplace_back(d, c);
    }
  }

  static void push_tap(std::vector<Tap>& taps, std::ptrdiff_t d, double omega, double coef) {
    const double s = omega * static_cast<double>(d);
    const double fl = std::floor(s);
    const double frac = s - fl;
    taps.push_back(Tap{d, static_cast<std::ptrdiff_t>(fl), coef * (1.0 - frac), coef * frac});
  }

  // Environment atoms on cell centres are tabulated by offset like the
  // internal branch; any others go through apply_external.
  void build_external(const KernelSpec& kernel) {
    const auto env = environment_atoms(kernel.environment, lo_, lo_ + h_ * static_cast<double>(m_), m_);
    const double ab = 1.0 - kernel.alpha;
    psi_.assign(m_, 0.0);
    for (std::size_t l = 0; l < env.size(); ++l) {
      const double u = (env.position(l)[0] - lo_) / h_ - 0.5;
      const double r = std::round(u);
      if (std::abs(u - r) < 1e-9 && r >= 0.0 && r < static_cast<double>(m_)) {
        psi_[static_cast<std::size_t>(r)] += env.weight(l);
      } else {
        env_index_.push_back(u);
        env_mass_.push_back(ab * env.weight(l));
      }
    }
    if (const auto* c = std::get_if<ConstantWeight>(&kernel.external)) ext_constant_ = c->omega;

    const auto m = static_cast<std::ptrdiff_t>(m_);
    psi_lo_ = m;
    psi_hi_ = 0;
    for (std::ptrdiff_t l = 0; l < m; ++l)
      if (psi_[static_cast<std::size_t>(l)] != 0.0) {
        psi_lo_ = std::min(psi_lo_, l);
        psi_hi_ = l + 1;
      }
    if (psi_hi_ == 0) return;
    for (std::ptrdiff_t d = -(m - 1); d <= m - 1; ++d) {
      if (psi_hi_ - d <= 0 || psi_lo_ - d >= m) continue;
      const double dist = static_cast<double>(std::abs(d)) * h_;
      for_each_branch(kernel.external, dist, [&](double upsilon, double p) {
        if (ab * p != 0.0) push_tap(ext_taps_, d, upsilon, ab * p);
      });
    }
  }

  void deposit(double* dst, double u, double w) const {
    const double top = static_cast<double>(m_ - 1);
    if (u < -1e-9 || u > top + 1e-9) detail::fail("meanfield", "grid does not cover hull");
    u = std::clamp(u, 0.0, top);
    const auto left = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(left);
    if (left + 1 < m_) {
      dst[left] += w * (1.0 - frac);
      dst[left + 1] += w * frac;
    } else {
      dst[left] += w;
    }
  }

  void apply_external(const double* src, double* dst) const {
    for (std::size_t l = 0; l < env_index_.size(); ++l) {
      const double ue = env_index_[l];
      const double pe = env_mass_[l];
      for (std::size_t i = 0; i < m_; ++i) {
        if (src[i] == 0.0) continue;
        const double ui = static_cast<double>(i);
        if (ext_constant_ >= 0.0) {
          deposit(dst, ui + ext_constant_ * (ue - ui), pe * src[i]);
          continue;
        }
        const double dist = std::abs(ue - ui) * h_;
        for_each_branch(ext_weight_, dist,
                        [&](double upsilon, double p) { deposit(dst, ui + upsilon * (ue - ui), p * pe * src[i]); });
      }
    }
  }

  std::size_t m_;
  double lo_;
  double h_;
  std::vector<Tap> taps_;
  double stay_far_ = 0.0;
  std::vector<std::pair<std::ptrdiff_t, double>> stay_corrections_;
  WeightLaw ext_weight_;
  double ext_constant_ = -1.0;  // >= 0 when the external law is a constant
  std::vector<Tap> ext_taps_;
  std::vector<double> psi_;  // environment mass on cell centres
  std::ptrdiff_t psi_lo_ = 0;  // support of psi_ is [psi_lo_, psi_hi_)
  std::ptrdiff_t psi_hi_ = 0;
  std::vector<double> env_index_;  // off-centre environment atoms, fractional cell coordinates
  std::vector<double> env_mass_;   // (1 - alpha) * psi_l
  mutable std::vector<double> stay_buffer_;
};

/// One application of F to a normalized grid measure.
inline GridMeasure1D apply_F(const GridMeasure1D& g, const KernelSpec& k) {
  if (!g.is_normalized()) detail::fail("meanfield", "apply_F requires a normalized measure");
  return InteractionOperator(k, g.lo(), g.hi(), g.size())(g);
}

struct GridSnapshot {
  double t = 0.0;
  GridMeasure1D measure;
};

/// Time-steps mu <- mu + dt (F(mu) - mu) (Euler) or the classical four-stage
/// scheme. The last step before each snapshot is shortened to land on it.
/// `on_step(t, cells)` runs after every step.
template <class OnStep>
std::vector<GridSnapshot> integrate_with(const GridMeasure1D& g0, const KernelSpec& kernel, const SolverConfig& cfg,
                                         OnStep&& on_step) {
  cfg.validate();
  if (!g0.is_normalized()) detail::fail("meanfield", "initial measure must be normalized");
  const InteractionOperator F(kernel, g0.lo(), g0.hi(), g0.size());
  const std::size_t m = g0.size();

  std::vector<double> mu(g0.cells().begin(), g0.cells().end());
  std::vector<double> f(m), k1, k2, k3, stage;
  if (cfg.scheme == Scheme::RK4) {
    k1.resize(m);
    k2.resize(m);
    k3.resize(m);
    stage.resize(m);
  }

  auto euler_step = [&](double dt) {
    F.apply(mu, f);
    for (std::size_t i = 0; i < m; ++i) mu[i] = (1.0 - dt) * mu[i] + dt * f[i];
  };
  auto rk4_step = [&](double dt) {
    auto field = [&](const std::vector<double>& x, std::vector<double>& out) {
      F.apply(x, f);
      for (std::size_t i = 0; i < m; ++i) out[i] = f[i] - x[i];
    };
    field(mu, k1);
    for (std::size_t i = 0; i < m; ++i) stage[i] = mu[i] + 0.5 * dt * k1[i];
    field(stage, k2);
    for (std::size_t i = 0; i < m; ++i) stage[i] = mu[i] + 0.5 * dt * k2[i];
    field(stage, k3);
    for (std::size_t i = 0; i < m; ++i) stage[i] = mu[i] + dt * k3[i];
    field(stage, stage);
    for (std::size_t i = 0; i < m; ++i) mu[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + stage[i]);
  };

  auto check = [&] {
    double total = 0.0;
    for (double x : mu) {
      if (x < -1e-12) detail::fail("meanfield", "dt too large");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-10) detail::fail("meanfield", "mass conservation violated");
    InteractionOperator::clamp_roundoff(mu);
  };

  std::vector<double> targets = cfg.snapshot_times;
  if (targets.empty()) targets.push_back(cfg.horizon);

  std::vector<GridSnapshot> out;
  out.reserve(targets.size());
  double t = 0.0;
  for (double target : targets) {
    const double span = target - t;
    if (span > 0.0) {
      const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(span / cfg.dt - 1e-9)));
      const double dt = span / static_cast<double>(steps);
      for (std::size_t s = 0; s < steps; ++s) {
        if (cfg.scheme == Scheme::Euler) {
          euler_step(dt);
        } else {
          rk4_step(dt);
        }
        check();
        t = (s + 1 == steps) ? target : t + dt;
        on_step(t, std::span<const double>(mu));
      }
    }
    out.push_back({target, GridMeasure1D(g0.lo(), g0.hi(), mu)});
  }
  return out;
}

inline std::vector<GridSnapshot> integrate(const GridMeasure1D& g0, const KernelSpec& kernel,
                                           const SolverConfig& cfg) {
  return integrate_with(g0, kernel, cfg, [](double, std::span<const double>) {});
}

/// Histogram density sup norm: max cell mass / h.
inline double sup_density(const GridMeasure1D& g) {
  return *std::max_element(g.cells().begin(), g.cells().end()) / g.h();
}

}  // namespace opdyn
