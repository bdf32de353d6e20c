#pragma once

// Moment hierarchy of the constant-weight influential-environment model:
//
//   d/dt m1 = (1 - alpha) upsilon (n1 - m1)
//   d/dt mk = -gamma_k mk + f_k(m1..m_{k-1}) + (1 - alpha) upsilon^k nk,  k >= 2
//
// The system is lower triangular, so order k only ever reads orders < k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "opdyn/error.hpp"
#include "opdyn/measures.hpp"

namespace opdyn {

struct MomentParams {
  double alpha = 1.0;
  double omega = 0.5;
  double upsilon = 0.0;
  std::vector<double> env_moments;      // n^(k), index k - 1
  std::vector<double> initial_moments;  // m^(k)_0, index k - 1

  int order() const noexcept { return static_cast<int>(initial_moments.size()); }

  void validate() const {
    auto unit = [](double w) { return w >= 0.0 && w <= 1.0; };
    if (!unit(alpha)) detail::fail("moments", "alpha must lie in [0,1]");
    if (!unit(omega)) detail::fail("moments", "omega must lie in [0,1]");
    if (!unit(upsilon)) detail::fail("moments", "upsilon must lie in [0,1]");
    if (initial_moments.empty()) detail::fail("moments", "need at least one moment order");
    if (alpha < 1.0 && env_moments.size() < initial_moments.size())
      detail::fail("moments", "environment moments must cover every order");
  }
};

struct MomentTrajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> values;  // values[k - 1][time index]

  int order() const noexcept { return static_cast<int>(values.size()); }
  double at(int k, std::size_t time_index) const { return values[static_cast<std::size_t>(k - 1)][time_index]; }
};

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace detail

/// gamma_k = 1 - alpha (omega_bar^k + omega^k) - alpha_bar upsilon_bar^k.
inline double gamma_k(const MomentParams& p, int k) {
  if (k < 1) detail::fail("moments", "moment order must be >= 1");
  return 1.0 - p.alpha * (detail::ipow(1.0 - p.omega, k) + detail::ipow(p.omega, k)) -
         (1.0 - p.alpha) * detail::ipow(1.0 - p.upsilon, k);
}

/// Bilinear coupling of order k. `m` holds m^(1..k-1); p.env_moments holds
/// n^(1..k-1) (unused when alpha = 1).
inline double f_k(const MomentParams& p, int k, std::span<const double> m) {
  if (k < 2) detail::fail("moments", "f_k is defined for k >= 2");
  if (static_cast<int>(m.size()) < k - 1) detail::fail("moments", "f_k needs k-1 lower moments");
  const double ob = 1.0 - p.omega, ub = 1.0 - p.upsilon, ab = 1.0 - p.alpha;
  double acc = 0.0;
  for (int j = 1; j <= k - 1; ++j) {
    const double mj = m[static_cast<std::size_t>(j - 1)];
    const double mkj = m[static_cast<std::size_t>(k - j - 1)];
    double term = p.alpha * detail::ipow(ob, j) * detail::ipow(p.omega, k - j) * mj * mkj;
    if (ab != 0.0)
      term += ab * detail::ipow(ub, j) * detail::ipow(p.upsilon, k - j) * mj *
              p.env_moments[static_cast<std::size_t>(k - j - 1)];
    acc += detail::binomial(k, j) * term;
  }
  return acc;
}

namespace detail {

inline void moment_field(const MomentParams& p, const std::vector<double>& m, std::vector<double>& out) {
  const int K = p.order();
  const double ab = 1.0 - p.alpha;
  for (int k = 1; k <= K; ++k) {
    const auto idx = static_cast<std::size_t>(k - 1);
    const double env = ab != 0.0 ? ab * ipow(p.upsilon, k) * p.env_moments[idx] : 0.0;
    const double coupling = k >= 2 ? f_k(p, k, std::span<const double>(m.data(), idx)) : 0.0;
    out[idx] = -gamma_k(p, k) * m[idx] + coupling + env;
  }
}

// max over k of |m0^(k)|^(1/k) and |n^(k)|^(1/k).
inline double moment_radius(const MomentParams& p) {
  double r = 0.0;
  for (int k = 1; k <= p.order(); ++k) {
    const auto idx = static_cast<std::size_t>(k - 1);
    r = std::max(r, std::pow(std::abs(p.initial_moments[idx]), 1.0 / k));
    if (p.alpha < 1.0) r = std::max(r, std::pow(std::abs(p.env_moments[idx]), 1.0 / k));
  }
  return r;
}

}  // namespace detail

/// Classical RK4 on the full triangular system from t = 0 to T. Every
/// `record_every`-th step (and the final one) is stored.
inline MomentTrajectory integrate_moments(const MomentParams& p, double T, double dt, std::size_t record_every = 1) {
  p.validate();
  if (!(dt > 0.0) || dt > 0.01 + 1e-15) detail::fail("moments", "dt must lie in (0, 0.01]");
  if (!(T >= 0.0)) detail::fail("moments", "horizon must be >= 0");
  if (record_every == 0) record_every = 1;
  const std::size_t K = p.initial_moments.size();
  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  const double h = steps == 0 ? 0.0 : T / static_cast<double>(steps);

  const double radius = detail::moment_radius(p);
  std::vector<double> bound(K);
  for (std::size_t k = 0; k < K; ++k) bound[k] = 10.0 * std::pow(radius, static_cast<double>(k + 1));

  MomentTrajectory traj;
  traj.values.assign(K, {});
  std::vector<double> m = p.initial_moments, k1(K), k2(K), k3(K), k4(K), stage(K);
  auto record = [&](double t) {
    traj.times.push_back(t);
    for (std::size_t k = 0; k < K; ++k) traj.values[k].push_back(m[k]);
  };
  record(0.0);
  for (std::size_t s = 1; s <= steps; ++s) {
    detail::moment_field(p, m, k1);
    for (std::size_t k = 0; k < K; ++k) stage[k] = m[k] + 0.5 * h * k1[k];
    detail::moment_field(p, stage, k2);
    for (std::size_t k = 0; k < K; ++k) stage[k] = m[k] + 0.5 * h * k2[k];
    detail::moment_field(p, stage, k3);
    for (std::size_t k = 0; k < K; ++k) stage[k] = m[k] + h * k3[k];
    detail::moment_field(p, stage, k4);
    for (std::size_t k = 0; k < K; ++k) {
      m[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
      if (!(std::abs(m[k]) <= bound[k])) detail::fail("moments", "moment blow-up: check params");
    }
    if (s % record_every == 0 || s == steps) record(s == steps ? T : static_cast<double>(s) * h);
  }
  return traj;
}

/// m1_inf = n1;  m_{k+1,inf} = [f_{k+1}(m_inf) + alpha_bar upsilon^{k+1} n_{k+1}] / gamma_{k+1}.
/// The environment exponent is k + 1, the stationary condition of order k + 1.
inline std::vector<double> limit_moments(const MomentParams& p) {
  p.validate();
  if (!(p.alpha < 1.0)) detail::fail("moments", "limit recursion requires alpha_bar > 0");
  const int K = p.order();
  std::vector<double> lim(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k)
    if (!(gamma_k(p, k) > 0.0)) detail::fail("moments", "limit recursion requires gamma_k > 0");
  lim[0] = p.env_moments[0];
  const double ab = 1.0 - p.alpha;
  for (int k = 2; k <= K; ++k) {
    const auto idx = static_cast<std::size_t>(k - 1);
    lim[idx] = (f_k(p, k, std::span<const double>(lim.data(), idx)) + ab * detail::ipow(p.upsilon, k) * p.env_moments[idx]) /
               gamma_k(p, k);
  }
  return lim;
}

}  // namespace opdyn
