#pragma once

// Exact discrete optimal transport for small atomic instances, used as ground
// truth for the CDF-based W1. Solves the transportation problem with
// successive shortest augmenting paths (Bellman-Ford on the residual graph).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "opdyn/error.hpp"
#include "opdyn/measures.hpp"

namespace opdyn {

inline constexpr std::size_t kOracleMaxSupport = 12;

/// min over couplings of sum |x - y| xi(x, y), Euclidean cost.
inline double wasserstein1_oracle(const AtomicMeasure& mu, const AtomicMeasure& nu) {
  if (mu.size() > kOracleMaxSupport || nu.size() > kOracleMaxSupport)
    detail::fail("measures", "oracle is desk-scale only");
  if (mu.dim() != nu.dim()) detail::fail("measures", "dimension mismatch");
  if (mu.empty() || nu.empty()) detail::fail("measures", "empty measure");
  if (std::abs(mu.total_mass() - nu.total_mass()) > kW1MassTol)
    detail::fail("measures", "oracle requires equal total masses");

  const std::size_t na = mu.size(), nb = nu.size();
  std::vector<double> cost(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      double d2 = 0.0;
      const auto x = mu.position(i), y = nu.position(j);
      for (std::size_t c = 0; c < mu.dim(); ++c) d2 += (x[c] - y[c]) * (x[c] - y[c]);
      cost[i * nb + j] = std::sqrt(d2);
    }

  std::vector<double> supply(mu.weights().begin(), mu.weights().end());
  std::vector<double> demand(nu.weights().begin(), nu.weights().end());
  std::vector<double> flow(na * nb, 0.0);
  constexpr double kResidual = 1e-14;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  double scale = 0.0;
  for (double c : cost) scale = std::max(scale, c);
  const double slack = 1e-12 * std::max(1.0, scale);

  // Nodes 0..na-1 are sources, na..na+nb-1 are sinks.
  const std::size_t nodes = na + nb;
  std::vector<double> dist(nodes);
  std::vector<std::ptrdiff_t> pred(nodes);

  for (std::size_t iter = 0; iter < 100000; ++iter) {
    bool any_supply = false, any_demand = false;
    for (double s : supply) any_supply |= s > kResidual;
    for (double d : demand) any_demand |= d > kResidual;
    if (!any_supply || !any_demand) break;

    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(pred.begin(), pred.end(), -1);
    for (std::size_t i = 0; i < na; ++i)
      if (supply[i] > kResidual) dist[i] = 0.0;

    for (std::size_t round = 0; round < nodes; ++round) {
      bool relaxed = false;
      for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
          const double c = cost[i * nb + j];
          // Forward arc i -> j, unbounded capacity.
          if (dist[i] + c < dist[na + j] - slack) {
            dist[na + j] = dist[i] + c;
            pred[na + j] = static_cast<std::ptrdiff_t>(i);
            relaxed = true;
          }
          // Residual arc j -> i while flow remains.
          if (flow[i * nb + j] > kResidual && dist[na + j] - c < dist[i] - slack) {
            dist[i] = dist[na + j] - c;
            pred[i] = static_cast<std::ptrdiff_t>(na + j);
            relaxed = true;
          }
        }
      }
      if (!relaxed) break;
    }

    std::size_t sink = nodes;
    for (std::size_t j = 0; j < nb; ++j)
      if (demand[j] > kResidual && dist[na + j] < kInf &&
          (sink == nodes || dist[na + j] < dist[sink]))
        sink = na + j;
    if (sink == nodes) detail::fail("measures", "oracle failed to find augmenting path");

    // Trace back, computing the bottleneck.
    double bottleneck = demand[sink - na];
    std::size_t v = sink, hops = 0;
    while (pred[v] >= 0) {
      const auto u = static_cast<std::size_t>(pred[v]);
      if (v < na) bottleneck = std::min(bottleneck, flow[v * nb + (u - na)]);
      v = u;
      if (++hops > nodes) detail::fail("measures", "oracle residual graph has a cycle");
    }
    bottleneck = std::min(bottleneck, supply[v]);

    supply[v] -= bottleneck;
    demand[sink - na] -= bottleneck;
    std::size_t w = sink;
    while (pred[w] >= 0) {
      const auto u = static_cast<std::size_t>(pred[w]);
      if (w >= na) {
        flow[u * nb + (w - na)] += bottleneck;
      } else {
        flow[w * nb + (u - na)] -= bottleneck;
      }
      w = u;
    }
  }

  double total = 0.0;
  for (std::size_t k = 0; k < flow.size(); ++k) total += flow[k] * cost[k];
  return total;
}

}  // namespace opdyn
