#pragma once

// Finite measures on the opinion space: weighted atoms in R^d and histograms
// on a uniform 1-D grid. Also exact 1-D Wasserstein-1 and cluster extraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "opdyn/error.hpp"
#include "opdyn/format.hpp"

namespace opdyn {

inline constexpr double kNormalizedTol = 1e-12;
// Looser check applied on entry to W1: grid states drift by ~1e-12 per step.
inline constexpr double kW1MassTol = 1e-9;

/// Weighted point set in R^d. Positions are stored row-major, `dim` doubles
/// per atom.
class AtomicMeasure {
 public:
  AtomicMeasure() = default;

  AtomicMeasure(std::size_t dim, std::vector<double> positions, std::vector<double> weights)
      : dim_(dim), positions_(std::move(positions)), weights_(std::move(weights)) {
    if (dim_ == 0) detail::fail("measures", "dimension must be positive");
    if (positions_.size() != dim_ * weights_.size())
      detail::fail("measures", "positions/weights size mismatch");
    for (double w : weights_)
      if (!(w >= 0.0)) detail::fail("measures", "negative or NaN weight");
  }

  /// 1-D convenience constructor.
  AtomicMeasure(std::vector<double> xs, std::vector<double> ws)
      : AtomicMeasure(1, std::move(xs), std::move(ws)) {}

  static AtomicMeasure delta(double x) { return AtomicMeasure({x}, {1.0}); }

  /// Empirical measure of `positions`, each atom carrying weight 1/n.
  static AtomicMeasure empirical(std::size_t dim, std::vector<double> positions) {
    const std::size_t n = dim == 0 ? 0 : positions.size() / dim;
    std::vector<double> ws(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
    return AtomicMeasure(dim, std::move(positions), std::move(ws));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return weights_.size(); }
  bool empty() const noexcept { return weights_.empty(); }

  std::span<const double> position(std::size_t i) const {
    return {positions_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> positions() const noexcept { return positions_; }
  std::span<const double> weights() const noexcept { return weights_; }

  double total_mass() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

  bool is_normalized(double tol = kNormalizedTol) const {
    return std::abs(total_mass() - 1.0) <= tol;
  }

  /// Translate every atom by `c` along each coordinate.
  AtomicMeasure shifted(double c) const {
    auto ps = positions_;
    for (double& p : ps) p += c;
    return AtomicMeasure(dim_, std::move(ps), weights_);
  }

  bool operator==(const AtomicMeasure&) const = default;

 private:
  std::size_t dim_ = 1;
  std::vector<double> positions_;
  std::vector<double> weights_;
};

/// lambda * a + (1 - lambda) * b, as the union of both atom sets.
inline AtomicMeasure mix(const AtomicMeasure& a, const AtomicMeasure& b, double lambda) {
  if (a.dim() != b.dim()) detail::fail("measures", "dimension mismatch");
  std::vector<double> ps(a.positions().begin(), a.positions().end());
  ps.insert(ps.end(), b.positions().begin(), b.positions().end());
  std::vector<double> ws;
  ws.reserve(a.size() + b.size());
  for (double w : a.weights()) ws.push_back(lambda * w);
  for (double w : b.weights()) ws.push_back((1.0 - lambda) * w);
  return AtomicMeasure(a.dim(), std::move(ps), std::move(ws));
}

/// Histogram of cell masses on a uniform grid over (lo, hi). Cell i is
/// centred at lo + (i + 1/2) h.
class GridMeasure1D {
 public:
  GridMeasure1D() = default;

  GridMeasure1D(double lo, double hi, std::vector<double> cells)
      : lo_(lo), hi_(hi), cells_(std::move(cells)) {
    if (!(hi_ > lo_)) detail::fail("measures", "grid requires hi > lo");
    if (cells_.size() < 2) detail::fail("measures", "grid requires at least 2 cells");
    for (double c : cells_)
      if (!(c >= 0.0)) detail::fail("measures", "negative or NaN cell mass");
  }

  /// Uniform(a, b) realized on the grid by exact cell overlap.
  static GridMeasure1D uniform(double lo, double hi, std::size_t m, double a, double b) {
    if (!(b > a)) detail::fail("measures", "uniform law requires b > a");
    if (a < lo || b > hi) detail::fail("measures", "grid does not cover hull");
    std::vector<double> cells(m, 0.0);
    const double h = (hi - lo) / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double l = lo + static_cast<double>(i) * h;
      const double r = l + h;
      const double overlap = std::min(r, b) - std::max(l, a);
      if (overlap > 0.0) cells[i] = overlap / (b - a);
    }
    return GridMeasure1D(lo, hi, std::move(cells));
  }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::size_t size() const noexcept { return cells_.size(); }
  double h() const noexcept { return (hi_ - lo_) / static_cast<double>(cells_.size()); }
  double center(std::size_t i) const noexcept {
    return lo_ + (static_cast<double>(i) + 0.5) * h();
  }
  std::span<const double> cells() const noexcept { return cells_; }
  double mass(std::size_t i) const { return cells_[i]; }

  double total_mass() const { return std::accumulate(cells_.begin(), cells_.end(), 0.0); }
  bool is_normalized(double tol = 1e-10) const { return std::abs(total_mass() - 1.0) <= tol; }

  bool operator==(const GridMeasure1D&) const = default;

 private:
  double lo_ = 0.0;
  double hi_ = 1.0;
  std::vector<double> cells_;
};

/// All cell mass placed at the cell centre. Zero-mass cells are dropped.
inline AtomicMeasure to_atoms(const GridMeasure1D& g) {
  std::vector<double> xs, ws;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.mass(i) > 0.0) {
      xs.push_back(g.center(i));
      ws.push_back(g.mass(i));
    }
  }
  return AtomicMeasure(std::move(xs), std::move(ws));
}

/// Deposits each 1-D atom on the two bracketing cell centres, with weights
/// proportional to 1 - distance/h. Preserves mass and mean exactly.
inline GridMeasure1D bin_to_grid(const AtomicMeasure& mu, double lo, double hi, std::size_t m) {
  if (mu.dim() != 1) detail::fail("measures", "grid binning only in d=1");
  std::vector<double> cells(m, 0.0);
  const double h = (hi - lo) / static_cast<double>(m);
  const double top = static_cast<double>(m - 1);
  for (std::size_t a = 0; a < mu.size(); ++a) {
    double u = (mu.position(a)[0] - lo) / h - 0.5;
    if (u < -0.5 - 1e-9 || u > top + 0.5 + 1e-9) detail::fail("measures", "grid does not cover hull");
    u = std::clamp(u, 0.0, top);
    const auto left = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(left);
    if (left + 1 < m) {
      cells[left] += mu.weight(a) * (1.0 - frac);
      cells[left + 1] += mu.weight(a) * frac;
    } else {
      cells[left] += mu.weight(a);
    }
  }
  return GridMeasure1D(lo, hi, std::move(cells));
}

namespace detail {

inline double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

}  // namespace detail

/// z-weighted moment: sum_i w_i (x_i . z)^k.
inline double moment(const AtomicMeasure& mu, int k, std::span<const double> z) {
  if (k < 1) detail::fail("measures", "moment order must be >= 1 (use total mass for k=0)");
  if (z.size() != mu.dim()) detail::fail("measures", "direction dimension mismatch");
  double norm2 = 0.0;
  for (double c : z) norm2 += c * c;
  if (std::abs(std::sqrt(norm2) - 1.0) > 1e-12) detail::fail("measures", "direction must be a unit vector");
  if (!(mu.total_mass() > 0.0)) detail::fail("measures", "empty measure");
  double acc = 0.0;
  for (std::size_t a = 0; a < mu.size(); ++a) {
    const auto x = mu.position(a);
    double proj = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) proj += x[c] * z[c];
    acc += mu.weight(a) * detail::ipow(proj, k);
  }
  return acc;
}

/// 1-D moment with z = 1.
inline double moment(const AtomicMeasure& mu, int k) {
  const double z[1] = {1.0};
  return moment(mu, k, z);
}

/// Grid moment with mass at cell centres.
inline double moment(const GridMeasure1D& g, int k) {
  if (k < 1) detail::fail("measures", "moment order must be >= 1 (use total mass for k=0)");
  if (!(g.total_mass() > 0.0)) detail::fail("measures", "empty measure");
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) acc += g.mass(i) * detail::ipow(g.center(i), k);
  return acc;
}

/// Variance about the measure's own mean.
inline double variance(const GridMeasure1D& g) {
  const double mean = moment(g, 1) / g.total_mass();
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = g.center(i) - mean;
    acc += g.mass(i) * d * d;
  }
  return acc / g.total_mass();
}

namespace detail {

// Integral of |F_a - F_b| for two supports each sorted ascending.
inline double w1_sorted(std::span<const double> xa, std::span<const double> wa,
                        std::span<const double> xb, std::span<const double> wb) {
  std::size_t i = 0, j = 0;
  double cdf_gap = 0.0;
  double acc = 0.0;
  bool started = false;
  double prev = 0.0;
  while (i < xa.size() || j < xb.size()) {
    const bool take_a = j >= xb.size() || (i < xa.size() && xa[i] <= xb[j]);
    const double x = take_a ? xa[i] : xb[j];
    if (started) acc += std::abs(cdf_gap) * (x - prev);
    if (take_a) {
      cdf_gap += wa[i++];
    } else {
      cdf_gap -= wb[j++];
    }
    prev = x;
    started = true;
  }
  return acc;
}

inline void sorted_support(const AtomicMeasure& mu, std::vector<double>& xs, std::vector<double>& ws) {
  std::vector<std::size_t> order(mu.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mu.position(a)[0] < mu.position(b)[0]; });
  xs.resize(order.size());
  ws.resize(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    xs[k] = mu.position(order[k])[0];
    ws[k] = mu.weight(order[k]);
  }
}

inline void grid_support(const GridMeasure1D& g, std::vector<double>& xs, std::vector<double>& ws) {
  xs.resize(g.size());
  ws.assign(g.cells().begin(), g.cells().end());
  for (std::size_t i = 0; i < g.size(); ++i) xs[i] = g.center(i);
}

inline void check_w1_input(const AtomicMeasure& mu) {
  if (mu.dim() != 1) fail("measures", "exact W1 only in d=1");
  if (std::abs(mu.total_mass() - 1.0) > kW1MassTol) fail("measures", "W1 requires normalized measures");
}

inline void check_w1_input(const GridMeasure1D& g) {
  if (std::abs(g.total_mass() - 1.0) > kW1MassTol) fail("measures", "W1 requires normalized measures");
}

}  // namespace detail

/// Exact Wasserstein-1 distance in d=1 via the CDF formula.
inline double wasserstein1_1d(const AtomicMeasure& mu, const AtomicMeasure& nu) {
  detail::check_w1_input(mu);
  detail::check_w1_input(nu);
  std::vector<double> xa, wa, xb, wb;
  detail::sorted_support(mu, xa, wa);
  detail::sorted_support(nu, xb, wb);
  return detail::w1_sorted(xa, wa, xb, wb);
}

inline double wasserstein1_1d(const GridMeasure1D& mu, const GridMeasure1D& nu) {
  detail::check_w1_input(mu);
  detail::check_w1_input(nu);
  std::vector<double> xa, wa, xb, wb;
  detail::grid_support(mu, xa, wa);
  detail::grid_support(nu, xb, wb);
  return detail::w1_sorted(xa, wa, xb, wb);
}

inline double wasserstein1_1d(const AtomicMeasure& mu, const GridMeasure1D& nu) {
  detail::check_w1_input(mu);
  detail::check_w1_input(nu);
  std::vector<double> xa, wa, xb, wb;
  detail::sorted_support(mu, xa, wa);
  detail::grid_support(nu, xb, wb);
  return detail::w1_sorted(xa, wa, xb, wb);
}

inline double wasserstein1_1d(const GridMeasure1D& mu, const AtomicMeasure& nu) {
  return wasserstein1_1d(nu, mu);
}

/// Contiguous block of occupied cells.
struct Cluster {
  double center = 0.0;  // mass-weighted mean of the block's cells
  double weight = 0.0;
  double left = 0.0;
  double right = 0.0;
};

/// Finds runs of occupied cells (mass > mass_threshold / m). Runs separated by
/// fewer than `gap_cells` unoccupied cells are merged. Blocks whose total mass
/// does not exceed `mass_threshold` are dropped. Sorted by centre.
inline std::vector<Cluster> detect_clusters(const GridMeasure1D& g, double mass_threshold, int gap_cells) {
  if (!(mass_threshold > 0.0 && mass_threshold < 1.0))
    detail::fail("measures", "mass_threshold must lie in (0,1)");
  if (gap_cells < 1) detail::fail("measures", "gap_cells must be >= 1");
  const std::size_t m = g.size();
  const double cutoff = mass_threshold / static_cast<double>(m);
  const double h = g.h();

  std::vector<Cluster> out;
  std::size_t i = 0;
  while (i < m) {
    if (!(g.mass(i) > cutoff)) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    std::size_t last = i;
    std::size_t empty_run = 0;
    for (std::size_t j = i + 1; j < m; ++j) {
      if (g.mass(j) > cutoff) {
        last = j;
        empty_run = 0;
      } else if (++empty_run >= static_cast<std::size_t>(gap_cells)) {
        break;
      }
    }
    double weight = 0.0, first_moment = 0.0;
    for (std::size_t j = first; j <= last; ++j) {
      weight += g.mass(j);
      first_moment += g.mass(j) * g.center(j);
    }
    if (weight > mass_threshold) {
      out.push_back(Cluster{first_moment / weight, weight,
                            g.lo() + static_cast<double>(first) * h,
                            g.lo() + static_cast<double>(last + 1) * h});
    }
    i = last + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Measure CSV: header `t,position,mass`, one row per atom or cell. For d > 1
// the position column holds coordinates joined by ';'.

inline void write_measure_header(std::ostream& os) { os << "t,position,mass\n"; }

inline void write_measure_rows(std::ostream& os, double t, const AtomicMeasure& mu) {
  const std::string ts = format_real(t);
  for (std::size_t a = 0; a < mu.size(); ++a) {
    os << ts << ',';
    const auto x = mu.position(a);
    for (std::size_t c = 0; c < x.size(); ++c) {
      if (c) os << ';';
      os << format_real(x[c]);
    }
    os << ',' << format_real(mu.weight(a)) << '\n';
  }
}

inline void write_measure_rows(std::ostream& os, double t, const GridMeasure1D& g) {
  const std::string ts = format_real(t);
  for (std::size_t i = 0; i < g.size(); ++i)
    os << ts << ',' << format_real(g.center(i)) << ',' << format_real(g.mass(i)) << '\n';
}

/// Parses a long-format measure CSV (1-D positions). Lines beginning with
/// '#' are skipped. Rows sharing a `t` value form one snapshot, in file order.
inline std::vector<std::pair<double, AtomicMeasure>> read_measure_csv(std::istream& is) {
  std::vector<std::pair<double, AtomicMeasure>> out;
  std::vector<double> xs, ws;
  double current_t = 0.0;
  bool have = false, header_seen = false;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (have) out.emplace_back(current_t, AtomicMeasure(std::move(xs), std::move(ws)));
    xs.clear();
    ws.clear();
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "t,position,mass") detail::fail("measures", "bad measure CSV header");
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c))
      detail::fail("measures", "malformed measure CSV row " + std::to_string(line_no));
    const double t = std::stod(a);
    if (!have || t != current_t) {
      flush();
      current_t = t;
      have = true;
    }
    xs.push_back(std::stod(b));
    ws.push_back(std::stod(c));
  }
  flush();
  return out;
}

}  // namespace opdyn
