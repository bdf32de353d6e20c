#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "opdyn/experiments.hpp"

using namespace opdyn;

namespace {

ConcentrationConfig small_gaussian() {
  ConcentrationConfig cfg;
  cfg.kernel.internal = GaussianWeight{0.5, 2.0};
  cfg.initial = InitialUniform{0.0, 10.0};
  cfg.horizon = 1.0;
  cfg.sample_times = {0.0, 0.5, 1.0};
  cfg.n_list = {100};
  cfg.replicas = 2;
  cfg.cells = 400;
  cfg.dt = 0.01;
  cfg.scheme = Scheme::Euler;
  cfg.check_discretization = false;
  return cfg;
}

DeviationTable planted_table(double rate, std::size_t replicas) {
  DeviationTable tbl;
  for (std::size_t n : {100, 200, 300}) {
    const auto hits = static_cast<std::size_t>(std::llround(std::exp(-rate * static_cast<double>(n)) * replicas));
    for (std::size_t r = 0; r < replicas; ++r) tbl.rows.push_back({n, r, r < hits ? 1.0 : 0.0});
  }
  return tbl;
}

}  // namespace

TEST(Concentration, DeterministicGivenSeed) {
  const auto cfg = small_gaussian();
  const auto a = run_concentration(cfg), b = run_concentration(cfg);
  ASSERT_EQ(a.rows.size(), 2u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].n, b.rows[i].n);
    EXPECT_EQ(a.rows[i].replica, b.rows[i].replica);
    EXPECT_EQ(a.rows[i].D, b.rows[i].D);
  }
  EXPECT_NE(a.rows[0].D, a.rows[1].D);
}

TEST(Concentration, IndependentOfWorkerCount) {
  auto cfg = small_gaussian();
  cfg.n_list = {50, 80};
  cfg.replicas = 5;
  const auto serial = run_concentration(cfg);
  cfg.threads = 3;
  const auto parallel = run_concentration(cfg);
  ASSERT_EQ(serial.rows.size(), 10u);
  for (std::size_t i = 0; i < serial.rows.size(); ++i) EXPECT_EQ(serial.rows[i].D, parallel.rows[i].D);
}

TEST(Concentration, InitialSamplingNoiseScalesAsRootN) {
  auto cfg = small_gaussian();
  cfg.horizon = 0.0;
  cfg.sample_times = {0.0};
  cfg.n_list = {100, 400, 1600};
  cfg.replicas = 100;
  cfg.cells = 2000;
  const auto tbl = run_concentration(cfg);
  ASSERT_EQ(tbl.rows.size(), 300u);
  const auto med = median_by_n(tbl);
  EXPECT_NEAR(med[0].second / med[1].second, 2.0, 0.4);
  EXPECT_NEAR(med[1].second / med[2].second, 2.0, 0.4);
}

TEST(Concentration, DeviationBoundedByDiameter) {
  auto cfg = small_gaussian();
  cfg.n_list = {10, 30};
  cfg.replicas = 10;
  const auto tbl = run_concentration(cfg);
  EXPECT_DOUBLE_EQ(tbl.domain_diameter, 10.0);
  for (const auto& r : tbl.rows) {
    EXPECT_GE(r.D, 0.0);
    EXPECT_LE(r.D, tbl.domain_diameter);
  }
}

TEST(Concentration, LabelsNonLipschitzKernels) {
  auto cfg = small_gaussian();
  EXPECT_TRUE(run_concentration(cfg).within_theorem_hypotheses);
  cfg.kernel.internal = BoundedConfidence{0.5, 1.0};
  EXPECT_FALSE(run_concentration(cfg).within_theorem_hypotheses);
}

TEST(Concentration, AbortsWhenReferenceTooCoarse) {
  auto cfg = small_gaussian();
  cfg.cells = 8;
  cfg.check_discretization = true;
  cfg.n_list = {3000};
  EXPECT_THROW(run_concentration(cfg), Error);
}

TEST(Concentration, RejectsMultiDimensionalOpinions) {
  auto cfg = small_gaussian();
  cfg.initial = InitialAtoms{AtomicMeasure(2, {0.0, 0.0}, {1.0})};
  EXPECT_THROW(run_concentration(cfg), Error);
}

TEST(Medians, ReplicaOrderDoesNotMatter) {
  DeviationTable tbl;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (std::size_t n : {10, 20, 40})
    for (std::size_t r = 0; r < 31; ++r) tbl.rows.push_back({n, r, U(rng) / static_cast<double>(n)});
  auto shuffled = tbl;
  std::shuffle(shuffled.rows.begin(), shuffled.rows.end(), rng);
  EXPECT_EQ(median_by_n(tbl), median_by_n(shuffled));
  EXPECT_LE(median_inversions(tbl), 1);
}

TEST(Medians, CountsInversions) {
  DeviationTable tbl;
  tbl.rows = {{1, 0, 0.5}, {2, 0, 0.6}, {3, 0, 0.4}, {4, 0, 0.4}};
  EXPECT_EQ(median_inversions(tbl), 2);
}

TEST(TailRates, RecoversPlantedRate) {
  const auto fit = tail_rates(planted_table(0.01, 1000000), 0.5);
  EXPECT_NEAR(fit.slope, -0.01, 1e-6);
  EXPECT_GT(fit.stderr_slope, 0.0);
  ASSERT_EQ(fit.points.size(), 3u);
  EXPECT_NEAR(fit.points[0].prob, std::exp(-1.0), 1e-6);
}

TEST(TailRates, DegenerateTails) {
  DeviationTable tbl;
  for (std::size_t n : {100, 300})
    for (std::size_t r = 0; r < 50; ++r) tbl.rows.push_back({n, r, 0.25});
  for (double eps : {0.1, 0.3}) {
    try {
      tail_rates(tbl, eps);
      FAIL();
    } catch (const Error& e) {
      EXPECT_STREQ(e.what(), "eps outside resolvable range; adjust eps_list or R");
    }
  }
  const auto pts = tail_points(tbl, 0.1);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].prob, 1.0);
}

TEST(Equispaced, Endpoints) {
  const auto t = equispaced(0.0, 5.0, 20);
  ASSERT_EQ(t.size(), 20u);
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_EQ(t.back(), 5.0);
  EXPECT_TRUE(std::is_sorted(t.begin(), t.end()));
}
