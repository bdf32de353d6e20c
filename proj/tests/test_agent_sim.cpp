#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "opdyn/agent_sim.hpp"

using namespace opdyn;

namespace {

SimConfig gossip(double omega, std::size_t n = 200, double tau = 5.0) {
  SimConfig cfg;
  cfg.n = n;
  cfg.kernel.internal = ConstantWeight{omega};
  cfg.initial = InitialUniform{0.0, 1.0};
  cfg.horizon = tau;
  return cfg;
}

double opinion_sum(const SimState& s) { return std::accumulate(s.opinions.begin(), s.opinions.end(), 0.0); }

}  // namespace

TEST(Step, ZeroWeightOnlyAdvancesClock) {
  auto cfg = gossip(0.0, 50);
  auto s = make_state(cfg);
  const auto before = s.opinions;
  double t = s.t;
  for (int i = 0; i < 1000; ++i) {
    step(s, cfg.kernel);
    EXPECT_GT(s.t, t);
    t = s.t;
  }
  EXPECT_EQ(s.opinions, before);
  EXPECT_EQ(s.update_count, 1000u);
}

TEST(Step, CopyWithUnitWeight) {
  auto cfg = gossip(1.0, 2);
  auto s = make_state(cfg);
  const auto before = s.opinions;
  step(s, cfg.kernel);
  EXPECT_EQ(s.opinions[0], s.opinions[1]);
  EXPECT_TRUE(s.opinions[0] == before[0] || s.opinions[0] == before[1]);
}

TEST(Step, SymmetricUpdatePreservesSum) {
  auto cfg = gossip(0.5, 100);
  auto s = make_state(cfg);
  const double sum0 = opinion_sum(s);
  for (int i = 0; i < 10000; ++i) {
    const double before = opinion_sum(s);
    step(s, cfg.kernel, true);
    EXPECT_NEAR(opinion_sum(s), before, 1e-9);
  }
  EXPECT_NEAR(opinion_sum(s), sum0, 1e-9);
}

TEST(Step, SymmetricUpdateWithGeneralConstant) {
  auto cfg = gossip(0.3, 100);
  auto s = make_state(cfg);
  const double sum0 = opinion_sum(s);
  for (int i = 0; i < 10000; ++i) step(s, cfg.kernel, true);
  EXPECT_NEAR(opinion_sum(s), sum0, 1e-9);
}

TEST(Step, RejectsTinyPopulations) {
  SimState s;
  s.opinions = {1.0};
  KernelSpec k;
  try {
    step(s, k);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "need at least two agents");
  }
  auto cfg = gossip(0.5, 1);
  EXPECT_THROW(run(cfg), Error);
}

TEST(Step, HullNeverExpands) {
  SimConfig cfg;
  cfg.n = 100;
  cfg.kernel.alpha = 0.7;
  cfg.kernel.internal = WeightMixture{{0.2, 0.8}, {0.5, 0.5}};
  cfg.kernel.external = GaussianWeight{0.5, 3.0};
  cfg.kernel.environment = EnvironmentUniform{4.0, 6.0};
  cfg.initial = InitialUniform{0.0, 1.0};
  auto s = make_state(cfg);
  const double lo = std::min(*std::min_element(s.opinions.begin(), s.opinions.end()), 4.0);
  const double hi = std::max(*std::max_element(s.opinions.begin(), s.opinions.end()), 6.0);
  for (int i = 0; i < 20000; ++i) {
    step(s, cfg.kernel, i % 2 == 0, i % 3 == 0);
    const auto [mn, mx] = std::minmax_element(s.opinions.begin(), s.opinions.end());
    ASSERT_GE(*mn, lo);
    ASSERT_LE(*mx, hi);
  }
}

TEST(Run, Deterministic) {
  auto cfg = gossip(0.5, 300);
  cfg.snapshot_times = {0.0, 1.0, 2.5, 5.0};
  const auto a = run(cfg), b = run(cfg);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].t, b[i].t);
    EXPECT_EQ(a[i].measure, b[i].measure);
  }
  cfg.seed = 1;
  EXPECT_NE(run(cfg)[3].measure, a[3].measure);
}

TEST(Run, SnapshotHoldsValueOfLastJumpBeforeIt) {
  auto cfg = gossip(0.5, 20, 3.0);
  cfg.snapshot_times = {0.0, 0.5, 1.0, 2.0, 3.0};
  std::vector<std::pair<double, std::vector<double>>> history;
  const auto s0 = make_state(cfg);
  history.emplace_back(0.0, s0.opinions);
  const auto result = run_with(cfg, [&](const SimState& s) { history.emplace_back(s.t, s.opinions); });
  ASSERT_EQ(result.snapshots.size(), cfg.snapshot_times.size());
  for (const auto& snap : result.snapshots) {
    auto it = std::upper_bound(history.begin(), history.end(), snap.t,
                               [](double t, const auto& h) { return t < h.first; });
    ASSERT_NE(it, history.begin());
    --it;
    EXPECT_EQ(snap.measure, AtomicMeasure::empirical(1, it->second));
  }
  EXPECT_LE(result.final_state.t, cfg.horizon);
}

TEST(Run, JumpCountMatchesPoissonRate) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = gossip(0.5, 500, 4.0);
    cfg.seed = seed;
    const auto res = run_with_state(cfg);
    const double mean = 500 * 4.0;
    EXPECT_NEAR(static_cast<double>(res.final_state.update_count), mean, 5 * std::sqrt(mean));
  }
}

TEST(Run, TwoDimensionalOpinions) {
  SimConfig cfg;
  cfg.n = 50;
  cfg.kernel.internal = ConstantWeight{0.5};
  cfg.initial = InitialAtoms{AtomicMeasure(2, {0.0, 0.0, 1.0, 2.0}, {0.5, 0.5})};
  cfg.horizon = 20.0;
  cfg.snapshot_times = {20.0};
  const auto res = run_with_state(cfg);
  EXPECT_EQ(res.final_state.dim, 2u);
  EXPECT_LT(dispersion(res.final_state), 1e-3);
  const auto m = mean_opinion(res.final_state);
  EXPECT_NEAR(m[1], 2.0 * m[0], 1e-9);
}

TEST(Run, GridInitialLaw) {
  SimConfig cfg;
  cfg.n = 20000;
  cfg.kernel.internal = ConstantWeight{0.0};
  cfg.initial = InitialGrid{GridMeasure1D(0.0, 2.0, {0.25, 0.75})};
  cfg.horizon = 0.0;
  const auto s = make_state(cfg);
  const double frac_high =
      static_cast<double>(std::count_if(s.opinions.begin(), s.opinions.end(), [](double x) { return x >= 1.0; })) /
      20000.0;
  EXPECT_NEAR(frac_high, 0.75, 0.015);
}

TEST(Dispersion, Examples) {
  SimState s;
  s.opinions = {3.0, 3.0, 3.0};
  EXPECT_EQ(dispersion(s), 0.0);
  s.opinions = {0.0, 2.0};
  EXPECT_EQ(dispersion(s), 1.0);
}

TEST(Dispersion, DecaysUnderLinearGossip) {
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto cfg = gossip(0.3, 100, 5.0);
    cfg.seed = seed;
    const double d0 = dispersion(make_state(cfg));
    if (dispersion(run_with_state(cfg).final_state) < d0) ++decreased;
  }
  EXPECT_GT(decreased, 50);
}

TEST(Run, DeffuantClustersAreSeparated) {
  SimConfig cfg;
  cfg.n = 2000;
  cfg.kernel.internal = BoundedConfidence{0.5, 1.0};
  cfg.initial = InitialUniform{0.0, 10.0};
  cfg.horizon = 200.0;
  cfg.snapshot_times = {200.0};
  const auto snaps = run(cfg);
  const auto g = bin_to_grid(snaps.back().measure, 0.0, 10.0, 1000);
  const auto clusters = detect_clusters(g, 0.005, 50);
  ASSERT_GE(clusters.size(), 3u);
  for (std::size_t i = 1; i < clusters.size(); ++i)
    EXPECT_GE(clusters[i].center - clusters[i - 1].center, 1.0 - 2.0 * g.h());
}
