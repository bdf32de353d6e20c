#include <gtest/gtest.h>

#include <random>

#include "opdyn/measures.hpp"
#include "opdyn/transport_oracle.hpp"

using namespace opdyn;

namespace {

AtomicMeasure random_atoms(std::mt19937_64& rng, std::size_t k, std::size_t dim = 1) {
  std::uniform_real_distribution<double> pos(-3.0, 3.0), w(0.01, 1.0);
  std::vector<double> ps(k * dim), ws(k);
  double total = 0.0;
  for (auto& p : ps) p = pos(rng);
  for (auto& x : ws) total += x = w(rng);
  for (auto& x : ws) x /= total;
  return AtomicMeasure(dim, ps, ws);
}

}  // namespace

TEST(Oracle, TwoDeltas) {
  EXPECT_NEAR(wasserstein1_oracle(AtomicMeasure::delta(0.0), AtomicMeasure::delta(3.0)), 3.0, 1e-14);
}

TEST(Oracle, SplitToMidpoint) {
  EXPECT_NEAR(wasserstein1_oracle(AtomicMeasure({0.0, 1.0}, {0.5, 0.5}), AtomicMeasure::delta(0.5)), 0.5, 1e-14);
}

TEST(Oracle, HandComputedTransport) {
  // Moving 1/3 from 0 to 1 and 1/3 from 1 to 2 beats any crossing plan.
  const AtomicMeasure mu({0.0, 1.0, 2.0}, {2.0 / 3.0, 1.0 / 3.0, 0.0});
  const AtomicMeasure nu({0.0, 1.0, 2.0}, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  EXPECT_NEAR(wasserstein1_oracle(mu, nu), 2.0 / 3.0, 1e-14);
}

TEST(Oracle, EuclideanCostInTwoDimensions) {
  const AtomicMeasure mu(2, {0.0, 0.0}, {1.0});
  const AtomicMeasure nu(2, {3.0, 4.0}, {1.0});
  EXPECT_NEAR(wasserstein1_oracle(mu, nu), 5.0, 1e-14);
}

TEST(Oracle, Errors) {
  std::vector<double> xs(13, 0.0), ws(13, 1.0 / 13.0);
  try {
    wasserstein1_oracle(AtomicMeasure(xs, ws), AtomicMeasure::delta(0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "oracle is desk-scale only");
  }
  EXPECT_THROW(wasserstein1_oracle(AtomicMeasure({0.0}, {0.5}), AtomicMeasure::delta(0.0)), Error);
}

TEST(Oracle, AgreesWithCdfFormula) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_atoms(rng, 1 + trial % 12), b = random_atoms(rng, 1 + (trial * 7) % 12);
    EXPECT_NEAR(wasserstein1_oracle(a, b), wasserstein1_1d(a, b), 1e-10);
  }
}

TEST(Oracle, IsSymmetricInHigherDimensions) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_atoms(rng, 6, 3), b = random_atoms(rng, 5, 3);
    EXPECT_NEAR(wasserstein1_oracle(a, b), wasserstein1_oracle(b, a), 1e-10);
  }
}
