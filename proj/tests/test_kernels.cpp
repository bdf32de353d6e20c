#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "opdyn/kernels.hpp"

using namespace opdyn;

namespace {

KernelSpec internal_only(WeightLaw law) {
  KernelSpec k;
  k.internal = std::move(law);
  return k;
}

// Trapezoid rule; spectrally accurate for the bump, whose derivatives all
// vanish at the support ends.
double bump_moment_trapezoid(int k, int points) {
  const double a = 2.0, b = 4.0, h = (b - a) / points;
  auto raw = [](double x) {
    const double s = 1.0 - (x - 3.0) * (x - 3.0);
    return s > 0.0 ? std::exp(-1.0 / s) : 0.0;
  };
  double num = 0.0, den = 0.0;
  for (int i = 1; i < points; ++i) {
    const double x = a + i * h;
    num += std::pow(x, k) * raw(x);
    den += raw(x);
  }
  return num / den;
}

}  // namespace

TEST(InternalWeight, BoundedConfidence) {
  Rng rng(1);
  const auto k = internal_only(BoundedConfidence{0.5, 1.0});
  EXPECT_EQ(internal_weight(k, 0.0, 0.5, rng), 0.5);
  EXPECT_EQ(internal_weight(k, 0.0, 2.0, rng), 0.0);
  EXPECT_EQ(internal_weight(k, 0.0, 1.0, rng), 0.5);
}

TEST(InternalWeight, GaussianAtZeroDistance) {
  Rng rng(1);
  const auto k = internal_only(GaussianWeight{0.7, 2.0});
  EXPECT_EQ(internal_weight(k, 3.0, 3.0, rng), 0.7);
  EXPECT_NEAR(internal_weight(k, 0.0, 2.0, rng), 0.7 * std::exp(-1.0), 1e-15);
}

TEST(InternalWeight, DeterministicLawsLeaveRngAlone) {
  for (const WeightLaw& law : {WeightLaw{ConstantWeight{0.3}}, WeightLaw{BoundedConfidence{0.5, 1.0}},
                               WeightLaw{GaussianWeight{0.5, 1.0}}}) {
    Rng a(7), b(7);
    const auto k = internal_only(law);
    const double w1 = internal_weight(k, 0.2, 0.9, a), w2 = internal_weight(k, 0.2, 0.9, a);
    EXPECT_EQ(w1, w2);
    EXPECT_EQ(a(), b());
  }
}

TEST(InternalWeight, SymmetricInArguments) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> U(-5.0, 5.0);
  for (const WeightLaw& law : {WeightLaw{ConstantWeight{0.3}}, WeightLaw{BoundedConfidence{0.5, 1.0}},
                               WeightLaw{GaussianWeight{0.5, 1.5}}}) {
    const auto k = internal_only(law);
    for (int i = 0; i < 200; ++i) {
      const double x = U(gen), y = U(gen);
      Rng r1(i), r2(i);
      EXPECT_EQ(internal_weight(k, x, y, r1), internal_weight(k, y, x, r2));
    }
  }
}

TEST(InternalWeight, MixtureFrequencies) {
  const auto k = internal_only(WeightMixture{{0.1, 0.5, 0.9}, {0.2, 0.5, 0.3}});
  Rng rng(99);
  std::map<double, int> counts;
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) ++counts[internal_weight(k, 0.0, 1.0, rng)];
  ASSERT_EQ(counts.size(), 3u);
  const double p[] = {0.2, 0.5, 0.3};
  int j = 0;
  for (const auto& [w, c] : counts) {
    const double se = std::sqrt(p[j] * (1 - p[j]) / draws);
    EXPECT_NEAR(static_cast<double>(c) / draws, p[j], 5 * se) << w;
    ++j;
  }
}

TEST(WeightLaw, Validation) {
  EXPECT_THROW(validate(WeightLaw{ConstantWeight{1.5}}), Error);
  EXPECT_THROW(validate(WeightLaw{BoundedConfidence{1.0, 1.0}}), Error);
  EXPECT_THROW(validate(WeightLaw{BoundedConfidence{0.5, 0.0}}), Error);
  EXPECT_THROW(validate(WeightLaw{GaussianWeight{0.5, -1.0}}), Error);
  EXPECT_THROW(validate(WeightLaw{WeightMixture{{0.1, 0.2}, {0.5, 0.4}}}), Error);
  EXPECT_NO_THROW(validate(WeightLaw{WeightMixture{{0.1, 0.2}, {0.5, 0.5}}}));
  EXPECT_FALSE(is_lipschitz(WeightLaw{BoundedConfidence{}}));
  EXPECT_TRUE(is_lipschitz(WeightLaw{GaussianWeight{}}));
}

TEST(ApplyUpdate, Midpoint) {
  Rng rng(0);
  EXPECT_EQ(apply_update(internal_only(ConstantWeight{0.5}), 0.0, rng, 2.0), 1.0);
}

TEST(ApplyUpdate, ZeroWeightIsIdentity) {
  Rng rng(0);
  KernelSpec k;
  k.alpha = 0.5;
  k.internal = ConstantWeight{0.0};
  k.external = ConstantWeight{0.0};
  k.environment = EnvironmentUniform{-3.0, 3.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(apply_update(k, 0.25, rng, 1.75), 0.25);
  EXPECT_EQ(apply_update(internal_only(BoundedConfidence{0.5, 1.0}), 0.0, rng, 5.0), 0.0);
}

TEST(ApplyUpdate, EnvironmentMidpoint) {
  Rng rng(0);
  KernelSpec k;
  k.alpha = 0.0;
  k.external = ConstantWeight{0.5};
  k.environment = EnvironmentAtom{{4.0}};
  EXPECT_EQ(apply_update(k, 0.0, rng, 100.0), 2.0);
}

TEST(ApplyUpdate, EnvironmentRequired) {
  KernelSpec k;
  k.alpha = 0.5;
  try {
    k.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "environment required");
  }
  k.alpha = 0.0;
  Rng rng(0);
  EXPECT_THROW(apply_update(k, 0.0, rng, 1.0), Error);
}

TEST(ApplyUpdate, StaysInConvexHull) {
  KernelSpec k;
  k.alpha = 0.6;
  k.internal = WeightMixture{{0.0, 0.3, 1.0}, {0.3, 0.4, 0.3}};
  k.external = GaussianWeight{0.9, 2.0};
  k.environment = BumpEnvironment{};
  Rng rng(3);
  std::uniform_real_distribution<double> U(-1.0, 6.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = U(rng), y = U(rng);
    const double z = apply_update(k, x, rng, y);
    EXPECT_GE(z, std::min({x, y, 2.0}) - 1e-12);
    EXPECT_LE(z, std::max({x, y, 4.0}) + 1e-12);
  }
}

TEST(ApplyUpdate, TwoDimensionalConvexCombination) {
  Rng rng(0);
  const auto k = internal_only(ConstantWeight{0.25});
  const double x[] = {0.0, 4.0}, y[] = {4.0, 0.0};
  double out[2];
  apply_update(k, x, rng, y, out);
  EXPECT_EQ(out[0], 1.0);
  EXPECT_EQ(out[1], 3.0);
}

TEST(Environment, ClosedFormMoments) {
  EXPECT_EQ(env_moment(EnvironmentAtom{{4.0}}, 3), 64.0);
  EXPECT_NEAR(env_moment(EnvironmentUniform{0.0, 1.0}, 2), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(env_moment(NoEnvironment{}, 1), Error);
}

TEST(Environment, BumpMoments) {
  const BumpEnvironment bump;
  EXPECT_NEAR(env_moment(bump, 1), 3.0, 1e-8);
  for (int k = 1; k <= 12; ++k) {
    const double ref = bump_moment_trapezoid(k, 400000);
    EXPECT_NEAR(env_moment(bump, k), ref, 1e-8 * std::max(1.0, ref)) << "k=" << k;
  }
  EXPECT_NEAR(bump.density(3.0) * bump.normalization(), std::exp(-1.0), 1e-15);
  EXPECT_EQ(bump.density(2.0), 0.0);
  EXPECT_NEAR(bump.mass(2.0, 3.0), 0.5, 1e-9);
}

TEST(Environment, BumpRealizedOnGridIsNormalized) {
  const auto atoms = environment_atoms(BumpEnvironment{}, 0.0, 10.0, 1000);
  EXPECT_NEAR(atoms.total_mass(), 1.0, 1e-10);
  EXPECT_NEAR(moment(atoms, 1), 3.0, 1e-9);
}

TEST(Environment, SamplersMatchMoments) {
  Rng rng(12);
  double scratch = 0.0;
  const int draws = 200000;
  std::vector<double> cells(100);
  for (std::size_t i = 0; i < 100; ++i) cells[i] = static_cast<double>(i + 1);
  const EnvironmentGrid grid(GridMeasure1D(0.0, 1.0, cells));
  for (const EnvironmentSpec& e : {EnvironmentSpec{BumpEnvironment{}}, EnvironmentSpec{EnvironmentUniform{1.0, 2.0}},
                                   EnvironmentSpec{grid}}) {
    double s1 = 0.0;
    for (int i = 0; i < draws; ++i) s1 += sample_environment(e, rng, scratch)[0];
    const double mean = s1 / draws;
    const double sd = std::sqrt(env_moment(e, 2) - env_moment(e, 1) * env_moment(e, 1));
    // Jittered grid sampling reproduces the histogram mean only to O(h^2).
    EXPECT_NEAR(mean, env_moment(e, 1), 5 * sd / std::sqrt(draws) + 1e-4);
  }
}

TEST(Kernel, Lipschitz) {
  KernelSpec k;
  k.internal = BoundedConfidence{0.5, 1.0};
  EXPECT_FALSE(k.lipschitz());
  k.internal = GaussianWeight{0.5, 1.0};
  EXPECT_TRUE(k.lipschitz());
}
