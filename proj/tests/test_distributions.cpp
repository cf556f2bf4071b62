#include "dsopt/distributions.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dsopt;

TEST(Distributions, TruncatedRayleighMoments) {
  const Pdf p = TruncatedRayleigh{1.0, 0.0, 3.0};
  EXPECT_NEAR(mean(p), 1.230270526142842987920268, 1e-13);
  EXPECT_NEAR(second_moment(p), 1.898895865677630048579897, 1e-13);
  EXPECT_NEAR(mean(Pdf{TruncatedRayleigh{0.5, 0.0, 3.0}}), 0.6266570312752805414437731, 1e-13);
}

TEST(Distributions, TruncatedRayleighCdfAndQuantile) {
  const Pdf p = TruncatedRayleigh{1.0, 0.0, 3.0};
  EXPECT_NEAR(cdf(p, 1.0), 0.3978894932909385987251806, 1e-14);
  EXPECT_NEAR(quantile(p, 0.5), 1.167989242854018320428087, 1e-13);
  EXPECT_DOUBLE_EQ(cdf(p, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(cdf(p, 3.0), 1.0);
  for (double u : {0.01, 0.3, 0.77, 0.999}) EXPECT_NEAR(cdf(p, quantile(p, u)), u, 1e-12);
}

TEST(Distributions, WeibullMoments) {
  const Pdf p = Weibull{2.0, 5.0};
  EXPECT_NEAR(mean(p), 1.836337484799521221281903, 1e-13);
  EXPECT_NEAR(second_moment(p), 3.549055270012301156894486, 1e-13);
  for (double u : {0.05, 0.5, 0.95}) EXPECT_NEAR(cdf(p, quantile(p, u)), u, 1e-12);
}

TEST(Distributions, DensityIntegratesToOne) {
  for (const Pdf& p : {Pdf{TruncatedRayleigh{0.7, 0.0, 3.0}}, Pdf{Weibull{2.0, 5.0}}}) {
    const auto [lo, hi] = evaluation_interval(p);
    double s = 0.0;
    const int m = 20000;
    const double h = (hi - lo) / m;
    for (int k = 0; k < m; ++k) s += density(p, lo + (k + 0.5) * h) * h;
    EXPECT_NEAR(s, 1.0, 2e-4);
  }
}

TEST(Distributions, SampleMeansWithinThreeSigma) {
  Rng rng(17);
  for (const Pdf& p : {Pdf{TruncatedRayleigh{1.3, 0.0, 3.0}}, Pdf{Weibull{1.5, 4.0}}}) {
    const std::size_t n = 100000;
    const auto xs = sample(p, rng, n);
    double s = 0.0;
    for (double x : xs) s += x;
    const double sd = std::sqrt((second_moment(p) - mean(p) * mean(p)) / n);
    EXPECT_NEAR(s / n, mean(p), 3.0 * sd);
  }
}

TEST(Distributions, RayleighSamplesStayInSupport) {
  Rng rng(2);
  const Pdf p = TruncatedRayleigh{3.0, 0.0, 3.0};
  for (double x : sample(p, rng, 20000)) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 3.0);
  }
}

TEST(Distributions, SupDensityDiffMatchesOracle) {
  EXPECT_NEAR(sup_density_diff(TruncatedRayleigh{1.0, 0.0, 3.0}, TruncatedRayleigh{0.5, 0.0, 3.0}),
              0.791920608055559128954784933228, 1e-9);
  EXPECT_NEAR(sup_density_diff(Weibull{2.0, 5.0}, Weibull{2.2, 5.0}), 0.281528312388824832651719153817, 1e-9);
  EXPECT_DOUBLE_EQ(sup_density_diff(Weibull{2.0, 5.0}, Weibull{2.0, 5.0}), 0.0);
}

TEST(Distributions, RecordUsesCachedGrid) {
  const auto a = make_pdf_handle(TruncatedRayleigh{1.0, 0.0, 3.0}, 1);
  const auto b = make_pdf_handle(TruncatedRayleigh{0.5, 0.0, 3.0}, 2);
  EXPECT_NEAR(sup_density_diff(*a, *b), sup_density_diff(a->pdf, b->pdf), 1e-15);
  EXPECT_DOUBLE_EQ(sup_density_diff(*a, *a), 0.0);
  EXPECT_NEAR(a->mean, mean(a->pdf), 0.0);
}

TEST(Distributions, PointMass) {
  const Pdf p = point_mass(0.0);
  EXPECT_DOUBLE_EQ(mean(p), 0.0);
  EXPECT_DOUBLE_EQ(second_moment(p), 0.0);
  Rng rng(1);
  EXPECT_DOUBLE_EQ(sample_one(p, rng), 0.0);
}

TEST(Distributions, EmpiricalMoments) {
  const Pdf p = make_empirical({3.0, 1.0, 2.0});
  EXPECT_DOUBLE_EQ(mean(p), 2.0);
  EXPECT_NEAR(second_moment(p), 14.0 / 3.0, 1e-15);
}

TEST(Distributions, InvalidParametersRejected) {
  EXPECT_THROW(validate(Pdf{TruncatedRayleigh{0.0, 0.0, 3.0}}), ConfigError);
  EXPECT_THROW(validate(Pdf{TruncatedRayleigh{1.0, 2.0, 1.0}}), ConfigError);
  EXPECT_THROW(validate(Pdf{Weibull{-1.0, 2.0}}), ConfigError);
  EXPECT_THROW(make_empirical({}), ConfigError);
}

TEST(Distributions, RayleighEvolutionClamps) {
  Rng rng(4);
  RayleighEvolution law{5.0, 0.1, 0.0, 0.01, 1e-3, 3.0};
  double s = 1.0;
  for (long k = 0; k < 500; ++k) {
    s = evolve_rayleigh(s, law, k, rng);
    EXPECT_GE(s, 1e-3);
    EXPECT_LE(s, 3.0);
  }
}

TEST(Distributions, RayleighEvolutionStaticWithoutDrift) {
  Rng rng(4);
  EXPECT_DOUBLE_EQ(evolve_rayleigh(0.7, RayleighEvolution{}, 10, rng), 0.7);
}

TEST(Distributions, WeibullGustDoublesScaleInsideWindow) {
  WeibullEvolution law;
  law.base_scale = 1.0;
  law.base_shape = 5.0;
  law.offset = 0.5;
  law.gust_begin = 2500;
  law.gust_end = 3250;
  const auto before = evolve_weibull(law, 2499);
  const auto inside = evolve_weibull(law, 2500);
  const auto after = evolve_weibull(law, 3251);
  EXPECT_DOUBLE_EQ(inside.first, 2.0 * before.first);
  EXPECT_DOUBLE_EQ(after.first, before.first);
  EXPECT_DOUBLE_EQ(inside.second, before.second);
}

TEST(Distributions, WeibullFrozenAtZeroRate) {
  WeibullEvolution law;
  law.base_scale = 1.2;
  law.phase_scale = 0.4;
  EXPECT_EQ(evolve_weibull(law, 1), evolve_weibull(law, 4000));
}
