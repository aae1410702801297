#include "helpers.hpp"
#include "lowrank/noise.hpp"
#include "lowrank/sim.hpp"

#include <doctest.h>

#include <numbers>

using namespace lowrank;
using testing::random_matrix;

namespace {

// Midpoint rule on the Marchenko-Pastur density (independent of the library's
// Gauss-Kronrod evaluation).
double mp_cdf_midpoint(double x, double beta, int steps = 2000000) {
  const double a = (1 - std::sqrt(beta)) * (1 - std::sqrt(beta));
  const double b = (1 + std::sqrt(beta)) * (1 + std::sqrt(beta));
  if (x <= a) return 0.0;
  const double hi = std::min(x, b);
  const double h = (hi - a) / steps;
  double sum = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double t = a + (i + 0.5) * h;
    sum += std::sqrt((b - t) * (t - a)) / (2 * std::numbers::pi * beta * t);
  }
  return sum * h;
}

}  // namespace

TEST_SUITE("noise") {

TEST_CASE("Marchenko-Pastur CDF against an independent integration") {
  for (double beta : {0.25, 0.5, 0.8}) {
    const double a = (1 - std::sqrt(beta)) * (1 - std::sqrt(beta));
    const double b = (1 + std::sqrt(beta)) * (1 + std::sqrt(beta));
    for (double frac : {0.1, 0.3, 0.5, 0.9}) {
      const double x = a + frac * (b - a);
      CHECK(mp_cdf(x, beta) == doctest::Approx(mp_cdf_midpoint(x, beta)).epsilon(1e-6));
    }
    CHECK(mp_cdf(a, beta) == doctest::Approx(0.0));
    CHECK(mp_cdf(b, beta) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("Marchenko-Pastur median") {
  for (double beta : {0.01, 0.2, 0.5, 1.0}) {
    const double m = mp_median(beta);
    CHECK(m > (1 - std::sqrt(beta)) * (1 - std::sqrt(beta)));
    CHECK(m < (1 + std::sqrt(beta)) * (1 + std::sqrt(beta)));
    CHECK(std::abs(mp_cdf(m, beta) - 0.5) <= 1e-8);
  }
  CHECK(std::abs(mp_median(1e-4) - 1.0) < 0.021);
  CHECK_THROWS_AS(mp_median(0.0), InputError);
  CHECK_THROWS_AS(mp_median(1.5), InputError);
}

TEST_CASE("MAD estimator") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Matrix noise = 2.0 * random_matrix(300, 300, seed);
    const double s = estim_sigma_mad(DataMatrix(noise)).sigma;
    CHECK(s >= 1.9);
    CHECK(s <= 2.1);
  }
  const Matrix x = random_matrix(40, 25, 8);
  const double s1 = estim_sigma_mad(DataMatrix(x)).sigma;
  const double s3 = estim_sigma_mad(DataMatrix(3.0 * x)).sigma;
  CHECK(s3 == doctest::Approx(3.0 * s1).epsilon(1e-12));
  // Transposition only commutes with the estimator when nothing is centered.
  CHECK(estim_sigma_mad(DataMatrix(x), false).sigma ==
        doctest::Approx(estim_sigma_mad(DataMatrix(Matrix(x.transpose())), false).sigma).epsilon(1e-12));
}

TEST_CASE("LN estimator") {
  const Matrix low = testing::orthonormal(30, 3, 1) * Vector::LinSpaced(3, 3, 1).asDiagonal() *
                     testing::orthonormal(20, 3, 2).transpose();
  CHECK(estim_sigma_ln(DataMatrix(low), Index{3}, false).sigma < 1e-8);

  const Matrix x = random_matrix(30, 20, 4);
  const SigmaEstimate zero = estim_sigma_ln(DataMatrix(x), Index{0}, false);
  CHECK(zero.sigma * zero.sigma == doctest::Approx(x.squaredNorm() / 600.0).epsilon(1e-12));
  CHECK(zero.k_used == Index{0});
  CHECK_FALSE(zero.k_estimated);

  const double s1 = estim_sigma_ln(DataMatrix(x), Index{2}).sigma;
  const double s3 = estim_sigma_ln(DataMatrix(3.0 * x), Index{2}).sigma;
  CHECK(s3 == doctest::Approx(3.0 * s1).epsilon(1e-12));

  CHECK(estim_sigma_ln(DataMatrix(x), Index{19}).sigma > 0.0);
  CHECK_THROWS_AS(estim_sigma_ln(DataMatrix(x), Index{20}), InputError);
}

TEST_CASE("LN and MAD agree on strong low-rank signal") {
  double gap = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SimulationBundle sim = lrsim(200, 500, 10, 4.0, seed);
    const double ln = estim_sigma_ln(DataMatrix(sim.x), Index{10}).sigma;
    const double mad = estim_sigma_mad(DataMatrix(sim.x)).sigma;
    CHECK(ln == doctest::Approx(sim.sigma).epsilon(0.1));
    CHECK(mad == doctest::Approx(8.1e-4).epsilon(0.15));
    gap += std::abs(mad - ln) / sim.sigma;
  }
  CHECK(gap / 5 <= 0.1);
}

TEST_CASE("rank cross-validation") {
  SUBCASE("noiseless rank 3") {
    const Matrix low = testing::orthonormal(30, 3, 5) * Vector::LinSpaced(3, 6, 2).asDiagonal() *
                       testing::orthonormal(20, 3, 6).transpose();
    RankCvOptions o;
    o.k_max = 6;
    o.seed = 1;
    const RankCvResult r = estim_rank_cv(DataMatrix(low), o);
    CHECK(r.k == 3);
    CHECK(r.msep.rows() == 10);
    CHECK(r.msep.cols() == 7);
  }
  SUBCASE("pure noise selects rank 0 most of the time") {
    int zeros = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      RankCvOptions o;
      o.k_max = 5;
      o.seed = s;
      zeros += estim_rank_cv(DataMatrix(random_matrix(40, 20, 100 + s)), o).k == 0;
    }
    CHECK(zeros >= 3);
  }
  SUBCASE("LN without k estimates the rank and says so") {
    const SimulationBundle sim = lrsim(60, 40, 3, 4.0, 2);
    RankCvOptions cv;
    cv.k_max = 8;
    const SigmaEstimate s = estim_sigma_ln(DataMatrix(sim.x), std::nullopt, true, cv);
    CHECK(s.k_estimated);
    REQUIRE(s.k_used.has_value());
    CHECK(*s.k_used == 3);
    bool flagged = false;
    for (const auto& d : s.diagnostics) flagged = flagged || d.code == "k_estimated";
    CHECK(flagged);
  }
  SUBCASE("deterministic across thread counts") {
    const SimulationBundle sim = lrsim(40, 30, 2, 2.0, 9);
    RankCvOptions a, b;
    a.k_max = b.k_max = 4;
    a.threads = 1;
    b.threads = 4;
    CHECK(estim_rank_cv(DataMatrix(sim.x), a).msep == estim_rank_cv(DataMatrix(sim.x), b).msep);
  }
}

}  // TEST_SUITE
