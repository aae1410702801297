#include "helpers.hpp"
#include "lowrank/core.hpp"

#include <doctest.h>

#include <atomic>
#include <limits>
#include <set>

using namespace lowrank;
using testing::random_matrix;

TEST_SUITE("core") {

TEST_CASE("DataMatrix rejects degenerate input") {
  CHECK_THROWS_AS(DataMatrix(Matrix::Ones(1, 3)), InputError);
  Matrix bad = Matrix::Ones(3, 3);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(DataMatrix{bad}, InputError);
  Mask empty_row = Mask::Constant(3, 3, true);
  empty_row.row(2).setConstant(false);
  CHECK_THROWS_AS(DataMatrix(Matrix::Ones(3, 3), empty_row), InputError);
  Mask one = Mask::Constant(3, 3, true);
  one(0, 1) = false;
  const DataMatrix x(Matrix::Ones(3, 3), one);
  CHECK(x.has_missing());
  CHECK(x.missing_count() == 1);
  CHECK(x.observed_count() == 8);
  CHECK_THROWS_AS(x.require_complete("test"), InputError);
}

TEST_CASE("svd of the identity and of an outer product") {
  const SvdFactors id = compute_svd(Matrix::Identity(3, 3));
  CHECK((id.d - Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((id.u * id.v.transpose() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  Vector a(4), b(3);
  a << 2, 0, 0, 0;
  b << 0, 3, 0;
  const SvdFactors f = compute_svd(a * b.transpose());
  CHECK(f.d(0) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(f.d.tail(2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("every svd method satisfies the factor invariants") {
  const Matrix x = random_matrix(7, 5, 11);
  // Oracle: singular values from a dense eigendecomposition of X^T X.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(x.transpose() * x);
  const Vector oracle = eig.eigenvalues().reverse().cwiseSqrt();
  for (SvdMethod m : {SvdMethod::Dense, SvdMethod::Gram, SvdMethod::Randomized}) {
    SvdOptions o;
    o.method = m;
    const SvdFactors f = compute_svd(x, o);
    CAPTURE(static_cast<int>(m));
    REQUIRE(f.rank() == 5);
    CHECK((f.u.transpose() * f.u - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((f.v.transpose() * f.v - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((f.reconstruct() - x).norm() / std::max(1.0, x.norm()) <= 1e-8);
    CHECK((f.d - oracle).cwiseAbs().maxCoeff() <= 1e-8);
    for (Index i = 1; i < f.d.size(); ++i) CHECK(f.d(i - 1) >= f.d(i));
  }
}

TEST_CASE("truncated svd recovers an exactly low-rank matrix") {
  const Matrix u = testing::orthonormal(40, 3, 1);
  const Matrix v = testing::orthonormal(25, 3, 2);
  Vector d(3);
  d << 9, 4, 1;
  const Matrix x = u * d.asDiagonal() * v.transpose();
  for (SvdMethod m : {SvdMethod::Dense, SvdMethod::Gram, SvdMethod::Randomized}) {
    const SvdFactors f = compute_svd(x, SvdOptions{3, m});
    REQUIRE(f.rank() == 3);
    CHECK((f.d - d).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((f.reconstruct() - x).norm() < 1e-8);
  }
  CHECK_THROWS_AS(compute_svd(x, Index{30}), InputError);
}

TEST_CASE("svd rejects non-finite input") {
  Matrix x = Matrix::Ones(3, 3);
  x(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(compute_svd(x), InputError);
}

TEST_CASE("column centering uses observed cells only") {
  Matrix v(3, 2);
  v << 1, 5, 2, 7, 3, 9;
  Mask m = Mask::Constant(3, 2, true);
  m(1, 1) = false;
  const auto [c, state] = center_columns(DataMatrix(v, m));
  CHECK(state.applied);
  CHECK(state.column_means(0) == doctest::Approx(2.0));
  CHECK(state.column_means(1) == doctest::Approx(7.0));
  CHECK(c.values()(0, 0) == doctest::Approx(-1.0));
  CHECK(c.values()(1, 0) == doctest::Approx(0.0));
  CHECK(c.values()(2, 0) == doctest::Approx(1.0));
  CHECK(c.values()(0, 1) == doctest::Approx(-2.0));
  CHECK(c.values()(2, 1) == doctest::Approx(2.0));
  CHECK_FALSE(c.is_observed(1, 1));

  // Idempotence on an already centered matrix.
  const DataMatrix full(random_matrix(6, 4, 3));
  const auto [once, s1] = center_columns(full);
  const auto [twice, s2] = center_columns(once);
  CHECK((once.values() - twice.values()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(s2.column_means.cwiseAbs().maxCoeff() < 1e-14);
  CHECK((s1.restore(once.values()) - full.values()).norm() <= 1e-12 * full.values().norm());
}

TEST_CASE("scaling and restore round trip") {
  const DataMatrix x(random_matrix(10, 4, 5) * 3.0 + Matrix::Constant(10, 4, 2.0));
  const auto [c, state] = center_columns(x, true);
  for (Index j = 0; j < 4; ++j) {
    const double sd = std::sqrt(c.values().col(j).squaredNorm() / 9.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK((state.restore(c.values()) - x.values()).norm() <= 1e-12 * x.values().norm());
  CHECK((state.apply(x.values()) - c.values()).norm() <= 1e-12 * x.values().norm());
}

TEST_CASE("reconstruct: identity, null and rank-one shrinkage") {
  const DataMatrix x(random_matrix(8, 5, 9));
  const SvdFactors f = compute_svd(x.values());
  CHECK((reconstruct(f, f.d, CenterState::identity(5)) - x.values()).norm() < 1e-10);

  const auto [c, state] = center_columns(x);
  const SvdFactors fc = compute_svd(c.values());
  const Matrix means = reconstruct(fc, Vector::Zero(fc.rank()), state);
  for (Index i = 0; i < 8; ++i)
    CHECK((means.row(i).transpose() - state.column_means).cwiseAbs().maxCoeff() < 1e-14);

  // Eckart-Young: the rank-1 truncation beats a rank-1 fit from power iteration
  // by at most rounding error, and no random rank-1 matrix does better.
  Vector rank1 = Vector::Zero(f.rank());
  rank1(0) = f.d(0);
  const Matrix best = reconstruct(f, rank1, CenterState::identity(5));
  Vector v = Vector::Ones(5);
  for (int it = 0; it < 500; ++it) v = (x.values().transpose() * (x.values() * v)).normalized();
  const Vector u = x.values() * v;
  const Matrix power = u * v.transpose();
  CHECK((x.values() - best).norm() <= (x.values() - power).norm() + 1e-10);
  CHECK((best - power).norm() < 1e-6);

  CHECK_THROWS_AS(reconstruct(f, Vector::Zero(2), CenterState::identity(5)), InputError);
}

TEST_CASE("count_above uses a relative cutoff") {
  Vector d(4);
  d << 10, 1, 1e-12, 0;
  CHECK(count_above(d) == 2);
  CHECK(count_above(d, 0.5) == 1);
  CHECK(count_above(d, 0.05, 100.0) == 1);
  CHECK(count_above(d, 0.2, 100.0) == 0);
  CHECK(count_above(Vector::Zero(3)) == 0);
}

TEST_CASE("seed derivation is deterministic and stream specific") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  Rng r1 = make_rng(5, "x");
  Rng r2 = make_rng(5, "x");
  CHECK(standard_normal(3, 3, r1) == standard_normal(3, 3, r2));
}

TEST_CASE("parallel_for visits each index once for any thread count") {
  for (int threads : {1, 2, 4, 8}) {
    std::vector<std::atomic<int>> hits(97);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, threads);
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
}

TEST_CASE("median") {
  Vector odd(3), even(4);
  odd << 3, 1, 2;
  even << 4, 1, 3, 2;
  CHECK(median(odd) == 2.0);
  CHECK(median(even) == 2.5);
  CHECK_THROWS_AS(median(Vector()), InputError);
}

TEST_CASE("missing-cell helpers") {
  Matrix v(3, 2);
  v << 1, 2, 3, 4, 5, 6;
  Mask m = Mask::Constant(3, 2, true);
  m(0, 0) = false;
  const DataMatrix x(v, m);
  const Vector means = observed_column_means(x);
  CHECK(means(0) == doctest::Approx(4.0));
  CHECK(means(1) == doctest::Approx(4.0));
  const Matrix filled = fill_missing(x, Matrix::Constant(3, 2, -1.0));
  CHECK(filled(0, 0) == -1.0);
  CHECK(filled(2, 1) == 6.0);
}

}  // TEST_SUITE
