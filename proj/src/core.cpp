#include "lowrank/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace lowrank {

namespace {

std::string dims(const Matrix& x) {
  std::ostringstream out;
  out << x.rows() << "x" << x.cols();
  return out.str();
}

Matrix orthonormal_basis(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

SvdFactors truncate(SvdFactors f, Index r) {
  if (r >= f.d.size()) return f;
  return {f.u.leftCols(r), f.d.head(r), f.v.leftCols(r)};
}

SvdFactors dense_svd(const Matrix& x) {
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("SVD failed to converge on a " + dims(x) + " matrix");
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

SvdFactors gram_svd(const Matrix& x) {
  const bool tall = x.rows() >= x.cols();
  const Matrix gram = tall ? Matrix(x.transpose() * x) : Matrix(x * x.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success)
    throw NumericalError("Gram eigendecomposition failed on a " + dims(x) + " matrix");
  const Index m = gram.rows();
  Vector d(m);
  Matrix basis(m, m);
  for (Index l = 0; l < m; ++l) {
    d(l) = std::sqrt(std::max(eig.eigenvalues()(m - 1 - l), 0.0));
    basis.col(l) = eig.eigenvectors().col(m - 1 - l);
  }
  Matrix other = tall ? Matrix(x * basis) : Matrix(x.transpose() * basis);
  const double floor = d.size() > 0 ? d(0) * 1e-13 : 0.0;
  for (Index l = 0; l < m; ++l) {
    if (d(l) > floor && d(l) > 0.0)
      other.col(l) /= d(l);
    else
      other.col(l).setZero();
  }
  if (tall) return {other, d, basis};
  return {basis, d, other};
}

SvdFactors randomized_svd(const Matrix& x, Index rank, const SvdOptions& options) {
  const Index full = std::min(x.rows(), x.cols());
  const Index width = std::min(full, rank + options.oversample);
  if (width >= full) return truncate(dense_svd(x), rank);
  Rng rng = make_rng(options.seed, "randomized-svd");
  Matrix q = orthonormal_basis(x * standard_normal(x.cols(), width, rng));
  for (int it = 0; it < options.power_iterations; ++it) {
    const Matrix z = orthonormal_basis(x.transpose() * q);
    q = orthonormal_basis(x * z);
  }
  const Matrix b = q.transpose() * x;
  SvdFactors small = dense_svd(b);
  return truncate({q * small.u, small.d, small.v}, rank);
}

}  // namespace

// ---------------------------------------------------------------------------

DataMatrix::DataMatrix(Matrix values)
    : DataMatrix(values, Mask::Constant(values.rows(), values.cols(), true)) {}

DataMatrix::DataMatrix(Matrix values, Mask observed)
    : values_(std::move(values)), observed_(std::move(observed)) {
  require(values_.rows() >= 2 && values_.cols() >= 2,
          "data matrix must be at least 2x2, got " + dims(values_));
  require(observed_.rows() == values_.rows() && observed_.cols() == values_.cols(),
          "mask shape does not match the data matrix");
  for (Index j = 0; j < cols(); ++j) {
    for (Index i = 0; i < rows(); ++i) {
      if (observed_(i, j)) {
        if (!std::isfinite(values_(i, j)))
          throw InputError("non-finite observed entry at row " + std::to_string(i + 1) +
                           ", column " + std::to_string(j + 1));
      } else {
        values_(i, j) = std::numeric_limits<double>::quiet_NaN();
        ++missing_count_;
      }
    }
  }
  if (missing_count_ > 0) {
    for (Index i = 0; i < rows(); ++i)
      require(observed_.row(i).any(), "row " + std::to_string(i + 1) + " has no observed entry");
    for (Index j = 0; j < cols(); ++j)
      require(observed_.col(j).any(),
              "column " + std::to_string(j + 1) + " has no observed entry");
  }
}

void DataMatrix::require_complete(const std::string& context) const {
  if (has_missing())
    throw InputError(context + " requires a fully observed matrix (" +
                     std::to_string(missing_count_) +
                     " missing cells); impute the data first");
}

SvdFactors compute_svd(const Matrix& x, const SvdOptions& options) {
  require(x.allFinite(), "compute_svd: matrix has non-finite entries");
  const Index full = std::min(x.rows(), x.cols());
  const Index r = options.rank.value_or(full);
  require(r >= 1 && r <= full, "compute_svd: rank budget must lie in [1, min(n, p)]");
  switch (options.method) {
    case SvdMethod::Dense:
      return truncate(dense_svd(x), r);
    case SvdMethod::Gram:
      return truncate(gram_svd(x), r);
    case SvdMethod::Randomized:
      return randomized_svd(x, r, options);
  }
  return truncate(dense_svd(x), r);
}

SvdFactors compute_svd(const Matrix& x, std::optional<Index> rank_budget) {
  SvdOptions options;
  options.rank = rank_budget;
  return compute_svd(x, options);
}

CenterState CenterState::identity(Index cols) {
  return {Vector::Zero(cols), Vector::Ones(cols), false};
}

Matrix CenterState::restore(const Matrix& centered) const {
  if (!applied) return centered;
  Matrix out = centered * column_scales.asDiagonal();
  out.rowwise() += column_means.transpose();
  return out;
}

Matrix CenterState::apply(const Matrix& raw) const {
  if (!applied) return raw;
  Matrix out = raw;
  out.rowwise() -= column_means.transpose();
  return out * column_scales.cwiseInverse().asDiagonal();
}

Vector observed_column_means(const DataMatrix& x) {
  Vector means(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < x.rows(); ++i) {
      if (x.is_observed(i, j)) {
        sum += x.values()(i, j);
        ++count;
      }
    }
    means(j) = sum / static_cast<double>(count);
  }
  return means;
}

Matrix fill_missing(const DataMatrix& x, const Matrix& fill) {
  return x.observed().select(x.values(), fill);
}

std::pair<DataMatrix, CenterState> center_columns(const DataMatrix& x, bool scale) {
  CenterState state{observed_column_means(x), Vector::Ones(x.cols()), true};
  if (scale) {
    for (Index j = 0; j < x.cols(); ++j) {
      double ss = 0.0;
      Index count = 0;
      for (Index i = 0; i < x.rows(); ++i) {
        if (x.is_observed(i, j)) {
          const double r = x.values()(i, j) - state.column_means(j);
          ss += r * r;
          ++count;
        }
      }
      const double sd = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : 0.0;
      state.column_scales(j) = sd > 0.0 ? sd : 1.0;
    }
  }
  Matrix centered = state.apply(fill_missing(x, Matrix::Zero(x.rows(), x.cols())));
  return {DataMatrix(std::move(centered), x.observed()), state};
}

Matrix reconstruct(const SvdFactors& factors, const Vector& shrunk, const CenterState& state) {
  require(shrunk.size() == factors.d.size(),
          "reconstruct: shrunk spectrum has " + std::to_string(shrunk.size()) +
              " entries, factors have " + std::to_string(factors.d.size()));
  require((shrunk.array() >= 0.0).all(), "reconstruct: shrunk values must be nonnegative");
  return state.restore(factors.u * shrunk.asDiagonal() * factors.v.transpose());
}

Index count_above(const Vector& values, double relative_cutoff, std::optional<double> reference) {
  if (values.size() == 0) return 0;
  const double top = reference.value_or(values.maxCoeff());
  if (!(top > 0.0)) return 0;
  const double cut = relative_cutoff * top;
  return static_cast<Index>((values.array() > cut).count());
}

}  // namespace lowrank
