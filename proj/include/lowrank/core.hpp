#pragma once

#include "lowrank/common.hpp"

#include <optional>
#include <utility>

namespace lowrank {

/// An n x p data matrix with an optional missingness mask.
///
/// Values at missing cells are unspecified (they are stored as NaN). Without a
/// mask every cell is observed. Construction validates the invariants: both
/// dimensions at least 2, observed entries finite, and every row and column
/// holding at least one observed entry.
class DataMatrix {
 public:
  explicit DataMatrix(Matrix values);
  DataMatrix(Matrix values, Mask observed);

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  /// Observation mask; all true when the matrix is complete.
  const Mask& observed() const { return observed_; }
  bool is_observed(Index i, Index j) const { return observed_(i, j); }
  bool has_missing() const { return missing_count_ > 0; }
  Index missing_count() const { return missing_count_; }
  Index observed_count() const { return values_.size() - missing_count_; }

  /// Throws InputError naming `context` when any cell is missing.
  void require_complete(const std::string& context) const;

 private:
  Matrix values_;
  Mask observed_;
  Index missing_count_ = 0;
};

/// X = U diag(d) V^T, d nonincreasing and nonnegative.
struct SvdFactors {
  Matrix u;
  Vector d;
  Matrix v;

  Index rank() const { return d.size(); }
  Matrix reconstruct() const { return u * d.asDiagonal() * v.transpose(); }
};

enum class SvdMethod {
  /// Full dense divide-and-conquer SVD (default, exact).
  Dense,
  /// Eigendecomposition of the smaller Gram matrix. Several times faster on
  /// small matrices; singular values far below d_1 lose relative accuracy.
  Gram,
  /// Randomized range finder with power iterations for a truncated spectrum.
  Randomized,
};

struct SvdOptions {
  std::optional<Index> rank;
  SvdMethod method = SvdMethod::Dense;
  int power_iterations = 3;
  Index oversample = 10;
  std::uint64_t seed = 0x5eed;
};

SvdFactors compute_svd(const Matrix& x, const SvdOptions& options);
SvdFactors compute_svd(const Matrix& x, std::optional<Index> rank_budget = std::nullopt);

/// Column location/scale removed from a matrix so it can be restored later.
struct CenterState {
  Vector column_means;
  Vector column_scales;
  bool applied = false;

  static CenterState identity(Index cols);
  /// Adds back scales and means: y * diag(scales) + 1 means^T.
  Matrix restore(const Matrix& centered) const;
  /// Applies the stored transform to a new matrix with the same columns.
  Matrix apply(const Matrix& raw) const;
};

/// Centers each column on the mean of its observed entries; with `scale`,
/// also divides by the observed standard deviation (denominator count - 1).
std::pair<DataMatrix, CenterState> center_columns(const DataMatrix& x, bool scale = false);

/// U diag(shrunk) V^T with centering and scaling restored.
Matrix reconstruct(const SvdFactors& factors, const Vector& shrunk, const CenterState& state);

/// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRankTolerance = 1e-12;

/// Number of entries strictly above `relative_cutoff` times the largest value
/// of `reference` (the values themselves when no reference is given).
Index count_above(const Vector& values, double relative_cutoff = kRankTolerance,
                  std::optional<double> reference = std::nullopt);

/// Tuning values selected by an estimator; unset fields do not apply.
struct TuningParams {
  std::optional<double> lambda;
  std::optional<double> gamma;
  std::optional<double> sigma;
  std::optional<Index> k;
  std::optional<double> delta;
};

struct ShrinkageResult {
  Matrix mu_hat;
  Index nb_eigen = 0;
  Vector singval;
  /// Factors of the centered estimate: mu_hat = restore(U diag(singval) V^T).
  SvdFactors low_rank;
  CenterState centering;
  TuningParams params;
  std::optional<double> criterion;
  std::optional<int> nb_iter;
  bool converged = true;
  Diagnostics diagnostics;
};

/// Observed-cell mean of each column.
Vector observed_column_means(const DataMatrix& x);

/// Copy of the values with missing cells replaced by `fill`.
Matrix fill_missing(const DataMatrix& x, const Matrix& fill);

}  // namespace lowrank
