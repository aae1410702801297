#pragma once

#include "lowrank/core.hpp"

#include <variant>

namespace lowrank {

struct Gaussian {
  double sigma;
};
/// X_ij ~ Binomial(mu_ij, 1 - delta) / (1 - delta).
struct Binomial {
  double delta;
};
using NoiseModel = std::variant<Gaussian, Binomial>;

enum class NoiseKind { Gaussian, Binomial };
enum class Transformation { None, Ca };

/// Diagonal of S: n sigma^2 (Gaussian) or delta/(1 - delta) times the column
/// sums (Binomial, which requires nonnegative integer counts).
Vector noise_regularizer(const DataMatrix& x, const NoiseModel& model);

/// Binomial variance carried through the CA map with the margins fixed:
/// S_jj = delta/(1 - delta) sum_i X_ij / (r_i c_j).
Vector ca_noise_regularizer(const Matrix& counts, double delta);

struct AutoencoderFit {
  Matrix b;
  Matrix mu;
  /// X^T X + S was singular and the minimum-norm solution was used.
  bool fallback = false;
};

/// B = (X^T X + diag(s))^{-1} X^T X and mu = X B, by a symmetric solve.
AutoencoderFit stable_autoencoder(const Matrix& x, const Vector& s);

struct IsaIteration {
  Matrix mu;
  int nb_iter = 0;
  bool converged = false;
  bool fallback = false;
};

/// Fixed point mu <- working (mu^T mu + S)^{-1} mu^T mu started at mu = working;
/// stops once ||mu_t - mu_{t-1}||_F^2 <= threshold or after maxiter steps.
IsaIteration isa_iterate(const Matrix& working, const Vector& s, int maxiter, double threshold);

struct CaDecomposition {
  Matrix m;
  Vector r;
  Vector c;
  double total = 0.0;
};

/// M = R^{-1/2} (X - r c^T / N) C^{-1/2}. Imputation steps pass
/// require_nonnegative = false since fitted cells may dip below zero.
CaDecomposition ca_transform(const Matrix& x, bool require_nonnegative = true);

/// R^{1/2} mu C^{1/2} + r c^T / N.
Matrix ca_backtransform(const Matrix& mu_m, const CaDecomposition& ca);

struct CaCoordinates {
  /// Principal coordinates, one column per retained component.
  Matrix rows;
  Matrix cols;
};

CaCoordinates ca_coordinates(const SvdFactors& factors, const CaDecomposition& ca);

struct DeltaCvOptions {
  std::vector<double> grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int nbsim = 10;
  double pna = 0.1;
  int maxiter = 1000;
  double threshold = 1e-8;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct DeltaCvResult {
  /// nbsim x grid prediction errors on the hidden cells.
  Matrix msep;
  Vector mean_msep;
  double delta = 0.0;
};

/// Repeated learning cross-validation of delta for the Binomial model.
DeltaCvResult estim_delta(const DataMatrix& x, Transformation transformation = Transformation::None,
                          const DeltaCvOptions& options = {});

struct IsaOptions {
  std::optional<double> sigma;
  std::optional<double> delta;
  /// Gaussian unless the CA transformation is requested.
  std::optional<NoiseKind> noise;
  Transformation transformation = Transformation::None;
  /// nb_eigen counts singular values of mu_hat above svd_cutoff times the top
  /// singular value of the working matrix.
  double svd_cutoff = 1e-3;
  int maxiter = 1000;
  double threshold = 1e-6;
  /// Number of factors kept in low_rank (diagnostics only).
  std::optional<Index> nu;
  /// Gaussian path only.
  bool center = true;
  DeltaCvOptions delta_cv;
};

struct IsaResult : ShrinkageResult {
  /// Estimate in the space the iteration ran in (M for CA, centered X otherwise).
  Matrix mu_working;
  std::optional<CaDecomposition> ca;
};

IsaResult isa(const DataMatrix& x, const IsaOptions& options = {});

/// Validates nonnegative integer counts; throws InputError naming the cell.
void require_counts(const Matrix& x, const std::string& context);

}  // namespace lowrank
