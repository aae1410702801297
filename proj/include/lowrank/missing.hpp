#pragma once

#include "lowrank/core.hpp"
#include "lowrank/isa.hpp"
#include "lowrank/optimize.hpp"
#include "lowrank/risk.hpp"
#include "lowrank/shrinkage.hpp"

#include <cmath>
#include <limits>
#include <variant>

namespace lowrank {

/// Iterated stable autoencoder used as the fitting step of an imputation.
struct IsaRule {
  NoiseModel noise = Gaussian{1.0};
  Transformation transformation = Transformation::None;
  int maxiter = 1000;
  double threshold = 1e-6;
};

using ImputeRule = std::variant<ShrinkSpec, IsaRule>;

struct ImputeOptions {
  double threshold = 1e-6;
  int maxiter = 1000;
  bool center = true;
  bool scale = false;
  /// Starting values for the missing cells; observed-column means when absent.
  std::optional<Matrix> init;
  /// Randomized uses a rank budget equal to k for Hard(k) rules and falls
  /// back to Dense for every other rule.
  SvdMethod svd = SvdMethod::Dense;
};

struct ImputationResult {
  /// Observed cells verbatim, missing cells taken from mu_hat.
  Matrix complete_obs;
  Matrix mu_hat;
  Vector singval;
  Index nb_eigen = 0;
  int nb_iter = 0;
  bool converged = false;
  TuningParams params;
  std::optional<double> criterion;
  Diagnostics diagnostics;
};

/// Alternates fit / refill until sum (mu_{l-1} - mu_l)^2 <= threshold.
/// Column means (and scales) are taken from the observed cells once, at
/// initialization. A complete matrix is fitted once and reported converged.
ImputationResult iterative_impute(const DataMatrix& x, const ImputeRule& rule,
                                  const ImputeOptions& options = {});

struct FdOptions {
  /// Cell (i, j) is perturbed by step_scale * (1 + |X_ij|).
  double step_scale = std::sqrt(std::numeric_limits<double>::epsilon());
  /// Perturb only a random subset of this many observed cells; the sum is
  /// rescaled by |obs| / m and flagged approximate.
  std::optional<Index> cell_subset;
  std::uint64_t seed = 0;
  /// Reruns last at most (base iterations + extra_iterations) steps ...
  int extra_iterations = 5;
  /// ... and never more than this.
  int max_iterations = 200;
  /// A rerun stops early once its difference quotient changes by less than
  /// tolerance * max(1, |quotient|) between two steps.
  double tolerance = 1e-7;
  int threads = 0;
};

struct DivergenceResult {
  double value = 0.0;
  bool approximate = false;
  Index cells_used = 0;
};

/// Finite-difference divergence sum_{ij in obs} d mu_ij / d X_ij of the
/// converged iterative estimator. Every rerun starts at the unperturbed
/// completed matrix and is differenced against the unperturbed run iterated
/// the same number of steps, so the residual drift of the base fit cancels.
DivergenceResult divergence_fd(const DataMatrix& x, const ShrinkSpec& rule,
                               const ImputeOptions& impute, const FdOptions& fd,
                               const ImputationResult& base);
DivergenceResult divergence_fd(const DataMatrix& x, const ShrinkSpec& rule,
                               const ImputeOptions& impute = {}, const FdOptions& fd = {});

struct MissRisk {
  RiskValue risk;
  ImputationResult fit;
};

/// SURE with missing values: -|obs| sigma^2 + RSS_obs + 2 sigma^2 div.
/// GSURE: RSS_obs / (1 - div/|obs|)^2, +infinity when div >= |obs|.
MissRisk miss_risk(const DataMatrix& x, double lambda, double gamma, Criterion criterion,
                   std::optional<double> sigma, const ImputeOptions& impute = {},
                   const FdOptions& fd = {});

RiskValue sure_miss(const DataMatrix& x, double lambda, double gamma, double sigma,
                    const ImputeOptions& impute = {}, const FdOptions& fd = {});
RiskValue gsure_miss(const DataMatrix& x, double lambda, double gamma,
                     const ImputeOptions& impute = {}, const FdOptions& fd = {});

struct ImputeAdaOptions {
  std::optional<double> lambda;
  std::optional<double> gamma;
  std::optional<double> sigma;
  AdaMethod method = AdaMethod::Gsure;
  std::vector<double> gamma_seq = default_gamma_seq();
  bool center = true;
  bool scale = false;
  double threshold = 1e-8;
  int nb_init = 1;
  int maxiter = 1000;
  std::optional<double> lambda0;
  std::uint64_t seed = 0;
  SvdMethod svd = SvdMethod::Dense;
  FdOptions fd;
  LineSearchOptions search;
  int threads = 0;
};

/// Iterative ATN imputation with (lambda, gamma) selected by SURE or GSURE
/// with missing values; fixed (lambda, gamma) skips the selection.
ImputationResult imputeada(const DataMatrix& x, const ImputeAdaOptions& options = {});

struct Mcar {
  double rate;
};
/// Missingness probability of every target column is logistic in the rank
/// quantile of a driver column (the highest-variance one, never masked),
/// calibrated so the overall expected rate equals `rate`.
struct Mar {
  double rate;
  double slope = 3.0;
};
using MissingMechanism = std::variant<Mcar, Mar>;

/// Masks cells of a complete matrix; masks leaving a row or column without
/// observed entries are redrawn (up to 100 attempts).
DataMatrix insert_missing(const DataMatrix& x, const MissingMechanism& mechanism,
                          std::uint64_t seed);

struct HiddenCells {
  DataMatrix data;
  /// true = hidden by this draw (observed in the input).
  Mask hidden;
};

/// Hides round(fraction * |obs|) uniformly chosen observed cells.
HiddenCells hide_cells(const DataMatrix& x, double fraction, std::uint64_t seed);

/// Mean squared error over the cells marked in `mask`.
double msep(const Matrix& completed, const Matrix& truth, const Mask& mask);

}  // namespace lowrank
