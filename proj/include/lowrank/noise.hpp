#pragma once

#include "lowrank/core.hpp"

namespace lowrank {

/// CDF of the Marchenko-Pastur law with ratio beta in (0, 1] and unit
/// variance, evaluated by Gauss-Kronrod quadrature of the density.
double mp_cdf(double x, double beta);

/// Median of the Marchenko-Pastur law (bisection on mp_cdf, abs tol 1e-10).
double mp_median(double beta);

enum class SigmaMethod { Mad, Ln };

struct SigmaEstimate {
  double sigma = 0.0;
  SigmaMethod method = SigmaMethod::Mad;
  std::optional<Index> k_used;
  bool k_estimated = false;
  Diagnostics diagnostics;
};

/// sigma = median(singular values) / sqrt(n * mu_beta) with n = max(rows, cols)
/// and beta = min/max.
SigmaEstimate estim_sigma_mad(const DataMatrix& x, bool center = true);

struct RankCvOptions {
  /// Largest candidate rank; defaults to min(20, min(n - 1, p) - 1).
  std::optional<Index> k_max;
  double pna = 0.05;
  int nbsim = 10;
  std::uint64_t seed = 0;
  double threshold = 1e-6;
  int maxiter = 1000;
  bool center = true;
  int threads = 0;
};

struct RankCvResult {
  Index k = 0;
  /// nbsim x (k_max + 1) prediction errors on the hidden cells.
  Matrix msep;
  Vector mean_msep;
};

/// Selects the rank by repeatedly hiding a fraction of cells, imputing them
/// with the iterative rank-k truncation for every candidate k, and keeping the
/// k with the smallest mean prediction error (ties go to the smaller k).
RankCvResult estim_rank_cv(const DataMatrix& x, const RankCvOptions& options = {});

/// sigma^2 = ||X - X_k||_F^2 / (np - nk - kp + k^2). When k is absent it is
/// chosen by estim_rank_cv and a "k_estimated" diagnostic is attached.
SigmaEstimate estim_sigma_ln(const DataMatrix& x, std::optional<Index> k = std::nullopt,
                             bool center = true, const RankCvOptions& cv = {});

}  // namespace lowrank
