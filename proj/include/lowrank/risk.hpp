#pragma once

#include "lowrank/core.hpp"
#include "lowrank/optimize.hpp"

namespace lowrank {

enum class Criterion { Sure, Gsure };

struct RiskValue {
  Criterion criterion = Criterion::Sure;
  double value = 0.0;
  double rss = 0.0;
  double divergence = 0.0;
  double lambda = 0.0;
  double gamma = 1.0;
  /// GSURE denominator vanished; value is +infinity.
  bool degenerate = false;
  /// Divergence estimated from a subset of cells.
  bool approximate = false;
};

/// Shape of the matrix whose spectrum is scored. With `centered`, the spectrum
/// belongs to a column-centered n x p matrix: the estimator is then
/// column means + f(centered data), whose divergence is p plus the spectral
/// divergence of an (n - 1) x p matrix.
struct SpectrumShape {
  Index n = 0;
  Index p = 0;
  bool centered = false;
};

/// Divergence of the ATN spectral estimator f(d) = d max(1 - (lambda/d)^gamma, 0)
/// on an n x p matrix whose singular values are d (min(n, p) entries):
///   sum_l f'(d_l) + |n - p| f(d_l)/d_l + 2 sum_{m != l} d_l f(d_l)/(d_l^2 - d_m^2).
/// Tied values (within 1e-10 d_1) are separated by a +-1e-9 d_1 jitter.
double div_closed_form(const Vector& d, double lambda, double gamma, Index n, Index p);

/// Divergence of the full estimator described by `shape` (see SpectrumShape).
double divergence(const Vector& d, double lambda, double gamma, const SpectrumShape& shape);

/// sum_l d_l^2 min((lambda/d_l)^(2 gamma), 1).
double spectral_rss(const Vector& d, double lambda, double gamma);

/// -np sigma^2 + RSS + 2 sigma^2 div.
RiskValue sure(const Vector& d, double lambda, double gamma, double sigma, Index n, Index p);
RiskValue sure(const Vector& d, double lambda, double gamma, double sigma,
               const SpectrumShape& shape);

/// RSS / (1 - div/np)^2, +infinity (degenerate) when div >= np.
RiskValue gsure(const Vector& d, double lambda, double gamma, Index n, Index p);
RiskValue gsure(const Vector& d, double lambda, double gamma, const SpectrumShape& shape);

struct QutResult {
  double lambda = 0.0;
  int nbsim = 0;
  double quantile_level = 0.95;
  /// Largest singular value of each simulated null matrix.
  Vector null_maxima;
};

/// Empirical quantile (linear interpolation between order statistics).
double empirical_quantile(Vector values, double level);

/// Simulates nbsim pure N(0, sigma^2) matrices (column-centered when `center`)
/// and returns the quantile_level quantile of their largest singular values.
QutResult qut_lambda(Index n, Index p, double sigma, int nbsim = 500, double quantile_level = 0.95,
                     std::uint64_t seed = 0, bool center = true, int threads = 0);

enum class AdaMethod { Gsure, Sure, Qut };

/// 1.0, 1.1, ..., 5.0
std::vector<double> default_gamma_seq();

struct AdaShrinkOptions {
  std::optional<double> sigma;
  AdaMethod method = AdaMethod::Gsure;
  std::vector<double> gamma_seq = default_gamma_seq();
  /// Starting threshold; defaults to the median singular value.
  std::optional<double> lambda0;
  bool center = true;
  int nbsim = 500;
  double quantile_level = 0.95;
  /// Precomputed null threshold for method = Qut (skips the simulation).
  std::optional<QutResult> qut;
  std::uint64_t seed = 0;
  LineSearchOptions search;
  int threads = 0;
};

/// ATN denoising of a complete matrix with (lambda, gamma) chosen by GSURE,
/// SURE, or QUT (lambda fixed at the null quantile, gamma by SURE).
ShrinkageResult adashrink(const DataMatrix& x, const AdaShrinkOptions& options = {});

/// Criterion values on a lambda x gamma grid (rows follow lambdas).
Matrix risk_surface(const Vector& d, const std::vector<double>& lambdas,
                    const std::vector<double>& gammas, Criterion criterion,
                    const SpectrumShape& shape, std::optional<double> sigma = std::nullopt);

}  // namespace lowrank
