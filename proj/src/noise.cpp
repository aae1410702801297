#include "lowrank/noise.hpp"

#include "lowrank/missing.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>

namespace lowrank {

namespace {

Vector singular_values(const Matrix& x) {
  Eigen::BDCSVD<Matrix> svd(x);
  if (svd.info() != Eigen::Success)
    throw NumericalError("SVD failed on a " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.cols()) + " matrix");
  return svd.singularValues();
}

Matrix maybe_centered(const DataMatrix& x, bool center) {
  return center ? center_columns(x).first.values() : x.values();
}

}  // namespace

double mp_cdf(double x, double beta) {
  require(beta > 0.0 && beta <= 1.0, "Marchenko-Pastur ratio beta must lie in (0, 1]");
  const double a = std::pow(1.0 - std::sqrt(beta), 2);
  const double b = std::pow(1.0 + std::sqrt(beta), 2);
  if (x <= a) return 0.0;
  if (x >= b) return 1.0;
  // x = a + (b - a) sin^2(theta) removes both square-root endpoint singularities
  const double width = b - a;
  auto integrand = [&](double theta) {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double xt = a + width * s * s;
    return width * width * s * s * c * c / (M_PI * beta * xt);
  };
  const double upper = std::asin(std::sqrt((x - a) / width));
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, upper, 15,
                                                                       1e-14);
}

double mp_median(double beta) {
  require(beta > 0.0 && beta <= 1.0, "Marchenko-Pastur ratio beta must lie in (0, 1]");
  double lo = std::pow(1.0 - std::sqrt(beta), 2);
  double hi = std::pow(1.0 + std::sqrt(beta), 2);
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (mp_cdf(mid, beta) < 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SigmaEstimate estim_sigma_mad(const DataMatrix& x, bool center) {
  x.require_complete("estim_sigma (MAD)");
  const Vector d = singular_values(maybe_centered(x, center));
  const double big = static_cast<double>(std::max(x.rows(), x.cols()));
  const double beta = static_cast<double>(std::min(x.rows(), x.cols())) / big;
  SigmaEstimate est;
  est.method = SigmaMethod::Mad;
  est.sigma = median(d) / std::sqrt(big * mp_median(beta));
  return est;
}

SigmaEstimate estim_sigma_ln(const DataMatrix& x, std::optional<Index> k, bool center,
                             const RankCvOptions& cv) {
  x.require_complete("estim_sigma (LN)");
  const double n = static_cast<double>(x.rows());
  const double p = static_cast<double>(x.cols());
  SigmaEstimate est;
  est.method = SigmaMethod::Ln;
  if (!k) {
    RankCvOptions opts = cv;
    opts.center = center;
    k = estim_rank_cv(x, opts).k;
    est.k_estimated = true;
    est.diagnostics.push_back(
        {"k_estimated", "k was estimated by cross-validation: k = " + std::to_string(*k),
         static_cast<double>(*k)});
  }
  require(*k >= 0, "estim_sigma (LN): k must be nonnegative");
  const double kk = static_cast<double>(*k);
  const double denom = n * p - n * kk - kk * p + kk * kk;
  require(*k < std::min(x.rows() - 1, x.cols()) && denom > 0.0,
          "estim_sigma (LN): k=" + std::to_string(*k) +
              " leaves no residual degrees of freedom (need k < min(n-1, p))");
  const Vector d = singular_values(maybe_centered(x, center));
  const double residual = d.tail(d.size() - std::min<Index>(*k, d.size())).squaredNorm();
  est.sigma = std::sqrt(residual / denom);
  est.k_used = *k;
  return est;
}

RankCvResult estim_rank_cv(const DataMatrix& x, const RankCvOptions& options) {
  const Index n = x.rows();
  const Index p = x.cols();
  const Index limit = std::min(n - 1, p) - 1;
  require(limit >= 0, "estim_rank_cv: matrix too small for rank selection");
  const Index k_max = options.k_max.value_or(std::min<Index>(20, limit));
  require(k_max >= 0 && k_max <= limit,
          "estim_rank_cv: k_max must lie in [0, min(n-1, p) - 1] = [0, " +
              std::to_string(limit) + "]");
  require(options.pna > 0.0 && options.pna < 0.5, "estim_rank_cv: pNA must lie in (0, 0.5)");
  require(options.nbsim >= 1, "estim_rank_cv: nbsim must be positive");

  RankCvResult result;
  result.msep = Matrix::Zero(options.nbsim, k_max + 1);
  parallel_for(
      static_cast<std::size_t>(options.nbsim),
      [&](std::size_t rep) {
        const HiddenCells hidden =
            hide_cells(x, options.pna, derive_seed(options.seed, "rank-cv", rep));
        ImputeOptions io;
        io.threshold = options.threshold;
        io.maxiter = options.maxiter;
        io.center = options.center;
        io.svd = SvdMethod::Randomized;
        for (Index k = 0; k <= k_max; ++k) {
          const ImputationResult fit = iterative_impute(hidden.data, Hard{k}, io);
          result.msep(static_cast<Index>(rep), k) = msep(fit.complete_obs, x.values(), hidden.hidden);
        }
      },
      options.threads);
  result.mean_msep = result.msep.colwise().mean().transpose();
  Index best = 0;
  for (Index k = 1; k <= k_max; ++k)
    if (result.mean_msep(k) < result.mean_msep(best)) best = k;
  result.k = best;
  return result;
}

}  // namespace lowrank
