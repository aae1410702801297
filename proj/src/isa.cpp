#include "lowrank/isa.hpp"

#include "lowrank/missing.hpp"
#include "lowrank/noise.hpp"

#include <cmath>

namespace lowrank {

namespace {

// Solves (g + diag(s)) b = g; falls back to the minimum-norm solution.
std::pair<Matrix, bool> regularized_solve(const Matrix& g, const Vector& s) {
  Matrix a = g;
  a.diagonal() += s;
  Eigen::LDLT<Matrix> ldlt(a);
  bool singular = ldlt.info() != Eigen::Success;
  if (!singular) {
    const Vector dd = ldlt.vectorD().cwiseAbs();
    const double top = dd.size() > 0 ? dd.maxCoeff() : 0.0;
    singular = !(top > 0.0) || dd.minCoeff() <= 1e-13 * top * static_cast<double>(dd.size());
  }
  if (!singular) return {ldlt.solve(g), false};
  return {a.completeOrthogonalDecomposition().solve(g), true};
}

// working (mu^T mu + S)^{-1} mu^T mu
std::pair<Matrix, bool> isa_step(const Matrix& working, const Matrix& mu, const Vector& s) {
  if (mu.rows() < mu.cols() && (s.array() > 0.0).all()) {
    // push-through: (mu^T mu + S)^{-1} mu^T = S^{-1} mu^T (mu S^{-1} mu^T + I)^{-1}
    const Matrix mu_s = mu * s.cwiseInverse().asDiagonal();
    Matrix k = mu_s * mu.transpose();
    k.diagonal().array() += 1.0;
    const Matrix w = working * mu_s.transpose();
    Eigen::LDLT<Matrix> ldlt(k);
    return {ldlt.solve(w.transpose()).transpose() * mu, false};
  }
  auto [b, fallback] = regularized_solve(mu.transpose() * mu, s);
  return {working * b, fallback};
}

void require_delta(double delta) {
  require(delta > 0.0 && delta < 1.0, "Binomial delta must lie in (0, 1), got " +
                                          std::to_string(delta));
}

}  // namespace

void require_counts(const Matrix& x, const std::string& context) {
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) {
      const double v = x(i, j);
      if (!(v >= 0.0) || v != std::round(v))
        throw InputError(context + ": Binomial noise needs nonnegative integer counts; entry at row " +
                         std::to_string(i + 1) + ", column " + std::to_string(j + 1) + " is " +
                         std::to_string(v));
    }
}

Vector noise_regularizer(const DataMatrix& x, const NoiseModel& model) {
  x.require_complete("noise_regularizer");
  if (const auto* g = std::get_if<Gaussian>(&model)) {
    require(g->sigma > 0.0, "Gaussian sigma must be positive");
    return Vector::Constant(x.cols(), static_cast<double>(x.rows()) * g->sigma * g->sigma);
  }
  const double delta = std::get<Binomial>(model).delta;
  require_delta(delta);
  require_counts(x.values(), "noise_regularizer");
  return delta / (1.0 - delta) * x.values().colwise().sum().transpose();
}

Vector ca_noise_regularizer(const Matrix& counts, double delta) {
  require_delta(delta);
  const Vector r = counts.rowwise().sum();
  const Vector c = counts.colwise().sum().transpose();
  Vector s(counts.cols());
  for (Index j = 0; j < counts.cols(); ++j)
    s(j) = (counts.col(j).array() / (r.array() * c(j))).sum();
  return delta / (1.0 - delta) * s;
}

AutoencoderFit stable_autoencoder(const Matrix& x, const Vector& s) {
  require(s.size() == x.cols(), "stable_autoencoder: S must have one entry per column");
  require(s.allFinite() && (s.array() >= 0.0).all(),
          "stable_autoencoder: S must be finite and nonnegative");
  require(x.allFinite(), "stable_autoencoder: matrix has non-finite entries");
  AutoencoderFit fit;
  auto [b, fallback] = regularized_solve(x.transpose() * x, s);
  fit.b = std::move(b);
  fit.mu = x * fit.b;
  fit.fallback = fallback;
  return fit;
}

IsaIteration isa_iterate(const Matrix& working, const Vector& s, int maxiter, double threshold) {
  require(maxiter >= 1, "ISA: maxiter must be at least 1");
  require(threshold >= 0.0, "ISA: threshold must be nonnegative");
  require(s.size() == working.cols(), "ISA: S must have one entry per column");
  IsaIteration out;
  out.mu = working;
  for (int t = 1; t <= maxiter; ++t) {
    auto [next, fallback] = isa_step(working, out.mu, s);
    out.fallback = out.fallback || fallback;
    const double change = (next - out.mu).squaredNorm();
    out.mu = std::move(next);
    out.nb_iter = t;
    if (change <= threshold) {
      out.converged = true;
      break;
    }
  }
  return out;
}

CaDecomposition ca_transform(const Matrix& x, bool require_nonnegative) {
  require(x.allFinite(), "ca_transform: table has non-finite entries");
  if (require_nonnegative)
    require((x.array() >= 0.0).all(), "ca_transform: table entries must be nonnegative");
  CaDecomposition ca;
  ca.r = x.rowwise().sum();
  ca.c = x.colwise().sum().transpose();
  for (Index i = 0; i < ca.r.size(); ++i)
    require(ca.r(i) > 0.0, "ca_transform: row " + std::to_string(i + 1) + " has a zero sum");
  for (Index j = 0; j < ca.c.size(); ++j)
    require(ca.c(j) > 0.0, "ca_transform: column " + std::to_string(j + 1) + " has a zero sum");
  ca.total = ca.r.sum();
  const Matrix expected = ca.r * ca.c.transpose() / ca.total;
  ca.m = ca.r.cwiseSqrt().cwiseInverse().asDiagonal() * (x - expected) *
         ca.c.cwiseSqrt().cwiseInverse().asDiagonal();
  return ca;
}

Matrix ca_backtransform(const Matrix& mu_m, const CaDecomposition& ca) {
  require(mu_m.rows() == ca.r.size() && mu_m.cols() == ca.c.size(),
          "ca_backtransform: matrix shape does not match the decomposition");
  return ca.r.cwiseSqrt().asDiagonal() * mu_m * ca.c.cwiseSqrt().asDiagonal() +
         ca.r * ca.c.transpose() / ca.total;
}

CaCoordinates ca_coordinates(const SvdFactors& factors, const CaDecomposition& ca) {
  const double root = std::sqrt(ca.total);
  CaCoordinates out;
  out.rows = root * ca.r.cwiseSqrt().cwiseInverse().asDiagonal() * factors.u * factors.d.asDiagonal();
  out.cols = root * ca.c.cwiseSqrt().cwiseInverse().asDiagonal() * factors.v * factors.d.asDiagonal();
  return out;
}

DeltaCvResult estim_delta(const DataMatrix& x, Transformation transformation,
                          const DeltaCvOptions& options) {
  require(!options.grid.empty(), "estim_delta: delta grid must not be empty");
  for (double d : options.grid) require_delta(d);
  require(options.nbsim >= 1, "estim_delta: nbsim must be positive");
  require(options.pna > 0.0 && options.pna < 0.5, "estim_delta: pNA must lie in (0, 0.5)");
  {
    const Matrix observed = fill_missing(x, Matrix::Zero(x.rows(), x.cols()));
    require_counts(observed, "estim_delta");
  }
  const auto ng = static_cast<Index>(options.grid.size());
  DeltaCvResult result;
  result.msep = Matrix::Zero(options.nbsim, ng);
  parallel_for(
      static_cast<std::size_t>(options.nbsim),
      [&](std::size_t rep) {
        const HiddenCells hidden =
            hide_cells(x, options.pna, derive_seed(options.seed, "delta-cv", rep));
        ImputeOptions io;
        io.center = false;
        io.threshold = options.threshold;
        io.maxiter = options.maxiter;
        for (Index g = 0; g < ng; ++g) {
          const IsaRule rule{Binomial{options.grid[static_cast<std::size_t>(g)]}, transformation,
                             options.maxiter, options.threshold};
          const ImputationResult fit = iterative_impute(hidden.data, rule, io);
          result.msep(static_cast<Index>(rep), g) =
              msep(fit.complete_obs, x.values(), hidden.hidden);
        }
      },
      options.threads);
  result.mean_msep = result.msep.colwise().mean().transpose();
  Index best = 0;
  for (Index g = 1; g < ng; ++g)
    if (result.mean_msep(g) < result.mean_msep(best)) best = g;
  result.delta = options.grid[static_cast<std::size_t>(best)];
  return result;
}

IsaResult isa(const DataMatrix& x, const IsaOptions& options) {
  x.require_complete("isa");
  require(options.svd_cutoff >= 0.0 && options.svd_cutoff < 1.0,
          "isa: svd_cutoff must lie in [0, 1)");
  if (options.nu) require(*options.nu >= 1, "isa: nu must be positive");
  const bool ca_path = options.transformation == Transformation::Ca;
  const NoiseKind kind = options.noise.value_or(ca_path ? NoiseKind::Binomial : NoiseKind::Gaussian);

  IsaResult result;
  const Index n = x.rows();
  const Index p = x.cols();
  Matrix working;
  Vector s;
  result.centering = CenterState::identity(p);

  if (ca_path) {
    result.ca = ca_transform(x.values());
    working = result.ca->m;
  } else if (kind == NoiseKind::Gaussian && options.center) {
    auto [centered, state] = center_columns(x);
    working = centered.values();
    result.centering = state;
  } else {
    working = x.values();
  }

  if (kind == NoiseKind::Gaussian) {
    double sigma = 0.0;
    if (options.sigma) {
      sigma = *options.sigma;
    } else {
      sigma = ca_path ? estim_sigma_mad(DataMatrix(working), false).sigma
                      : estim_sigma_mad(x, options.center).sigma;
      result.diagnostics.push_back(
          {"sigma_estimated", "sigma estimated by MAD: " + std::to_string(sigma), sigma});
    }
    require(sigma > 0.0, "isa: Gaussian sigma must be positive");
    s = Vector::Constant(p, static_cast<double>(n) * sigma * sigma);
    result.params.sigma = sigma;
  } else {
    require_counts(x.values(), "isa");
    double delta = 0.0;
    if (options.delta) {
      delta = *options.delta;
    } else {
      delta = estim_delta(x, options.transformation, options.delta_cv).delta;
      result.diagnostics.push_back({"delta_estimated",
                                    "delta estimated by cross-validation: " + std::to_string(delta),
                                    delta});
    }
    require_delta(delta);
    s = ca_path ? ca_noise_regularizer(x.values(), delta)
                : noise_regularizer(x, Binomial{delta});
    result.params.delta = delta;
  }

  // The component cutoff is relative to the top singular value of the data the
  // iteration runs on, so heavy regularization drives nb_eigen to zero.
  const double reference = compute_svd(working, SvdOptions{1, SvdMethod::Gram}).d(0);
  IsaIteration it = isa_iterate(working, s, options.maxiter, options.threshold);
  if (!it.converged)
    result.diagnostics.push_back({"not_converged",
                                  "ISA stopped at maxiter=" + std::to_string(options.maxiter) +
                                      " before reaching the threshold",
                                  static_cast<double>(it.nb_iter)});
  if (it.fallback)
    result.diagnostics.push_back(
        {"singular_system", "singular autoencoder system; minimum-norm solution used",
         std::nullopt});

  const SvdFactors full = compute_svd(it.mu);
  result.singval = full.d;
  result.nb_eigen = count_above(full.d, options.svd_cutoff, reference);
  const Index keep = std::min<Index>(options.nu.value_or(full.d.size()), full.d.size());
  result.low_rank = {full.u.leftCols(keep), full.d.head(keep), full.v.leftCols(keep)};
  result.mu_hat = ca_path ? ca_backtransform(it.mu, *result.ca) : result.centering.restore(it.mu);
  result.mu_working = std::move(it.mu);
  result.nb_iter = it.nb_iter;
  result.converged = it.converged;
  return result;
}

}  // namespace lowrank
