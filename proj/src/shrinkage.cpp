#include "lowrank/shrinkage.hpp"

#include "lowrank/noise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lowrank {

Vector shrink_hard(const Vector& d, Index k) {
  require(k >= 0 && k <= d.size(), "shrink_hard: rank k=" + std::to_string(k) +
                                       " exceeds the spectrum length " +
                                       std::to_string(d.size()));
  Vector out = Vector::Zero(d.size());
  out.head(k) = d.head(k);
  return out;
}

Vector shrink_soft(const Vector& d, double lambda) {
  require(lambda >= 0.0, "shrink_soft: lambda must be nonnegative");
  return (d.array() - lambda).max(0.0).matrix();
}

Vector shrink_atn(const Vector& d, double lambda, double gamma) {
  require(lambda >= 0.0, "shrink_atn: lambda must be nonnegative");
  require(gamma >= 1.0, "shrink_atn: gamma must be >= 1 (weighted nuclear norm weights)");
  if (gamma == 1.0) return shrink_soft(d, lambda);
  Vector out(d.size());
  for (Index l = 0; l < d.size(); ++l) {
    const double dl = d(l);
    out(l) = dl > lambda ? dl * (1.0 - std::pow(lambda / dl, gamma)) : 0.0;
  }
  return out;
}

Vector shrink_lownoise(const Vector& d, double sigma, Index k) {
  require(sigma >= 0.0, "shrink_lownoise: sigma must be nonnegative");
  require(k >= 0 && k <= d.size(), "shrink_lownoise: rank k=" + std::to_string(k) +
                                       " exceeds the spectrum length " +
                                       std::to_string(d.size()));
  Vector out = Vector::Zero(d.size());
  const double s2 = sigma * sigma;
  for (Index l = 0; l < k; ++l) {
    const double dl = d(l);
    if (dl > 0.0) out(l) = std::max(dl * ((dl * dl - s2) / (dl * dl)), 0.0);
  }
  return out;
}

Vector shrink_asympt(const Vector& d, double sigma, Index n, Index p, Loss loss) {
  require(sigma > 0.0, "shrink_asympt: sigma must be positive");
  require(n >= 2 && p >= 2, "shrink_asympt: dimensions must be at least 2");
  const double big = static_cast<double>(std::max(n, p));
  const double beta = static_cast<double>(std::min(n, p)) / big;
  const double scale = sigma * std::sqrt(big);
  const double edge = 1.0 + std::sqrt(beta);
  Vector out = Vector::Zero(d.size());
  for (Index l = 0; l < d.size(); ++l) {
    const double y = d(l) / scale;
    if (!(y > edge)) continue;
    const double t = y * y - beta - 1.0;
    const double disc = std::sqrt(std::max(t * t - 4.0 * beta, 0.0));
    double value = 0.0;
    switch (loss) {
      case Loss::Frobenius:
        value = disc / y;
        break;
      case Loss::Operator:
        value = std::sqrt(0.5 * (t + disc));
        break;
      case Loss::Nuclear: {
        const double x = std::sqrt(0.5 * (t + disc));
        value = std::max(0.0, (x * x * x * x - beta - std::sqrt(beta) * x * y) / (x * x * y));
        break;
      }
    }
    out(l) = std::min(value, y) * scale;
  }
  return out;
}

void validate(const ShrinkSpec& spec) {
  std::visit(
      [](const auto& rule) {
        using T = std::decay_t<decltype(rule)>;
        if constexpr (std::is_same_v<T, Hard>) {
          require(rule.k >= 0, "hard threshold rank must be nonnegative");
        } else if constexpr (std::is_same_v<T, Soft>) {
          require(rule.lambda >= 0.0, "lambda must be nonnegative");
        } else if constexpr (std::is_same_v<T, Atn>) {
          require(rule.lambda >= 0.0, "lambda must be nonnegative");
          require(rule.gamma >= 1.0, "gamma must be >= 1");
        } else if constexpr (std::is_same_v<T, Asympt>) {
          require(rule.sigma > 0.0, "sigma must be positive");
        } else {
          require(rule.sigma >= 0.0, "sigma must be nonnegative");
          require(rule.k >= 0, "rank must be nonnegative");
        }
      },
      spec);
}

Vector apply_shrink(const ShrinkSpec& spec, const Vector& d, Index n, Index p) {
  return std::visit(
      [&](const auto& rule) -> Vector {
        using T = std::decay_t<decltype(rule)>;
        if constexpr (std::is_same_v<T, Hard>) {
          return shrink_hard(d, std::min<Index>(rule.k, d.size()));
        } else if constexpr (std::is_same_v<T, Soft>) {
          return shrink_soft(d, rule.lambda);
        } else if constexpr (std::is_same_v<T, Atn>) {
          return shrink_atn(d, rule.lambda, rule.gamma);
        } else if constexpr (std::is_same_v<T, Asympt>) {
          return shrink_asympt(d, rule.sigma, n, p, rule.loss);
        } else {
          return shrink_lownoise(d, rule.sigma, std::min<Index>(rule.k, d.size()));
        }
      },
      spec);
}

std::string describe(const ShrinkSpec& spec) {
  std::ostringstream out;
  std::visit(
      [&](const auto& rule) {
        using T = std::decay_t<decltype(rule)>;
        if constexpr (std::is_same_v<T, Hard>)
          out << "hard(k=" << rule.k << ")";
        else if constexpr (std::is_same_v<T, Soft>)
          out << "soft(lambda=" << rule.lambda << ")";
        else if constexpr (std::is_same_v<T, Atn>)
          out << "atn(lambda=" << rule.lambda << ", gamma=" << rule.gamma << ")";
        else if constexpr (std::is_same_v<T, Asympt>)
          out << "asympt(sigma=" << rule.sigma << ")";
        else
          out << "lownoise(sigma=" << rule.sigma << ", k=" << rule.k << ")";
      },
      spec);
  return out.str();
}

ShrinkageResult optishrink(const DataMatrix& x, const OptiShrinkOptions& options) {
  x.require_complete("optishrink");
  const Index n = x.rows();
  const Index p = x.cols();
  ShrinkageResult result;

  auto [centered, state] = options.center ? center_columns(x)
                                          : std::pair{x, CenterState::identity(p)};
  const SvdFactors factors = compute_svd(centered.values());
  Vector shrunk;

  if (options.method == OptiMethod::Asympt) {
    double sigma = 0.0;
    if (options.sigma) {
      sigma = *options.sigma;
    } else {
      const SigmaEstimate est = estim_sigma_mad(x, options.center);
      sigma = est.sigma;
      result.diagnostics.push_back(
          {"sigma_estimated", "sigma estimated by MAD: " + std::to_string(sigma), sigma});
    }
    require(sigma > 0.0, "optishrink: sigma must be positive for the asymptotic shrinker");
    shrunk = shrink_asympt(factors.d, sigma, n, p, options.loss);
    result.params.sigma = sigma;
  } else {
    const Index kmax = std::min(n - 1, p);
    Index k = 0;
    if (options.k) {
      k = *options.k;
      require(k >= 0 && k <= kmax, "optishrink: LN rank k=" + std::to_string(k) +
                                       " exceeds min(n-1, p)=" + std::to_string(kmax));
    } else {
      RankCvOptions cv;
      cv.seed = options.seed;
      cv.center = options.center;
      cv.threads = options.threads;
      k = estim_rank_cv(x, cv).k;
      result.diagnostics.push_back(
          {"k_estimated", "k was estimated by cross-validation: " + std::to_string(k),
           static_cast<double>(k)});
    }
    double sigma = 0.0;
    if (options.sigma) {
      sigma = *options.sigma;
    } else {
      SigmaEstimate est = estim_sigma_ln(x, k, options.center);
      sigma = est.sigma;
      result.diagnostics.push_back(
          {"sigma_estimated", "sigma estimated by LN: " + std::to_string(sigma), sigma});
    }
    require(sigma >= 0.0, "optishrink: sigma must be nonnegative");
    // per-component noise energy in singular-value units is (rows) * sigma^2
    shrunk = shrink_lownoise(factors.d, std::sqrt(static_cast<double>(n)) * sigma, k);
    result.params.sigma = sigma;
    result.params.k = k;
  }

  result.mu_hat = reconstruct(factors, shrunk, state);
  result.singval = shrunk;
  result.nb_eigen = factors.d.size() > 0
                        ? count_above(shrunk, kRankTolerance, factors.d(0))
                        : 0;
  result.low_rank = {factors.u, shrunk, factors.v};
  result.centering = state;
  return result;
}

}  // namespace lowrank
