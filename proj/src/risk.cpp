#include "lowrank/risk.hpp"

#include "lowrank/noise.hpp"
#include "lowrank/shrinkage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lowrank {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// f(d)/d for the ATN rule
double atn_ratio(double d, double lambda, double gamma) {
  if (!(d > lambda)) return 0.0;
  return 1.0 - std::pow(lambda / d, gamma);
}

Vector effective_spectrum(const Vector& d, const SpectrumShape& shape) {
  if (!shape.centered) return d;
  return d.head(std::min<Index>(d.size(), std::min(shape.n - 1, shape.p)));
}

double top_singular_value(const Matrix& x) {
  const Matrix gram = x.rows() >= x.cols() ? Matrix(x.transpose() * x) : Matrix(x * x.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success)
    throw NumericalError("eigendecomposition failed on a null matrix");
  return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), 0.0));
}

}  // namespace

double div_closed_form(const Vector& d, double lambda, double gamma, Index n, Index p) {
  require(lambda >= 0.0 && gamma >= 1.0, "div_closed_form: need lambda >= 0 and gamma >= 1");
  require(d.size() == std::min(n, p),
          "div_closed_form: spectrum must have min(n, p) = " + std::to_string(std::min(n, p)) +
              " entries, got " + std::to_string(d.size()));
  if (lambda == 0.0) return static_cast<double>(n) * static_cast<double>(p);
  const Index r = d.size();
  if (r == 0) return 0.0;
  const double top = d.maxCoeff();
  const double gap = std::abs(static_cast<double>(n - p));
  double total = 0.0;
  for (Index l = 0; l < r; ++l) {
    const double dl = d(l);
    if (!(dl > lambda)) continue;
    const double ratio = std::pow(lambda / dl, gamma);
    total += 1.0 + (gamma - 1.0) * ratio + gap * (1.0 - ratio);
  }
  // 2 sum_{l<m} (g_l - g_m)/(d_l^2 - d_m^2) with g = d f(d)
  double pairs = 0.0;
  for (Index l = 0; l < r; ++l) {
    for (Index m = l + 1; m < r; ++m) {
      double a = d(l);
      double b = d(m);
      if (!(a > lambda) && !(b > lambda)) continue;
      if (std::abs(a - b) <= 1e-10 * top) {
        a += 1e-9 * top;
        b -= 1e-9 * top;
      }
      const double ga = a * a * atn_ratio(a, lambda, gamma);
      const double gb = b * b * atn_ratio(b, lambda, gamma);
      pairs += (ga - gb) / (a * a - b * b);
    }
  }
  return total + 2.0 * pairs;
}

double divergence(const Vector& d, double lambda, double gamma, const SpectrumShape& shape) {
  if (!shape.centered) return div_closed_form(d, lambda, gamma, shape.n, shape.p);
  const Vector head = effective_spectrum(d, shape);
  return static_cast<double>(shape.p) +
         div_closed_form(head, lambda, gamma, shape.n - 1, shape.p);
}

double spectral_rss(const Vector& d, double lambda, double gamma) {
  double rss = 0.0;
  for (Index l = 0; l < d.size(); ++l) {
    const double dl = d(l);
    rss += dl > lambda ? dl * dl * std::pow(lambda / dl, 2.0 * gamma) : dl * dl;
  }
  return rss;
}

RiskValue sure(const Vector& d, double lambda, double gamma, double sigma,
               const SpectrumShape& shape) {
  require(sigma > 0.0, "SURE requires a positive noise level sigma");
  RiskValue out;
  out.criterion = Criterion::Sure;
  out.lambda = lambda;
  out.gamma = gamma;
  out.rss = spectral_rss(d, lambda, gamma);
  out.divergence = divergence(d, lambda, gamma, shape);
  const double s2 = sigma * sigma;
  const double np = static_cast<double>(shape.n) * static_cast<double>(shape.p);
  out.value = -np * s2 + out.rss + 2.0 * s2 * out.divergence;
  return out;
}

RiskValue sure(const Vector& d, double lambda, double gamma, double sigma, Index n, Index p) {
  return sure(d, lambda, gamma, sigma, SpectrumShape{n, p, false});
}

RiskValue gsure(const Vector& d, double lambda, double gamma, const SpectrumShape& shape) {
  RiskValue out;
  out.criterion = Criterion::Gsure;
  out.lambda = lambda;
  out.gamma = gamma;
  out.rss = spectral_rss(d, lambda, gamma);
  out.divergence = divergence(d, lambda, gamma, shape);
  const double np = static_cast<double>(shape.n) * static_cast<double>(shape.p);
  if (out.divergence >= np) {
    out.degenerate = true;
    out.value = kInf;
    return out;
  }
  const double denom = 1.0 - out.divergence / np;
  out.value = out.rss / (denom * denom);
  return out;
}

RiskValue gsure(const Vector& d, double lambda, double gamma, Index n, Index p) {
  return gsure(d, lambda, gamma, SpectrumShape{n, p, false});
}

double empirical_quantile(Vector values, double level) {
  require(values.size() > 0, "quantile of an empty sample");
  require(level >= 0.0 && level <= 1.0, "quantile level must lie in [0, 1]");
  std::sort(values.data(), values.data() + values.size());
  const double pos = level * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<Index>(std::floor(pos));
  const Index hi = std::min<Index>(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values(lo) + frac * (values(hi) - values(lo));
}

QutResult qut_lambda(Index n, Index p, double sigma, int nbsim, double quantile_level,
                     std::uint64_t seed, bool center, int threads) {
  require(sigma > 0.0, "qut_lambda: sigma must be positive");
  require(nbsim >= 100, "qut_lambda: nbsim must be at least 100");
  require(quantile_level > 0.0 && quantile_level < 1.0,
          "qut_lambda: quantile level must lie in (0, 1)");
  require(n >= 2 && p >= 2, "qut_lambda: dimensions must be at least 2");
  QutResult out;
  out.nbsim = nbsim;
  out.quantile_level = quantile_level;
  out.null_maxima.resize(nbsim);
  parallel_for(
      static_cast<std::size_t>(nbsim),
      [&](std::size_t rep) {
        Rng rng = make_rng(seed, "qut-null", rep);
        Matrix noise = sigma * standard_normal(n, p, rng);
        if (center) noise.rowwise() -= noise.colwise().mean();
        out.null_maxima(static_cast<Index>(rep)) = top_singular_value(noise);
      },
      threads);
  out.lambda = empirical_quantile(out.null_maxima, quantile_level);
  return out;
}

std::vector<double> default_gamma_seq() {
  std::vector<double> seq;
  for (int i = 10; i <= 50; ++i) seq.push_back(static_cast<double>(i) / 10.0);
  return seq;
}

Matrix risk_surface(const Vector& d, const std::vector<double>& lambdas,
                    const std::vector<double>& gammas, Criterion criterion,
                    const SpectrumShape& shape, std::optional<double> sigma) {
  require(criterion == Criterion::Gsure || sigma.has_value(),
          "risk_surface: SURE requires sigma");
  Matrix out(static_cast<Index>(lambdas.size()), static_cast<Index>(gammas.size()));
  for (std::size_t a = 0; a < lambdas.size(); ++a)
    for (std::size_t b = 0; b < gammas.size(); ++b)
      out(static_cast<Index>(a), static_cast<Index>(b)) =
          criterion == Criterion::Sure ? sure(d, lambdas[a], gammas[b], *sigma, shape).value
                                       : gsure(d, lambdas[a], gammas[b], shape).value;
  return out;
}

ShrinkageResult adashrink(const DataMatrix& x, const AdaShrinkOptions& options) {
  x.require_complete("adashrink");
  require(!options.gamma_seq.empty(), "adashrink: gamma_seq must not be empty");
  for (double g : options.gamma_seq)
    require(std::isfinite(g) && g >= 1.0, "adashrink: every gamma must be finite and >= 1");
  if (options.lambda0) require(*options.lambda0 > 0.0, "adashrink: lambda0 must be positive");

  const Index n = x.rows();
  const Index p = x.cols();
  ShrinkageResult result;
  auto [centered, state] = options.center ? center_columns(x)
                                          : std::pair{x, CenterState::identity(p)};
  const SvdFactors factors = compute_svd(centered.values());
  const Vector& d = factors.d;
  const SpectrumShape shape{n, p, options.center};

  std::optional<double> sigma = options.sigma;
  if (sigma) require(*sigma > 0.0, "adashrink: sigma must be positive");
  if (!sigma && options.method != AdaMethod::Gsure) {
    sigma = estim_sigma_mad(x, options.center).sigma;
    result.diagnostics.push_back(
        {"sigma_estimated", "sigma estimated by MAD: " + std::to_string(*sigma), *sigma});
    require(*sigma > 0.0, "adashrink: sigma could not be estimated (MAD gave 0)");
  }

  const Vector eff = effective_spectrum(d, shape);
  const double top = d.size() > 0 ? d(0) : 0.0;
  result.centering = state;
  result.params.sigma = sigma;
  if (!(top > 0.0)) {
    result.params.lambda = 0.0;
    result.params.gamma = options.gamma_seq.front();
    result.singval = Vector::Zero(d.size());
    result.mu_hat = reconstruct(factors, result.singval, state);
    result.low_rank = {factors.u, result.singval, factors.v};
    result.diagnostics.push_back({"zero_spectrum", "input has no variation to shrink", 0.0});
    return result;
  }

  auto evaluate = [&](double lambda, double gamma) {
    return options.method == AdaMethod::Gsure ? gsure(d, lambda, gamma, shape)
                                              : sure(d, lambda, gamma, *sigma, shape);
  };

  const std::size_t ng = options.gamma_seq.size();
  std::vector<RiskValue> best(ng);
  if (options.method == AdaMethod::Qut) {
    const QutResult qut =
        options.qut ? *options.qut
                    : qut_lambda(n, p, *sigma, options.nbsim, options.quantile_level,
                                 derive_seed(options.seed, "adashrink-qut"), options.center,
                                 options.threads);
    for (std::size_t g = 0; g < ng; ++g) best[g] = evaluate(qut.lambda, options.gamma_seq[g]);
  } else {
    double d_min = top;
    for (Index l = 0; l < eff.size(); ++l)
      if (eff(l) > kRankTolerance * top) d_min = std::min(d_min, eff(l));
    const double lo = std::log(d_min * 1e-3);
    const double hi = std::log(top * 10.0);
    const double start =
        std::clamp(std::log(options.lambda0.value_or(median(eff.cwiseMax(d_min * 1e-3)))), lo, hi);
    parallel_for(
        ng,
        [&](std::size_t g) {
          const double gamma = options.gamma_seq[g];
          const ScalarMinimum m = line_search(
              [&](double t) { return evaluate(std::exp(t), gamma).value; }, start, lo, hi,
              options.search);
          best[g] = evaluate(std::exp(m.x), gamma);
        },
        options.threads);
  }

  std::size_t pick = 0;
  for (std::size_t g = 1; g < ng; ++g)
    if (best[g].value < best[pick].value) pick = g;
  const RiskValue& chosen = best[pick];

  result.params.lambda = chosen.lambda;
  result.params.gamma = chosen.gamma;
  result.criterion = chosen.value;
  result.singval = shrink_atn(d, chosen.lambda, chosen.gamma);
  result.mu_hat = reconstruct(factors, result.singval, state);
  result.low_rank = {factors.u, result.singval, factors.v};
  result.nb_eigen = count_above(result.singval, kRankTolerance, top);
  if (chosen.degenerate)
    result.diagnostics.push_back(
        {"degenerate_criterion", "criterion is infinite at every candidate", std::nullopt});
  return result;
}

}  // namespace lowrank
