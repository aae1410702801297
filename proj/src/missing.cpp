#include "lowrank/missing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lowrank {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool covers(const Mask& observed) {
  return observed.rowwise().any().all() && observed.colwise().any().all();
}

struct Fit {
  Matrix mu;
  Vector singval;
  double top = 0.0;
  bool fallback = false;
};

// One application of the fitting step: completed matrix -> mu. Column
// statistics and the ISA regularizer are fixed at construction.
class Imputer {
 public:
  Imputer(const DataMatrix& x, const ImputeRule& rule, const ImputeOptions& options)
      : x_(x), rule_(rule), options_(options) {
    const bool ca = is_ca();
    if (!ca && (options.center || options.scale)) {
      state_ = center_columns(x, options.scale).second;
      if (!options.center) state_.column_means.setZero();
    } else {
      state_ = CenterState::identity(x.cols());
    }
    if (const auto* isa_rule = std::get_if<IsaRule>(&rule_)) {
      const Matrix start = initial();
      if (const auto* g = std::get_if<Gaussian>(&isa_rule->noise)) {
        s_ = Vector::Constant(x.cols(), static_cast<double>(x.rows()) * g->sigma * g->sigma);
      } else {
        const double delta = std::get<Binomial>(isa_rule->noise).delta;
        s_ = ca ? ca_noise_regularizer(start, delta)
                : Vector(delta / (1.0 - delta) * start.colwise().sum().transpose());
      }
    }
  }

  Matrix initial() const {
    if (options_.init) {
      require(options_.init->rows() == x_.rows() && options_.init->cols() == x_.cols(),
              "impute: initial values have the wrong shape");
      require(options_.init->allFinite(), "impute: initial values must be finite");
      return fill_missing(x_, *options_.init);
    }
    const Vector means = observed_column_means(x_);
    return fill_missing(x_, Matrix(means.transpose().replicate(x_.rows(), 1)));
  }

  Matrix refill(const Matrix& mu) const { return x_.observed().select(x_.values(), mu); }

  Fit fit(const Matrix& completed) const {
    if (const auto* spec = std::get_if<ShrinkSpec>(&rule_)) return fit_spectral(*spec, completed);
    return fit_isa(std::get<IsaRule>(rule_), completed);
  }

 private:
  bool is_ca() const {
    const auto* r = std::get_if<IsaRule>(&rule_);
    return r && r->transformation == Transformation::Ca;
  }

  Fit fit_spectral(const ShrinkSpec& spec, const Matrix& completed) const {
    const Index n = x_.rows();
    const Index p = x_.cols();
    const Matrix y = state_.apply(completed);
    SvdOptions svd;
    svd.method = options_.svd;
    if (options_.svd == SvdMethod::Randomized) {
      if (const auto* hard = std::get_if<Hard>(&spec)) {
        if (hard->k == 0) {
          Fit out;
          out.mu = state_.restore(Matrix::Zero(n, p));
          out.singval = Vector::Zero(0);
          return out;
        }
        svd.rank = std::min<Index>(hard->k, std::min(n, p));
      } else {
        svd.method = SvdMethod::Dense;
      }
    }
    const SvdFactors f = compute_svd(y, svd);
    Vector shrunk = apply_shrink(spec, f.d, n, p);
    const Index cap = options_.center ? std::min(n - 1, p) : std::min(n, p);
    if (shrunk.size() > cap) shrunk.tail(shrunk.size() - cap).setZero();
    Index r = 0;
    while (r < shrunk.size() && shrunk(r) > 0.0) ++r;
    // shrinkers preserve order, so the positive values form a prefix
    for (Index l = r; l < shrunk.size(); ++l)
      if (shrunk(l) > 0.0) r = l + 1;
    Fit out;
    out.mu = state_.restore(f.u.leftCols(r) * shrunk.head(r).asDiagonal() *
                            f.v.leftCols(r).transpose());
    out.singval = std::move(shrunk);
    out.top = f.d.size() > 0 ? f.d(0) : 0.0;
    return out;
  }

  Fit fit_isa(const IsaRule& rule, const Matrix& completed) const {
    Fit out;
    if (rule.transformation == Transformation::Ca) {
      const CaDecomposition ca = ca_transform(completed, false);
      const IsaIteration it = isa_iterate(ca.m, s_, rule.maxiter, rule.threshold);
      out.mu = ca_backtransform(it.mu, ca);
      out.fallback = it.fallback;
      return out;
    }
    const IsaIteration it = isa_iterate(state_.apply(completed), s_, rule.maxiter, rule.threshold);
    out.mu = state_.restore(it.mu);
    out.fallback = it.fallback;
    return out;
  }

  const DataMatrix& x_;
  ImputeRule rule_;
  ImputeOptions options_;
  CenterState state_;
  Vector s_;
};

void validate_rule(const ImputeRule& rule) {
  if (const auto* spec = std::get_if<ShrinkSpec>(&rule)) {
    validate(*spec);
    return;
  }
  const auto& isa_rule = std::get<IsaRule>(rule);
  require(isa_rule.maxiter >= 1, "ISA rule: maxiter must be positive");
  require(isa_rule.threshold >= 0.0, "ISA rule: threshold must be nonnegative");
  if (const auto* g = std::get_if<Gaussian>(&isa_rule.noise))
    require(g->sigma > 0.0, "ISA rule: Gaussian sigma must be positive");
  else {
    const double delta = std::get<Binomial>(isa_rule.noise).delta;
    require(delta > 0.0 && delta < 1.0, "ISA rule: delta must lie in (0, 1)");
  }
}

void record_params(const ImputeRule& rule, TuningParams& params) {
  if (const auto* spec = std::get_if<ShrinkSpec>(&rule)) {
    std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, Hard>) {
            params.k = r.k;
          } else if constexpr (std::is_same_v<T, Soft>) {
            params.lambda = r.lambda;
            params.gamma = 1.0;
          } else if constexpr (std::is_same_v<T, Atn>) {
            params.lambda = r.lambda;
            params.gamma = r.gamma;
          } else if constexpr (std::is_same_v<T, Asympt>) {
            params.sigma = r.sigma;
          } else {
            params.sigma = r.sigma;
            params.k = r.k;
          }
        },
        *spec);
    return;
  }
  const auto& noise = std::get<IsaRule>(rule).noise;
  if (const auto* g = std::get_if<Gaussian>(&noise))
    params.sigma = g->sigma;
  else
    params.delta = std::get<Binomial>(noise).delta;
}

double observed_rss(const DataMatrix& x, const Matrix& mu) {
  double rss = 0.0;
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i)
      if (x.is_observed(i, j)) {
        const double r = x.values()(i, j) - mu(i, j);
        rss += r * r;
      }
  return rss;
}

}  // namespace

ImputationResult iterative_impute(const DataMatrix& x, const ImputeRule& rule,
                                  const ImputeOptions& options) {
  validate_rule(rule);
  require(options.maxiter >= 1, "impute: maxiter must be positive");
  require(options.threshold >= 0.0, "impute: threshold must be nonnegative");
  const Imputer engine(x, rule, options);
  ImputationResult result;
  record_params(rule, result.params);

  Fit last;
  if (!x.has_missing()) {
    last = engine.fit(x.values());
    result.nb_iter = 1;
    result.converged = true;
  } else {
    Matrix completed = engine.initial();
    Matrix previous;
    for (int t = 1; t <= options.maxiter; ++t) {
      Fit f = engine.fit(completed);
      const double change = t == 1 ? kInf : (f.mu - previous).squaredNorm();
      completed = engine.refill(f.mu);
      previous = f.mu;
      last = std::move(f);
      result.nb_iter = t;
      if (change <= options.threshold) {
        result.converged = true;
        break;
      }
    }
    if (!result.converged)
      result.diagnostics.push_back({"not_converged",
                                    "imputation stopped at maxiter=" +
                                        std::to_string(options.maxiter),
                                    static_cast<double>(result.nb_iter)});
  }
  if (last.fallback)
    result.diagnostics.push_back(
        {"singular_system", "singular autoencoder system; minimum-norm solution used",
         std::nullopt});

  result.complete_obs = engine.refill(last.mu);
  if (std::holds_alternative<IsaRule>(rule)) {
    last.singval = compute_svd(last.mu).d;
    last.top = last.singval.size() > 0 ? last.singval(0) : 0.0;
  }
  result.singval = last.singval;
  result.nb_eigen = count_above(result.singval, kRankTolerance, last.top);
  result.mu_hat = std::move(last.mu);
  return result;
}

DivergenceResult divergence_fd(const DataMatrix& x, const ShrinkSpec& rule,
                               const ImputeOptions& impute, const FdOptions& fd,
                               const ImputationResult& base) {
  require(fd.step_scale > 0.0, "divergence_fd: step scale must be positive");
  require(fd.extra_iterations >= 0 && fd.max_iterations >= 1,
          "divergence_fd: iteration caps must be positive");
  require(base.complete_obs.rows() == x.rows() && base.complete_obs.cols() == x.cols(),
          "divergence_fd: base fit does not match the data");

  std::vector<Index> cells;
  cells.reserve(static_cast<std::size_t>(x.observed_count()));
  for (Index c = 0; c < x.values().size(); ++c)
    if (x.observed().data()[c]) cells.push_back(c);
  const auto n_obs = static_cast<Index>(cells.size());

  DivergenceResult out;
  if (fd.cell_subset && *fd.cell_subset < n_obs) {
    require(*fd.cell_subset >= 1, "divergence_fd: cell subset must be positive");
    Rng rng = make_rng(fd.seed, "fd-cells");
    for (Index a = 0; a < *fd.cell_subset; ++a) {
      std::uniform_int_distribution<Index> pick(a, n_obs - 1);
      std::swap(cells[static_cast<std::size_t>(a)], cells[static_cast<std::size_t>(pick(rng))]);
    }
    cells.resize(static_cast<std::size_t>(*fd.cell_subset));
    std::sort(cells.begin(), cells.end());
    out.approximate = true;
  }
  const auto m = static_cast<Index>(cells.size());
  out.cells_used = m;

  const int steps =
      x.has_missing() ? std::min(base.nb_iter + fd.extra_iterations, fd.max_iterations) : 1;
  const Matrix& start = base.complete_obs;

  // unperturbed trajectory from the converged completed matrix
  const Imputer engine(x, rule, impute);
  Matrix baseline(steps, m);
  {
    Matrix completed = start;
    for (int t = 0; t < steps; ++t) {
      const Matrix mu = engine.fit(completed).mu;
      for (Index c = 0; c < m; ++c) baseline(t, c) = mu.data()[cells[static_cast<std::size_t>(c)]];
      completed = engine.refill(mu);
    }
  }

  Vector quotients(m);
  parallel_for(
      static_cast<std::size_t>(m),
      [&](std::size_t slot) {
        const Index cell = cells[slot];
        const double h = fd.step_scale * (1.0 + std::abs(x.values().data()[cell]));
        Matrix values = x.values();
        values.data()[cell] += h;
        const DataMatrix perturbed(std::move(values), x.observed());
        const Imputer moved(perturbed, rule, impute);
        Matrix completed = start;
        completed.data()[cell] += h;
        double q = 0.0;
        for (int t = 0; t < steps; ++t) {
          const Matrix mu = moved.fit(completed).mu;
          const double next = (mu.data()[cell] - baseline(t, static_cast<Index>(slot))) / h;
          const bool settled = t > 0 && std::abs(next - q) <= fd.tolerance * std::max(1.0, std::abs(next));
          q = next;
          if (settled) break;
          completed = moved.refill(mu);
        }
        quotients(static_cast<Index>(slot)) = q;
      },
      fd.threads);

  double total = 0.0;
  for (Index c = 0; c < m; ++c) total += quotients(c);
  out.value = out.approximate ? total * static_cast<double>(n_obs) / static_cast<double>(m) : total;
  return out;
}

DivergenceResult divergence_fd(const DataMatrix& x, const ShrinkSpec& rule,
                               const ImputeOptions& impute, const FdOptions& fd) {
  return divergence_fd(x, rule, impute, fd, iterative_impute(x, rule, impute));
}

MissRisk miss_risk(const DataMatrix& x, double lambda, double gamma, Criterion criterion,
                   std::optional<double> sigma, const ImputeOptions& impute, const FdOptions& fd) {
  if (criterion == Criterion::Sure)
    require(sigma.has_value() && *sigma > 0.0,
            "SURE with missing values needs the noise standard deviation sigma");
  const ShrinkSpec rule = Atn{lambda, gamma};
  MissRisk out;
  out.fit = iterative_impute(x, rule, impute);
  const DivergenceResult div = divergence_fd(x, rule, impute, fd, out.fit);
  const double n_obs = static_cast<double>(x.observed_count());
  RiskValue& risk = out.risk;
  risk.criterion = criterion;
  risk.lambda = lambda;
  risk.gamma = gamma;
  risk.rss = observed_rss(x, out.fit.mu_hat);
  risk.divergence = div.value;
  risk.approximate = div.approximate;
  if (criterion == Criterion::Sure) {
    const double s2 = *sigma * *sigma;
    risk.value = -n_obs * s2 + risk.rss + 2.0 * s2 * risk.divergence;
  } else if (risk.divergence >= n_obs) {
    risk.degenerate = true;
    risk.value = kInf;
  } else {
    const double denom = 1.0 - risk.divergence / n_obs;
    risk.value = risk.rss / (denom * denom);
  }
  out.fit.criterion = risk.value;
  if (sigma) out.fit.params.sigma = sigma;
  if (div.approximate)
    out.fit.diagnostics.push_back({"approximate_divergence",
                                   "divergence estimated from " + std::to_string(div.cells_used) +
                                       " sampled cells",
                                   static_cast<double>(div.cells_used)});
  return out;
}

RiskValue sure_miss(const DataMatrix& x, double lambda, double gamma, double sigma,
                    const ImputeOptions& impute, const FdOptions& fd) {
  return miss_risk(x, lambda, gamma, Criterion::Sure, sigma, impute, fd).risk;
}

RiskValue gsure_miss(const DataMatrix& x, double lambda, double gamma, const ImputeOptions& impute,
                     const FdOptions& fd) {
  return miss_risk(x, lambda, gamma, Criterion::Gsure, std::nullopt, impute, fd).risk;
}

ImputationResult imputeada(const DataMatrix& x, const ImputeAdaOptions& options) {
  require(options.method != AdaMethod::Qut,
          "imputeada: method QUT is not available with missing values; use GSURE or SURE");
  if (options.method == AdaMethod::Sure)
    require(options.sigma.has_value(),
            "imputeada: method SURE needs sigma; it is necessary to specify the variance of the "
            "noise (or use GSURE)");
  if (options.sigma) require(*options.sigma > 0.0, "imputeada: sigma must be positive");
  if (options.lambda) require(*options.lambda >= 0.0, "imputeada: lambda must be nonnegative");
  if (options.gamma) require(*options.gamma >= 1.0, "imputeada: gamma must be >= 1");
  require(options.nb_init >= 1, "imputeada: nb_init must be positive");
  if (!options.gamma) {
    require(!options.gamma_seq.empty(), "imputeada: gamma_seq must not be empty");
    for (double g : options.gamma_seq)
      require(std::isfinite(g) && g >= 1.0, "imputeada: every gamma must be finite and >= 1");
  }

  ImputeOptions io;
  io.threshold = options.threshold;
  io.maxiter = options.maxiter;
  io.center = options.center;
  io.scale = options.scale;
  io.svd = options.svd;

  if (options.lambda && options.gamma) {
    ImputationResult fixed = iterative_impute(x, Atn{*options.lambda, *options.gamma}, io);
    fixed.params.sigma = options.sigma;
    return fixed;
  }

  const Criterion criterion =
      options.method == AdaMethod::Sure ? Criterion::Sure : Criterion::Gsure;
  const std::vector<double> gammas =
      options.gamma ? std::vector<double>{*options.gamma} : options.gamma_seq;

  // search bounds from the spectrum of the mean-imputed, transformed data
  const Index n = x.rows();
  const Index p = x.cols();
  Vector d;
  {
    auto [centered, state] = center_columns(x, options.scale);
    if (!options.center) state.column_means.setZero();
    state.applied = options.center || options.scale;
    const Vector means = observed_column_means(x);
    const Matrix start = fill_missing(x, Matrix(means.transpose().replicate(n, 1)));
    d = compute_svd(state.apply(start)).d;
  }
  const Index cap = options.center ? std::min(n - 1, p) : std::min(n, p);
  const Vector eff = d.head(std::min<Index>(cap, d.size()));
  const double top = d.size() > 0 ? d(0) : 0.0;
  require(top > 0.0, "imputeada: data have no variation to shrink");
  double d_min = top;
  for (Index l = 0; l < eff.size(); ++l)
    if (eff(l) > kRankTolerance * top) d_min = std::min(d_min, eff(l));
  const double lo = std::log(d_min * 1e-3);
  const double hi = std::log(top * 10.0);
  const double start =
      std::clamp(std::log(options.lambda0.value_or(median(eff.cwiseMax(d_min * 1e-3)))), lo, hi);

  std::optional<MissRisk> best;
  for (int init = 0; init < options.nb_init; ++init) {
    ImputeOptions run = io;
    if (init > 0) {
      Rng rng = make_rng(options.seed, "imputeada-init", static_cast<std::uint64_t>(init));
      const auto [centered, state] = center_columns(x, true);
      Matrix noise = standard_normal(n, p, rng) * state.column_scales.asDiagonal();
      noise.rowwise() += state.column_means.transpose();
      run.init = std::move(noise);
    }
    std::vector<std::optional<MissRisk>> per_gamma(gammas.size());
    parallel_for(
        gammas.size(),
        [&](std::size_t g) {
          const double gamma = gammas[g];
          auto value = [&](double t) {
            return miss_risk(x, std::exp(t), gamma, criterion, options.sigma, run, options.fd)
                .risk.value;
          };
          const double chosen =
              options.lambda ? *options.lambda
                             : std::exp(line_search(value, start, lo, hi, options.search).x);
          per_gamma[g] = miss_risk(x, chosen, gamma, criterion, options.sigma, run, options.fd);
        },
        options.threads);
    for (auto& candidate : per_gamma)
      if (!best || candidate->risk.value < best->risk.value) best = std::move(candidate);
  }

  ImputationResult result = std::move(best->fit);
  result.params.lambda = best->risk.lambda;
  result.params.gamma = best->risk.gamma;
  result.criterion = best->risk.value;
  if (best->risk.degenerate)
    result.diagnostics.push_back(
        {"degenerate_criterion", "criterion is infinite at every candidate", std::nullopt});
  return result;
}

DataMatrix insert_missing(const DataMatrix& x, const MissingMechanism& mechanism,
                          std::uint64_t seed) {
  const Index n = x.rows();
  const Index p = x.cols();
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Matrix probability(n, p);
  std::optional<Index> driver;
  std::string stream;
  if (const auto* mcar = std::get_if<Mcar>(&mechanism)) {
    require(mcar->rate > 0.0 && mcar->rate < 0.9, "insert_missing: rate must lie in (0, 0.9)");
    probability.setConstant(mcar->rate);
    stream = "mcar";
  } else {
    const auto& mar = std::get<Mar>(mechanism);
    require(mar.rate > 0.0 && mar.rate < 0.9, "insert_missing: rate must lie in (0, 0.9)");
    require(mar.slope >= 0.0, "insert_missing: MAR slope must be nonnegative");
    double best_var = -1.0;
    for (Index j = 0; j < p; ++j) {
      if (!x.observed().col(j).all()) continue;
      const double mean = x.values().col(j).mean();
      const double var = (x.values().col(j).array() - mean).square().sum();
      if (var > best_var) {
        best_var = var;
        driver = j;
      }
    }
    require(driver.has_value(), "insert_missing: MAR needs a fully observed driver column");
    const double target = mar.rate * static_cast<double>(p) / static_cast<double>(p - 1);
    require(target < 1.0, "insert_missing: MAR rate too high for the number of columns");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return x.values()(a, *driver) < x.values()(b, *driver);
    });
    Vector quantile(n);
    for (Index r = 0; r < n; ++r)
      quantile(order[static_cast<std::size_t>(r)]) =
          (static_cast<double>(r) + 0.5) / static_cast<double>(n);
    auto probs = [&](double a) {
      const Eigen::ArrayXd z = a + mar.slope * (quantile.array() - 0.5);
      return Vector((1.0 / (1.0 + (-z).exp())).matrix());
    };
    double a_lo = -50.0;
    double a_hi = 50.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a_lo + a_hi);
      (probs(mid).mean() < target ? a_lo : a_hi) = mid;
    }
    const Vector pi = probs(0.5 * (a_lo + a_hi));
    for (Index j = 0; j < p; ++j) probability.col(j) = j == *driver ? Vector::Zero(n) : pi;
    stream = "mar";
  }

  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng = make_rng(seed, stream, attempt);
    Mask observed = x.observed();
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i < n; ++i)
        if (unif(rng) < probability(i, j)) observed(i, j) = false;
    if (covers(observed)) return DataMatrix(x.values(), std::move(observed));
  }
  throw InputError("insert_missing: could not draw a mask keeping every row and column "
                   "observed in 100 attempts; lower the rate");
}

HiddenCells hide_cells(const DataMatrix& x, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "hide_cells: fraction must lie in (0, 1)");
  std::vector<Index> cells;
  for (Index c = 0; c < x.values().size(); ++c)
    if (x.observed().data()[c]) cells.push_back(c);
  const auto n_obs = static_cast<Index>(cells.size());
  const Index count =
      std::max<Index>(1, static_cast<Index>(std::llround(fraction * static_cast<double>(n_obs))));
  require(count < n_obs, "hide_cells: nothing would remain observed");
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng = make_rng(seed, "hide-cells", attempt);
    std::vector<Index> pool = cells;
    Mask hidden = Mask::Constant(x.rows(), x.cols(), false);
    for (Index a = 0; a < count; ++a) {
      std::uniform_int_distribution<Index> pick(a, n_obs - 1);
      std::swap(pool[static_cast<std::size_t>(a)], pool[static_cast<std::size_t>(pick(rng))]);
      hidden.data()[pool[static_cast<std::size_t>(a)]] = true;
    }
    Mask observed = x.observed() && !hidden;
    if (covers(observed)) return {DataMatrix(x.values(), std::move(observed)), std::move(hidden)};
  }
  throw InputError("hide_cells: could not hide cells while keeping every row and column "
                   "observed in 100 attempts");
}

double msep(const Matrix& completed, const Matrix& truth, const Mask& mask) {
  require(completed.rows() == truth.rows() && completed.cols() == truth.cols() &&
              mask.rows() == truth.rows() && mask.cols() == truth.cols(),
          "msep: shapes do not match");
  const Index count = mask.count();
  require(count > 0, "msep: no cells to score");
  double total = 0.0;
  for (Index c = 0; c < truth.size(); ++c)
    if (mask.data()[c]) {
      const double r = completed.data()[c] - truth.data()[c];
      total += r * r;
    }
  return total / static_cast<double>(count);
}

}  // namespace lowrank
