#include "lowrank/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace lowrank {

SimulationBundle lrsim(Index n, Index p, Index k, double snr, std::uint64_t seed) {
  require(n >= 2 && p >= 2, "lrsim: n and p must be at least 2");
  require(k >= 1 && k <= std::min(n, p),
          "lrsim: rank k must satisfy 1 <= k <= min(n, p) = " + std::to_string(std::min(n, p)));
  require(std::isfinite(snr) && snr > 0.0, "lrsim: SNR must be positive");
  SimulationBundle out;
  out.k = k;
  out.snr = snr;
  out.seed = seed;
  Rng signal_rng = make_rng(seed, "lrsim-signal");
  const SvdFactors f = compute_svd(standard_normal(n, p, signal_rng), k);
  out.mu = f.reconstruct();
  out.mu /= out.mu.norm();
  out.sigma = 1.0 / (snr * std::sqrt(static_cast<double>(n) * static_cast<double>(p)));
  Rng noise_rng = make_rng(seed, "lrsim-noise");
  out.x = out.mu + out.sigma * standard_normal(n, p, noise_rng);
  return out;
}

const Aggregate& ExperimentReport::find(const std::vector<std::string>& labels,
                                        const std::string& column) const {
  for (const auto& a : aggregates)
    if (a.labels == labels && a.column == column) return a;
  throw InputError("report has no aggregate for column " + column);
}

std::vector<Aggregate> aggregate(const ExperimentReport& report) {
  std::vector<std::vector<std::string>> groups;
  for (const auto& row : report.rows)
    if (std::find(groups.begin(), groups.end(), row.labels) == groups.end())
      groups.push_back(row.labels);
  std::vector<Aggregate> out;
  for (const auto& group : groups) {
    for (std::size_t c = 0; c < report.value_columns.size(); ++c) {
      Aggregate a;
      a.labels = group;
      a.column = report.value_columns[c];
      double sum = 0.0;
      for (const auto& row : report.rows)
        if (row.labels == group) {
          sum += row.values[c];
          ++a.count;
        }
      a.mean = sum / static_cast<double>(a.count);
      double ss = 0.0;
      for (const auto& row : report.rows)
        if (row.labels == group) ss += (row.values[c] - a.mean) * (row.values[c] - a.mean);
      a.sd = a.count > 1 ? std::sqrt(ss / static_cast<double>(a.count - 1)) : 0.0;
      a.se = a.sd / std::sqrt(static_cast<double>(a.count));
      out.push_back(std::move(a));
    }
  }
  return out;
}

namespace {

double sum_sq(const Matrix& a, const Matrix& b, const Mask* only) {
  double total = 0.0;
  for (Index c = 0; c < a.size(); ++c) {
    if (only && !only->data()[c]) continue;
    const double r = a.data()[c] - b.data()[c];
    total += r * r;
  }
  return total;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

ExperimentReport bias_experiment(const BiasConfig& config, int reps, std::uint64_t seed,
                                 int threads) {
  require(reps >= 1, "bias_experiment: reps must be positive");
  require(config.gamma >= 1.0, "bias_experiment: gamma must be >= 1");
  ExperimentReport report;
  report.name = "bias";
  report.value_columns = {"mse_complete", "sure_complete", "bias_complete",
                          "mse_observed", "sure_miss",     "bias_sure_miss",
                          "mse_full",     "sure_comp",     "bias_sure_comp"};
  report.rows.resize(static_cast<std::size_t>(reps));
  const Index n = config.n;
  const Index p = config.p;
  const SpectrumShape shape{n, p, config.center};

  parallel_for(
      static_cast<std::size_t>(reps),
      [&](std::size_t rep) {
        const std::uint64_t rep_seed = derive_seed(seed, "bias-replicate", rep);
        const SimulationBundle sim = lrsim(n, p, config.k, config.snr, rep_seed);
        const double lambda =
            config.lambda.value_or(sim.sigma * (std::sqrt(double(n)) + std::sqrt(double(p))) / 2.0);
        const double sigma = sim.sigma;

        // complete data
        const DataMatrix full(sim.x);
        auto [centered, state] =
            config.center ? center_columns(full) : std::pair{full, CenterState::identity(p)};
        SvdOptions svd;
        svd.method = config.svd;
        const SvdFactors f = compute_svd(centered.values(), svd);
        const Matrix mu_complete = reconstruct(f, shrink_atn(f.d, lambda, config.gamma), state);
        const double mse_complete = sum_sq(sim.mu, mu_complete, nullptr);
        const double sure_complete = sure(f.d, lambda, config.gamma, sigma, shape).value;

        // missing data
        const DataMatrix masked =
            insert_missing(full, Mcar{config.missing_rate}, derive_seed(rep_seed, "bias-mask"));
        ImputeOptions io;
        io.threshold = config.threshold;
        io.maxiter = config.maxiter;
        io.center = config.center;
        io.svd = config.svd;
        FdOptions fd = config.fd;
        fd.seed = derive_seed(rep_seed, "bias-fd");
        const MissRisk miss =
            miss_risk(masked, lambda, config.gamma, Criterion::Sure, sigma, io, fd);
        const Mask& obs = masked.observed();
        const double mse_observed = sum_sq(sim.mu, miss.fit.mu_hat, &obs);

        // imputed matrix treated as complete
        auto [imp_centered, imp_state] =
            config.center ? center_columns(DataMatrix(miss.fit.complete_obs))
                          : std::pair{DataMatrix(miss.fit.complete_obs), CenterState::identity(p)};
        const Vector d_imp = compute_svd(imp_centered.values(), svd).d;
        const double sure_comp = sure(d_imp, lambda, config.gamma, sigma, shape).value;
        const double mse_full = sum_sq(sim.mu, miss.fit.mu_hat, nullptr);

        ReportRow& row = report.rows[rep];
        row.replicate = static_cast<int>(rep) + 1;
        row.seed = rep_seed;
        row.values = {mse_complete, sure_complete,   mse_complete - sure_complete,
                      mse_observed, miss.risk.value, mse_observed - miss.risk.value,
                      mse_full,     sure_comp,       mse_full - sure_comp};
      },
      threads);

  report.aggregates = aggregate(report);
  report.metadata = {{"n", std::to_string(n)},
                     {"p", std::to_string(p)},
                     {"k", std::to_string(config.k)},
                     {"snr", format_double(config.snr)},
                     {"gamma", format_double(config.gamma)},
                     {"missing_rate", format_double(config.missing_rate)},
                     {"center", config.center ? "true" : "false"},
                     {"seed", std::to_string(seed)},
                     {"reps", std::to_string(reps)}};
  if (config.lambda) report.metadata["lambda"] = format_double(*config.lambda);
  return report;
}

namespace {

MissingMechanism make_mechanism(const MsepConfig& config, const std::string& name) {
  if (name == "mcar") return Mcar{config.rate};
  if (name == "mar") return Mar{config.rate, config.mar_slope};
  throw InputError("unknown missingness mechanism '" + name + "' (expected mcar or mar)");
}

}  // namespace

ExperimentReport comparison_experiment(const std::vector<MsepConfig>& configs, int reps,
                                       std::uint64_t seed, int threads) {
  require(reps >= 1, "comparison_experiment: reps must be positive");
  require(!configs.empty(), "comparison_experiment: no configurations");
  ExperimentReport report;
  report.name = "msep";
  report.label_columns = {"config", "mechanism", "arm"};
  report.value_columns = {"msep"};
  static const std::vector<std::string> arms = {"atn", "soft_oracle", "mean"};

  struct Job {
    std::size_t config;
    std::size_t mechanism;
    int rep;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    require(configs[c].lambda_grid >= 1, "comparison_experiment: lambda grid must be nonempty");
    for (const auto& m : configs[c].mechanisms) make_mechanism(configs[c], m);
    for (std::size_t m = 0; m < configs[c].mechanisms.size(); ++m)
      for (int r = 0; r < reps; ++r) jobs.push_back({c, m, r});
  }
  std::vector<std::array<ReportRow, 3>> results(jobs.size());

  parallel_for(
      jobs.size(),
      [&](std::size_t slot) {
        const Job& job = jobs[slot];
        const MsepConfig& cfg = configs[job.config];
        const std::string& mech = cfg.mechanisms[job.mechanism];
        const std::uint64_t rep_seed = derive_seed(derive_seed(seed, cfg.name), "msep-replicate",
                                                   static_cast<std::uint64_t>(job.rep));
        const SimulationBundle sim = lrsim(cfg.n, cfg.p, cfg.k, cfg.snr, rep_seed);
        const DataMatrix masked = insert_missing(DataMatrix(sim.x), make_mechanism(cfg, mech),
                                                 derive_seed(rep_seed, "msep-mask-" + mech));
        const Mask hidden = !masked.observed();

        ImputeAdaOptions ada;
        ada.method = cfg.method;
        ada.sigma = cfg.method == AdaMethod::Sure ? std::optional<double>(sim.sigma) : std::nullopt;
        ada.gamma_seq = cfg.gamma_seq;
        ada.center = cfg.center;
        ada.threshold = cfg.threshold;
        ada.maxiter = cfg.maxiter;
        ada.svd = cfg.svd;
        ada.fd = cfg.fd;
        ada.fd.seed = derive_seed(rep_seed, "msep-fd");
        ada.search = cfg.search;
        ada.seed = derive_seed(rep_seed, "msep-ada");
        const double msep_atn = msep(imputeada(masked, ada).complete_obs, sim.x, hidden);

        ImputeOptions io;
        io.threshold = cfg.threshold;
        io.maxiter = cfg.maxiter;
        io.center = cfg.center;
        io.svd = cfg.svd;
        const Vector means = observed_column_means(masked);
        const Matrix mean_fill = fill_missing(masked, Matrix(means.transpose().replicate(cfg.n, 1)));
        const double msep_mean = msep(mean_fill, sim.x, hidden);

        Matrix start = mean_fill;
        if (cfg.center) start.rowwise() -= means.transpose();
        const double top = compute_svd(start, SvdOptions{1, cfg.svd}).d(0);
        double msep_oracle = std::numeric_limits<double>::infinity();
        for (int g = 0; g < cfg.lambda_grid; ++g) {
          const double frac = cfg.lambda_grid == 1 ? 1.0 : double(g) / double(cfg.lambda_grid - 1);
          const double lambda = top * std::pow(10.0, -3.0 * (1.0 - frac));
          const ImputationResult soft = iterative_impute(masked, Soft{lambda}, io);
          msep_oracle = std::min(msep_oracle, msep(soft.complete_obs, sim.x, hidden));
        }

        const double values[3] = {msep_atn, msep_oracle, msep_mean};
        for (std::size_t a = 0; a < 3; ++a) {
          ReportRow& row = results[slot][a];
          row.labels = {cfg.name, mech, arms[a]};
          row.replicate = job.rep + 1;
          row.seed = rep_seed;
          row.values = {values[a]};
        }
      },
      threads);

  for (auto& triple : results)
    for (auto& row : triple) report.rows.push_back(std::move(row));
  report.aggregates = aggregate(report);
  report.metadata = {{"seed", std::to_string(seed)}, {"reps", std::to_string(reps)}};
  return report;
}

}  // namespace lowrank
