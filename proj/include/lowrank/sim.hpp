#pragma once

#include "lowrank/core.hpp"
#include "lowrank/missing.hpp"

#include <map>
#include <string>
#include <vector>

namespace lowrank {

struct SimulationBundle {
  Matrix x;
  Matrix mu;
  double sigma = 0.0;
  Index k = 0;
  double snr = 0.0;
  std::uint64_t seed = 0;
};

/// mu = rank-k truncation of a standard Gaussian matrix scaled to unit
/// Frobenius norm; X = mu + sigma * noise with sigma = 1/(snr sqrt(np)).
SimulationBundle lrsim(Index n, Index p, Index k, double snr, std::uint64_t seed);

struct ReportRow {
  /// One entry per ExperimentReport::label_columns.
  std::vector<std::string> labels;
  int replicate = 0;
  std::uint64_t seed = 0;
  /// One entry per ExperimentReport::value_columns.
  std::vector<double> values;
};

struct Aggregate {
  std::vector<std::string> labels;
  std::string column;
  Index count = 0;
  double mean = 0.0;
  double sd = 0.0;
  /// sd / sqrt(count)
  double se = 0.0;
};

struct ExperimentReport {
  std::string name;
  std::vector<std::string> label_columns;
  std::vector<std::string> value_columns;
  std::vector<ReportRow> rows;
  std::vector<Aggregate> aggregates;
  std::map<std::string, std::string> metadata;

  /// Aggregate for a label combination and value column; throws if absent.
  const Aggregate& find(const std::vector<std::string>& labels, const std::string& column) const;
};

/// Mean / sd / se of every value column, grouped by identical labels in
/// order of first appearance.
std::vector<Aggregate> aggregate(const ExperimentReport& report);

struct BiasConfig {
  Index n = 50;
  Index p = 30;
  Index k = 5;
  double snr = 0.5;
  /// Threshold; defaults to sigma (sqrt(n) + sqrt(p)) / 2.
  std::optional<double> lambda;
  double gamma = 1.0;
  double missing_rate = 0.2;
  /// Uncentered by default so every criterion is an exact Stein identity.
  bool center = false;
  double threshold = 1e-8;
  int maxiter = 1000;
  SvdMethod svd = SvdMethod::Gram;
  FdOptions fd;
};

/// Per replicate: complete-data MSE against SURE; after MCAR masking, the
/// observed-cell MSE of the imputation estimator against SURE with missing
/// values, and its full MSE against SURE computed on the imputed matrix as if
/// it were complete. Every MSE is a sum of squares over the cells it covers.
ExperimentReport bias_experiment(const BiasConfig& config, int reps, std::uint64_t seed,
                                 int threads = 0);

struct MsepConfig {
  std::string name = "simulation1";
  Index n = 100;
  Index p = 30;
  Index k = 2;
  double snr = 1.0;
  double rate = 0.2;
  /// Any of "mcar", "mar".
  std::vector<std::string> mechanisms = {"mcar", "mar"};
  double mar_slope = 3.0;
  bool center = true;
  double threshold = 1e-6;
  int maxiter = 1000;
  SvdMethod svd = SvdMethod::Gram;
  /// ATN arm: imputeada selection settings.
  AdaMethod method = AdaMethod::Gsure;
  std::vector<double> gamma_seq = default_gamma_seq();
  FdOptions fd;
  LineSearchOptions search;
  /// Soft-threshold oracle arm: log-spaced grid on [1e-3 d_1, d_1].
  int lambda_grid = 30;
};

/// MSEP on the masked cells (against the complete noisy matrix) for the arms
/// atn, soft_oracle and mean under every configured mechanism.
ExperimentReport comparison_experiment(const std::vector<MsepConfig>& configs, int reps,
                                       std::uint64_t seed, int threads = 0);

}  // namespace lowrank
