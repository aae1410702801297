#pragma once

#include <functional>

namespace lowrank {

struct ScalarMinimum {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

/// Brent's derivative-free minimizer on [lo, hi]. Non-finite objective values
/// are accepted and simply lose every comparison.
ScalarMinimum brent_minimize(const std::function<double(double)>& f, double lo, double hi,
                             double tolerance = 1e-5, int max_evaluations = 100);

struct LineSearchOptions {
  double initial_step = 0.5;
  double tolerance = 1e-4;
  int max_evaluations = 60;
  /// Log-spaced probe points used to detect a stalled local search.
  int restarts = 5;
};

/// Minimizes f over [lo, hi] starting from `start`: a downhill bracket search
/// followed by Brent refinement. Afterwards `restarts` evenly spaced probes
/// are evaluated; the local search is rerun from every probe that beats the
/// current minimum, which is how a stall in a poor basin is detected.
ScalarMinimum line_search(const std::function<double(double)>& f, double start, double lo,
                          double hi, const LineSearchOptions& options = {});

}  // namespace lowrank
