#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lowrank {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// true = observed
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Invalid arguments or data that violate a documented precondition.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical backend failed (non-convergence of a decomposition, etc).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structured warning record attached to results, e.g. code "sigma_estimated".
struct Diagnostic {
  std::string code;
  std::string message;
  std::optional<double> value;
};
using Diagnostics = std::vector<Diagnostic>;

// ---------------------------------------------------------------------------
// Random streams

using Rng = std::mt19937_64;

/// Derives an independent 64-bit seed for a named stream; every random draw in
/// the library goes through a stream derived from the user seed so results do
/// not depend on the order in which work is scheduled.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index = 0);

Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

Matrix standard_normal(Index rows, Index cols, Rng& rng);

// ---------------------------------------------------------------------------
// Worker pool

/// Thread count used when a call passes threads = 0. Initialized from the
/// LOWRANK_THREADS environment variable, falling back to 1.
int default_threads();
void set_default_threads(int threads);

/// Runs body(i) for i in [0, count). Each index is processed exactly once;
/// callers write results into per-index slots so the outcome is independent
/// of scheduling. Calls nested inside a worker run serially.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  int threads = 0);

void require(bool condition, const std::string& message);

/// Median (mean of the two middle values for even length).
double median(Eigen::VectorXd values);

}  // namespace lowrank
