#pragma once

#include "lowrank/core.hpp"

#include <variant>

namespace lowrank {

/// Keep the first k singular values.
struct Hard {
  Index k;
};
/// d -> max(d - lambda, 0).
struct Soft {
  double lambda;
};
/// Adaptive trace norm: d -> d max(1 - (lambda/d)^gamma, 0).
struct Atn {
  double lambda;
  double gamma;
};

enum class Loss { Frobenius, Operator, Nuclear };

/// Asymptotically optimal shrinker for the spiked model with i.i.d. noise of
/// standard deviation sigma per entry.
struct Asympt {
  double sigma;
  Loss loss = Loss::Frobenius;
};

/// d -> d (d^2 - sigma^2)/d^2 on the first k values, clamped at zero.
/// Here sigma is the noise level in singular-value units.
struct LowNoise {
  double sigma;
  Index k;
};

using ShrinkSpec = std::variant<Hard, Soft, Atn, Asympt, LowNoise>;

Vector shrink_hard(const Vector& d, Index k);
Vector shrink_soft(const Vector& d, double lambda);
Vector shrink_atn(const Vector& d, double lambda, double gamma);
Vector shrink_lownoise(const Vector& d, double sigma, Index k);

/// Orientation: the larger dimension plays the role of n and
/// beta = min(n, p) / max(n, p), so the rule is invariant under transposition.
Vector shrink_asympt(const Vector& d, double sigma, Index n, Index p, Loss loss = Loss::Frobenius);

/// Dispatches on the rule; n and p are the dimensions of the matrix whose
/// spectrum is d (only the asymptotic rule uses them).
Vector apply_shrink(const ShrinkSpec& spec, const Vector& d, Index n, Index p);

/// Validates parameters; throws InputError.
void validate(const ShrinkSpec& spec);

std::string describe(const ShrinkSpec& spec);

enum class OptiMethod { Asympt, LowNoise };

struct OptiShrinkOptions {
  std::optional<double> sigma;
  OptiMethod method = OptiMethod::Asympt;
  Loss loss = Loss::Frobenius;
  std::optional<Index> k;
  bool center = true;
  /// Seed for the rank cross-validation when method = LowNoise and k is absent.
  std::uint64_t seed = 0;
  int threads = 0;
};

/// Denoises a complete matrix with the asymptotic or the low-noise shrinker,
/// estimating sigma (and k for the low-noise rule) when not supplied.
ShrinkageResult optishrink(const DataMatrix& x, const OptiShrinkOptions& options = {});

}  // namespace lowrank
