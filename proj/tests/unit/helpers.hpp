#pragma once

#include "lowrank/core.hpp"

#include <cmath>

namespace testing {

inline lowrank::Matrix random_matrix(lowrank::Index n, lowrank::Index p, std::uint64_t seed) {
  lowrank::Rng rng(seed);
  return lowrank::standard_normal(n, p, rng);
}

/// Random matrix with orthonormal columns (Q factor of a Gaussian matrix).
inline lowrank::Matrix orthonormal(lowrank::Index n, lowrank::Index k, std::uint64_t seed) {
  Eigen::HouseholderQR<lowrank::Matrix> qr(random_matrix(n, k, seed));
  return qr.householderQ() * lowrank::Matrix::Identity(n, k);
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace testing
