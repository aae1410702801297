#include "lowrank/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lowrank {

namespace {

bool better(double a, double b) {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return a < b;
}

struct Counted {
  const std::function<double(double)>& f;
  int evaluations = 0;
  double operator()(double x) {
    ++evaluations;
    return f(x);
  }
};

ScalarMinimum local_search(Counted& f, double start, double lo, double hi,
                           const LineSearchOptions& options) {
  start = std::clamp(start, lo, hi);
  double best_x = start;
  double best_f = f(start);
  const int budget = options.max_evaluations;

  // Walk downhill with a doubling step until the objective rises or a bound
  // is reached; the bracket is then [left, right] around best_x.
  double step = std::min(options.initial_step, hi - lo);
  double left = std::max(lo, start - step);
  double right = std::min(hi, start + step);
  const double f_right = f(right);
  const double f_left = f(left);
  int direction = 0;
  if (better(f_right, best_f) && !better(f_left, f_right)) {
    direction = 1;
    best_x = right;
    best_f = f_right;
  } else if (better(f_left, best_f)) {
    direction = -1;
    best_x = left;
    best_f = f_left;
  }
  if (direction != 0) {
    while (f.evaluations < budget / 2) {
      step *= 2.0;
      const double x = std::clamp(best_x + direction * step, lo, hi);
      if (x == best_x) break;
      const double fx = f(x);
      if (better(fx, best_f)) {
        (direction > 0 ? left : right) = best_x;
        best_x = x;
        best_f = fx;
      } else {
        (direction > 0 ? right : left) = x;
        break;
      }
    }
    if (direction > 0 && best_x >= right) right = std::min(hi, best_x);
    if (direction < 0 && best_x <= left) left = std::max(lo, best_x);
  }
  if (right - left > options.tolerance) {
    const int remaining = std::max(5, budget - f.evaluations);
    ScalarMinimum refined = brent_minimize(
        [&](double x) { return f(x); }, left, right, options.tolerance, remaining);
    if (better(refined.value, best_f)) {
      best_x = refined.x;
      best_f = refined.value;
    }
  }
  return {best_x, best_f, 0};
}

}  // namespace

ScalarMinimum brent_minimize(const std::function<double(double)>& f, double lo, double hi,
                             double tolerance, int max_evaluations) {
  constexpr double golden = 0.3819660112501051;
  double a = std::min(lo, hi);
  double b = std::max(lo, hi);
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x);
  double fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  int evaluations = 1;
  while (evaluations < max_evaluations) {
    const double mid = 0.5 * (a + b);
    const double tol1 = tolerance * (std::abs(x) + 1.0);
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - mid) <= tol2 - 0.5 * (b - a)) break;
    bool parabolic = false;
    if (std::abs(e) > tol1 && std::isfinite(fx) && std::isfinite(fw) && std::isfinite(fv)) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
        e = d;
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (mid >= x) ? tol1 : -tol1;
        parabolic = true;
      }
    }
    if (!parabolic) {
      e = (x >= mid) ? a - x : b - x;
      d = golden * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    ++evaluations;
    if (!better(fx, fu)) {
      (u >= x ? a : b) = x;
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      (u < x ? a : b) = u;
      if (!better(fw, fu) || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (!better(fv, fu) || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  return {x, fx, evaluations};
}

ScalarMinimum line_search(const std::function<double(double)>& f, double start, double lo,
                          double hi, const LineSearchOptions& options) {
  Counted counted{f};
  ScalarMinimum best = local_search(counted, start, lo, hi, options);
  if (options.restarts > 0 && hi > lo) {
    std::vector<std::pair<double, double>> probes;
    for (int r = 0; r < options.restarts; ++r) {
      const double x = lo + (hi - lo) * (r + 0.5) / options.restarts;
      probes.emplace_back(x, counted(x));
    }
    for (const auto& [x, fx] : probes) {
      if (better(fx, best.value)) {
        best = {x, fx, 0};
        ScalarMinimum local = local_search(counted, x, lo, hi, options);
        if (better(local.value, best.value)) best = local;
      }
    }
  }
  best.evaluations = counted.evaluations;
  return best;
}

}  // namespace lowrank
