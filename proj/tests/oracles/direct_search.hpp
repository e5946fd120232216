#pragma once

// Derivative-free maximization of a unimodal-on-a-bracket scalar function:
// coarse scan, then golden-section refinement around the best scan point.

#include <cmath>
#include <functional>
#include <utility>

namespace oracle {

inline std::pair<double, double> maximize_scalar(const std::function<double(double)>& f, double lo, double hi,
                                                 int scan = 400, double tol = 1e-10) {
  double best_x = lo;
  double best_f = f(lo);
  const double h = (hi - lo) / scan;
  for (int i = 1; i <= scan; ++i) {
    const double x = lo + i * h;
    const double v = f(x);
    if (v > best_f) {
      best_f = v;
      best_x = x;
    }
  }
  double a = std::max(lo, best_x - h);
  double b = std::min(hi, best_x + h);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  const double v = f(x);
  return v > best_f ? std::pair{x, v} : std::pair{best_x, best_f};
}

}  // namespace oracle
