#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "adiabatic/errors.hpp"

namespace adiabatic {

struct QuadratureOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-15;
  int max_depth = 30;
};

namespace detail {

inline double magnitude(double x) { return std::abs(x); }
inline double magnitude(const std::complex<double>& z) { return std::abs(z); }

template <class F, class T>
T simpson_recurse(F& f, double a, double b, T fa, T fm, T fb, T whole, double tol_density,
                  int depth, const QuadratureOptions& opt) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const T flm = f(lm);
  const T frm = f(rm);
  const T left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const T right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const T refined = left + right;
  const double diff = magnitude(refined - whole);
  const double tol = tol_density * (b - a);
  if (diff <= 15.0 * tol || diff <= 1e-15 * magnitude(refined)) {
    return refined + (refined - whole) / 15.0;
  }
  if (depth >= opt.max_depth) {
    throw QuadratureFailure("adaptive Simpson did not converge on [" + std::to_string(a) +
                            ", " + std::to_string(b) + "] at depth " +
                            std::to_string(depth));
  }
  return simpson_recurse(f, a, m, fa, flm, fm, left, tol_density, depth + 1, opt) +
         simpson_recurse(f, m, b, fm, frm, fb, right, tol_density, depth + 1, opt);
}

}  // namespace detail

/// Adaptive composite Simpson rule with interval bisection. The tolerance is
/// distributed over the interval in proportion to length; the reference scale
/// for the relative tolerance comes from an initial 8-panel estimate.
template <class F>
auto adaptive_simpson(F&& f, double a, double b, const QuadratureOptions& opt = {})
    -> decltype(f(a)) {
  using T = decltype(f(a));
  if (b == a) return T{} * 0.0;
  if (b < a) return -adaptive_simpson(f, b, a, opt);

  constexpr int panels = 8;
  std::array<double, 2 * panels + 1> xs{};
  std::vector<T> fs;
  fs.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = a + (b - a) * static_cast<double>(i) / (2.0 * panels);
    fs.push_back(f(xs[i]));
  }
  T estimate = fs[0] * 0.0;
  for (int p = 0; p < panels; ++p) {
    estimate = estimate + (xs[2 * p + 2] - xs[2 * p]) / 6.0 *
                              (fs[2 * p] + 4.0 * fs[2 * p + 1] + fs[2 * p + 2]);
  }
  const double scale = detail::magnitude(estimate);
  const double tol_density = std::max(opt.rel_tol * scale, opt.abs_tol) / (b - a);

  T total = fs[0] * 0.0;
  for (int p = 0; p < panels; ++p) {
    const double pa = xs[2 * p];
    const double pb = xs[2 * p + 2];
    const T whole = (pb - pa) / 6.0 * (fs[2 * p] + 4.0 * fs[2 * p + 1] + fs[2 * p + 2]);
    total = total + detail::simpson_recurse(f, pa, pb, fs[2 * p], fs[2 * p + 1],
                                            fs[2 * p + 2], whole, tol_density, 1, opt);
  }
  return total;
}

/// Running integrals over consecutive grid intervals; result[0] = 0.
template <class F>
std::vector<double> cumulative_integral(F&& f, const std::vector<double>& grid,
                                        const QuadratureOptions& opt = {}) {
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    out[i] = out[i - 1] + adaptive_simpson(f, grid[i - 1], grid[i], opt);
  }
  return out;
}

/// Five-point Gauss-Legendre rule on [a, b].
template <class F>
auto gauss_legendre5(F&& f, double a, double b) -> decltype(f(a)) {
  static constexpr std::array<double, 5> nodes{0.0, -0.5384693101056831, 0.5384693101056831,
                                               -0.9061798459386640, 0.9061798459386640};
  static constexpr std::array<double, 5> weights{0.5688888888888889, 0.4786286704993665,
                                                 0.4786286704993665, 0.2369268850561891,
                                                 0.2369268850561891};
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  using T = decltype(f(a));
  T sum = weights[0] * f(mid + half * nodes[0]);
  for (std::size_t i = 1; i < nodes.size(); ++i) sum = sum + weights[i] * f(mid + half * nodes[i]);
  return T(half * sum);
}

}  // namespace adiabatic
