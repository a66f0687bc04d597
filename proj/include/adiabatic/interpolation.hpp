#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "adiabatic/errors.hpp"

namespace adiabatic {

/// Index i with grid[i] <= x <= grid[i+1], clamped to the valid range.
inline std::size_t bracket_index(const std::vector<double>& grid, double x) {
  if (grid.size() < 2) return 0;
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t i = it == grid.begin() ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
  return std::min(i, grid.size() - 2);
}

/// Cubic Hermite interpolation on one interval, given values and slopes.
struct Hermite {
  static double value(double x0, double x1, double y0, double y1, double d0, double d1,
                      double x) {
    const double h = x1 - x0;
    const double t = (x - x0) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * y1 +
           (t3 - t2) * h * d1;
  }

  static double slope(double x0, double x1, double y0, double y1, double d0, double d1,
                      double x) {
    const double h = x1 - x0;
    const double t = (x - x0) / h;
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * y0 + (-6 * t2 + 6 * t) * y1) / h +
           (3 * t2 - 4 * t + 1) * d0 + (3 * t2 - 2 * t) * d1;
  }
};

/// Strictly increasing table y(x) with known slopes; evaluates y(x) and its
/// inverse x(y) through the piecewise cubic Hermite interpolant.
class MonotoneTable {
 public:
  MonotoneTable() = default;
  MonotoneTable(std::vector<double> xs, std::vector<double> ys, std::vector<double> slopes)
      : xs_(std::move(xs)), ys_(std::move(ys)), ds_(std::move(slopes)) {
    if (xs_.size() < 2 || xs_.size() != ys_.size() || xs_.size() != ds_.size()) {
      throw InvalidArgument("monotone table needs >= 2 matched samples");
    }
    for (std::size_t i = 1; i < xs_.size(); ++i) {
      if (!(xs_[i] > xs_[i - 1])) throw InvalidArgument("table abscissae not increasing");
      if (ys_[i] < ys_[i - 1]) throw InvalidArgument("table values not monotone");
    }
  }

  double operator()(double x) const {
    const std::size_t i = bracket_index(xs_, x);
    return Hermite::value(xs_[i], xs_[i + 1], ys_[i], ys_[i + 1], ds_[i], ds_[i + 1], x);
  }

  double slope(double x) const {
    const std::size_t i = bracket_index(xs_, x);
    return Hermite::slope(xs_[i], xs_[i + 1], ys_[i], ys_[i + 1], ds_[i], ds_[i + 1], x);
  }

  /// Solves y(x) = y by safeguarded Newton inside the bracketing interval.
  double inverse(double y) const {
    if (y <= ys_.front()) return xs_.front();
    if (y >= ys_.back()) return xs_.back();
    const std::size_t i = bracket_index(ys_, y);
    double lo = xs_[i];
    double hi = xs_[i + 1];
    if (ys_[i + 1] == ys_[i]) return lo;
    double x = lo + (hi - lo) * (y - ys_[i]) / (ys_[i + 1] - ys_[i]);
    for (int it = 0; it < 60; ++it) {
      const double f = (*this)(x) - y;
      if (f > 0) hi = x; else lo = x;
      const double d = slope(x);
      double next = d > 0 ? x - f / d : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
      x = next;
    }
    return x;
  }

  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  const std::vector<double>& slopes() const { return ds_; }

 private:
  std::vector<double> xs_, ys_, ds_;
};

/// Slope at x[0] of the cubic through the first four samples; used to clamp
/// the spline ends so interpolation stays fourth order up to the boundary.
inline Eigen::RowVectorXd lagrange_end_slope(const std::vector<double>& x,
                                             const Eigen::MatrixXd& y, bool at_front) {
  const std::size_t n = x.size();
  std::array<std::size_t, 4> idx{};
  for (std::size_t k = 0; k < 4; ++k) idx[k] = at_front ? k : n - 1 - k;
  const double x0 = x[idx[0]];
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(y.cols());
  for (std::size_t j = 0; j < 4; ++j) {
    double w = 0.0;
    if (j == 0) {
      for (std::size_t m = 1; m < 4; ++m) w += 1.0 / (x0 - x[idx[m]]);
    } else {
      double num = 1.0, den = 1.0;
      for (std::size_t m = 0; m < 4; ++m) {
        if (m == j) continue;
        den *= x[idx[j]] - x[idx[m]];
        if (m != 0) num *= x0 - x[idx[m]];
      }
      w = num / den;
    }
    out += w * y.row(static_cast<Eigen::Index>(idx[j]));
  }
  return out;
}

/// Clamped cubic spline through (x_i, Y_i) where each Y_i is a row of values;
/// all columns share the same knots and are solved together.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> x, Eigen::MatrixXd y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 4) throw InvalidArgument("cubic spline needs at least 4 knots");
    if (static_cast<std::size_t>(y_.rows()) != n) throw InvalidArgument("spline size mismatch");
    for (std::size_t i = 1; i < n; ++i) {
      if (!(x_[i] > x_[i - 1])) throw InvalidArgument("spline knots must be strictly increasing");
    }
    const Eigen::RowVectorXd d0 = lagrange_end_slope(x_, y_, true);
    const Eigen::RowVectorXd dn = lagrange_end_slope(x_, y_, false);

    // Tridiagonal system for the second derivatives M_i (Thomas algorithm).
    std::vector<double> a(n), b(n), c(n);
    Eigen::MatrixXd r(n, y_.cols());
    const double h0 = x_[1] - x_[0];
    b[0] = h0 / 3.0;
    c[0] = h0 / 6.0;
    r.row(0) = (y_.row(1) - y_.row(0)) / h0 - d0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double hl = x_[i] - x_[i - 1];
      const double hr = x_[i + 1] - x_[i];
      a[i] = hl / 6.0;
      b[i] = (hl + hr) / 3.0;
      c[i] = hr / 6.0;
      r.row(static_cast<Eigen::Index>(i)) =
          (y_.row(static_cast<Eigen::Index>(i + 1)) - y_.row(static_cast<Eigen::Index>(i))) / hr -
          (y_.row(static_cast<Eigen::Index>(i)) - y_.row(static_cast<Eigen::Index>(i - 1))) / hl;
    }
    const double hn = x_[n - 1] - x_[n - 2];
    a[n - 1] = hn / 6.0;
    b[n - 1] = hn / 3.0;
    r.row(static_cast<Eigen::Index>(n - 1)) =
        dn - (y_.row(static_cast<Eigen::Index>(n - 1)) - y_.row(static_cast<Eigen::Index>(n - 2))) / hn;

    for (std::size_t i = 1; i < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      r.row(static_cast<Eigen::Index>(i)) -= w * r.row(static_cast<Eigen::Index>(i - 1));
    }
    m_.resize(static_cast<Eigen::Index>(n), y_.cols());
    m_.row(static_cast<Eigen::Index>(n - 1)) = r.row(static_cast<Eigen::Index>(n - 1)) / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
      m_.row(static_cast<Eigen::Index>(i)) =
          (r.row(static_cast<Eigen::Index>(i)) - c[i] * m_.row(static_cast<Eigen::Index>(i + 1))) / b[i];
    }
  }

  Eigen::RowVectorXd value(double x) const {
    const auto [i, h, t] = locate(x);
    const double u = 1.0 - t;
    return u * y_.row(i) + t * y_.row(i + 1) +
           (h * h / 6.0) * ((u * u * u - u) * m_.row(i) + (t * t * t - t) * m_.row(i + 1));
  }

  Eigen::RowVectorXd derivative(double x) const {
    const auto [i, h, t] = locate(x);
    const double u = 1.0 - t;
    return (y_.row(i + 1) - y_.row(i)) / h +
           (h / 6.0) * (-(3 * u * u - 1) * m_.row(i) + (3 * t * t - 1) * m_.row(i + 1));
  }

  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

 private:
  struct Loc {
    Eigen::Index i;
    double h;
    double t;
  };
  Loc locate(double x) const {
    const std::size_t i = bracket_index(x_, x);
    const double h = x_[i + 1] - x_[i];
    return {static_cast<Eigen::Index>(i), h, (x - x_[i]) / h};
  }

  std::vector<double> x_;
  Eigen::MatrixXd y_;
  Eigen::MatrixXd m_;
};

/// Value at x of the cubic through four samples (xs[k], ys[k]).
template <class T>
T lagrange4(const double* xs, const T* ys, double x) {
  T out = ys[0] * 0.0;
  for (int j = 0; j < 4; ++j) {
    double w = 1.0;
    for (int m = 0; m < 4; ++m) {
      if (m != j) w *= (x - xs[m]) / (xs[j] - xs[m]);
    }
    out = out + w * ys[j];
  }
  return out;
}

}  // namespace adiabatic
