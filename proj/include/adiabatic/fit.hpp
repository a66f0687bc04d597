#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "adiabatic/errors.hpp"

namespace adiabatic {

enum class FitWindow { all, largest_decade };

inline std::string to_string(FitWindow w) {
  return w == FitWindow::all ? "all" : "largest_decade";
}

inline FitWindow fit_window_from_string(const std::string& s) {
  if (s == "all") return FitWindow::all;
  if (s == "largest_decade") return FitWindow::largest_decade;
  throw InvalidArgument("unknown fit window '" + s + "'");
}

/// log y = intercept + exponent log x by least squares over xs[first..last].
struct ScalingFit {
  std::vector<double> xs;
  std::vector<double> ys;
  double exponent = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  std::size_t first = 0;
  std::size_t last = 0;
  FitWindow window = FitWindow::all;
  /// Largest exponent change when one endpoint of the window is dropped;
  /// zero when the window has only four points.
  double sensitivity = 0.0;

  std::size_t points() const { return last - first + 1; }
};

namespace detail {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms = 0.0;
};

inline LineFit log_log_line(const std::vector<double>& xs, const std::vector<double>& ys,
                            std::size_t first, std::size_t last) {
  const double n = static_cast<double>(last - first + 1);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = first; i <= last; ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = first; i <= last; ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(ys[i]) - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("fit_power_law: abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (std::size_t i = first; i <= last; ++i) {
    const double r = std::log(ys[i]) - f.intercept - f.slope * std::log(xs[i]);
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

}  // namespace detail

/// Power-law fit on log-log axes. The largest_decade window keeps the points
/// with x >= x_max/10, widened downward until it holds at least four.
inline ScalingFit fit_power_law(std::vector<double> xs, std::vector<double> ys,
                                FitWindow window = FitWindow::all) {
  if (xs.size() != ys.size()) throw InvalidArgument("fit_power_law: size mismatch");
  if (xs.size() < 4) throw InvalidArgument("fit_power_law: need at least 4 points");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw InvalidArgument("fit_power_law: data must be positive and finite");
    }
  }
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  ScalingFit out;
  out.window = window;
  for (std::size_t i : order) {
    out.xs.push_back(xs[i]);
    out.ys.push_back(ys[i]);
  }
  out.last = out.xs.size() - 1;
  out.first = 0;
  if (window == FitWindow::largest_decade) {
    const double cut = out.xs.back() / 10.0;
    std::size_t first = out.last;
    while (first > 0 && out.xs[first - 1] >= cut) --first;
    out.first = std::min(first, out.last - 3);
  }
  const detail::LineFit f = detail::log_log_line(out.xs, out.ys, out.first, out.last);
  out.exponent = f.slope;
  out.intercept = f.intercept;
  out.residual_rms = f.rms;
  if (out.points() > 4) {
    const double lo = detail::log_log_line(out.xs, out.ys, out.first + 1, out.last).slope;
    const double hi = detail::log_log_line(out.xs, out.ys, out.first, out.last - 1).slope;
    out.sensitivity = std::max(std::abs(lo - f.slope), std::abs(hi - f.slope));
  }
  return out;
}

}  // namespace adiabatic
