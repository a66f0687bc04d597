#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "adiabatic/errors.hpp"
#include "adiabatic/evolve.hpp"
#include "adiabatic/pathgeom.hpp"
#include "adiabatic/quadrature.hpp"
#include "adiabatic/spectral.hpp"

namespace adiabatic {

/// mean: sum w_k D_k; rms: sqrt(sum w_k D_k^2); sqrt: (sum w_k sqrt(D_k))^2;
/// generic_f: f^-1(sum w_k f(D_k)). Each is divided by v and integrated over lambda.
enum class QdVariant { mean, rms, sqrt, generic_f };

inline std::string to_string(QdVariant v) {
  switch (v) {
    case QdVariant::mean: return "mean";
    case QdVariant::rms: return "rms";
    case QdVariant::sqrt: return "sqrt";
    case QdVariant::generic_f: return "generic_f";
  }
  return "unknown";
}

inline constexpr std::array<QdVariant, 3> kFixedQdVariants{QdVariant::mean, QdVariant::rms,
                                                           QdVariant::sqrt};

/// Transition weights and excitation energies of the ground state at one lambda.
struct LocalAdiabaticity {
  double lambda = 0.0;
  double velocity = 0.0;
  Eigen::VectorXd weights;   ///< w_k = |<k|g'>|^2, k >= 1 (index 0 unused, zero)
  Eigen::VectorXd gaps;      ///< E_k - E_g
  double a = 0.0;            ///< sum_k w_k (E_k - E_g) / v
  double a_expectation = 0.0;///< <g'|(H - E_g)|g'> / v

  double weight_sum() const { return weights.sum(); }
};

inline LocalAdiabaticity local_adiabaticity(const EigenSystem& es, const Operator& h,
                                            const StateVector& dg, double velocity,
                                            double lambda = 0.0) {
  LocalAdiabaticity out;
  out.lambda = lambda;
  out.velocity = velocity;
  const Index d = es.dim();
  out.weights = Eigen::VectorXd::Zero(d);
  out.gaps = es.energies.array() - es.energies(0);
  for (Index k = 1; k < d; ++k) out.weights(k) = std::norm(es.vectors.col(k).dot(dg));
  out.a = out.weights.dot(out.gaps) / velocity;
  const Operator shifted = h - es.energies(0) * Operator::Identity(d, d);
  out.a_expectation = dg.dot(shifted * dg).real() / velocity;
  return out;
}

/// a(lambda) directly from the path; lambda should be an arc-length parameter.
inline LocalAdiabaticity local_adiabaticity(const HamiltonianPath& path, const Schedule& schedule,
                                            double lambda) {
  const Operator h = path.eval(lambda);
  const EigenSystem es = eigensystem(h);
  const StateVector dg = ground_derivative(es, path.deriv(lambda));
  return local_adiabaticity(es, h, dg, schedule.velocity(lambda), lambda);
}

/// a(lambda) at node i of a transported frame.
inline LocalAdiabaticity local_adiabaticity(const GaugedFrame& frame, const Schedule& schedule,
                                            std::size_t i) {
  return local_adiabaticity(frame.states.at(i), frame.path.eval(frame.grid[i]),
                            frame.ground_deriv[i], schedule.velocity(frame.grid[i]),
                            frame.grid[i]);
}

namespace detail {

/// Solves f(x) = y for strictly increasing f with the root inside [lo, hi],
/// expanding the bracket if needed.
inline double invert_increasing(const std::function<double(double)>& f, double y, double lo,
                                double hi) {
  for (int k = 0; k < 200 && f(lo) > y; ++k) lo -= std::max(1.0, std::abs(lo));
  for (int k = 0; k < 200 && f(hi) < y; ++k) hi += std::max(1.0, std::abs(hi));
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < y) lo = mid; else hi = mid;
    if (hi - lo <= 4e-16 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

inline void require_increasing_on(const std::function<double(double)>& f, double lo, double hi) {
  constexpr int n = 64;
  if (hi - lo <= 1e-12 * std::abs(hi)) {
    // a single excited level: probe a small neighbourhood instead of a point
    lo *= 1 - 1e-3;
    hi *= 1 + 1e-3;
  }
  double prev = f(lo);
  for (int i = 1; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    const double y = f(x);
    if (!(y > prev)) {
      throw InvalidArgument("generic_f: f must be strictly increasing on the spectral range [" +
                            sci(lo) + ", " + sci(hi) + "]");
    }
    prev = y;
  }
}

}  // namespace detail

/// Integrand of Q_D at one lambda for the chosen variant.
inline double qd_integrand(const LocalAdiabaticity& la, QdVariant variant,
                           const std::function<double(double)>& f = {}) {
  const Index d = la.gaps.size();
  switch (variant) {
    case QdVariant::mean:
      return la.a;
    case QdVariant::rms:
      return std::sqrt(la.weights.dot(la.gaps.cwiseProduct(la.gaps))) / la.velocity;
    case QdVariant::sqrt: {
      const double s = la.weights.dot(la.gaps.cwiseSqrt());
      return s * s / la.velocity;
    }
    case QdVariant::generic_f: {
      if (!f) throw InvalidArgument("generic_f variant requires f");
      const double lo = la.gaps(1);
      const double hi = la.gaps(d - 1);
      detail::require_increasing_on(f, lo, hi);
      // <g'| f(H - E_g) |g'> with f applied on the excited eigenspaces
      double acc = 0.0;
      double wsum = 0.0;
      for (Index k = 1; k < d; ++k) {
        acc += la.weights(k) * f(la.gaps(k));
        wsum += la.weights(k);
      }
      if (wsum == 0.0) return 0.0;
      return detail::invert_increasing(f, acc, lo, hi) / la.velocity;
    }
  }
  return 0.0;
}

struct QdReport {
  QdVariant variant = QdVariant::mean;
  double value = 0.0;
  double gap_integral = 0.0;   ///< int Delta(lambda) / v
  double min_gap = 0.0;
  double transit_time = 0.0;
  double delta_T_bound = 0.0;  ///< min_gap * T
  std::vector<double> sample_lambda;
  std::vector<double> per_lambda_a;

  /// Both links of Q_D >= int Delta/v >= Delta_min T, with relative slack.
  bool satisfies_bound(double rel = 1e-8) const {
    return value >= gap_integral - rel * value && gap_integral >= delta_T_bound - rel * value;
  }
};

struct QdOptions {
  QuadratureOptions quadrature{};
  std::size_t gap_samples = 1024;
  std::size_t a_samples = 65;
};

namespace detail {

/// Minimum of the spectral gap on [a, b]: grid scan refined by golden section.
inline std::pair<double, double> minimum_gap(const HamiltonianPath& path, double a, double b,
                                             std::size_t samples) {
  auto gap = [&](double l) { return eigensystem(path.eval(l)).gap(); };
  const std::vector<double> grid = uniform_grid(a, b, std::max<std::size_t>(samples, 2));
  std::size_t best = 0;
  std::vector<double> g(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    g[i] = gap(grid[i]);
    if (g[i] < g[best]) best = i;
  }
  double lo = grid[best > 0 ? best - 1 : 0];
  double hi = grid[std::min(best + 1, grid.size() - 1)];
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
  double f1 = gap(x1), f2 = gap(x2);
  for (int it = 0; it < 80 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1; x1 = hi - r * (hi - lo); f1 = gap(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2; x2 = lo + r * (hi - lo); f2 = gap(x2);
    }
  }
  double value = g[best], where = grid[best];
  if (std::min(f1, f2) < value) {
    value = std::min(f1, f2);
    where = f1 < f2 ? x1 : x2;
  }
  return {value, where};
}

}  // namespace detail

/// Q_D over [lambda_a, lambda_b] (default: the whole schedule).
inline QdReport qd(const HamiltonianPath& path, const Schedule& schedule, QdVariant variant,
                   const std::function<double(double)>& f = {}, const QdOptions& opt = {},
                   std::optional<std::pair<double, double>> range = std::nullopt) {
  const double a = range ? range->first : 0.0;
  const double b = range ? range->second : schedule.length();
  if (!(b >= a) || a < 0.0 || b > schedule.length() * (1 + 1e-12)) {
    throw InvalidArgument("qd: range outside the schedule");
  }
  if (variant == QdVariant::generic_f && !f) throw InvalidArgument("generic_f variant requires f");
  QdReport r;
  r.variant = variant;
  r.value = adaptive_simpson(
      [&](double l) { return qd_integrand(local_adiabaticity(path, schedule, l), variant, f); }, a,
      b, opt.quadrature);
  r.gap_integral = adaptive_simpson(
      [&](double l) { return eigensystem(path.eval(l)).gap() / schedule.velocity(l); }, a, b,
      opt.quadrature);
  r.min_gap = detail::minimum_gap(path, a, b, opt.gap_samples).first;
  r.transit_time = schedule.t_of_lambda(b) - schedule.t_of_lambda(a);
  r.delta_T_bound = r.min_gap * r.transit_time;
  for (double l : uniform_grid(a, b, std::max<std::size_t>(opt.a_samples, 2) - 1)) {
    r.sample_lambda.push_back(l);
    r.per_lambda_a.push_back(local_adiabaticity(path, schedule, l).a);
  }
  return r;
}

struct InvarianceReport {
  std::vector<QdVariant> variants;
  std::vector<double> qd_a;
  std::vector<double> qd_b;
  std::vector<double> deviation;  ///< |Q_A - Q_B| / Q_A

  double max_deviation() const {
    return deviation.empty() ? 0.0 : *std::max_element(deviation.begin(), deviation.end());
  }
};

/// Relative change of every Q_D variant between two systems on one lambda range.
inline InvarianceReport qd_invariance_check(const System& a, const System& b,
                                            const std::function<double(double)>& f = {},
                                            const QdOptions& opt = {}) {
  if (std::abs(a.schedule.length() - b.schedule.length()) >
      1e-12 * std::max(1.0, a.schedule.length())) {
    throw DomainMismatch("qd_invariance_check: systems cover different lambda ranges");
  }
  InvarianceReport out;
  std::vector<QdVariant> variants(kFixedQdVariants.begin(), kFixedQdVariants.end());
  if (f) variants.push_back(QdVariant::generic_f);
  for (QdVariant v : variants) {
    const double qa = qd(a.path, a.schedule, v, f, opt).value;
    const double qb = qd(b.path, b.schedule, v, f, opt).value;
    out.variants.push_back(v);
    out.qd_a.push_back(qa);
    out.qd_b.push_back(qb);
    out.deviation.push_back(qa == qb ? 0.0 : std::abs(qa - qb) / std::abs(qa));
  }
  return out;
}

/// At fixed path and length, eps should not increase with Q_D once eps < threshold.
struct MonotonicityReport {
  bool monotone = true;
  std::size_t checked_pairs = 0;
  std::vector<std::size_t> violations;  ///< index i where eps rises between rows i and i+1
};

inline MonotonicityReport condition4_report(std::vector<double> qd_values,
                                            std::vector<double> errors,
                                            double threshold = 0.05) {
  if (qd_values.size() != errors.size()) throw InvalidArgument("condition4_report: size mismatch");
  std::vector<std::size_t> order(qd_values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return qd_values[x] < qd_values[y]; });
  MonotonicityReport r;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    const double e0 = errors[order[k]];
    const double e1 = errors[order[k + 1]];
    if (e0 >= threshold || e1 >= threshold) continue;
    ++r.checked_pairs;
    if (e1 > e0) {
      r.monotone = false;
      r.violations.push_back(order[k]);
    }
  }
  return r;
}

}  // namespace adiabatic
