#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "adiabatic/errors.hpp"
#include "adiabatic/interpolation.hpp"
#include "adiabatic/model.hpp"
#include "adiabatic/quadrature.hpp"
#include "adiabatic/spectral.hpp"

namespace adiabatic {

/// ||g'(s)|| for the parallel-transported ground state, from perturbation theory.
inline double ground_speed(const HamiltonianPath& path, double s) {
  const EigenSystem es = eigensystem(path.eval(s));
  return ground_derivative(es, path.deriv(s)).norm();
}

/// || (1 - |g><g|) dg || for an arbitrary (not necessarily gauged) tangent dg.
inline double projected_speed(const StateVector& g, const StateVector& dg) {
  return (dg - g * g.dot(dg)).norm();
}

/// Length of the ground-state curve between s_a and s_b.
inline double path_length(const HamiltonianPath& path, double s_a, double s_b,
                          const QuadratureOptions& opt = {}) {
  if (s_b < s_a) throw InvalidArgument("path_length: need s_a <= s_b");
  return adaptive_simpson([&](double s) { return ground_speed(path, s); }, s_a, s_b, opt);
}

/// Monotone map s -> lambda(s) = int_{s_i}^s ||g'||, with lambda(s_i) = 0.
class ArcLengthMap {
 public:
  ArcLengthMap(HamiltonianPath path, double s_i, double s_f, std::size_t resolution = 256,
               const QuadratureOptions& opt = {})
      : path_(std::move(path)) {
    if (!(s_f > s_i)) throw InvalidArgument("arc_length_map: need s_f > s_i");
    if (resolution < 1) throw InvalidArgument("arc_length_map: resolution must be positive");
    std::vector<double> s = uniform_grid(s_i, s_f, resolution);
    auto speed = [this](double x) { return ground_speed(path_, x); };
    std::vector<double> lam = cumulative_integral(speed, s, opt);
    std::vector<double> slopes(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) slopes[i] = speed(s[i]);
    table_ = MonotoneTable(std::move(s), std::move(lam), std::move(slopes));
  }

  double lambda(double s) const { return table_(s); }
  double s_of_lambda(double lambda) const { return table_.inverse(lambda); }
  double speed(double s) const { return ground_speed(path_, s); }
  double total_length() const { return table_.ys().back(); }
  const std::vector<double>& s_grid() const { return table_.xs(); }
  const std::vector<double>& lambda_grid() const { return table_.ys(); }
  const std::vector<double>& speeds() const { return table_.slopes(); }
  const HamiltonianPath& path() const { return path_; }

  /// H(lambda) on [0, L]; derivative uses the exact speed at s(lambda).
  HamiltonianPath reparameterized() const {
    if (!(total_length() > 0.0)) {
      throw InvalidArgument("arc-length reparameterization of a zero-length path");
    }
    auto self = std::make_shared<const ArcLengthMap>(*this);
    return reparameterize(
        path_, [self](double l) { return self->s_of_lambda(l); },
        [self](double l) { return 1.0 / self->speed(self->s_of_lambda(l)); },
        Domain{0.0, total_length()});
  }

 private:
  HamiltonianPath path_;
  MonotoneTable table_;
};

inline ArcLengthMap arc_length_map(const HamiltonianPath& path, double s_i, double s_f,
                                   std::size_t resolution = 256) {
  return ArcLengthMap(path, s_i, s_f, resolution);
}

/// Reference traversal rate v_ref(lambda) and its derivative.
struct VelocityProfile {
  std::string kind = "constant";
  std::function<double(double)> rate;
  std::function<double(double)> slope;

  double operator()(double lambda) const { return rate(lambda); }

  static VelocityProfile constant(double v) {
    if (!(v > 0.0)) throw InvalidArgument("constant velocity must be positive");
    return {"constant", [v](double) { return v; }, [](double) { return 0.0; }};
  }

  /// v(lambda) = sum_k c_k lambda^k.
  static VelocityProfile polynomial(std::vector<double> coeffs) {
    if (coeffs.empty()) throw InvalidArgument("polynomial velocity needs coefficients");
    auto c = std::make_shared<const std::vector<double>>(std::move(coeffs));
    auto value = [c](double x) {
      double acc = 0.0;
      for (std::size_t k = c->size(); k-- > 0;) acc = acc * x + (*c)[k];
      return acc;
    };
    auto deriv = [c](double x) {
      double acc = 0.0;
      for (std::size_t k = c->size(); k-- > 1;) acc = acc * x + static_cast<double>(k) * (*c)[k];
      return acc;
    };
    return {"polynomial", value, deriv};
  }

  /// Tabulated rates; cubic spline through >= 4 knots, linear otherwise.
  static VelocityProfile table(std::vector<double> lambdas, std::vector<double> rates) {
    if (lambdas.size() < 2 || lambdas.size() != rates.size()) {
      throw InvalidArgument("velocity table needs >= 2 matched samples");
    }
    for (std::size_t i = 1; i < lambdas.size(); ++i) {
      if (!(lambdas[i] > lambdas[i - 1])) throw InvalidArgument("velocity table not increasing");
    }
    if (lambdas.size() >= 4) {
      Eigen::MatrixXd y(static_cast<Index>(rates.size()), 1);
      for (std::size_t i = 0; i < rates.size(); ++i) y(static_cast<Index>(i), 0) = rates[i];
      auto spline = std::make_shared<const CubicSpline>(std::move(lambdas), std::move(y));
      return {"table", [spline](double x) { return spline->value(x)(0); },
              [spline](double x) { return spline->derivative(x)(0); }};
    }
    auto xs = std::make_shared<const std::vector<double>>(std::move(lambdas));
    auto ys = std::make_shared<const std::vector<double>>(std::move(rates));
    auto value = [xs, ys](double x) {
      const std::size_t i = bracket_index(*xs, x);
      const double t = (x - (*xs)[i]) / ((*xs)[i + 1] - (*xs)[i]);
      return (1 - t) * (*ys)[i] + t * (*ys)[i + 1];
    };
    auto deriv = [xs, ys](double x) {
      const std::size_t i = bracket_index(*xs, x);
      return ((*ys)[i + 1] - (*ys)[i]) / ((*xs)[i + 1] - (*xs)[i]);
    };
    return {"table", value, deriv};
  }

  static VelocityProfile custom(std::function<double(double)> f,
                                std::function<double(double)> df) {
    return {"custom", std::move(f), std::move(df)};
  }
};

/// Traversal law lambda(t) on [0, L] with v(lambda) = v_ref(lambda) / s_c.
class Schedule {
 public:
  Schedule(VelocityProfile v_ref, double s_c, double length, std::size_t nodes = 256,
           const QuadratureOptions& opt = {})
      : v_ref_(std::move(v_ref)), s_c_(s_c), length_(length) {
    if (!(s_c > 0.0)) throw InvalidArgument("slowdown factor must be positive");
    if (!(length > 0.0)) throw InvalidArgument("schedule length must be positive");
    if (nodes < 1) nodes = 1;
    nodes_ = uniform_grid(0.0, length, nodes);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      check_rate(nodes_[i]);
      if (i + 1 < nodes_.size()) check_rate(0.5 * (nodes_[i] + nodes_[i + 1]));
    }
    ref_time_ = cumulative_integral([this](double l) { return 1.0 / v_ref_(l); }, nodes_, opt);
  }

  double velocity(double lambda) const { return v_ref_(lambda) / s_c_; }
  double velocity_slope(double lambda) const { return v_ref_.slope(lambda) / s_c_; }
  double slowdown() const { return s_c_; }
  double length() const { return length_; }
  double transit_time() const { return s_c_ * ref_time_.back(); }
  double mean_velocity() const { return length_ / transit_time(); }
  const VelocityProfile& reference() const { return v_ref_; }
  const std::vector<double>& nodes() const { return nodes_; }

  double t_of_lambda(double lambda) const {
    if (lambda <= 0.0) return 0.0;
    if (lambda >= length_) return transit_time();
    const std::size_t i = bracket_index(nodes_, lambda);
    const double inc =
        gauss_legendre5([this](double l) { return 1.0 / v_ref_(l); }, nodes_[i], lambda);
    return s_c_ * (ref_time_[i] + inc);
  }

  /// Inverse of t_of_lambda by safeguarded Newton (dt/dlambda = 1/v). A good
  /// `hint` usually needs a single correction.
  double lambda_of_t(double t, double hint = -1.0) const {
    if (t <= 0.0) return 0.0;
    const double total = transit_time();
    if (t >= total) return length_;
    const double target = t / s_c_;
    auto it = std::upper_bound(ref_time_.begin(), ref_time_.end(), target);
    const std::size_t i = std::min<std::size_t>(
        static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - ref_time_.begin() - 1, 0)),
        nodes_.size() - 2);
    double lo = nodes_[i];
    double hi = nodes_[i + 1];
    double x = (hint >= lo && hint <= hi)
                   ? hint
                   : lo + (hi - lo) * (target - ref_time_[i]) / (ref_time_[i + 1] - ref_time_[i]);
    for (int k = 0; k < 60; ++k) {
      const double f = t_of_lambda(x) - t;
      if (f > 0) hi = x; else lo = x;
      const double step = f * velocity(x);
      double next = x - step;
      if (!(next > lo && next < hi)) {
        next = 0.5 * (lo + hi);
      } else if (std::abs(step) <= 1e-9 * std::max(1.0, std::abs(x))) {
        return next;  // the quadratic remainder is far below rounding
      }
      if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
      x = next;
    }
    return x;
  }

  Schedule with_slowdown(double s_c) const {
    Schedule out = *this;
    if (!(s_c > 0.0)) throw InvalidArgument("slowdown factor must be positive");
    out.s_c_ = s_c;
    return out;
  }

 private:
  void check_rate(double l) const {
    const double v = v_ref_(l);
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument("velocity profile must be positive; v_ref(" + std::to_string(l) +
                            ") = " + std::to_string(v));
    }
  }

  VelocityProfile v_ref_;
  double s_c_;
  double length_;
  std::vector<double> nodes_;
  std::vector<double> ref_time_;
};

inline Schedule make_schedule(VelocityProfile v_ref, double s_c, double length,
                              std::size_t nodes = 256) {
  return Schedule(std::move(v_ref), s_c, length, nodes);
}

}  // namespace adiabatic
