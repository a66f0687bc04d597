#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adiabatic/errors.hpp"
#include "adiabatic/evolve.hpp"
#include "adiabatic/fit.hpp"
#include "adiabatic/metrics.hpp"
#include "adiabatic/model.hpp"
#include "adiabatic/pathgeom.hpp"
#include "adiabatic/quadrature.hpp"
#include "adiabatic/spectral.hpp"

namespace adiabatic {

/// Leading 1/T coefficient of the error series, evaluated from endpoint data
/// of a transported frame. With u_j = v <j|g'> / (E_j - E_g) at each end and
/// Phi_j = int (E_j - E_g)/v dlambda,
///   value = T || sum_j |j_f> (e^{i Phi_j} u_j(f) - u_j(i)) ||,
/// the same with the phase dropped gives endpoint_difference. `value / T`
/// is the first-order endpoint estimate of eps itself.
struct B1Report {
  double value = 0.0;
  double endpoint_difference = 0.0;
  double transit_time = 0.0;
  Eigen::VectorXd phases;  ///< Phi_j, j >= 1

  double endpoint_error() const { return transit_time > 0.0 ? value / transit_time : 0.0; }
};

inline B1Report b1_coefficient(const GaugedFrame& frame, const Schedule& schedule,
                               const QuadratureOptions& opt = {}) {
  if (frame.size() < 2) throw InvalidArgument("b1_coefficient: frame needs >= 2 points");
  const double la = frame.grid.front();
  const double lb = frame.grid.back();
  const Index d = frame.dim();
  const EigenSystem& ei = frame.states.front();
  const EigenSystem& ef = frame.states.back();
  const double vi = schedule.velocity(la);
  const double vf = schedule.velocity(lb);
  B1Report out;
  out.transit_time = schedule.t_of_lambda(lb) - schedule.t_of_lambda(la);
  out.phases = Eigen::VectorXd::Zero(d);
  for (Index j = 1; j < d; ++j) {
    out.phases(j) = adaptive_simpson(
        [&](double l) {
          const EigenSystem es = eigensystem(frame.path.eval(l));
          return (es.energies(j) - es.energies(0)) / schedule.velocity(l);
        },
        la, lb, opt);
  }
  StateVector with_phase = StateVector::Zero(d);
  StateVector without = StateVector::Zero(d);
  for (Index j = 1; j < d; ++j) {
    const Complex uf = vf * ef.level(j).dot(frame.ground_deriv.back()) / (ef.energies(j) - ef.energies(0));
    const Complex ui = vi * ei.level(j).dot(frame.ground_deriv.front()) / (ei.energies(j) - ei.energies(0));
    with_phase += ef.level(j) * (std::exp(kI * out.phases(j)) * uf - ui);
    without += ef.level(j) * (uf - ui);
  }
  out.value = out.transit_time * with_phase.norm();
  out.endpoint_difference = out.transit_time * without.norm();
  return out;
}

// ---------------------------------------------------------------------------
// Periodic model

/// Closed-form error of the rotating two-level model after traversing
/// `length` of arc at constant rate v: in the frame co-rotating at omega = 2v
/// the Hamiltonian is constant, so eps = (omega/Omega) |sin(Omega t / 2)|.
inline double rotating_frame_error(double delta, double v, double length) {
  const double omega = 2.0 * v;
  const double big = std::hypot(delta, omega);
  return omega / big * std::abs(std::sin(0.5 * big * length / v));
}

struct PeriodicOptions {
  StepControl control{};
  double initial_slowdown = 1.0;
  double match_tolerance = 0.02;     ///< relative, on eps
  int max_iterations = 40;
  double guard_threshold = 0.05;     ///< monotonicity is enforced below this eps
  FitWindow window = FitWindow::largest_decade;
  double superlinear_margin = 0.02;
  double max_residual = 0.05;
};

/// Error after `cycles` periods from the single-period propagator.
inline double periodic_error(const System& cycle, int cycles, const StepControl& control) {
  StepControl c = control;
  c.form = Formulation::lambda;
  const Operator u = propagator(cycle, 0.0, cycle.schedule.length(), c);
  const StateVector g = eigensystem(cycle.path.eval(0.0)).ground();
  StateVector psi = g;
  for (int n = 0; n < cycles; ++n) psi = u * psi;
  return (psi - g * g.dot(psi)).norm();
}

inline System rotating_cycle(const RotatingTwoLevelParams& p, double s_c, int cycles = 1) {
  return {rotating_two_level_lambda_path(p),
          make_schedule(VelocityProfile::constant(rotating_natural_velocity(p)), s_c,
                        cycles * kRotatingCycleLength)};
}

struct AccumulationRow {
  int cycles = 0;
  double epsilon = 0.0;
  double linear = 0.0;        ///< N eps_sc
  double deviation = 0.0;     ///< |eps - N eps_sc| / (N eps_sc)
};

struct AccumulationReport {
  double slowdown = 0.0;
  double single_cycle = 0.0;  ///< integrated eps_sc
  double oracle = 0.0;        ///< closed-form eps_sc
  std::vector<AccumulationRow> rows;

  double max_deviation() const {
    double w = 0.0;
    for (const AccumulationRow& r : rows) w = std::max(w, r.deviation);
    return w;
  }
};

/// eps(N) against N eps_sc at a fixed slowdown.
inline AccumulationReport periodic_accumulation(const RotatingTwoLevelParams& p, double s_c,
                                                const std::vector<int>& cycles,
                                                const StepControl& control = {}) {
  const System one = rotating_cycle(p, s_c);
  AccumulationReport out;
  out.slowdown = s_c;
  StepControl c = control;
  c.form = Formulation::lambda;
  const Operator u = propagator(one, 0.0, kRotatingCycleLength, c);
  const StateVector g = eigensystem(one.path.eval(0.0)).ground();
  auto error_of = [&](int n) {
    StateVector psi = g;
    for (int k = 0; k < n; ++k) psi = u * psi;
    return (psi - g * g.dot(psi)).norm();
  };
  out.single_cycle = error_of(1);
  out.oracle = rotating_frame_error(p.delta, one.schedule.velocity(0.0), kRotatingCycleLength);
  for (int n : cycles) {
    if (n < 1) throw InvalidArgument("periodic_accumulation: cycle counts must be positive");
    AccumulationRow row;
    row.cycles = n;
    row.epsilon = error_of(n);
    row.linear = n * out.oracle;
    row.deviation = std::abs(row.epsilon - row.linear) / row.linear;
    out.rows.push_back(row);
  }
  return out;
}

struct PeriodicScalingRow {
  int cycles = 0;
  double length = 0.0;
  double slowdown = 0.0;
  double epsilon = 0.0;
  double transit_time = 0.0;
  std::vector<double> qd;  ///< mean, rms, sqrt
  int evaluations = 0;
};

struct PeriodicScalingReport {
  double target = 0.0;
  std::vector<PeriodicScalingRow> rows;
  ScalingFit fit;
  bool superlinear = false;
};

namespace detail {

/// Records eps(s_c) evaluations and rejects any rise of eps with s_c among
/// the values below the guard threshold.
class MonotoneGuard {
 public:
  explicit MonotoneGuard(double threshold) : threshold_(threshold) {}

  void record(double s_c, double eps) {
    seen_[s_c] = eps;
    double prev_s = 0.0, prev = -1.0;
    for (const auto& [s, e] : seen_) {
      if (e >= threshold_) continue;
      if (prev >= 0.0 && e > prev * (1 + 1e-9)) {
        throw MonotonicityViolation("eps rises with slowdown: eps(" + sci(prev_s) + ") = " +
                                    sci(prev) + " < eps(" + sci(s) + ") = " + sci(e));
      }
      prev_s = s;
      prev = e;
    }
  }

 private:
  double threshold_;
  std::map<double, double> seen_;
};

}  // namespace detail

/// Slowdown s_c at which eps(s_c) = target within the relative tolerance:
/// bracket by doubling, then bisection in log s_c.
inline std::pair<double, double> match_slowdown(const std::function<double(double)>& eps,
                                                double target, const PeriodicOptions& opt,
                                                int* evaluations = nullptr) {
  detail::MonotoneGuard guard(opt.guard_threshold);
  int count = 0;
  auto eval = [&](double s) {
    const double e = eps(s);
    ++count;
    guard.record(s, e);
    return e;
  };
  auto close = [&](double e) { return std::abs(e - target) <= opt.match_tolerance * target; };
  double s = opt.initial_slowdown;
  double e = eval(s);
  double lo = s, hi = s;
  if (close(e)) {
    if (evaluations) *evaluations = count;
    return {s, e};
  }
  if (e > target) {
    for (int k = 0; e > target; ++k) {
      if (k >= opt.max_iterations) throw ConvergenceFailure("match_slowdown: bracket not found");
      lo = s;
      s *= 2.0;
      e = eval(s);
      if (close(e)) {
        if (evaluations) *evaluations = count;
        return {s, e};
      }
    }
    hi = s;
  } else {
    for (int k = 0; e < target; ++k) {
      if (k >= opt.max_iterations) throw ConvergenceFailure("match_slowdown: bracket not found");
      hi = s;
      s *= 0.5;
      e = eval(s);
      if (close(e)) {
        if (evaluations) *evaluations = count;
        return {s, e};
      }
    }
    lo = s;
  }
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double em = eval(mid);
    if (close(em)) {
      if (evaluations) *evaluations = count;
      return {mid, em};
    }
    if (em > target) lo = mid; else hi = mid;
  }
  throw ConvergenceFailure("match_slowdown: eps target " + sci(target) + " not reached in " +
                           std::to_string(opt.max_iterations) + " bisection steps");
}

inline PeriodicScalingReport periodic_scaling_experiment(const RotatingTwoLevelParams& p,
                                                         double target,
                                                         const std::vector<int>& cycles,
                                                         const PeriodicOptions& opt = {}) {
  if (!(target > 0.0 && target < 1.0)) throw InvalidArgument("eps target must lie in (0, 1)");
  PeriodicScalingReport out;
  out.target = target;
  for (int n : cycles) {
    if (n < 1) throw InvalidArgument("periodic_scaling_experiment: cycle counts must be positive");
    PeriodicScalingRow row;
    row.cycles = n;
    row.length = n * kRotatingCycleLength;
    const auto [s_c, eps] = match_slowdown(
        [&](double s) { return periodic_error(rotating_cycle(p, s), n, opt.control); }, target,
        opt, &row.evaluations);
    row.slowdown = s_c;
    row.epsilon = eps;
    const System full = rotating_cycle(p, s_c, n);
    row.transit_time = full.schedule.transit_time();
    for (QdVariant v : kFixedQdVariants) row.qd.push_back(qd(full.path, full.schedule, v).value);
    out.rows.push_back(row);
  }
  if (out.rows.size() >= 4) {
    std::vector<double> ls, ts;
    for (const PeriodicScalingRow& r : out.rows) {
      ls.push_back(r.length);
      ts.push_back(r.transit_time);
    }
    out.fit = fit_power_law(ls, ts, opt.window);
    out.superlinear = out.fit.exponent > 1.0 + opt.superlinear_margin &&
                      out.fit.residual_rms < opt.max_residual;
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3-level counterexample

/// Natural traversal of the 3-level model: s = t/tau, so lambda = s + s^2/2.
inline System three_level_natural_system(const ThreeLevelParams& p, double length,
                                         double s_c = 1.0) {
  const auto rate = three_level_natural_velocity(p);
  const double tau = p.tau;
  return {three_level_lambda_path(p),
          make_schedule(VelocityProfile::custom(
                            rate, [tau](double l) { return 1.0 / (tau * std::sqrt(1 + 2 * l)); }),
                        s_c, length, 1024)};
}

/// t(L) = sqrt(2 L tau^2) (sqrt(1 + 1/(2L)) - sqrt(1/(2L))).
inline double counterexample_time(double length, double tau) {
  const double x = 1.0 / (2.0 * length);
  return std::sqrt(2.0 * length * tau * tau) * (std::sqrt(1.0 + x) - std::sqrt(x));
}

struct CounterexampleRow {
  double target = 0.0;       ///< requested L
  double length = 0.0;       ///< lambda of the eps peak used for the row
  double time = 0.0;         ///< t at that peak, from the schedule
  double analytic = 0.0;     ///< closed-form t at the same lambda
  double epsilon = 0.0;      ///< eps at the peak
  double running_max = 0.0;  ///< max eps on [0, length]
};

struct CounterexampleOptions {
  StepControl control = [] {
    StepControl c;
    c.form = Formulation::lambda;
    c.max_phase_step = 0.025;
    return c;
  }();
  double sample_step = 0.05;
  double plateau_tolerance = 0.005;  ///< relative to the running maximum
  FitWindow window = FitWindow::largest_decade;
};

struct CounterexampleReport {
  ThreeLevelParams params;
  std::vector<CounterexampleRow> rows;
  ScalingFit fit;
  double eps_max_theory = 0.0;
  double max_overlay_deviation = 0.0;  ///< max |t - analytic| / analytic
  double unitarity_defect = 0.0;
  long steps = 0;
  std::vector<double> lambda;          ///< sampled trajectory
  std::vector<double> epsilon;
};

/// Integrates the natural-schedule 3-level system once to beyond max(L) and,
/// for each requested L, takes the eps maximum nearest L that lies on the
/// plateau (within plateau_tolerance of the running max). The peak position
/// is refined by a parabola through the neighbouring samples.
inline CounterexampleReport counterexample_scaling_experiment(
    const ThreeLevelParams& p, std::vector<double> lengths, const CounterexampleOptions& opt = {}) {
  p.validate();
  if (lengths.empty()) throw InvalidArgument("counterexample: no lengths");
  std::sort(lengths.begin(), lengths.end());
  if (lengths.front() <= 0.0) throw InvalidArgument("counterexample: lengths must be positive");
  CounterexampleReport out;
  out.params = p;
  out.eps_max_theory = 1.0 / std::sqrt(1.0 + p.delta * p.delta * p.tau * p.tau);
  const double w = 1.0 / out.eps_max_theory;
  const double end = lengths.back() + 2.0 * kPi / w;
  const System sys = three_level_natural_system(p, end);
  const auto n = static_cast<std::size_t>(std::ceil(end / opt.sample_step));
  const TrajectoryResult r =
      integrate(sys, eigensystem(sys.path.eval(0.0)).ground(), opt.control, uniform_grid(0.0, end, n));
  out.unitarity_defect = r.unitarity_defect;
  out.steps = r.steps;
  out.lambda = r.lambda_samples;
  out.epsilon = r.instantaneous_error;

  const std::vector<double>& x = r.lambda_samples;
  const std::vector<double>& e = r.instantaneous_error;
  struct Peak {
    double lambda, eps, running;
  };
  std::vector<Peak> peaks;
  double running = 0.0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    running = std::max(running, e[i]);
    if (!(e[i] >= e[i - 1] && e[i] > e[i + 1])) continue;
    const double h = x[i + 1] - x[i];
    const double den = e[i - 1] - 2 * e[i] + e[i + 1];
    const double shift = den < 0.0 ? 0.5 * h * (e[i - 1] - e[i + 1]) / den : 0.0;
    const double peak = e[i] - 0.25 * (e[i - 1] - e[i + 1]) * shift / h;
    running = std::max(running, peak);
    peaks.push_back({x[i] + shift, peak, running});
  }
  for (double target : lengths) {
    const Peak* best = nullptr;
    for (const Peak& pk : peaks) {
      if (pk.eps < (1.0 - opt.plateau_tolerance) * pk.running) continue;
      if (!best || std::abs(pk.lambda - target) < std::abs(best->lambda - target)) best = &pk;
    }
    if (!best) {
      throw PlateauNotDetected("counterexample: no eps plateau peak near L = " + sci(target));
    }
    CounterexampleRow row;
    row.target = target;
    row.length = best->lambda;
    row.time = sys.schedule.t_of_lambda(best->lambda);
    row.analytic = counterexample_time(best->lambda, p.tau);
    row.epsilon = best->eps;
    row.running_max = best->running;
    out.max_overlay_deviation =
        std::max(out.max_overlay_deviation, std::abs(row.time - row.analytic) / row.analytic);
    out.rows.push_back(row);
  }
  if (out.rows.size() >= 4) {
    std::vector<double> ls, ts;
    for (const CounterexampleRow& row : out.rows) {
      ls.push_back(row.length);
      ts.push_back(row.time);
    }
    out.fit = fit_power_law(ls, ts, opt.window);
  }
  return out;
}

/// Running maximum of eps over [0, length] of the natural 3-level traversal.
inline double three_level_running_max(const ThreeLevelParams& p, double length,
                                      const StepControl& control, double sample_step = 0.05) {
  const System sys = three_level_natural_system(p, length);
  const auto n = static_cast<std::size_t>(std::ceil(length / sample_step));
  const TrajectoryResult r =
      integrate(sys, eigensystem(sys.path.eval(0.0)).ground(), control, uniform_grid(0.0, length, n));
  return *std::max_element(r.instantaneous_error.begin(), r.instantaneous_error.end());
}

}  // namespace adiabatic
