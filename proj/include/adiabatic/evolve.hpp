#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "adiabatic/errors.hpp"
#include "adiabatic/interpolation.hpp"
#include "adiabatic/linalg.hpp"
#include "adiabatic/model.hpp"
#include "adiabatic/pathgeom.hpp"
#include "adiabatic/quadrature.hpp"
#include "adiabatic/spectral.hpp"

namespace adiabatic {

/// A path in its traversal parameter lambda together with the law lambda(t).
struct System {
  HamiltonianPath path;
  Schedule schedule;
};

/// Time form steps exp(-i H(lambda(t_mid)) h_t); lambda form steps
/// exp(-i H(lambda_mid) h / v(lambda_mid)) in the path parameter.
enum class Formulation { time, lambda };

struct StepControl {
  double max_phase_step = 0.1;   ///< cap on ||H|| h_t per step
  double max_lambda_step = 0.05; ///< cap on the parameter advance per step
  double tolerance = 1e-9;       ///< max state change between refinements
  int max_halvings = 12;
  Formulation form = Formulation::time;
};

struct TrajectoryResult {
  std::vector<double> lambda_samples;
  std::vector<double> time_samples;
  std::vector<StateVector> states;
  std::vector<double> instantaneous_error;  ///< against the ground state at each sample
  std::vector<double> gaps;
  Operator propagator;                      ///< U(last sample, first sample)
  double epsilon = 0.0;
  double unitarity_defect = 0.0;
  double max_norm_defect = 0.0;
  double refinement_change = 0.0;
  long steps = 0;
  int halvings = 0;
};

/// || (1 - |g><g|) psi || with g the ground state of h.
inline double diabatic_error(const StateVector& psi, const Operator& h) {
  const StateVector g = eigensystem(h).ground();
  return (psi - g * g.dot(psi)).norm();
}

inline double diabatic_error(const TrajectoryResult& r, const HamiltonianPath& path) {
  return diabatic_error(r.states.back(), path.eval(r.lambda_samples.back()));
}

namespace detail {

struct Sweep {
  std::vector<Operator> propagators;  ///< cumulative U at each sample
  long steps = 0;
};

inline std::vector<double> chunk_points(double a, double b, double max_step) {
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / max_step)));
  return uniform_grid(a, b, n);
}

inline Sweep sweep(const System& sys, const std::vector<double>& samples, int level,
                   const StepControl& c) {
  const HamiltonianPath& path = sys.path;
  const Schedule& sched = sys.schedule;
  const Index d = path.dim();
  const double refine = std::ldexp(1.0, level);
  Sweep out;
  out.propagators.reserve(samples.size());
  Operator u = Operator::Identity(d, d);
  out.propagators.push_back(u);
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const std::vector<double> chunks = chunk_points(samples[i], samples[i + 1], c.max_lambda_step);
    double norm_left = path.eval(chunks[0]).norm();
    for (std::size_t j = 0; j + 1 < chunks.size(); ++j) {
      const double la = chunks[j];
      const double lb = chunks[j + 1];
      const double norm_right = path.eval(lb).norm();
      const double bound = 1.1 * std::max(norm_left, norm_right);
      norm_left = norm_right;
      if (c.form == Formulation::time) {
        const double ta = sched.t_of_lambda(la);
        const double tb = sched.t_of_lambda(lb);
        const double span = tb - ta;
        const long n = static_cast<long>(
            refine * std::max(1.0, std::ceil(span * bound / c.max_phase_step)));
        const double h = span / static_cast<double>(n);
        double hint = la + 0.5 * h * sched.velocity(la);
        for (long k = 0; k < n; ++k) {
          const double tm = ta + (static_cast<double>(k) + 0.5) * h;
          const double lm = sched.lambda_of_t(tm, hint);
          hint = lm + h * sched.velocity(lm);
          u = unitary_exp(path.eval(lm), h) * u;
        }
        out.steps += n;
      } else {
        const double vmin = std::min(sched.velocity(la), sched.velocity(lb));
        const double span = lb - la;
        const long n = static_cast<long>(
            refine * std::max(1.0, std::ceil(span * bound / (vmin * c.max_phase_step))));
        const double h = span / static_cast<double>(n);
        for (long k = 0; k < n; ++k) {
          const double lm = la + (static_cast<double>(k) + 0.5) * h;
          u = unitary_exp(path.eval(lm), h / sched.velocity(lm)) * u;
        }
        out.steps += n;
      }
    }
    out.propagators.push_back(u);
  }
  return out;
}

inline std::vector<double> normalized_samples(const System& sys, std::vector<double> samples) {
  if (samples.empty()) samples = {0.0, sys.schedule.length()};
  std::sort(samples.begin(), samples.end());
  samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
  if (samples.size() < 2) throw InvalidArgument("integrate: need a nonempty lambda range");
  if (samples.front() < -1e-12 || samples.back() > sys.schedule.length() * (1 + 1e-12)) {
    throw InvalidArgument("integrate: samples outside the schedule range");
  }
  samples.front() = std::max(samples.front(), 0.0);
  samples.back() = std::min(samples.back(), sys.schedule.length());
  return samples;
}

inline Complex phase_of(Complex z) { return std::abs(z) > 0.0 ? z / std::abs(z) : Complex(1.0); }

/// Halves the steps until successive sweeps agree up to a global phase;
/// returns the finest sweep.
inline Sweep converge(const System& sys, const std::vector<double>& samples,
                      const std::optional<StateVector>& psi0, const StepControl& c,
                      int& halvings, double& change) {
  auto distance = [&](const Sweep& a, const Sweep& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.propagators.size(); ++i) {
      if (psi0) {
        const StateVector x = a.propagators[i] * *psi0;
        const StateVector y = b.propagators[i] * *psi0;
        worst = std::max(worst, (x - y * phase_of(y.dot(x))).norm());
      } else {
        const Complex tr = (b.propagators[i].adjoint() * a.propagators[i]).trace();
        worst = std::max(worst, (a.propagators[i] - b.propagators[i] * phase_of(tr))
                                    .colwise().norm().maxCoeff());
      }
    }
    return worst;
  };
  Sweep prev = sweep(sys, samples, 0, c);
  for (int level = 1; level <= c.max_halvings; ++level) {
    Sweep next = sweep(sys, samples, level, c);
    change = distance(prev, next);
    next.steps += prev.steps;
    if (change < c.tolerance) {
      halvings = level;
      return next;
    }
    prev = std::move(next);
  }
  throw ConvergenceFailure("step refinement did not reach " + sci(c.tolerance) +
                           " after " + std::to_string(c.max_halvings) +
                           " halvings (last change " + sci(change) + ")");
}

}  // namespace detail

/// Integrates the Schroedinger equation from the first to the last of
/// `lambda_samples` (default: the whole schedule) and records the state at
/// every sample.
inline TrajectoryResult integrate(const System& sys, const StateVector& psi0,
                                  const StepControl& control = {},
                                  std::vector<double> lambda_samples = {}) {
  if (psi0.size() != sys.path.dim()) throw InvalidArgument("integrate: psi0 has wrong dimension");
  if (std::abs(psi0.norm() - 1.0) > 1e-10) throw InvalidArgument("integrate: psi0 not normalized");
  TrajectoryResult r;
  r.lambda_samples = detail::normalized_samples(sys, std::move(lambda_samples));
  const detail::Sweep s =
      detail::converge(sys, r.lambda_samples, psi0, control, r.halvings, r.refinement_change);
  r.steps = s.steps;
  r.propagator = s.propagators.back();
  r.unitarity_defect = unitarity_defect(r.propagator);
  for (std::size_t i = 0; i < r.lambda_samples.size(); ++i) {
    const double l = r.lambda_samples[i];
    const StateVector psi = s.propagators[i] * psi0;
    const EigenSystem es = eigensystem(sys.path.eval(l));
    const StateVector g = es.ground();
    r.time_samples.push_back(sys.schedule.t_of_lambda(l));
    r.instantaneous_error.push_back((psi - g * g.dot(psi)).norm());
    r.gaps.push_back(es.gap());
    r.max_norm_defect = std::max(r.max_norm_defect, std::abs(psi.norm() - 1.0));
    r.states.push_back(psi);
  }
  r.epsilon = r.instantaneous_error.back();
  return r;
}

/// Converged propagator U(lambda_b, lambda_a).
inline Operator propagator(const System& sys, double lambda_a, double lambda_b,
                           const StepControl& control = {}) {
  if (lambda_b == lambda_a) return Operator::Identity(sys.path.dim(), sys.path.dim());
  int halvings = 0;
  double change = 0.0;
  const auto samples = detail::normalized_samples(sys, {lambda_a, lambda_b});
  return detail::converge(sys, samples, std::nullopt, control, halvings, change)
      .propagators.back();
}

struct FirstOrderError {
  double epsilon = 0.0;
  std::vector<Complex> amplitudes;  ///< per excited level
};

/// First-order estimate of the final error: for each excited level k,
///   c_k = int dlambda exp(i int (E_k - E_g)/v) <k|X'X^dagger|g>.
/// Couplings are interpolated between frame nodes (cubic Lagrange), the phase
/// by a Hermite cubic matching Gauss-Legendre increments, and each interval is
/// integrated with composite Simpson at <= 0.2 rad phase per panel.
inline FirstOrderError first_order_error(const GaugedFrame& frame, const Schedule& schedule) {
  const std::size_t n = frame.size();
  const Index d = frame.dim();
  if (n < 2) throw InvalidArgument("first_order_error: frame needs >= 2 points");
  if (frame.grid.front() < -1e-12 || frame.grid.back() > schedule.length() * (1 + 1e-12)) {
    throw InvalidArgument("first_order_error: frame extends beyond the schedule");
  }
  // coupling(k, node) = <k|X'X^dagger|g> = -<k|g'> in the transported frame
  std::vector<std::vector<Complex>> coupling(static_cast<std::size_t>(d),
                                             std::vector<Complex>(n));
  std::vector<std::vector<double>> rate(static_cast<std::size_t>(d), std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const EigenSystem& es = frame.states[i];
    const double v = schedule.velocity(frame.grid[i]);
    for (Index k = 1; k < d; ++k) {
      coupling[static_cast<std::size_t>(k)][i] = -es.vectors.col(k).dot(frame.ground_deriv[i]);
      rate[static_cast<std::size_t>(k)][i] = (es.energies(k) - es.energies(0)) / v;
    }
  }
  FirstOrderError out;
  out.amplitudes.assign(static_cast<std::size_t>(d), Complex(0.0));
  std::vector<double> phase(static_cast<std::size_t>(d), 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double a = frame.grid[i];
    const double b = frame.grid[i + 1];
    const auto increments = gauss_legendre5(
        [&](double l) {
          const EigenSystem es = eigensystem(frame.path.eval(l));
          Eigen::VectorXd r = (es.energies.array() - es.energies(0)) / schedule.velocity(l);
          return r;
        },
        a, b);
    const std::size_t first = n < 4 ? 0 : std::min(i > 0 ? i - 1 : 0, n - 4);
    const std::size_t width = std::min<std::size_t>(4, n);
    for (Index k = 1; k < d; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double p0 = phase[kk];
      const double p1 = p0 + increments(k);
      auto phi = [&](double l) {
        return Hermite::value(a, b, p0, p1, rate[kk][i], rate[kk][i + 1], l);
      };
      auto amp = [&](double l) {
        if (width < 4) {
          const double t = (l - a) / (b - a);
          return (1 - t) * coupling[kk][i] + t * coupling[kk][i + 1];
        }
        return lagrange4(&frame.grid[first], &coupling[kk][first], l);
      };
      const int panels =
          2 * std::max(1, static_cast<int>(std::ceil(std::abs(increments(k)) / 0.4)));
      const double h = (b - a) / panels;
      Complex sum(0.0);
      for (int j = 0; j <= panels; ++j) {
        const double l = a + h * j;
        const double w = (j == 0 || j == panels) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        sum += w * std::exp(kI * phi(l)) * amp(l);
      }
      out.amplitudes[kk] += sum * (h / 3.0);
      phase[kk] = p1;
    }
  }
  double total = 0.0;
  for (const Complex& c : out.amplitudes) total += std::norm(c);
  out.epsilon = std::sqrt(total);
  return out;
}

/// Hermitian A with U_interaction = exp(iA) for one segment [lambda_a, lambda_b].
struct SegmentGenerator {
  double lambda_a = 0.0;
  double lambda_b = 0.0;
  Operator generator;
  double max_phase = 0.0;
};

namespace detail {

struct FramePoint {
  double lambda;
  EigenSystem frame;
  Eigen::VectorXd dynamical_phase;  ///< int_0^t E_k dt'
};

inline Eigen::VectorXd phase_increment(const System& sys, double a, double b) {
  const Index d = sys.path.dim();
  Eigen::VectorXd out(d);
  for (Index k = 0; k < d; ++k) {
    out(k) = adaptive_simpson(
        [&](double l) {
          return eigensystem(sys.path.eval(l)).energies(k) / sys.schedule.velocity(l);
        },
        a, b);
  }
  return out;
}

inline FramePoint advance_frame(const System& sys, const FramePoint& from, double to,
                                double frame_step) {
  const std::vector<double> grid = chunk_points(from.lambda, to, frame_step);
  const GaugedFrame f = transport_frame(sys.path, grid, from.frame);
  return {to, f.states.back(), from.dynamical_phase + phase_increment(sys, from.lambda, to)};
}

inline void segment_recurse(const System& sys, const FramePoint& a, const FramePoint& b,
                            const StepControl& control, double frame_step, int depth,
                            std::vector<SegmentGenerator>& out) {
  const Index d = sys.path.dim();
  if (b.lambda == a.lambda) {
    out.push_back({a.lambda, b.lambda, Operator::Zero(d, d), 0.0});
    return;
  }
  const Operator u = propagator(sys, a.lambda, b.lambda, control);
  const Eigen::VectorXcd in = (kI * b.dynamical_phase.cast<Complex>()).array().exp();
  const Eigen::VectorXcd outp = (-kI * a.dynamical_phase.cast<Complex>()).array().exp();
  const Operator m =
      in.asDiagonal() * (b.frame.vectors.adjoint() * u * a.frame.vectors) * outp.asDiagonal();
  const PrincipalLog log = principal_log(m);
  if (log.max_phase <= 0.5 * kPi) {
    out.push_back({a.lambda, b.lambda, log.generator, log.max_phase});
    return;
  }
  if (depth >= 30) {
    throw PrincipalLogFailure("segment unitary stays far from identity after splitting [" +
                              std::to_string(a.lambda) + ", " + std::to_string(b.lambda) + "]");
  }
  const FramePoint mid = advance_frame(sys, a, 0.5 * (a.lambda + b.lambda), frame_step);
  segment_recurse(sys, a, mid, control, frame_step, depth + 1, out);
  segment_recurse(sys, mid, b, control, frame_step, depth + 1, out);
}

}  // namespace detail

/// Per-segment generators A_{j+1,j} in the interaction picture of the
/// transported eigenframe with dynamical phases removed, so the product of
/// segment unitaries is the whole-run interaction-picture evolution.
/// Segments whose eigenphases exceed pi/2 are split in half.
inline std::vector<SegmentGenerator> segment_generators(const System& sys,
                                                        std::vector<double> breakpoints,
                                                        const StepControl& control = {},
                                                        double frame_step = 0.01) {
  if (breakpoints.size() < 2) throw InvalidArgument("segment_generators: need >= 2 breakpoints");
  if (!std::is_sorted(breakpoints.begin(), breakpoints.end())) {
    throw InvalidArgument("segment_generators: breakpoints must be nondecreasing");
  }
  std::vector<SegmentGenerator> out;
  detail::FramePoint current{breakpoints[0], eigensystem(sys.path.eval(breakpoints[0])),
                             detail::phase_increment(sys, 0.0, breakpoints[0])};
  for (std::size_t j = 0; j + 1 < breakpoints.size(); ++j) {
    const detail::FramePoint next =
        breakpoints[j + 1] == current.lambda
            ? current
            : detail::advance_frame(sys, current, breakpoints[j + 1], frame_step);
    detail::segment_recurse(sys, current, next, control, frame_step, 0, out);
    current = next;
  }
  return out;
}

/// || (1 - P_g) sum_j A_j |g> ||, the first-order composition of segment errors.
inline double composed_error(const std::vector<SegmentGenerator>& segments) {
  if (segments.empty()) return 0.0;
  Operator total = Operator::Zero(segments[0].generator.rows(), segments[0].generator.cols());
  for (const auto& s : segments) total += s.generator;
  return total.col(0).tail(total.rows() - 1).norm();
}

/// Single-segment off-ground-state weight || (1 - P_g) A |g> ||.
inline double generator_error(const SegmentGenerator& s) {
  return s.generator.col(0).tail(s.generator.rows() - 1).norm();
}

}  // namespace adiabatic
