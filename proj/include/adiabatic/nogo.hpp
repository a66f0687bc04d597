#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "adiabatic/errors.hpp"
#include "adiabatic/evolve.hpp"
#include "adiabatic/fit.hpp"
#include "adiabatic/interpolation.hpp"
#include "adiabatic/model.hpp"
#include "adiabatic/pathgeom.hpp"
#include "adiabatic/spectral.hpp"

namespace adiabatic {

/// The ratio v_B(lambda)/v_A(lambda) and its derivative.
struct RateFactor {
  std::string kind = "power";
  std::function<double(double)> value;
  std::function<double(double)> slope;

  double operator()(double lambda) const { return value(lambda); }
};

/// 1 + lambda^a. Exponents in (0, 1) have an infinite slope at lambda = 0.
inline RateFactor power_factor(double a) {
  if (!(a == 0.0 || a >= 1.0)) throw InvalidArgument("power factor needs a = 0 or a >= 1");
  return {"power", [a](double l) { return 1.0 + std::pow(l, a); },
          [a](double l) { return a == 0.0 ? 0.0 : a * std::pow(l, a - 1.0); }};
}

inline RateFactor constant_factor(double c) {
  if (!(c > 0.0)) throw InvalidArgument("rate factor must be positive");
  return {"constant", [c](double) { return c; }, [](double) { return 0.0; }};
}

/// Tabulated factor: spline through >= 4 knots, linear otherwise.
inline RateFactor table_factor(std::vector<double> lambdas, std::vector<double> values) {
  const VelocityProfile p = VelocityProfile::table(std::move(lambdas), std::move(values));
  return {"table", p.rate, p.slope};
}

struct RescaledSystem {
  System base;
  RateFactor factor;
  System derived;

  double transit_ratio() const {
    return derived.schedule.transit_time() / base.schedule.transit_time();
  }
};

/// H_B = factor * H_A traversed at v_B = factor * v_A. Both share the same
/// H/v, so they perform one computation at different physical rates.
inline RescaledSystem rescale(const System& base, RateFactor factor, std::size_t checks = 512) {
  const double length = base.schedule.length();
  const std::vector<double> grid = uniform_grid(0.0, length, checks);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (double l : {grid[i], i + 1 < grid.size() ? 0.5 * (grid[i] + grid[i + 1]) : grid[i]}) {
      const double f = factor(l);
      if (!(f > 0.0) || !std::isfinite(f)) {
        throw InvalidArgument("rescale: factor must be positive; factor(" + sci(l) +
                              ") = " + sci(f));
      }
    }
  }
  const VelocityProfile& ref = base.schedule.reference();
  const VelocityProfile vb = VelocityProfile::custom(
      [ref, factor](double l) { return ref(l) * factor(l); },
      [ref, factor](double l) { return ref.slope(l) * factor(l) + ref(l) * factor.slope(l); });
  System derived{scaled_path(base.path, factor.value, factor.slope),
                 Schedule(vb, base.schedule.slowdown(), length,
                          base.schedule.nodes().size() - 1)};
  return {base, std::move(factor), std::move(derived)};
}

struct EquivalenceReport {
  std::vector<double> lambda;
  std::vector<double> deviation;  ///< ||psi_A(lambda) - psi_B(lambda)||
  double max_deviation = 0.0;
  double epsilon_a = 0.0;
  double epsilon_b = 0.0;
  double transit_a = 0.0;
  double transit_b = 0.0;
  double unitarity_defect = 0.0;
};

/// Integrates A (by default in time) and B in lambda from the same initial
/// state and compares the states at equal lambda.
inline EquivalenceReport verify_equivalence(const System& a, const System& b,
                                            std::vector<double> grid, const StateVector& psi0,
                                            StepControl control = {},
                                            Formulation form_a = Formulation::time) {
  if (std::abs(a.schedule.length() - b.schedule.length()) >
      1e-12 * std::max(1.0, a.schedule.length())) {
    throw DomainMismatch("verify_equivalence: systems cover different lambda ranges");
  }
  control.form = form_a;
  const TrajectoryResult ra = integrate(a, psi0, control, grid);
  control.form = Formulation::lambda;
  const TrajectoryResult rb = integrate(b, psi0, control, grid);
  EquivalenceReport out;
  out.lambda = ra.lambda_samples;
  for (std::size_t i = 0; i < ra.states.size(); ++i) {
    out.deviation.push_back((ra.states[i] - rb.states[i]).norm());
    out.max_deviation = std::max(out.max_deviation, out.deviation.back());
  }
  out.epsilon_a = ra.epsilon;
  out.epsilon_b = rb.epsilon;
  out.transit_a = a.schedule.transit_time();
  out.transit_b = b.schedule.transit_time();
  out.unitarity_defect = std::max(ra.unitarity_defect, rb.unitarity_defect);
  return out;
}

/// Direct sum of a rescaled system with a static two-level block placed at
/// E_g(0) + pin and E_g(0) + 1.1 pin. The physical ground state stays global
/// ground and the global gap is pin wherever the physical gap exceeds it.
struct PinnedSystem {
  System system;
  Index physical_dim = 0;
  double pin = 0.0;
  double offset = 0.0;      ///< spacing inside the static block
  GapProfile profile;       ///< global gap on the validation grid
};

/// Nondecreasing check of a factor on [0, length]; returns the first
/// offending lambda or a negative value.
inline double first_decrease(const RateFactor& factor, double length, std::size_t samples = 512) {
  const std::vector<double> grid = uniform_grid(0.0, length, samples);
  double prev = factor(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double f = factor(grid[i]);
    if (f < prev - 1e-14 * std::abs(prev)) return grid[i];
    prev = f;
  }
  return -1.0;
}

inline PinnedSystem pin_gap(const RescaledSystem& rs, double pin, std::size_t grid_points = 512) {
  if (!(pin > 0.0)) throw InvalidArgument("pin_gap: pin must be positive");
  const double length = rs.derived.schedule.length();
  const double bad = first_decrease(rs.factor, length, grid_points);
  if (bad >= 0.0) {
    throw InvalidArgument(
        "pin_gap: monotonicity precondition violated; the rate factor decreases near lambda = " +
        sci(bad));
  }
  const HamiltonianPath& b1 = rs.derived.path;
  const EigenSystem start = eigensystem(b1.eval(0.0));
  if (!(start.gap() > pin)) {
    throw InvalidArgument("pin_gap: pin " + sci(pin) + " is not below the initial gap " +
                          sci(start.gap()));
  }
  const double eg = start.ground_energy();
  const double offset = pin / 10.0;
  Operator block = Operator::Zero(2, 2);
  block(0, 0) = eg + pin;
  block(1, 1) = eg + pin + offset;
  const std::vector<double> grid = uniform_grid(0.0, length, grid_points);
  for (double l : grid) {
    const EigenSystem es = eigensystem(b1.eval(l));
    const double scale = std::max(1.0, es.energies.cwiseAbs().maxCoeff());
    if (std::abs(es.ground_energy() - eg) > 1e-10 * scale) {
      throw InvalidArgument("pin_gap: physical ground energy moves (at lambda = " + sci(l) +
                            "); the static block cannot hold the gap");
    }
    if (es.gap() < pin) {
      throw InvalidArgument("pin_gap: physical gap " + sci(es.gap()) + " drops below the pin at "
                            "lambda = " + sci(l));
    }
  }
  System sys{direct_sum(b1, constant_path(block, b1.domain())), rs.derived.schedule};
  GapProfile profile = spectral_gap(sys.path, grid);
  return {std::move(sys), b1.dim(), pin, offset, std::move(profile)};
}

/// Norm of the part of psi outside the first `physical_dim` components.
inline double block_leakage(const StateVector& psi, Index physical_dim) {
  return psi.tail(psi.size() - physical_dim).norm();
}

struct EngineeringRow {
  double length = 0.0;
  double transit_a = 0.0;
  double transit_b = 0.0;
  double ratio = 0.0;        ///< T_B / T_A
  double local_ratio = 0.0;  ///< v_A(L) / v_B(L) = 1 / factor(L)
  double epsilon_a = 0.0;
  double epsilon_b = 0.0;
  double min_gap = 0.0;      ///< of H_B on [0, L]
};

struct EngineeringReport {
  double exponent_a = 0.0;
  std::vector<EngineeringRow> rows;
  ScalingFit ratio_fit;
  ScalingFit local_ratio_fit;
};

struct EngineeringOptions {
  bool integrate = true;
  StepControl control{};
  std::size_t gap_samples = 512;
  FitWindow window = FitWindow::largest_decade;
};

/// For each L, rescales `make_base(L)` by 1 + lambda^a and records transit
/// times and errors of both systems.
inline EngineeringReport scaling_engineering_demo(const std::function<System(double)>& make_base,
                                                  double a, const std::vector<double>& lengths,
                                                  const EngineeringOptions& opt = {}) {
  if (!(a > 1.0)) throw InvalidArgument("scaling_engineering_demo: exponent a must exceed 1");
  EngineeringReport out;
  out.exponent_a = a;
  for (double length : lengths) {
    const System base = make_base(length);
    const RescaledSystem rs = rescale(base, power_factor(a));
    EngineeringRow row;
    row.length = length;
    row.transit_a = base.schedule.transit_time();
    row.transit_b = rs.derived.schedule.transit_time();
    row.ratio = row.transit_b / row.transit_a;
    row.local_ratio = 1.0 / rs.factor(length);
    row.min_gap = spectral_gap(rs.derived.path, uniform_grid(0.0, length, opt.gap_samples)).min_gap;
    if (opt.integrate) {
      const StateVector g0 = eigensystem(base.path.eval(0.0)).ground();
      const EquivalenceReport eq = verify_equivalence(base, rs.derived, {}, g0, opt.control);
      row.epsilon_a = eq.epsilon_a;
      row.epsilon_b = eq.epsilon_b;
    }
    out.rows.push_back(row);
  }
  if (out.rows.size() >= 4) {
    std::vector<double> ls, r, lr;
    for (const EngineeringRow& row : out.rows) {
      ls.push_back(row.length);
      r.push_back(row.ratio);
      lr.push_back(row.local_ratio);
    }
    out.ratio_fit = fit_power_law(ls, r, opt.window);
    out.local_ratio_fit = fit_power_law(ls, lr, opt.window);
  }
  return out;
}

}  // namespace adiabatic
