#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "adiabatic/errors.hpp"
#include "adiabatic/interpolation.hpp"
#include "adiabatic/linalg.hpp"

namespace adiabatic {

enum class PathKind { three_level, rotating_two_level, direct_sum, sampled, rescaled, custom };

inline std::string to_string(PathKind kind) {
  switch (kind) {
    case PathKind::three_level: return "three_level";
    case PathKind::rotating_two_level: return "rotating_two_level";
    case PathKind::direct_sum: return "direct_sum";
    case PathKind::sampled: return "sampled";
    case PathKind::rescaled: return "rescaled";
    case PathKind::custom: return "custom";
  }
  return "unknown";
}

/// Parameter interval [lo, hi]; hi may be +infinity.
struct Domain {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  bool bounded() const { return std::isfinite(hi); }
  bool contains(double s, double slack = 1e-9) const {
    const double pad = slack * std::max(1.0, std::abs(s));
    return s >= lo - pad && s <= hi + pad;
  }
  friend bool operator==(const Domain&, const Domain&) = default;
};

/// A smooth one-parameter family of Hermitian operators H(s) together with
/// its derivative dH/ds. Immutable; copies share the underlying callables.
class HamiltonianPath {
 public:
  using Function = std::function<Operator(double)>;

  HamiltonianPath(PathKind kind, Index dim, Domain domain, Function eval, Function deriv)
      : impl_(std::make_shared<const Impl>(
            Impl{kind, dim, domain, std::move(eval), std::move(deriv)})) {
    if (dim < 2) throw InvalidArgument("Hamiltonian dimension must be >= 2");
    if (!(domain.hi > domain.lo)) throw InvalidArgument("empty path domain");
  }

  Operator eval(double s) const {
    check(s);
    return impl_->eval(s);
  }
  Operator deriv(double s) const {
    check(s);
    return impl_->deriv(s);
  }

  PathKind kind() const { return impl_->kind; }
  Index dim() const { return impl_->dim; }
  const Domain& domain() const { return impl_->domain; }

 private:
  struct Impl {
    PathKind kind;
    Index dim;
    Domain domain;
    Function eval;
    Function deriv;
  };

  void check(double s) const {
    if (!impl_->domain.contains(s)) {
      throw InvalidArgument("parameter " + std::to_string(s) + " outside path domain [" +
                            std::to_string(impl_->domain.lo) + ", " +
                            std::to_string(impl_->domain.hi) + "]");
    }
  }

  std::shared_ptr<const Impl> impl_;
};

struct ThreeLevelParams {
  double delta = 1.0;  ///< gap, energy units
  double tau = 1.0;    ///< time scale

  void validate() const {
    if (!(delta > 0.0) || !(tau > 0.0)) {
      throw InvalidArgument("three-level model needs delta > 0 and tau > 0");
    }
  }
};

struct RotatingTwoLevelParams {
  double delta = 1.0;  ///< gap
  double tau = 1.0;    ///< period

  void validate() const {
    if (!(delta > 0.0) || !(tau > 0.0)) {
      throw InvalidArgument("rotating two-level model needs delta > 0 and tau > 0");
    }
  }
};

namespace detail {

inline Operator rotation_xz(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Operator r = Operator::Zero(3, 3);
  r(0, 0) = c;
  r(0, 2) = s;
  r(1, 1) = 1.0;
  r(2, 0) = -s;
  r(2, 2) = c;
  return r;
}

inline Operator rotation_xz_deriv(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Operator r = Operator::Zero(3, 3);
  r(0, 0) = -s;
  r(0, 2) = c;
  r(2, 0) = -c;
  r(2, 2) = -s;
  return r;
}

/// R(theta) diag(0, delta, e2) R(theta)^T = delta |1><1| + e2 |r><r| with
/// r = (sin theta, 0, cos theta).
inline Operator three_level_value(double delta, double s) {
  const double theta = s + 0.5 * s * s;
  const double e2 = 2.0 * delta * (1.0 + s);
  const double sn = std::sin(theta);
  const double cs = std::cos(theta);
  Operator h = Operator::Zero(3, 3);
  h(0, 0) = e2 * sn * sn;
  h(0, 2) = h(2, 0) = e2 * sn * cs;
  h(1, 1) = delta;
  h(2, 2) = e2 * cs * cs;
  return h;
}

/// Three-level Hamiltonian R(theta) diag(0, delta, 2 delta (1+s)) R(theta)^T and
/// its s-derivative, with theta = s + s^2/2 and s = t/tau.
inline std::pair<Operator, Operator> three_level_at(double delta, double s) {
  const double theta = s + 0.5 * s * s;
  const double dtheta = 1.0 + s;
  Operator d = Operator::Zero(3, 3);
  d(1, 1) = delta;
  d(2, 2) = 2.0 * delta * (1.0 + s);
  Operator dd = Operator::Zero(3, 3);
  dd(2, 2) = 2.0 * delta;
  const Operator r = rotation_xz(theta);
  const Operator dr = dtheta * rotation_xz_deriv(theta);
  Operator h = r * d * r.transpose();
  Operator dh = dr * d * r.transpose() + r * dd * r.transpose() + r * d * dr.transpose();
  return {hermitian_part(h), hermitian_part(dh)};
}

}  // namespace detail

/// The 3-level counterexample in the scaled time s = t/tau. Its spectrum is
/// {0, delta, 2 delta (1+s)} and the ground state rotates at angle s + s^2/2.
inline HamiltonianPath three_level_path(const ThreeLevelParams& p) {
  p.validate();
  const double delta = p.delta;
  return HamiltonianPath(
      PathKind::three_level, 3, Domain{0.0},
      [delta](double s) { return detail::three_level_value(delta, s); },
      [delta](double s) { return detail::three_level_at(delta, s).second; });
}

/// Same family expressed in its arc-length parameter lambda = s + s^2/2.
inline HamiltonianPath three_level_lambda_path(const ThreeLevelParams& p) {
  p.validate();
  const double delta = p.delta;
  auto s_of = [](double lambda) { return std::sqrt(1.0 + 2.0 * lambda) - 1.0; };
  return HamiltonianPath(
      PathKind::three_level, 3, Domain{0.0},
      [delta, s_of](double lambda) { return detail::three_level_value(delta, s_of(lambda)); },
      [delta, s_of](double lambda) {
        const double s = s_of(lambda);
        return Operator(detail::three_level_at(delta, s).second / (1.0 + s));
      });
}

/// Natural traversal rate d(lambda)/dt of the 3-level model when s = t/tau.
inline std::function<double(double)> three_level_natural_velocity(const ThreeLevelParams& p) {
  p.validate();
  const double tau = p.tau;
  return [tau](double lambda) { return std::sqrt(1.0 + 2.0 * lambda) / tau; };
}

/// H(s) = (delta/2) [cos(2 pi s) sigma_z + sin(2 pi s) sigma_x] with s = t/tau,
/// so one period of the physical model is one unit of s.
inline HamiltonianPath rotating_two_level_path(const RotatingTwoLevelParams& p) {
  p.validate();
  const double half = 0.5 * p.delta;
  const Operator sz = pauli_z();
  const Operator sx = pauli_x();
  return HamiltonianPath(
      PathKind::rotating_two_level, 2, Domain{0.0},
      [=](double s) {
        const double phi = 2.0 * kPi * s;
        return Operator(half * (std::cos(phi) * sz + std::sin(phi) * sx));
      },
      [=](double s) {
        const double phi = 2.0 * kPi * s;
        return Operator(half * 2.0 * kPi * (-std::sin(phi) * sz + std::cos(phi) * sx));
      });
}

/// Ground-state path length of one period of the rotating model: the Bloch
/// vector sweeps a great circle, which is an arc of length pi in state space.
inline constexpr double kRotatingCycleLength = kPi;

inline HamiltonianPath rotating_two_level_lambda_path(const RotatingTwoLevelParams& p) {
  const HamiltonianPath base = rotating_two_level_path(p);
  return HamiltonianPath(
      PathKind::rotating_two_level, 2, Domain{0.0},
      [base](double lambda) { return base.eval(lambda / kPi); },
      [base](double lambda) { return Operator(base.deriv(lambda / kPi) / kPi); });
}

/// Uniform traversal: one period of arc length pi per tau.
inline double rotating_natural_velocity(const RotatingTwoLevelParams& p) {
  p.validate();
  return kRotatingCycleLength / p.tau;
}

inline Operator block_diagonal(const Operator& a, const Operator& b) {
  Operator out = Operator::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

inline HamiltonianPath direct_sum(const HamiltonianPath& first, const HamiltonianPath& second) {
  if (!(first.domain() == second.domain())) {
    throw DomainMismatch("direct_sum: path domains differ");
  }
  return HamiltonianPath(
      PathKind::direct_sum, first.dim() + second.dim(), first.domain(),
      [first, second](double s) { return block_diagonal(first.eval(s), second.eval(s)); },
      [first, second](double s) { return block_diagonal(first.deriv(s), second.deriv(s)); });
}

/// A time-independent operator viewed as a path on the given domain.
inline HamiltonianPath constant_path(const Operator& h, Domain domain = {}) {
  require_hermitian(h, 1e-12, "constant operator");
  const Operator zero = Operator::Zero(h.rows(), h.cols());
  return HamiltonianPath(
      PathKind::custom, h.rows(), domain, [h](double) { return h; },
      [zero](double) { return zero; });
}

/// Entrywise clamped cubic spline through sampled operators. Interpolated
/// values and slopes are symmetrized to stay exactly Hermitian.
inline HamiltonianPath sampled_path(const std::vector<double>& grid,
                                    const std::vector<Operator>& operators) {
  if (grid.size() < 4) throw InvalidArgument("sampled path needs at least 4 grid points");
  if (grid.size() != operators.size()) throw InvalidArgument("grid/operator count mismatch");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw InvalidArgument("sampled path grid must be strictly increasing (duplicate or "
                            "unordered point at index " + std::to_string(i) + ")");
    }
  }
  const Index dim = operators.front().rows();
  Eigen::MatrixXd values(static_cast<Index>(grid.size()), 2 * dim * dim);
  for (std::size_t i = 0; i < operators.size(); ++i) {
    const Operator& h = operators[i];
    if (h.rows() != dim || h.cols() != dim) {
      throw InvalidArgument("sampled operators must share one dimension");
    }
    require_hermitian(h, 1e-12, "sampled operator " + std::to_string(i));
    for (Index r = 0; r < dim; ++r) {
      for (Index c = 0; c < dim; ++c) {
        values(static_cast<Index>(i), 2 * (r * dim + c)) = h(r, c).real();
        values(static_cast<Index>(i), 2 * (r * dim + c) + 1) = h(r, c).imag();
      }
    }
  }
  auto spline = std::make_shared<const CubicSpline>(grid, std::move(values));
  auto unpack = [dim](const Eigen::RowVectorXd& row) {
    Operator h(dim, dim);
    for (Index r = 0; r < dim; ++r) {
      for (Index c = 0; c < dim; ++c) {
        h(r, c) = Complex(row(2 * (r * dim + c)), row(2 * (r * dim + c) + 1));
      }
    }
    return hermitian_part(h);
  };
  return HamiltonianPath(
      PathKind::sampled, dim, Domain{grid.front(), grid.back()},
      [spline, unpack](double s) { return unpack(spline->value(s)); },
      [spline, unpack](double s) { return unpack(spline->derivative(s)); });
}

/// H_B(x) = factor(x) H(x), the pointwise rescaling used for rate-equivalent twins.
inline HamiltonianPath scaled_path(const HamiltonianPath& base,
                                   std::function<double(double)> factor,
                                   std::function<double(double)> factor_slope) {
  return HamiltonianPath(
      PathKind::rescaled, base.dim(), base.domain(),
      [base, factor](double x) { return Operator(factor(x) * base.eval(x)); },
      [base, factor, factor_slope](double x) {
        return Operator(factor(x) * base.deriv(x) + factor_slope(x) * base.eval(x));
      });
}

/// Same family traversed in a new parameter u with s = s_of_u(u).
inline HamiltonianPath reparameterize(const HamiltonianPath& base,
                                      std::function<double(double)> s_of_u,
                                      std::function<double(double)> ds_du, Domain u_domain) {
  return HamiltonianPath(
      base.kind(), base.dim(), u_domain,
      [base, s_of_u](double u) { return base.eval(s_of_u(u)); },
      [base, s_of_u, ds_du](double u) { return Operator(base.deriv(s_of_u(u)) * ds_du(u)); });
}

}  // namespace adiabatic
