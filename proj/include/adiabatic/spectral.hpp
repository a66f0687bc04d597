#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adiabatic/errors.hpp"
#include "adiabatic/linalg.hpp"
#include "adiabatic/model.hpp"

namespace adiabatic {

/// Ascending energies with orthonormal eigenvectors as columns.
struct EigenSystem {
  Eigen::VectorXd energies;
  Operator vectors;

  Index dim() const { return energies.size(); }
  double ground_energy() const { return energies(0); }
  double gap() const { return energies(1) - energies(0); }
  StateVector ground() const { return vectors.col(0); }
  StateVector level(Index k) const { return vectors.col(k); }
};

/// Diagonalizes a Hermitian operator. Each eigenvector is phased so its
/// largest-magnitude component is real and positive. Any adjacent level
/// spacing below 1e-10 ||H|| is reported as a degenerate spectrum.
inline EigenSystem eigensystem(const Operator& h) {
  if (h.rows() != h.cols() || h.rows() < 2) {
    throw InvalidArgument("eigensystem: operator must be square with dimension >= 2");
  }
  Eigen::SelfAdjointEigenSolver<Operator> es(h);
  if (es.info() != Eigen::Success) throw NumericalFailure("Hermitian eigensolver failed");
  EigenSystem out{es.eigenvalues(), es.eigenvectors()};
  const double norm = out.energies.cwiseAbs().maxCoeff();
  const double threshold = 1e-10 * norm;
  for (Index k = 1; k < out.dim(); ++k) {
    if (out.energies(k) - out.energies(k - 1) <= threshold) {
      throw DegenerateSpectrum("degenerate spectrum: levels " + std::to_string(k - 1) + " and " +
                               std::to_string(k) + " differ by " +
                               sci(out.energies(k) - out.energies(k - 1)));
    }
  }
  for (Index k = 0; k < out.dim(); ++k) {
    Index arg = 0;
    out.vectors.col(k).cwiseAbs().maxCoeff(&arg);
    const Complex c = out.vectors(arg, k);
    out.vectors.col(k) *= std::conj(c) / std::abs(c);
  }
  return out;
}

/// |g'> = sum_{k>0} |k><k|dH|g>/(E_g - E_k); orthogonal to |g> by construction,
/// which is the parallel-transport derivative.
inline StateVector ground_derivative(const EigenSystem& es, const Operator& dh) {
  const StateVector g = es.ground();
  const StateVector dhg = dh * g;
  StateVector out = StateVector::Zero(es.dim());
  for (Index k = 1; k < es.dim(); ++k) {
    const Complex amp = es.vectors.col(k).dot(dhg);
    out += es.vectors.col(k) * (amp / (es.energies(0) - es.energies(k)));
  }
  return out;
}

/// X'X^dagger from first-order perturbation theory in the eigenbasis:
/// entry (k, j) = -<k|dH|j>/(E_j - E_k), zero diagonal. Exactly anti-Hermitian.
inline Operator exact_connection(const EigenSystem& es, const Operator& dh) {
  const Operator m = es.vectors.adjoint() * dh * es.vectors;
  Operator c = Operator::Zero(es.dim(), es.dim());
  for (Index k = 0; k < es.dim(); ++k) {
    for (Index j = 0; j < es.dim(); ++j) {
      if (k != j) c(k, j) = -m(k, j) / (es.energies(j) - es.energies(k));
    }
  }
  return c;
}

struct FrameOptions {
  double min_overlap = 0.99;
  int max_refinement_depth = 20;
};

struct LoopPhase {
  double phase = 0.0;      ///< arg <g_first|g_last>, in (-pi, pi]
  double magnitude = 0.0;  ///< |<g_first|g_last>|
};

/// Eigenframe transported along a grid with <e_k|e_k'> = 0 for every level.
/// `connection` is X'X^dagger expressed in the local eigenbasis.
struct GaugedFrame {
  HamiltonianPath path;
  std::vector<double> grid;
  std::vector<EigenSystem> states;
  std::vector<Operator> hamiltonian_deriv;
  std::vector<StateVector> ground_deriv;
  std::vector<Operator> connection;

  std::size_t size() const { return grid.size(); }
  Index dim() const { return path.dim(); }

  /// Largest |Im <e_k(n)|e_k(n+1)>| / h over levels and intervals, the
  /// discretized gauge condition.
  double gauge_defect() const {
    double worst = 0.0;
    for (std::size_t n = 0; n + 1 < size(); ++n) {
      const double h = grid[n + 1] - grid[n];
      for (Index k = 0; k < dim(); ++k) {
        const Complex o = states[n].vectors.col(k).dot(states[n + 1].vectors.col(k));
        worst = std::max(worst, std::abs(o.imag()) / h);
      }
    }
    return worst;
  }

  /// Overlap of the transported ground state at the end of the grid with the
  /// one at the start. For a closed loop the phase is the Berry phase.
  LoopPhase loop_phase() const {
    const Complex o = states.front().ground().dot(states.back().ground());
    return {std::arg(o), std::abs(o)};
  }

  /// Largest anti-Hermiticity defect of the stored connection.
  double connection_defect() const {
    double worst = 0.0;
    for (const Operator& c : connection) {
      worst = std::max(worst, (c + c.adjoint()).cwiseAbs().maxCoeff());
    }
    return worst;
  }
};

namespace detail {

inline void transport_interval(const HamiltonianPath& path, double a, const EigenSystem& from,
                               double b, int depth, const FrameOptions& opt,
                               std::vector<double>& grid, std::vector<EigenSystem>& states) {
  EigenSystem next = eigensystem(path.eval(b));
  double worst = 1.0;
  for (Index k = 0; k < next.dim(); ++k) {
    worst = std::min(worst, std::abs(from.vectors.col(k).dot(next.vectors.col(k))));
  }
  if (worst < opt.min_overlap) {
    if (depth >= opt.max_refinement_depth) {
      throw GridTooCoarse("frame transport: overlap " + std::to_string(worst) +
                          " below threshold on [" + std::to_string(a) + ", " +
                          std::to_string(b) + "] after " + std::to_string(depth) +
                          " refinements");
    }
    const double mid = 0.5 * (a + b);
    transport_interval(path, a, from, mid, depth + 1, opt, grid, states);
    const EigenSystem mid_state = states.back();
    transport_interval(path, mid, mid_state, b, depth + 1, opt, grid, states);
    return;
  }
  for (Index k = 0; k < next.dim(); ++k) {
    const Complex o = from.vectors.col(k).dot(next.vectors.col(k));
    next.vectors.col(k) *= std::conj(o) / std::abs(o);
  }
  grid.push_back(b);
  states.push_back(std::move(next));
}

/// Weights of the second-order one-sided or centered derivative at grid[i].
inline std::array<double, 3> fd_weights(const std::vector<double>& x, std::size_t i,
                                        std::size_t& first) {
  const std::size_t n = x.size();
  if (i == 0) {
    first = 0;
    const double h1 = x[1] - x[0], h2 = x[2] - x[1];
    return {-(2 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))};
  }
  if (i == n - 1) {
    first = n - 3;
    const double h1 = x[n - 2] - x[n - 3], h2 = x[n - 1] - x[n - 2];
    return {h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2 * h2 + h1) / (h2 * (h1 + h2))};
  }
  first = i - 1;
  const double h1 = x[i] - x[i - 1], h2 = x[i + 1] - x[i];
  return {-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))};
}

}  // namespace detail

/// Builds the parallel-transported eigenframe over `grid`. Intervals whose
/// successive eigenvectors overlap less than `min_overlap` are bisected (the
/// inserted points appear in the returned grid). The connection is assembled
/// by finite differences of the gauged frame and projected onto its
/// anti-Hermitian part.
inline GaugedFrame transport_frame(const HamiltonianPath& path, std::span<const double> grid,
                                   std::optional<EigenSystem> init = std::nullopt,
                                   const FrameOptions& opt = {}) {
  if (grid.empty()) throw InvalidArgument("transport_frame: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw InvalidArgument("transport_frame: grid not increasing");
  }
  GaugedFrame frame{path, {}, {}, {}, {}, {}};
  const Operator h0 = path.eval(grid[0]);
  if (init) {
    const double scale = std::max(1.0, init->energies.cwiseAbs().maxCoeff());
    const double residual =
        (h0 * init->vectors - init->vectors * init->energies.asDiagonal()).cwiseAbs().maxCoeff();
    if (residual > 1e-8 * scale) {
      throw InvalidArgument("transport_frame: initial eigensystem does not match H(grid[0])");
    }
    frame.states.push_back(*init);
  } else {
    frame.states.push_back(eigensystem(h0));
  }
  frame.grid.push_back(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const EigenSystem from = frame.states.back();
    detail::transport_interval(path, grid[i - 1], from, grid[i], 0, opt, frame.grid,
                               frame.states);
  }

  const std::size_t n = frame.grid.size();
  frame.hamiltonian_deriv.reserve(n);
  frame.ground_deriv.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    frame.hamiltonian_deriv.push_back(path.deriv(frame.grid[i]));
    frame.ground_deriv.push_back(ground_derivative(frame.states[i], frame.hamiltonian_deriv[i]));
  }

  frame.connection.assign(n, Operator::Zero(path.dim(), path.dim()));
  if (n >= 3) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t first = 0;
      const auto w = detail::fd_weights(frame.grid, i, first);
      Operator dx = Operator::Zero(path.dim(), path.dim());
      for (std::size_t j = 0; j < 3; ++j) dx += w[j] * frame.states[first + j].vectors.adjoint();
      const Operator d = dx * frame.states[i].vectors;  // X' X^dagger in the eigenbasis
      frame.connection[i] = 0.5 * (d - d.adjoint());
    }
  } else if (n == 2) {
    const double h = frame.grid[1] - frame.grid[0];
    const Operator dx = (frame.states[1].vectors.adjoint() - frame.states[0].vectors.adjoint()) / h;
    for (std::size_t i = 0; i < 2; ++i) {
      const Operator d = dx * frame.states[i].vectors;
      frame.connection[i] = 0.5 * (d - d.adjoint());
    }
  }
  return frame;
}

struct GapProfile {
  std::vector<double> grid;
  std::vector<double> gap;
  double min_gap = std::numeric_limits<double>::infinity();
  double argmin = 0.0;
};

/// Delta(x) = E_1(x) - E_0(x) on the grid and its minimum.
inline GapProfile spectral_gap(const HamiltonianPath& path, std::span<const double> grid) {
  GapProfile out;
  out.grid.assign(grid.begin(), grid.end());
  out.gap.reserve(grid.size());
  for (double x : grid) {
    const double g = eigensystem(path.eval(x)).gap();
    out.gap.push_back(g);
    if (g < out.min_gap) {
      out.min_gap = g;
      out.argmin = x;
    }
  }
  return out;
}

inline std::vector<double> uniform_grid(double a, double b, std::size_t intervals) {
  if (intervals == 0) throw InvalidArgument("uniform_grid: need at least one interval");
  std::vector<double> g(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) {
    g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(intervals);
  }
  g.back() = b;
  return g;
}

}  // namespace adiabatic
