#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "adiabatic/errors.hpp"

namespace adiabatic {

using Complex = std::complex<double>;
using Index = Eigen::Index;
/// Dense complex operator; every Hamiltonian in the library is stored this way.
using Operator = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kPi = std::numbers::pi;

/// Largest entrywise deviation from Hermiticity, max |H_ij - conj(H_ji)|.
inline double hermiticity_defect(const Operator& h) {
  if (h.rows() == 0) return 0.0;
  return (h - h.adjoint()).cwiseAbs().maxCoeff();
}

inline void require_hermitian(const Operator& h, double tol = 1e-12,
                              const std::string& what = "operator") {
  if (h.rows() != h.cols()) throw InvalidArgument(what + " is not square");
  if (h.rows() < 2) throw InvalidArgument(what + " must have dimension >= 2");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if (hermiticity_defect(h) > tol * scale) {
    throw InvalidArgument(what + " is not Hermitian (defect " +
                          sci(hermiticity_defect(h)) + ")");
  }
}

inline Operator hermitian_part(const Operator& h) { return 0.5 * (h + h.adjoint()); }

inline Operator pauli_x() {
  Operator m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

inline Operator pauli_y() {
  Operator m(2, 2);
  m << 0.0, -kI, kI, 0.0;
  return m;
}

inline Operator pauli_z() {
  Operator m(2, 2);
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

/// Spectral norm of a Hermitian operator (largest |eigenvalue|).
inline double hermitian_norm(const Operator& h) {
  Eigen::SelfAdjointEigenSolver<Operator> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// ||U^dagger U - I|| in the Frobenius norm.
inline double unitarity_defect(const Operator& u) {
  return (u.adjoint() * u - Operator::Identity(u.rows(), u.cols())).norm();
}

/// exp(-i * scale * H) for Hermitian H, built from its eigendecomposition so
/// the result is unitary to rounding.
inline Operator unitary_exp(const Operator& h, double scale) {
  if (h.rows() == 2) {
    // H = a0 + a.sigma: exp(-i x H) = e^{-i x a0} (cos(x|a|) - i sin(x|a|) a.sigma/|a|)
    const double a0 = 0.5 * (h(0, 0).real() + h(1, 1).real());
    const double az = 0.5 * (h(0, 0).real() - h(1, 1).real());
    const Complex off = 0.5 * (h(0, 1) + std::conj(h(1, 0)));
    const double r = std::sqrt(az * az + std::norm(off));
    const double c = std::cos(scale * r);
    const double sinc = r > 0.0 ? std::sin(scale * r) / r : scale;
    const Complex g = std::exp(-kI * (scale * a0));
    Operator u(2, 2);
    u(0, 0) = g * Complex(c, -sinc * az);
    u(1, 1) = g * Complex(c, sinc * az);
    u(0, 1) = g * (-kI * sinc * off);
    u(1, 0) = g * (-kI * sinc * std::conj(off));
    return u;
  }
  if (h.rows() == 3 && h.imag().cwiseAbs().maxCoeff() == 0.0) {
    // Real symmetric 3x3: closed-form eigensolver on the traceless part.
    const double shift = h.real().trace() / 3.0;
    const Eigen::Matrix3d hr = h.real() - shift * Eigen::Matrix3d::Identity();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es;
    es.computeDirect(hr);
    const Eigen::Vector3d& e = es.eigenvalues();
    const double spread = std::max(1.0, e.cwiseAbs().maxCoeff());
    if (std::min(e(1) - e(0), e(2) - e(1)) > 1e-6 * spread) {
      const Eigen::Matrix3d& v = es.eigenvectors();
      const Eigen::Vector3d c = (scale * e).array().cos();
      const Eigen::Vector3d sn = (scale * e).array().sin();
      Operator u(3, 3);
      u.real() = v * c.asDiagonal() * v.transpose();
      u.imag() = -(v * sn.asDiagonal() * v.transpose());
      return std::exp(-kI * (scale * shift)) * u;
    }
  }
  Eigen::SelfAdjointEigenSolver<Operator> es(h);
  const Eigen::VectorXcd phases =
      (-kI * scale * es.eigenvalues().cast<Complex>()).array().exp();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Hermitian A with U = exp(iA) and eigenphases in (-pi, pi]. The Schur
/// vectors of a unitary are an orthonormal eigenbasis, so clustered
/// eigenvalues near 1 stay well conditioned.
struct PrincipalLog {
  Operator generator;
  double max_phase = 0.0;
};

inline PrincipalLog principal_log(const Operator& u) {
  Eigen::ComplexSchur<Operator> schur(u);
  const Operator& q = schur.matrixU();
  const Operator& t = schur.matrixT();
  Eigen::VectorXd phases(t.rows());
  double max_phase = 0.0;
  for (Index k = 0; k < t.rows(); ++k) {
    phases(k) = std::arg(t(k, k));
    max_phase = std::max(max_phase, std::abs(phases(k)));
  }
  Operator a = q * phases.cast<Complex>().asDiagonal() * q.adjoint();
  return {hermitian_part(a), max_phase};
}

}  // namespace adiabatic
