#include <gtest/gtest.h>

#include <random>

#include "adiabatic/model.hpp"
#include "adiabatic/pathgeom.hpp"
#include "adiabatic/spectral.hpp"

using namespace adiabatic;

namespace {

Operator random_hermitian(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Operator a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = Complex(g(rng), g(rng));
  return hermitian_part(a);
}

}  // namespace

TEST(EigenSystem, DiagonalInput) {
  Operator h = Operator::Zero(3, 3);
  h(1, 1) = 1.0;
  h(2, 2) = 2.0;
  const EigenSystem es = eigensystem(h);
  EXPECT_NEAR(es.energies(0), 0.0, 1e-15);
  EXPECT_NEAR(es.energies(1), 1.0, 1e-15);
  EXPECT_NEAR(es.energies(2), 2.0, 1e-15);
  EXPECT_LT((es.vectors - Operator::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EigenSystem, ThreeLevelEnergies) {
  const auto p = three_level_path({1.0, 1.0});
  const EigenSystem es = eigensystem(p.eval(0.8));
  EXPECT_NEAR(es.energies(0), 0.0, 1e-12);
  EXPECT_NEAR(es.energies(1), 1.0, 1e-12);
  EXPECT_NEAR(es.energies(2), 3.6, 1e-12);
}

TEST(EigenSystem, RandomReconstructionAndPhaseConvention) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const Operator h = random_hermitian(8, rng);
    const EigenSystem es = eigensystem(h);
    const Operator rec = es.vectors * es.energies.cast<Complex>().asDiagonal() * es.vectors.adjoint();
    EXPECT_LE((rec - h).norm(), 1e-10);
    EXPECT_LE((es.vectors.adjoint() * es.vectors - Operator::Identity(8, 8)).cwiseAbs().maxCoeff(),
              1e-10);
    const double norm = es.energies.cwiseAbs().maxCoeff();
    for (Index k = 0; k < 8; ++k) {
      EXPECT_LE((h * es.vectors.col(k) - es.energies(k) * es.vectors.col(k)).norm(), 1e-10 * norm);
      Index arg = 0;
      es.vectors.col(k).cwiseAbs().maxCoeff(&arg);
      EXPECT_NEAR(es.vectors(arg, k).imag(), 0.0, 1e-15);
      EXPECT_GT(es.vectors(arg, k).real(), 0.0);
    }
    for (Index k = 1; k < 8; ++k) EXPECT_LT(es.energies(k - 1), es.energies(k));
  }
}

TEST(EigenSystem, DegenerateSpectrumIsAnError) {
  EXPECT_THROW(eigensystem(Operator::Identity(2, 2)), DegenerateSpectrum);
  EXPECT_THROW(eigensystem(Operator::Zero(3, 3)), DegenerateSpectrum);
  Operator h = Operator::Zero(3, 3);
  h(0, 0) = 1.0;
  h(1, 1) = 1.0 + 1e-12;
  h(2, 2) = 2.0;
  EXPECT_THROW(eigensystem(h), DegenerateSpectrum);
}

TEST(TransportFrame, ConstantPath) {
  Operator h = Operator::Zero(3, 3);
  h(0, 0) = -1.0;
  h(1, 1) = 0.5;
  h(2, 2) = 2.0;
  h(0, 1) = h(1, 0) = 0.2;
  const auto p = constant_path(h, Domain{0.0, 1.0});
  const auto grid = uniform_grid(0.0, 1.0, 10);
  const GaugedFrame f = transport_frame(p, grid);
  ASSERT_EQ(f.size(), grid.size());
  for (std::size_t n = 0; n < f.size(); ++n) {
    EXPECT_LT((f.states[n].vectors - f.states[0].vectors).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(f.ground_deriv[n].norm(), 0.0);
    EXPECT_LT(f.connection[n].cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(TransportFrame, GaugeAndConnectionInvariants) {
  const ThreeLevelParams params{1.0, 1.0};
  const auto p = three_level_lambda_path(params);
  const auto grid = uniform_grid(0.0, 10.0, 10000);
  const GaugedFrame f = transport_frame(p, grid);
  EXPECT_LE(f.gauge_defect(), 1e-8);
  EXPECT_LE(f.connection_defect(), 1e-10);
  double worst_speed = 0.0, worst_conn = 0.0, worst_fd = 0.0;
  for (std::size_t n = 1; n + 1 < f.size(); ++n) {
    worst_speed = std::max(worst_speed, std::abs(f.ground_deriv[n].norm() - 1.0));
    for (Index k = 1; k < 3; ++k) {
      const Complex kg = f.states[n].vectors.col(k).dot(f.ground_deriv[n]);
      worst_conn = std::max(worst_conn, std::abs(f.connection[n](k, 0) + kg));
    }
    // Gauged finite-difference derivative of |g> against perturbation theory.
    const StateVector fd =
        (f.states[n + 1].ground() - f.states[n - 1].ground()) / (f.grid[n + 1] - f.grid[n - 1]);
    worst_fd = std::max(worst_fd, (fd - f.ground_deriv[n]).norm());
  }
  EXPECT_LE(worst_speed, 1e-6);
  EXPECT_LE(worst_conn, 1e-6);
  EXPECT_LE(worst_fd, 1e-6);
}

TEST(TransportFrame, ExactConnectionMatchesFiniteDifferences) {
  const auto p = three_level_path({0.8, 1.0});
  const auto grid = uniform_grid(0.0, 3.0, 6000);
  const GaugedFrame f = transport_frame(p, grid);
  double worst = 0.0;
  for (std::size_t n = 0; n < f.size(); n += 37) {
    const Operator exact = exact_connection(f.states[n], f.hamiltonian_deriv[n]);
    worst = std::max(worst, (exact - f.connection[n]).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(TransportFrame, CoarseGridIsRefined) {
  const auto p = rotating_two_level_path({1.0, 1.0});
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const GaugedFrame f = transport_frame(p, grid);
  EXPECT_GT(f.size(), grid.size());
  for (std::size_t n = 0; n + 1 < f.size(); ++n) {
    EXPECT_GE(std::abs(f.states[n].ground().dot(f.states[n + 1].ground())), 0.99);
  }
  FrameOptions strict;
  strict.max_refinement_depth = 1;
  EXPECT_THROW(transport_frame(p, grid, std::nullopt, strict), GridTooCoarse);
}

TEST(TransportFrame, RotatingLoopBerryPhase) {
  // The ground state of the rotating model traces a great circle on the Bloch
  // sphere; the enclosed solid angle 2 pi gives a Berry phase of pi.
  const auto p = rotating_two_level_path({1.0, 1.0});
  const GaugedFrame f = transport_frame(p, uniform_grid(0.0, 1.0, 2000));
  const LoopPhase loop = f.loop_phase();
  EXPECT_NEAR(loop.magnitude, 1.0, 1e-8);
  EXPECT_NEAR(std::abs(loop.phase), kPi, 1e-5);
}

TEST(TransportFrame, TiltedLoopBerryPhaseIsHalfSolidAngle) {
  // H = n(s).sigma with n on a cone of half-angle alpha: Berry phase pi(1 - cos alpha).
  const double alpha = 0.7;
  const Operator sx = pauli_x(), sy = pauli_y(), sz = pauli_z();
  auto eval = [=](double s) {
    const double phi = 2 * kPi * s;
    return Operator(std::sin(alpha) * (std::cos(phi) * sx + std::sin(phi) * sy) +
                    std::cos(alpha) * sz);
  };
  auto deriv = [=](double s) {
    const double phi = 2 * kPi * s;
    return Operator(2 * kPi * std::sin(alpha) * (-std::sin(phi) * sx + std::cos(phi) * sy));
  };
  const HamiltonianPath p(PathKind::custom, 2, Domain{0.0, 1.0}, eval, deriv);
  const GaugedFrame f = transport_frame(p, uniform_grid(0.0, 1.0, 4000));
  const LoopPhase loop = f.loop_phase();
  const double expect = kPi * (1.0 - std::cos(alpha));
  EXPECT_NEAR(loop.magnitude, 1.0, 1e-8);
  EXPECT_NEAR(std::abs(std::remainder(std::abs(loop.phase) - expect, 2 * kPi)), 0.0, 1e-5);
}

TEST(SpectralGap, Models) {
  const auto grid = uniform_grid(0.0, 10.0, 200);
  const GapProfile a = spectral_gap(three_level_lambda_path({1.0, 1.0}), grid);
  for (double g : a.gap) EXPECT_NEAR(g, 1.0, 1e-10);
  const GapProfile b = spectral_gap(rotating_two_level_path({0.4, 1.0}), grid);
  EXPECT_NEAR(b.min_gap, 0.4, 1e-12);
}
