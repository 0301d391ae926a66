/**
 * @file hyper.hpp
 * @brief Flux, Jacobian and hyperbolicity certificates of the stochastic
 * Galerkin shallow water system.
 *
 * The unknown is the stacked coefficient vector U = (h, q) in R^{2K}. The
 * flux is F(U) = (q, g/2 P(h) h + P(q) u) with the velocity coefficients
 * u = P(h)^{-1} q.
 */
#pragma once

#include "sgswe/pce.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sgswe {

struct SgState {
  PceVector h;
  PceVector q;

  int size() const { return static_cast<int>(h.size()); }
  Vector stacked() const {
    Vector U(2 * h.size());
    U << h, q;
    return U;
  }
};

struct HyperbolicityCertificate {
  bool positive_at_nodes = false;
  double min_node_height = 0.0;
  bool spd = false;
  double min_eigenvalue_P = 0.0;
};

/// Thrown when a Jacobian eigenvalue carries an imaginary part above
/// tolerance, i.e. the discrete system stopped being hyperbolic.
class HyperbolicityLost : public std::runtime_error {
 public:
  explicit HyperbolicityLost(const std::string& what) : std::runtime_error(what) {}
};

/// Relative imaginary-part tolerance for Jacobian spectra.
inline constexpr double kImagTolerance = 1e-8;

inline HyperbolicityCertificate check_positivity(const Basis& basis, const NodeSet& nodes, const PceVector& h) {
  HyperbolicityCertificate cert;
  cert.min_node_height = nodes.min_value(h);
  cert.positive_at_nodes = cert.min_node_height > 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p_matrix(basis, h), Eigen::EigenvaluesOnly);
  cert.min_eigenvalue_P = eig.eigenvalues()(0);
  cert.spd = cert.min_eigenvalue_P > 0.0;
  return cert;
}

inline HyperbolicityCertificate check_positivity(const Basis& basis, const QuadratureRule& rule,
                                                 const PceVector& h) {
  return check_positivity(basis, NodeSet(basis, rule), h);
}

/// Flux with a caller-supplied velocity vector (desingularized or exact).
inline Vector sg_flux(const Basis& basis, const PceVector& h, const PceVector& q, const PceVector& u,
                      double g) {
  const int K = basis.size();
  Vector F(2 * K);
  F.head(K) = q;
  F.tail(K) = 0.5 * g * (p_matrix(basis, h) * h) + p_matrix(basis, q) * u;
  return F;
}

inline Vector sg_flux(const Basis& basis, const SgState& U, double g) {
  const PceVector u = galerkin_ratio(basis, U.q, U.h);
  return sg_flux(basis, U.h, U.q, u, g);
}

/// Jacobian from its building blocks; `h_inverse` stands in for P(h)^{-1}.
inline Matrix sg_jacobian(const Matrix& Ph, const Matrix& Pq, const Matrix& Pu, const Matrix& h_inverse,
                          double g) {
  const Eigen::Index K = Ph.rows();
  Matrix J = Matrix::Zero(2 * K, 2 * K);
  const Matrix PqInv = Pq * h_inverse;
  J.topRightCorner(K, K).setIdentity();
  J.bottomLeftCorner(K, K) = g * Ph - PqInv * Pu;
  J.bottomRightCorner(K, K) = Pu + PqInv;
  return J;
}

inline Matrix sg_jacobian(const Basis& basis, const SgState& U, double g) {
  const Matrix Ph = p_matrix(basis, U.h);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Ph);
  const Vector lam = eig.eigenvalues();
  if (!(lam.cwiseAbs().minCoeff() > 0.0) ||
      lam.cwiseAbs().maxCoeff() / lam.cwiseAbs().minCoeff() > kRatioConditionCap) {
    throw SingularProductError("sg_jacobian: P(h) singular");
  }
  const Matrix& Q = eig.eigenvectors();
  const Matrix inv = Q * lam.cwiseInverse().asDiagonal() * Q.transpose();
  const PceVector u = inv * U.q;
  return sg_jacobian(Ph, p_matrix(basis, U.q), p_matrix(basis, u), inv, g);
}

/// Symmetric matrix similar to the Jacobian, built from
/// G = sqrt(g P(h)), A = g G^{-1} P(q) G^{-1}, B = P(u).
inline Matrix symmetrized_form(const Basis& basis, const SgState& U, double g) {
  const int K = basis.size();
  const Matrix Ph = p_matrix(basis, U.h);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Ph);
  if (!(eig.eigenvalues()(0) > 0.0)) throw std::domain_error("symmetrized_form: P(h) is not SPD");
  const Matrix& Q = eig.eigenvectors();
  const Vector root = (g * eig.eigenvalues()).cwiseSqrt();
  const Matrix G = Q * root.asDiagonal() * Q.transpose();
  const Matrix Ginv = Q * root.cwiseInverse().asDiagonal() * Q.transpose();
  const PceVector u = Q * (eig.eigenvalues().cwiseInverse().asDiagonal() * (Q.transpose() * U.q));
  const Matrix A = g * Ginv * p_matrix(basis, U.q) * Ginv;
  const Matrix B = p_matrix(basis, u);
  Matrix S(2 * K, 2 * K);
  S.topLeftCorner(K, K) = -2.0 * G - B - A;
  S.topRightCorner(K, K) = A - B;
  S.bottomLeftCorner(K, K) = A - B;
  S.bottomRightCorner(K, K) = 2.0 * G - B - A;
  return -0.5 * S;
}

struct SpectrumBounds {
  double min = 0.0;
  double max = 0.0;
  double imag_ratio = 0.0;  ///< max |Im lambda| / spectral radius
};

/// Extreme real parts of the spectrum of a (nonsymmetric) Jacobian. Imaginary
/// parts below kImagTolerance times the spectral radius are treated as
/// round-off; larger ones raise HyperbolicityLost.
inline SpectrumBounds jacobian_spectrum(const Matrix& J, double tolerance = kImagTolerance) {
  Eigen::VectorXcd lam;
  Eigen::EigenSolver<Matrix> eig(J, false);
  if (eig.info() == Eigen::Success) {
    lam = eig.eigenvalues();
  } else {
    // nearly defective clusters (e.g. still water with tiny tails) can stall
    // the default QR budget
    eig.setMaxIterations(1000 * static_cast<Eigen::Index>(J.rows()));
    eig.compute(J, false);
    if (eig.info() == Eigen::Success) {
      lam = eig.eigenvalues();
    } else {
      Eigen::ComplexEigenSolver<Matrix> ceig(J, false);
      if (ceig.info() != Eigen::Success) throw HyperbolicityLost("jacobian_spectrum: eigen-solver failed");
      lam = ceig.eigenvalues();
    }
  }
  SpectrumBounds out;
  out.min = std::numeric_limits<double>::infinity();
  out.max = -std::numeric_limits<double>::infinity();
  double radius = 0.0;
  double imag = 0.0;
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    out.min = std::min(out.min, lam(k).real());
    out.max = std::max(out.max, lam(k).real());
    radius = std::max(radius, std::abs(lam(k)));
    imag = std::max(imag, std::abs(lam(k).imag()));
  }
  out.imag_ratio = radius > 0.0 ? imag / radius : 0.0;
  if (!std::isfinite(out.min) || !std::isfinite(out.max) || out.imag_ratio > tolerance) {
    std::ostringstream msg;
    msg << "jacobian_spectrum: complex eigenvalues, |Im|/radius = " << out.imag_ratio;
    throw HyperbolicityLost(msg.str());
  }
  return out;
}

struct WaveSpeeds {
  double a_minus = 0.0;
  double a_plus = 0.0;
  double imag_ratio = 0.0;
};

inline WaveSpeeds wave_speeds(const SpectrumBounds& left, const SpectrumBounds& right) {
  WaveSpeeds s;
  s.a_minus = std::min({left.min, right.min, 0.0});
  s.a_plus = std::max({left.max, right.max, 0.0});
  s.imag_ratio = std::max(left.imag_ratio, right.imag_ratio);
  return s;
}

/// One-sided local speeds at an interface from the left and right states.
inline WaveSpeeds wave_speeds(const Basis& basis, const SgState& U_minus, const SgState& U_plus, double g) {
  return wave_speeds(jacobian_spectrum(sg_jacobian(basis, U_minus, g)),
                     jacobian_spectrum(sg_jacobian(basis, U_plus, g)));
}

/// Checks lambda_min(J) <= lambda_min(P(u)) <= lambda_max(P(u)) <= lambda_max(J).
inline bool spectral_bound_check(const Basis& basis, const SgState& U, double g, double slack = 1e-9) {
  const SpectrumBounds J = jacobian_spectrum(sg_jacobian(basis, U, g));
  const PceVector u = galerkin_ratio(basis, U.q, U.h);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p_matrix(basis, u), Eigen::EigenvaluesOnly);
  const double umin = eig.eigenvalues()(0);
  const double umax = eig.eigenvalues()(eig.eigenvalues().size() - 1);
  const double scale = std::max({1.0, std::abs(J.min), std::abs(J.max)});
  return J.min <= umin + slack * scale && umax <= J.max + slack * scale;
}

}  // namespace sgswe
