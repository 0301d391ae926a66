/**
 * @file pce.hpp
 * @brief Orthonormal Jacobi bases for Beta densities on [-1,1], Gauss
 * quadrature and truncated polynomial chaos algebra.
 *
 * The density is rho(xi) = C (1-xi)^alpha (1+xi)^beta, normalized to a
 * probability density, so <1,1> = 1 and the first basis function is the
 * constant 1. A PCE vector holds the coefficients of phi_1 ... phi_K, where
 * phi_k has total degree k-1.
 */
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgswe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Coefficients of a truncated expansion in the orthonormal basis.
using PceVector = Eigen::VectorXd;

/// Raised when a Galerkin ratio is requested for a singular or
/// ill-conditioned multiplication matrix.
class SingularProductError : public std::runtime_error {
 public:
  explicit SingularProductError(const std::string& what) : std::runtime_error(what) {}
};

/// Three-term recurrence of the monic Jacobi polynomials for the weight
/// (1-x)^alpha (1+x)^beta, with b_0 = 1 (probability normalization).
struct JacobiRecurrence {
  double alpha = 0.0;
  double beta = 0.0;

  double a(std::size_t n) const {
    const double ab = alpha + beta;
    if (n == 0) return (beta - alpha) / (ab + 2.0);
    const double s = 2.0 * static_cast<double>(n) + ab;
    return (beta * beta - alpha * alpha) / (s * (s + 2.0));
  }

  double b(std::size_t n) const {
    if (n == 0) return 1.0;
    const double ab = alpha + beta;
    if (n == 1) {
      // the general formula has a removable 0/0 at alpha + beta = -1
      return 4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
    }
    const double nn = static_cast<double>(n);
    const double s = 2.0 * nn + ab;
    return 4.0 * nn * (nn + alpha) * (nn + beta) * (nn + ab) / (s * s * (s + 1.0) * (s - 1.0));
  }
};

/// Positive quadrature rule for the basis density.
struct QuadratureRule {
  Vector nodes;    ///< strictly increasing, inside (-1, 1)
  Vector weights;  ///< positive, summing to one
  int exactness_degree = 0;

  int size() const { return static_cast<int>(nodes.size()); }
};

namespace detail {

inline QuadratureRule golub_welsch(const JacobiRecurrence& rec, int M) {
  if (M < 1) throw std::invalid_argument("gauss_rule: M must be >= 1");
  Vector diag(M);
  Vector sub(std::max(M - 1, 0));
  for (int n = 0; n < M; ++n) diag(n) = rec.a(static_cast<std::size_t>(n));
  for (int n = 1; n < M; ++n) sub(n - 1) = std::sqrt(rec.b(static_cast<std::size_t>(n)));

  QuadratureRule rule;
  rule.exactness_degree = 2 * M - 1;
  if (M == 1) {
    rule.nodes = Vector::Constant(1, diag(0));
    rule.weights = Vector::Ones(1);
    return rule;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("gauss_rule: tridiagonal eigen-solver failed for M = " + std::to_string(M));
  }
  rule.nodes = eig.eigenvalues();
  rule.weights.resize(M);
  for (int m = 0; m < M; ++m) {
    const double v0 = eig.eigenvectors()(0, m);
    rule.weights(m) = rec.b(0) * v0 * v0;
  }
  for (int m = 0; m < M; ++m) {
    if (!(rule.weights(m) > 0.0) || (m > 0 && !(rule.nodes(m) > rule.nodes(m - 1)))) {
      throw std::runtime_error("gauss_rule: degenerate rule for M = " + std::to_string(M));
    }
  }
  return rule;
}

}  // namespace detail

/**
 * Orthonormal polynomial basis {phi_1, ..., phi_K} for the Beta density with
 * exponents (alpha, beta), together with the cached triple-product tensor
 * (M_k)_{lm} = <phi_k, phi_l phi_m>.
 */
class Basis {
 public:
  Basis(double alpha, double beta, int K) : rec_{alpha, beta}, K_(K) {
    if (!(alpha > -1.0)) throw std::invalid_argument("build_basis: alpha must be > -1");
    if (!(beta > -1.0)) throw std::invalid_argument("build_basis: beta must be > -1");
    if (K < 1) throw std::invalid_argument("build_basis: K must be >= 1");
    const int depth = std::max(3 * K, 2);
    a_.resize(depth);
    sqrt_b_.resize(depth);
    for (int n = 0; n < depth; ++n) {
      a_(n) = rec_.a(static_cast<std::size_t>(n));
      sqrt_b_(n) = std::sqrt(rec_.b(static_cast<std::size_t>(n)));
    }
    build_triple_tensor();
  }

  double alpha() const { return rec_.alpha; }
  double beta() const { return rec_.beta; }
  int size() const { return K_; }
  const JacobiRecurrence& recurrence() const { return rec_; }

  /// Recurrence coefficients (a_n, b_n) for n < 3K.
  std::vector<std::pair<double, double>> recurrence_table() const {
    std::vector<std::pair<double, double>> out;
    out.reserve(static_cast<std::size_t>(a_.size()));
    for (Eigen::Index n = 0; n < a_.size(); ++n) out.emplace_back(a_(n), sqrt_b_(n) * sqrt_b_(n));
    return out;
  }

  /// Phi(xi) = (phi_1(xi), ..., phi_K(xi)). Throws for xi outside [-1, 1].
  Vector evaluate(double xi) const {
    Vector out(K_);
    evaluate_into(xi, out);
    return out;
  }

  void evaluate_into(double xi, Eigen::Ref<Vector> out) const {
    if (!(xi >= -1.0 && xi <= 1.0)) {
      throw std::domain_error("evaluate_basis: xi = " + std::to_string(xi) + " outside [-1, 1]");
    }
    evaluate_unchecked(xi, out, K_);
  }

  /// Value of the expansion with coefficients y at xi.
  double value(const PceVector& y, double xi) const { return y.dot(evaluate(xi)); }

  /// Triple-product matrices; M_1 is the identity.
  const std::vector<Matrix>& triple_tensor() const { return triple_; }
  const Matrix& triple(int k) const { return triple_.at(static_cast<std::size_t>(k)); }

  /// Pseudo-spectral product P(y) z evaluated on the tensor's Gauss rule;
  /// symmetric in y and z to the last bit.
  PceVector product(const PceVector& y, const PceVector& z) const {
    const Vector vals = tensor_weights_.cwiseProduct((tensor_phi_ * y).cwiseProduct(tensor_phi_ * z));
    return tensor_phi_.transpose() * vals;
  }

  /// Phi evaluated at every node of a rule, one row per node.
  Matrix node_matrix(const QuadratureRule& rule) const {
    Matrix phi(rule.size(), K_);
    for (int m = 0; m < rule.size(); ++m) {
      Vector row(K_);
      evaluate_into(rule.nodes(m), row);
      phi.row(m) = row.transpose();
    }
    return phi;
  }

 private:
  void evaluate_unchecked(double xi, Eigen::Ref<Vector> out, int count) const {
    out(0) = 1.0;
    if (count == 1) return;
    out(1) = (xi - a_(0)) / sqrt_b_(1);
    for (int n = 1; n + 1 < count; ++n) {
      out(n + 1) = ((xi - a_(n)) * out(n) - sqrt_b_(n) * out(n - 1)) / sqrt_b_(n + 1);
    }
  }

  void build_triple_tensor() {
    // exact for integrands of degree 3K-3
    const int M = std::max(1, (3 * K_ - 2 + 1) / 2);
    const QuadratureRule rule = detail::golub_welsch(rec_, M);
    Matrix phi(M, K_);
    for (int m = 0; m < M; ++m) {
      Vector row(K_);
      evaluate_unchecked(rule.nodes(m), row, K_);
      phi.row(m) = row.transpose();
    }
    tensor_phi_ = phi;
    tensor_weights_ = rule.weights;
    triple_.assign(static_cast<std::size_t>(K_), Matrix::Zero(K_, K_));
    for (int k = 0; k < K_; ++k) {
      Matrix& Mk = triple_[static_cast<std::size_t>(k)];
      for (int l = 0; l < K_; ++l) {
        for (int m = l; m < K_; ++m) {
          double s = 0.0;
          for (int q = 0; q < M; ++q) s += rule.weights(q) * phi(q, k) * phi(q, l) * phi(q, m);
          Mk(l, m) = s;
          Mk(m, l) = s;
        }
      }
    }
  }

  JacobiRecurrence rec_;
  int K_;
  Vector a_;
  Vector sqrt_b_;
  std::vector<Matrix> triple_;
  Matrix tensor_phi_;
  Vector tensor_weights_;
};

inline Basis build_basis(double alpha, double beta, int K) { return Basis(alpha, beta, K); }

inline Vector evaluate_basis(const Basis& basis, double xi) { return basis.evaluate(xi); }

/// M-point Gauss rule of the basis density (Golub-Welsch).
inline QuadratureRule gauss_rule(const Basis& basis, int M) {
  return detail::golub_welsch(basis.recurrence(), M);
}

/// Smallest Gauss rule exact on products of three basis polynomials.
inline int min_quadrature_size(int K) {
  if (K < 1) throw std::invalid_argument("min_quadrature_size: K must be >= 1");
  return (3 * K + 1) / 2 - 1;
}

/// A quadrature rule bundled with the basis values at its nodes.
struct NodeSet {
  QuadratureRule rule;
  Matrix phi;  ///< phi(m, k) = phi_{k+1}(xi_m)

  NodeSet(const Basis& basis, QuadratureRule r) : rule(std::move(r)), phi(basis.node_matrix(rule)) {}

  /// Values of the expansion y at every node.
  Vector values(const PceVector& y) const { return phi * y; }
  double min_value(const PceVector& y) const { return (phi * y).minCoeff(); }
};

/// P(y) = sum_k y_k M_k.
inline Matrix p_matrix(const Basis& basis, const PceVector& y) {
  const int K = basis.size();
  if (y.size() != K) throw std::invalid_argument("p_matrix: dimension mismatch");
  Matrix P = Matrix::Zero(K, K);
  for (int k = 0; k < K; ++k) {
    if (y(k) != 0.0) P.noalias() += y(k) * basis.triple(k);
  }
  return P;
}

/// Pseudo-spectral product P(y) z.
inline PceVector galerkin_product(const Basis& basis, const PceVector& y, const PceVector& z) {
  if (y.size() != basis.size() || z.size() != basis.size()) {
    throw std::invalid_argument("galerkin_product: dimension mismatch");
  }
  return basis.product(y, z);
}

/// Condition number above which galerkin_ratio refuses to solve.
inline constexpr double kRatioConditionCap = 1e12;

/// Galerkin ratio z / y: the solution c of P(y) c = z.
inline PceVector galerkin_ratio(const Basis& basis, const PceVector& z, const PceVector& y,
                                double condition_cap = kRatioConditionCap) {
  if (z.size() != basis.size()) throw std::invalid_argument("galerkin_ratio: dimension mismatch");
  const Matrix P = p_matrix(basis, y);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(P);
  if (eig.info() != Eigen::Success) throw SingularProductError("galerkin_ratio: eigen-solver failed");
  const Vector lam = eig.eigenvalues().cwiseAbs();
  const double lmax = lam.maxCoeff();
  const double lmin = lam.minCoeff();
  if (!(lmax > 0.0) || !(lmin > 0.0) || lmax / lmin > condition_cap) {
    throw SingularProductError("galerkin_ratio: P(y) singular or ill-conditioned (cond = " +
                               std::to_string(lmin > 0.0 ? lmax / lmin : INFINITY) + ")");
  }
  const Matrix& Q = eig.eigenvectors();
  PceVector c = Q * ((Q.transpose() * z).array() / eig.eigenvalues().array()).matrix();
  // one step of iterative refinement
  c += Q * ((Q.transpose() * (z - P * c)).array() / eig.eigenvalues().array()).matrix();
  return c;
}

/// Discrete projection y_k = sum_m f(xi_m) phi_k(xi_m) tau_m.
template <typename F>
PceVector project(const Basis& basis, const QuadratureRule& rule, F&& f) {
  PceVector y = PceVector::Zero(basis.size());
  Vector phi(basis.size());
  for (int m = 0; m < rule.size(); ++m) {
    basis.evaluate_into(rule.nodes(m), phi);
    y.noalias() += (rule.weights(m) * f(rule.nodes(m))) * phi;
  }
  return y;
}

/// Mean and variance of a truncated expansion.
inline double pce_mean(const PceVector& y) { return y(0); }
inline double pce_variance(const PceVector& y) { return y.tail(y.size() - 1).squaredNorm(); }

}  // namespace sgswe
