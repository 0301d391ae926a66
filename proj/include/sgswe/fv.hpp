/**
 * @file fv.hpp
 * @brief Well-balanced second-order central-upwind scheme for the stochastic
 * Galerkin shallow water system.
 *
 * Per stage: reconstruct the surface w = h + B with a generalized minmod
 * limiter, correct near-dry interface values, filter the interface heights
 * so they are positive at the quadrature nodes, desingularize the
 * velocities, estimate local speeds from the Jacobian spectra, and assemble
 * central-upwind fluxes plus the well-balanced source.
 */
#pragma once

#include "sgswe/hyper.hpp"
#include "sgswe/pce.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgswe {

/// N x K array, one PCE vector per row.
using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Grid {
  int N = 0;
  double x_left = 0.0;
  double x_right = 1.0;

  Grid() = default;
  Grid(double left, double right, int cells) : N(cells), x_left(left), x_right(right) {
    if (cells < 3) throw std::invalid_argument("Grid: need at least 3 cells");
    if (!(right > left)) throw std::invalid_argument("Grid: x_right must exceed x_left");
  }

  double dx() const { return (x_right - x_left) / N; }
  /// Interface x_{j-1/2} for j = 0..N (j = 0 is the left boundary).
  double interface(int j) const { return x_left + (x_right - x_left) * j / N; }
  double center(int i) const { return 0.5 * (interface(i) + interface(i + 1)); }
};

/// Cell averages plus the interface bottom values.
struct StateField {
  Field h_bar;    ///< N x K
  Field q_bar;    ///< N x K
  Field B_iface;  ///< (N+1) x K, row j is B at x_{j-1/2}
  Field B_bar;    ///< N x K, midpoint of adjacent interface values
  double t = 0.0;

  int cells() const { return static_cast<int>(h_bar.rows()); }
  int modes() const { return static_cast<int>(h_bar.cols()); }
};

inline Field bottom_cell_average(const Field& B_iface) {
  const Eigen::Index N = B_iface.rows() - 1;
  return 0.5 * (B_iface.topRows(N) + B_iface.bottomRows(N));
}

inline StateField make_state(Field h_bar, Field q_bar, Field B_iface, double t = 0.0) {
  if (h_bar.rows() != q_bar.rows() || h_bar.cols() != q_bar.cols() || B_iface.rows() != h_bar.rows() + 1 ||
      B_iface.cols() != h_bar.cols()) {
    throw std::invalid_argument("make_state: inconsistent field shapes");
  }
  StateField s;
  s.B_bar = bottom_cell_average(B_iface);
  s.h_bar = std::move(h_bar);
  s.q_bar = std::move(q_bar);
  s.B_iface = std::move(B_iface);
  s.t = t;
  return s;
}

enum class TimeIntegrator { ForwardEuler, SspRk2 };
enum class Boundary { ZeroOrderExtrapolation };

struct SolverConfig {
  double g = 1.0;
  double theta = 1.3;
  double delta = 1e-10;
  double cfl_safety = 0.9;
  /// Desingularization threshold; the grid spacing when unset.
  std::optional<double> epsilon_desing;
  bool filter_discharge = false;
  /// Filter interface pairs that are already positive at every node too.
  bool filter_when_positive = false;
  Boundary boundary = Boundary::ZeroOrderExtrapolation;
  TimeIntegrator time_integrator = TimeIntegrator::SspRk2;
  /// Multiplies the admissible step (c >= 1).
  double relaxation = 1.0;
  /// Only nodes where the height decreases constrain the positivity step.
  bool sign_aware_cfl = false;
  int max_step_halvings = 30;

  void validate() const {
    if (!(g > 0.0)) throw std::invalid_argument("SolverConfig: g must be > 0");
    if (!(theta >= 1.0 && theta <= 2.0)) throw std::invalid_argument("SolverConfig: theta must lie in [1, 2]");
    if (!(delta > 0.0)) throw std::invalid_argument("SolverConfig: delta must be > 0");
    if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) {
      throw std::invalid_argument("SolverConfig: cfl_safety must lie in (0, 1]");
    }
    if (epsilon_desing && !(*epsilon_desing > 0.0)) {
      throw std::invalid_argument("SolverConfig: epsilon_desing must be > 0");
    }
    if (!(relaxation >= 1.0)) throw std::invalid_argument("SolverConfig: relaxation must be >= 1");
  }

  double epsilon(const Grid& grid) const { return epsilon_desing.value_or(grid.dx()); }
};

/// Raised when a step cannot be completed; carries time and location.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double t, int index)
      : std::runtime_error(what), time(t), location(index) {}
  double time;
  int location;
};

// ---------------------------------------------------------------------------
// reconstruction

inline double minmod(double a, double b, double c) {
  if (a > 0.0 && b > 0.0 && c > 0.0) return std::min({a, b, c});
  if (a < 0.0 && b < 0.0 && c < 0.0) return std::max({a, b, c});
  return 0.0;
}

/// Generalized minmod slopes, componentwise; the two boundary cells get zero slope.
inline Field minmod_slopes(const Field& values, double theta, double dx) {
  const Eigen::Index N = values.rows();
  if (N < 3) throw std::invalid_argument("minmod_slopes: need at least 3 cells");
  Field slopes = Field::Zero(N, values.cols());
  for (Eigen::Index i = 1; i + 1 < N; ++i) {
    for (Eigen::Index k = 0; k < values.cols(); ++k) {
      const double fwd = values(i + 1, k) - values(i, k);
      const double bwd = values(i, k) - values(i - 1, k);
      const double ctr = values(i + 1, k) - values(i - 1, k);
      slopes(i, k) = minmod(theta * fwd / dx, ctr / (2.0 * dx), theta * bwd / dx);
    }
  }
  return slopes;
}

/// Values on both sides of every interface x_{j-1/2}, j = 0..N. `minus` is
/// the limit from the left cell, `plus` from the right cell.
struct InterfaceValues {
  Field w_minus, w_plus;
  Field h_minus, h_plus;
  Field q_minus, q_plus;
};

inline InterfaceValues reconstruct_interfaces(const StateField& state, const Grid& grid, double theta) {
  const int N = state.cells();
  const int K = state.modes();
  const double dx = grid.dx();
  const Field w_bar = state.h_bar + state.B_bar;
  const Field sw = minmod_slopes(w_bar, theta, dx);
  const Field sq = minmod_slopes(state.q_bar, theta, dx);

  InterfaceValues iv;
  iv.w_minus.resize(N + 1, K);
  iv.w_plus.resize(N + 1, K);
  iv.q_minus.resize(N + 1, K);
  iv.q_plus.resize(N + 1, K);
  for (int i = 0; i < N; ++i) {
    iv.w_plus.row(i) = w_bar.row(i) - 0.5 * dx * sw.row(i);
    iv.w_minus.row(i + 1) = w_bar.row(i) + 0.5 * dx * sw.row(i);
    iv.q_plus.row(i) = state.q_bar.row(i) - 0.5 * dx * sq.row(i);
    iv.q_minus.row(i + 1) = state.q_bar.row(i) + 0.5 * dx * sq.row(i);
  }
  // zero-order extrapolation ghost cells
  iv.w_minus.row(0) = iv.w_plus.row(0);
  iv.q_minus.row(0) = iv.q_plus.row(0);
  iv.w_plus.row(N) = iv.w_minus.row(N);
  iv.q_plus.row(N) = iv.q_minus.row(N);

  iv.h_minus = iv.w_minus - state.B_iface;
  iv.h_plus = iv.w_plus - state.B_iface;
  return iv;
}

// ---------------------------------------------------------------------------
// positivity corrections

/// Smallest mu' in [0, 1] with y_1 + (1 - mu') (p(xi_j) - y_1) >= 0 at every node.
inline double filter_weight(const PceVector& y, const NodeSet& nodes) {
  const double mean = y(0);
  if (!(mean > 0.0)) throw std::domain_error("positivity_filter: first coefficient must be positive");
  const Vector p = nodes.values(y);
  double mu = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p(j) < 0.0) mu = std::max(mu, -p(j) / (mean - p(j)));
  }
  return mu;
}

struct FilterResult {
  PceVector y_minus;
  PceVector y_plus;
  double mu = 0.0;
};

inline PceVector shrink_tail(PceVector y, double mu) {
  y.tail(y.size() - 1) *= (1.0 - mu);
  return y;
}

/// Filters a pair of expansions with a shared parameter mu so that both are
/// nonnegative at the nodes. Pairs that are exactly zero (dry) are left alone.
inline FilterResult positivity_filter(const PceVector& y_minus, const PceVector& y_plus, const NodeSet& nodes,
                                      double delta) {
  double mu_prime = 0.0;
  for (const PceVector* y : {&y_minus, &y_plus}) {
    if (y->isZero(0.0)) continue;
    mu_prime = std::max(mu_prime, filter_weight(*y, nodes));
  }
  FilterResult out;
  out.mu = std::min(mu_prime + delta, 1.0);
  out.y_minus = shrink_tail(y_minus, out.mu);
  out.y_plus = shrink_tail(y_plus, out.mu);
  return out;
}

/// Sets a side with nonpositive mean to zero and the opposite side to twice the
/// cell average. `h_right` is h^-_{i+1/2}, `h_left` is h^+_{i-1/2}.
inline std::pair<PceVector, PceVector> near_dry_correction(const PceVector& h_bar, const PceVector& h_right,
                                                            const PceVector& h_left) {
  const bool right_dry = !(h_right(0) > 0.0);
  const bool left_dry = !(h_left(0) > 0.0);
  if (right_dry && left_dry) return {h_bar, h_bar};
  if (right_dry) return {PceVector::Zero(h_bar.size()), 2.0 * h_bar};
  if (left_dry) return {2.0 * h_bar, PceVector::Zero(h_bar.size())};
  return {h_right, h_left};
}

/// Applies near-dry correction and filtering to the interface pair of cell
/// i, resetting the cell average to the midpoint of the filtered values.
/// Returns true when the filter was applied.
inline bool apply_filter_to_cell(InterfaceValues& iv, StateField& state, int i, const NodeSet& nodes,
                                 const SolverConfig& cfg) {
  const PceVector h_bar = state.h_bar.row(i).transpose();
  auto [h_right, h_left] =
      near_dry_correction(h_bar, iv.h_minus.row(i + 1).transpose(), iv.h_plus.row(i).transpose());

  bool filtered = false;
  const bool positive = nodes.min_value(h_right) > 0.0 && nodes.min_value(h_left) > 0.0;
  if (cfg.filter_when_positive || !positive) {
    const FilterResult f = positivity_filter(h_left, h_right, nodes, cfg.delta);
    h_left = f.y_minus;
    h_right = f.y_plus;
    state.h_bar.row(i) = 0.5 * (h_left + h_right).transpose();
    filtered = true;
  }
  iv.h_plus.row(i) = h_left.transpose();
  iv.h_minus.row(i + 1) = h_right.transpose();

  if (cfg.filter_discharge) {
    // sign-preserving variant: q keeps the sign of its mean at the nodes
    PceVector q_left = iv.q_plus.row(i).transpose();
    PceVector q_right = iv.q_minus.row(i + 1).transpose();
    const double sl = q_left(0) > 0.0 ? 1.0 : (q_left(0) < 0.0 ? -1.0 : 0.0);
    const double sr = q_right(0) > 0.0 ? 1.0 : (q_right(0) < 0.0 ? -1.0 : 0.0);
    if (sl != 0.0 && sr != 0.0) {
      const bool signed_ok = nodes.min_value(sl * q_left) > 0.0 && nodes.min_value(sr * q_right) > 0.0;
      if (cfg.filter_when_positive || !signed_ok) {
        const FilterResult f = positivity_filter(sl * q_left, sr * q_right, nodes, cfg.delta);
        q_left = sl * f.y_minus;
        q_right = sr * f.y_plus;
        iv.q_plus.row(i) = q_left.transpose();
        iv.q_minus.row(i + 1) = q_right.transpose();
        state.q_bar.row(i) = 0.5 * (q_left + q_right).transpose();
        filtered = true;
      }
    }
  }
  return filtered;
}

struct Desingularized {
  PceVector u;       ///< velocity coefficients
  PceVector q;       ///< discharge recomputed as P(h) u
  Matrix h_inverse;  ///< regularized P(h)^{-1}
  Matrix eigenvectors;  ///< of P(h)
  Vector eigenvalues;   ///< of P(h), ascending
};

/// Regularized eigenvalue inverse sqrt(2) lam / sqrt(lam^4 + max(lam^4, eps^4)).
inline double desingularized_inverse(double lam, double eps) {
  const double l4 = lam * lam * lam * lam;
  const double e4 = eps * eps * eps * eps;
  const double denom = std::sqrt(l4 + std::max(l4, e4));
  return denom > 0.0 ? std::sqrt(2.0) * lam / denom : 0.0;
}

inline Desingularized desingularized_velocity(const Basis& basis, const PceVector& h, const PceVector& q,
                                              double eps) {
  const Matrix Ph = p_matrix(basis, h);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Ph);
  const Matrix& Q = eig.eigenvectors();
  Vector lam_cor(eig.eigenvalues().size());
  for (Eigen::Index k = 0; k < lam_cor.size(); ++k) lam_cor(k) = desingularized_inverse(eig.eigenvalues()(k), eps);
  Desingularized d;
  d.h_inverse = Q * lam_cor.asDiagonal() * Q.transpose();
  d.u = d.h_inverse * q;
  d.q = Ph * d.u;
  d.eigenvectors = Q;
  d.eigenvalues = eig.eigenvalues();
  return d;
}

// ---------------------------------------------------------------------------
// fluxes and sources

inline Vector well_balanced_source(const Basis& basis, const PceVector& h_bar, const PceVector& B_left,
                                   const PceVector& B_right, double dx, double g) {
  const int K = basis.size();
  Vector S = Vector::Zero(2 * K);
  S.tail(K) = -(g / dx) * (p_matrix(basis, h_bar) * (B_right - B_left));
  return S;
}

/// Below this a^+ - a^- the interface is treated as stagnant.
inline constexpr double kDegenerateSpeedGap = 1e-12;

inline Vector cu_flux(const Vector& F_minus, const Vector& F_plus, const Vector& U_minus, const Vector& U_plus,
                      const WaveSpeeds& s) {
  const double gap = s.a_plus - s.a_minus;
  if (gap < kDegenerateSpeedGap) return 0.5 * (F_minus + F_plus);
  return (s.a_plus * F_minus - s.a_minus * F_plus) / gap + (s.a_plus * s.a_minus / gap) * (U_plus - U_minus);
}

/// Interface state after desingularization with flux and Jacobian spectrum.
struct InterfaceSide {
  Vector U;
  Vector F;
  SpectrumBounds spectrum;
  bool dry = false;
};

/// P(h) whose smallest eigenvalue is below this fraction of max(1, largest)
/// is zero up to rounding: the state is dry and outside the hyperbolic set.
inline constexpr double kDryEigenvalue = 1e-12;

inline InterfaceSide prepare_side(const Basis& basis, const PceVector& h, const PceVector& q, double g,
                                  double eps) {
  const Desingularized d = desingularized_velocity(basis, h, q, eps);
  const Matrix Ph = p_matrix(basis, h);
  const Matrix Pq = p_matrix(basis, d.q);
  const Matrix Pu = p_matrix(basis, d.u);
  InterfaceSide side;
  side.U.resize(2 * h.size());
  side.U << h, d.q;
  side.F = sg_flux(basis, h, d.q, d.u, g);
  const double lam_min = d.eigenvalues(0);
  const double lam_max = d.eigenvalues(d.eigenvalues.size() - 1);
  side.dry = !(lam_min > kDryEigenvalue * std::max(1.0, lam_max));
  // q = P(h) u, so the exact inverse gives the true Jacobian at (h, q); the
  // regularized one would break its similarity to a symmetric matrix.
  // The near-zero cluster of a dry state may split into a complex pair of
  // rounding size, and only the real parts enter the speeds.
  const Matrix inv = side.dry ? d.h_inverse
                              : Matrix(d.eigenvectors * d.eigenvalues.cwiseInverse().asDiagonal() *
                                       d.eigenvectors.transpose());
  const Matrix J = sg_jacobian(Ph, Pq, Pu, inv, g);
  side.spectrum = side.dry ? jacobian_spectrum(J, std::numeric_limits<double>::infinity()) : jacobian_spectrum(J);
  if (side.dry) side.spectrum.imag_ratio = 0.0;
  return side;
}

/// Central-upwind flux between two states, velocities desingularized with eps.
inline Vector cu_flux(const Basis& basis, const SgState& U_minus, const SgState& U_plus, double g, double eps) {
  const InterfaceSide l = prepare_side(basis, U_minus.h, U_minus.q, g, eps);
  const InterfaceSide r = prepare_side(basis, U_plus.h, U_plus.q, g, eps);
  return cu_flux(l.F, r.F, l.U, r.U, wave_speeds(l.spectrum, r.spectrum));
}

// ---------------------------------------------------------------------------
// time step

struct TimeStepBound {
  double dt = 0.0;        ///< safety * relaxation * min(dt_h, dt_speed)
  double dt_h = 0.0;      ///< positivity bound over cells and nodes
  double dt_speed = 0.0;  ///< wave-speed bound
};

/// `flux_h` holds the height part of the numerical flux at the N+1 interfaces.
inline TimeStepBound compute_dt(const Field& h_bar, const Field& flux_h, const std::vector<WaveSpeeds>& speeds,
                                const NodeSet& nodes, double dx, const SolverConfig& cfg) {
  const double inf = std::numeric_limits<double>::infinity();
  TimeStepBound b;
  b.dt_h = inf;
  b.dt_speed = inf;
  const Eigen::Index N = h_bar.rows();
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector hv = nodes.phi * h_bar.row(i).transpose();
    const Vector dv = nodes.phi * (flux_h.row(i + 1) - flux_h.row(i)).transpose();
    for (Eigen::Index j = 0; j < hv.size(); ++j) {
      if (dv(j) == 0.0) continue;
      if (cfg.sign_aware_cfl && dv(j) < 0.0) continue;
      b.dt_h = std::min(b.dt_h, dx * std::abs(hv(j) / dv(j)));
    }
  }
  for (const WaveSpeeds& s : speeds) {
    const double a = std::max(s.a_plus, -s.a_minus);
    if (a > 0.0) b.dt_speed = std::min(b.dt_speed, dx / a);
  }
  b.dt = cfg.cfl_safety * cfg.relaxation * std::min(b.dt_h, b.dt_speed);
  if (!(b.dt > 0.0) || !std::isfinite(b.dt)) {
    std::ostringstream msg;
    msg << "compute_dt: invalid time step " << b.dt;
    throw SolverError(msg.str(), std::nan(""), -1);
  }
  return b;
}

// ---------------------------------------------------------------------------
// solver

struct StageResult {
  StateField filtered;  ///< state after the cell-average resets of the filter
  Field rhs_h;
  Field rhs_q;
  Field flux_h;
  std::vector<WaveSpeeds> speeds;
  int filter_activations = 0;
  double max_imag_ratio = 0.0;
  int dry_sides = 0;
};

struct StepDiagnostics {
  int step = 0;
  double t = 0.0;  ///< time after the step
  double dt = 0.0;
  double dt_h = 0.0;
  double dt_speed = 0.0;
  double min_node_height = 0.0;
  int filter_activations = 0;
  double max_imag_ratio = 0.0;
  int dry_sides = 0;  ///< interface sides excluded from the imaginary-part check
  int rejections = 0;
  int positivity_violations = 0;
};

struct Trajectory {
  StateField final_state;
  std::vector<StepDiagnostics> steps;
};

using SnapshotSink = std::function<void(const StateField&, const StepDiagnostics&)>;

/**
 * Semi-discrete central-upwind solver bound to a basis, positivity rule and
 * grid. All per-interface work inside a stage is independent.
 */
class Solver {
 public:
  Solver(Basis basis, QuadratureRule rule, Grid grid, SolverConfig cfg)
      : basis_(std::move(basis)), nodes_(basis_, std::move(rule)), grid_(grid), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (nodes_.rule.exactness_degree < 3 * (basis_.size() - 1)) {
      throw std::invalid_argument("Solver: positivity rule must be exact for degree 3(K-1)");
    }
  }

  const Basis& basis() const { return basis_; }
  const NodeSet& nodes() const { return nodes_; }
  const Grid& grid() const { return grid_; }
  const SolverConfig& config() const { return cfg_; }

  /// Smallest value of any cell average at any node.
  double min_node_height(const StateField& s) const {
    return (s.h_bar * nodes_.phi.transpose()).minCoeff();
  }

  int positivity_violations(const StateField& s) const {
    const Field v = s.h_bar * nodes_.phi.transpose();
    int count = 0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) count += v.row(i).minCoeff() > 0.0 ? 0 : 1;
    return count;
  }

  StageResult evaluate(const StateField& state) const {
    const int N = state.cells();
    const int K = state.modes();
    if (N != grid_.N || K != basis_.size()) throw std::invalid_argument("Solver: state does not match grid/basis");
    const double dx = grid_.dx();
    const double eps = cfg_.epsilon(grid_);

    StageResult r;
    r.filtered = state;
    InterfaceValues iv = reconstruct_interfaces(state, grid_, cfg_.theta);
    for (int i = 0; i < N; ++i) {
      if (apply_filter_to_cell(iv, r.filtered, i, nodes_, cfg_)) ++r.filter_activations;
    }
    iv.h_minus.row(0) = iv.h_plus.row(0);
    iv.q_minus.row(0) = iv.q_plus.row(0);
    iv.h_plus.row(N) = iv.h_minus.row(N);
    iv.q_plus.row(N) = iv.q_minus.row(N);

    Field flux_q(N + 1, K);
    r.flux_h.resize(N + 1, K);
    r.speeds.resize(static_cast<std::size_t>(N + 1));
    for (int j = 0; j <= N; ++j) {
      try {
        const InterfaceSide left = prepare_side(basis_, iv.h_minus.row(j).transpose(), iv.q_minus.row(j).transpose(),
                                                cfg_.g, eps);
        const InterfaceSide right =
            prepare_side(basis_, iv.h_plus.row(j).transpose(), iv.q_plus.row(j).transpose(), cfg_.g, eps);
        const WaveSpeeds s = wave_speeds(left.spectrum, right.spectrum);
        const Vector F = cu_flux(left.F, right.F, left.U, right.U, s);
        r.flux_h.row(j) = F.head(K).transpose();
        flux_q.row(j) = F.tail(K).transpose();
        r.speeds[static_cast<std::size_t>(j)] = s;
        r.max_imag_ratio = std::max(r.max_imag_ratio, s.imag_ratio);
        r.dry_sides += (left.dry ? 1 : 0) + (right.dry ? 1 : 0);
      } catch (const HyperbolicityLost& e) {
        std::ostringstream msg;
        msg.precision(17);
        msg << e.what() << " at interface " << j << " (x = " << grid_.interface(j) << ", t = " << state.t
            << ")\n  h- = " << iv.h_minus.row(j) << "\n  h+ = " << iv.h_plus.row(j) << "\n  q- = " << iv.q_minus.row(j)
            << "\n  q+ = " << iv.q_plus.row(j);
        throw SolverError(msg.str(), state.t, j);
      }
    }

    r.rhs_h.resize(N, K);
    r.rhs_q.resize(N, K);
    for (int i = 0; i < N; ++i) {
      const Vector S = well_balanced_source(basis_, r.filtered.h_bar.row(i).transpose(), state.B_iface.row(i).transpose(),
                                            state.B_iface.row(i + 1).transpose(), dx, cfg_.g);
      r.rhs_h.row(i) = -(r.flux_h.row(i + 1) - r.flux_h.row(i)) / dx;
      r.rhs_q.row(i) = -(flux_q.row(i + 1) - flux_q.row(i)) / dx + S.tail(K).transpose();
    }
    return r;
  }

  /// Advances one step of at most `dt_cap`.
  std::pair<StateField, StepDiagnostics> step(const StateField& state,
                                              double dt_cap = std::numeric_limits<double>::infinity()) const {
    check_state(state);
    const StageResult s1 = evaluate(state);
    const TimeStepBound bound = compute_dt(s1.filtered.h_bar, s1.flux_h, s1.speeds, nodes_, grid_.dx(), cfg_);

    StepDiagnostics d;
    d.dt_h = bound.dt_h;
    d.dt_speed = bound.dt_speed;
    d.filter_activations = s1.filter_activations;
    d.max_imag_ratio = s1.max_imag_ratio;
    d.dry_sides = s1.dry_sides;
    double dt = std::min(bound.dt, dt_cap);

    for (int attempt = 0; attempt <= cfg_.max_step_halvings; ++attempt) {
      StateField next = forward_euler(s1, dt);
      bool ok = positivity_violations(next) == 0;
      if (ok && cfg_.time_integrator == TimeIntegrator::SspRk2) {
        const StageResult s2 = evaluate(next);
        StateField second = forward_euler(s2, dt);
        ok = positivity_violations(second) == 0;
        if (ok) {
          d.filter_activations += s2.filter_activations;
          d.max_imag_ratio = std::max(d.max_imag_ratio, s2.max_imag_ratio);
          d.dry_sides = std::max(d.dry_sides, s2.dry_sides);
          next.h_bar = 0.5 * (s1.filtered.h_bar + second.h_bar);
          next.q_bar = 0.5 * (s1.filtered.q_bar + second.q_bar);
        }
      }
      if (ok) {
        next.t = state.t + dt;
        d.t = next.t;
        d.dt = dt;
        d.positivity_violations = positivity_violations(next);
        d.min_node_height = min_node_height(next);
        return {std::move(next), d};
      }
      ++d.rejections;
      dt *= 0.5;
    }
    throw SolverError("step: node positivity could not be restored by step halving", state.t, -1);
  }

  /// Steps until t_final, clipping the last step to land on it.
  Trajectory run(const StateField& initial, double t_final, const SnapshotSink& sink = {}) const {
    if (t_final < initial.t) throw std::invalid_argument("run: t_final precedes the initial time");
    Trajectory traj;
    traj.final_state = initial;
    int n = 0;
    while (traj.final_state.t < t_final) {
      const double remaining = t_final - traj.final_state.t;
      auto [next, diag] = step(traj.final_state, remaining);
      diag.step = ++n;
      if (t_final - next.t <= 1e-14 * std::max(1.0, std::abs(t_final))) next.t = t_final;
      diag.t = next.t;
      traj.final_state = std::move(next);
      if (sink) sink(traj.final_state, diag);
      traj.steps.push_back(diag);
    }
    return traj;
  }

 private:
  void check_state(const StateField& s) const {
    if (!s.h_bar.allFinite() || !s.q_bar.allFinite()) throw SolverError("step: non-finite state", s.t, -1);
    const Field v = s.h_bar * nodes_.phi.transpose();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      if (!(v.row(i).minCoeff() > 0.0)) {
        std::ostringstream msg;
        msg << "step: cell " << i << " not positive at the quadrature nodes (min " << v.row(i).minCoeff() << ")";
        throw SolverError(msg.str(), s.t, static_cast<int>(i));
      }
    }
  }

  StateField forward_euler(const StageResult& s, double dt) const {
    StateField next = s.filtered;
    next.h_bar += dt * s.rhs_h;
    next.q_bar += dt * s.rhs_q;
    return next;
  }

  Basis basis_;
  NodeSet nodes_;
  Grid grid_;
  SolverConfig cfg_;
};

}  // namespace sgswe
