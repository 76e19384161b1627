#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lyapsample/bounds.hpp"
#include "lyapsample/expr.hpp"
#include "lyapsample/geometry.hpp"
#include "lyapsample/system.hpp"
#include "lyapsample/verifier.hpp"

namespace lyapsample {

class NotLocallyStableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kEquilibriumTol = 1e-9;

/// Jacobians at the origin of every region field whose region touches 0.
inline std::vector<Eigen::MatrixXd> linearize(const PiecewiseSystem& sys) {
  const int n = sys.dim();
  const std::vector<double> zero(static_cast<std::size_t>(n), 0.0);
  std::vector<Eigen::MatrixXd> out;
  for (int r : region_of(sys, zero)) {
    const double target = 0.0;
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i) {
      const auto vg = eval_grad(sys.region(r).field[static_cast<std::size_t>(i)], zero);
      if (std::abs(vg.value - target) > kEquilibriumTol) {
        throw std::invalid_argument("origin is not an equilibrium of region " + std::to_string(r + 1) +
                                    " (component " + std::to_string(i + 1) + " = " + std::to_string(vg.value) + ")");
      }
      for (int j = 0; j < n; ++j) A(i, j) = vg.gradient[static_cast<std::size_t>(j)];
    }
    out.push_back(std::move(A));
  }
  return out;
}

inline double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.rows() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {
// (I - A^T (x) A^T) restricted to column-major vec ordering.
inline Eigen::MatrixXd stein_operator(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Identity(n * n, n * n);
  const Eigen::MatrixXd At = A.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) K.block(i * n, j * n, n, n) -= At(i, j) * At;
  }
  return K;
}

inline Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index n) {
  Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n);
  return 0.5 * (P + P.transpose());
}
}  // namespace detail

/// P solving A^T P A - P = -Q.
inline Eigen::MatrixXd solve_dlyap(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  if (A.rows() != A.cols() || Q.rows() != A.rows() || Q.cols() != A.cols()) {
    throw std::invalid_argument("solve_dlyap: dimension mismatch");
  }
  const double rad = spectral_radius(A);
  if (!(rad < 1.0)) {
    throw NotLocallyStableError("linearization is not stable (spectral radius " + std::to_string(rad) + ")");
  }
  const Eigen::Index n = A.rows();
  const Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n);
  const Eigen::VectorXd p = detail::stein_operator(A).fullPivLu().solve(q);
  return detail::unvec(p, n);
}

inline Eigen::MatrixXd solve_dlyap(const Eigen::MatrixXd& A) {
  return solve_dlyap(A, Eigen::MatrixXd::Identity(A.rows(), A.cols()));
}

inline double dlyap_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q) {
  return (A.transpose() * P * A - P + Q).cwiseAbs().maxCoeff();
}

/// Common quadratic Lyapunov matrix for several linearizations, from the
/// summed Stein system, then checked branch by branch.
inline Eigen::MatrixXd common_dlyap(const std::vector<Eigen::MatrixXd>& As, const Eigen::MatrixXd& Q) {
  if (As.empty()) throw std::invalid_argument("common_dlyap: no matrices");
  if (As.size() == 1) return solve_dlyap(As.front(), Q);
  const Eigen::Index n = As.front().rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n * n, n * n);
  for (const auto& A : As) {
    if (!(spectral_radius(A) < 1.0)) throw NotLocallyStableError("a linearized branch is not stable");
    K += detail::stein_operator(A);
  }
  const Eigen::VectorXd q = static_cast<double>(As.size()) * Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n);
  const Eigen::MatrixXd P = detail::unvec(K.fullPivLu().solve(q), n);
  if (!is_positive_definite(P)) throw NotLocallyStableError("no common Lyapunov matrix found; supply P_L manually");
  for (const auto& A : As) {
    const Eigen::MatrixXd D = P - A.transpose() * P * A;
    if (!is_positive_definite(0.5 * (D + D.transpose()))) {
      throw NotLocallyStableError("summed solution does not decrease on every branch; supply P_L manually");
    }
  }
  return P;
}

/// Largest c with {x : x^T P x <= c} inside the box around the origin.
inline double max_levelset_in_box(const Eigen::MatrixXd& P, const HyperRect& N1) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(P);
  if (!lu.isInvertible()) throw std::invalid_argument("max_levelset_in_box: singular P");
  const Eigen::MatrixXd Pinv = lu.inverse();
  double c = rounding::kInf;
  for (int i = 0; i < N1.dim(); ++i) {
    const double r = std::min(N1.upper(i), -N1.lower(i));
    if (r < 0.0) throw std::invalid_argument("max_levelset_in_box: box does not contain the origin");
    c = std::min(c, r * r / Pinv(i, i));
  }
  return c;
}

/// Half widths of the bounding box of {x^T P x <= c}.
inline std::vector<double> ellipsoid_half_widths(const Eigen::MatrixXd& P, double c) {
  const Eigen::MatrixXd Pinv = P.inverse();
  std::vector<double> r;
  for (Eigen::Index i = 0; i < P.rows(); ++i) r.push_back(std::sqrt(c * Pinv(i, i)));
  return r;
}

struct LocalCert {
  std::vector<Eigen::MatrixXd> A_lin;
  Eigen::MatrixXd P_L;
  HyperRect N1;
  double level_L = 0.0;
  double rho_L = 0.999;
  bool verified = false;
  std::size_t good = 0;
  std::size_t wrong = 0;
  std::size_t hole_checked = 0;
  RunStats stats;
  std::string note;
};

/// Sampled check that V_L(x) = x^T P_L x decreases on N1 (all branches),
/// plus a one-step reach check for undecided boxes that meet L, so that
/// L = {V_L <= level} is invariant.
inline LocalCert verify_local(std::shared_ptr<const PiecewiseSystem> sys, const Eigen::MatrixXd& P_L,
                              const HyperRect& N1, double delta_min, double rho_L = 0.999,
                              BoundMethod method = BoundMethod::kBest, int workers = 1) {
  LocalCert lc;
  lc.P_L = P_L;
  lc.N1 = N1;
  lc.rho_L = rho_L;
  lc.A_lin = linearize(*sys);
  lc.level_L = max_levelset_in_box(P_L, N1);
  if (!is_positive_definite(P_L)) throw std::invalid_argument("P_L must be symmetric positive definite");

  Objective obj;
  obj.kind = ObjectiveKind::kLocal;
  obj.sys = sys;
  obj.P = P_L;
  obj.rho = rho_L;
  obj.M = 1;
  obj.validate();

  VerifyConfig cfg;
  cfg.S = N1;
  cfg.delta_min = delta_min;
  cfg.method = method;
  cfg.workers = workers;
  const Certificate cert = construct_A(cfg, obj);
  lc.stats = cert.stats;
  lc.good = cert.ledger.good.size();
  lc.wrong = cert.ledger.wrong.size();

  // Invariance of L: every point of L in an undecided box must map into L.
  auto meets_L = [&](const HyperRect& b) {
    const auto iv = b.to_intervals();
    return quadratic_form(P_L, std::span<const Interval>(iv)).lo() <= lc.level_L;
  };
  std::vector<HyperRect> holes;
  for (const auto& w : cert.ledger.wrong) {
    if (meets_L(w.box)) holes.push_back(w.box);
  }
  lc.hole_checked = holes.size();
  auto stays_in_L = [&](const IntervalVector& img) {
    return quadratic_form(P_L, std::span<const Interval>(img)).hi() <= lc.level_L;
  };
  lc.verified = reach_into(*sys, holes, delta_min / 4.0, stays_in_L, meets_L);
  if (!lc.verified) lc.note = "undecided boxes inside L could not be shown to map back into L";
  return lc;
}

}  // namespace lyapsample
