#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lyapsample/dual.hpp"
#include "lyapsample/expr.hpp"
#include "lyapsample/geometry.hpp"
#include "lyapsample/interval.hpp"
#include "lyapsample/system.hpp"

namespace lyapsample {

enum class BoundMethod { kSplit, kCombined, kBest };

inline const char* to_string(BoundMethod m) {
  switch (m) {
    case BoundMethod::kSplit: return "split";
    case BoundMethod::kCombined: return "combined";
    case BoundMethod::kBest: return "best";
  }
  return "split";
}

inline BoundMethod parse_bound_method(const std::string& s) {
  if (s == "split") return BoundMethod::kSplit;
  if (s == "combined") return BoundMethod::kCombined;
  if (s == "best") return BoundMethod::kBest;
  throw std::invalid_argument("unknown bound method '" + s + "' (expected split|combined|best)");
}

struct BoundCoeffs {
  double a = 0.0;
  double b = 0.0;
  BoundMethod method = BoundMethod::kSplit;
};

struct GammaBar {
  double a = 0.0;
  double b = 0.0;
  double eps = 0.0;
  double value = 0.0;
};

/// a * xi + b + eps with a, b maximized over branches (rounded upward).
inline GammaBar gamma_bar(const std::vector<BoundCoeffs>& per_branch, double eps, double xi) {
  if (per_branch.empty()) throw std::invalid_argument("gamma_bar: no branch coefficients");
  GammaBar g;
  for (const auto& c : per_branch) {
    g.a = std::max(g.a, c.a);
    g.b = std::max(g.b, c.b);
  }
  g.eps = eps;
  g.value = (Interval(g.a) * Interval(xi) + Interval(g.b) + Interval(eps)).hi();
  return g;
}

// ---------------------------------------------------------------------------
// Coefficients from derivative enclosures.

/// Upper bound of the 1-norm of an interval gradient.
inline double grad_coeff_from(const IntervalVector& g) {
  Interval s(0.0);
  for (const auto& gi : g) s = s + Interval(magnitude_upper(gi));
  return s.hi();
}

/// 0.5 * tau^T |H| tau, rounded upward.
inline double lagrange_b_from(const IntervalMatrix& H, const std::vector<double>& tau) {
  Interval s(0.0);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    for (std::size_t j = 0; j < tau.size(); ++j) {
      s = s + Interval(magnitude_upper(H(i, j))) * Interval(tau[i]) * Interval(tau[j]);
    }
  }
  return (Interval(0.5) * s).hi();
}

/// Dual-norm bound of g + 0.5 H (X - xs) over the box offsets.
inline double combined_a_from(const IntervalVector& g, const IntervalMatrix& H, const HyperRect& box) {
  const std::size_t n = g.size();
  Interval s(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Interval row = g[i];
    for (std::size_t j = 0; j < n; ++j) {
      const Interval d(box.lower_offset(static_cast<int>(j)), box.upper_offset(static_cast<int>(j)));
      row = row + Interval(0.5) * H(i, j) * d;
    }
    s = s + Interval(magnitude_upper(row));
  }
  return s.hi();
}

inline std::vector<Dual2<Interval>> point_seeds(const std::vector<double>& x) {
  IntervalVector iv(x.begin(), x.end());
  return interval_seeds(iv);
}

// Coefficients for a plain smooth scalar F given as an expression.
inline double grad_coeff_a(const Expr& F, const std::vector<double>& xs) {
  const auto seeds = point_seeds(xs);
  return grad_coeff_from(to_enclosure(F.eval(std::span<const Dual2<Interval>>(seeds))).gradient);
}

inline double lagrange_b(const Expr& F, const HyperRect& box) {
  const auto X = box.to_intervals();
  return lagrange_b_from(eval_hess_interval(F, X).hessian, tau_of(box.delta));
}

inline BoundCoeffs combined_coeff(const Expr& F, const HyperRect& box) {
  const auto seeds = point_seeds(box.center);
  const auto at = to_enclosure(F.eval(std::span<const Dual2<Interval>>(seeds)));
  const auto X = box.to_intervals();
  return {combined_a_from(at.gradient, eval_hess_interval(F, X).hessian, box), 0.0, BoundMethod::kCombined};
}

// ---------------------------------------------------------------------------
// Objectives: the scalar functions F whose sign is certified.

enum class ObjectiveKind {
  kFslfDecrease,  // V(G^M x) - rho V(x)
  kWValue,        // W(x) = sum_{j<M} V(G^j x)
  kWDecrease,     // W(G x) - rho W(x)
  kWDot,          // grad W(x) . G_c(x)
  kLocal,         // V_L(G x) - rho_L V_L(x)
};

struct Objective {
  ObjectiveKind kind = ObjectiveKind::kFslfDecrease;
  std::shared_ptr<const PiecewiseSystem> sys;  // discrete map G
  std::shared_ptr<const PiecewiseSystem> ct;   // continuous field, kWDot only
  Eigen::MatrixXd P;
  double rho = 0.999;
  int M = 1;

  int dim() const { return sys->dim(); }

  /// Number of map applications along a branch.
  int horizon() const {
    switch (kind) {
      case ObjectiveKind::kFslfDecrease: return M;
      case ObjectiveKind::kWValue: return M - 1;
      case ObjectiveKind::kWDecrease: return M;
      case ObjectiveKind::kWDot: return std::max(M - 1, 1);
      case ObjectiveKind::kLocal: return 1;
    }
    return M;
  }

  void validate() const {
    if (!sys || sys->mode() != Mode::kDiscrete) throw std::invalid_argument("objective needs a discrete map");
    if (kind == ObjectiveKind::kWDot && (!ct || ct->mode() != Mode::kContinuous)) {
      throw std::invalid_argument("objective needs the continuous field");
    }
    if (M < 1) throw std::invalid_argument("horizon M must be >= 1");
    if (P.rows() != dim() || P.cols() != dim()) throw std::invalid_argument("P dimension mismatch");
  }
};

inline Interval interval_of(double v) { return Interval(v); }
inline Interval interval_of(const Interval& v) { return v; }
template <class T>
Interval interval_of(const Dual2<T>& v) {
  return interval_of(v.value());
}
template <class T>
Interval interval_of(const Tangent<T>& v) {
  return interval_of(v.v);
}

template <class T>
IntervalVector interval_state(const std::vector<T>& x) {
  IntervalVector out;
  out.reserve(x.size());
  for (const auto& v : x) out.push_back(interval_of(v));
  return out;
}

namespace detail {

template <class T>
std::vector<std::vector<T>> path_along(const PiecewiseSystem& sys, std::vector<T> x0, const BranchSequence& seq,
                                       int steps) {
  std::vector<std::vector<T>> path;
  path.reserve(static_cast<std::size_t>(steps) + 1);
  path.push_back(std::move(x0));
  for (int k = 0; k < steps; ++k) {
    const auto& cur = path.back();
    path.push_back(apply_field(sys, seq[static_cast<std::size_t>(k)], std::span<const T>(cur)));
  }
  return path;
}

template <class T>
T V_of(const Eigen::MatrixXd& P, const std::vector<T>& x) {
  return quadratic_form(P, std::span<const T>(x));
}

template <class T>
T W_sum(const Eigen::MatrixXd& P, const std::vector<std::vector<T>>& path, int from, int to) {
  T acc = V_of(P, path[static_cast<std::size_t>(from)]);
  for (int j = from + 1; j < to; ++j) acc = acc + V_of(P, path[static_cast<std::size_t>(j)]);
  return acc;
}

}  // namespace detail

/// F along a fixed branch sequence, as a smooth function of x over any
/// scalar type.
template <class S>
S objective_on_branch(const Objective& obj, const BranchSequence& seq, std::span<const S> x) {
  const int h = obj.horizon();
  if (static_cast<int>(seq.size()) < h) throw std::invalid_argument("branch sequence shorter than the horizon");
  std::vector<S> x0(x.begin(), x.end());
  const S rho = constant_like(x[0], obj.rho);
  switch (obj.kind) {
    case ObjectiveKind::kFslfDecrease: {
      const auto path = detail::path_along(*obj.sys, std::move(x0), seq, h);
      return detail::V_of(obj.P, path.back()) - rho * detail::V_of(obj.P, path.front());
    }
    case ObjectiveKind::kLocal: {
      const auto path = detail::path_along(*obj.sys, std::move(x0), seq, 1);
      return detail::V_of(obj.P, path.back()) - rho * detail::V_of(obj.P, path.front());
    }
    case ObjectiveKind::kWValue: {
      const auto path = detail::path_along(*obj.sys, std::move(x0), seq, h);
      return detail::W_sum(obj.P, path, 0, obj.M);
    }
    case ObjectiveKind::kWDecrease: {
      const auto path = detail::path_along(*obj.sys, std::move(x0), seq, h);
      return detail::W_sum(obj.P, path, 1, obj.M + 1) - rho * detail::W_sum(obj.P, path, 0, obj.M);
    }
    case ObjectiveKind::kWDot: {
      const auto gc = apply_field(*obj.ct, seq[0], x);
      std::vector<Tangent<S>> t;
      t.reserve(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) t.push_back({x[i], gc[i]});
      const auto path = detail::path_along(*obj.sys, std::move(t), seq, obj.M - 1);
      return detail::W_sum(obj.P, path, 0, obj.M).d;
    }
  }
  throw std::logic_error("unknown objective kind");
}

template <class S>
S objective_on_branch(const Objective& obj, const BranchSequence& seq, const std::vector<S>& x) {
  return objective_on_branch(obj, seq, std::span<const S>(x));
}

/// The actual (piecewise) F at a point: every step follows the region that
/// is active as written (first one on exact ties).
inline double objective_at(const Objective& obj, const std::vector<double>& x) {
  BranchSequence seq;
  std::vector<double> y = x;
  for (int k = 0; k < obj.horizon(); ++k) {
    const auto act = active_regions(*obj.sys, y);
    if (act.empty()) throw CoverageError("no region covers the point");
    seq.push_back(act.front());
    y = apply_field(*obj.sys, act.front(), std::span<const double>(y));
  }
  return objective_on_branch(obj, seq, x);
}

/// Branch sequences that some point of the interval box may follow: every
/// step forks over all regions meeting the enclosure of the state.
inline std::vector<BranchSequence> enumerate_box_branches(const PiecewiseSystem& sys, const IntervalVector& X,
                                                          int horizon, bool closure = true) {
  struct Item {
    IntervalVector x;
    BranchSequence seq;
  };
  std::vector<Item> frontier{{X, {}}};
  for (int k = 0; k < std::max(horizon, 1); ++k) {
    std::vector<Item> next;
    for (auto& it : frontier) {
      const auto regs = regions_intersecting(sys, std::span<const Interval>(it.x), closure);
      if (regs.empty()) throw CoverageError("no region meets the state enclosure");
      for (int r : regs) {
        Item child;
        child.seq = it.seq;
        child.seq.push_back(r);
        if (k + 1 < horizon) child.x = apply_field(sys, r, std::span<const Interval>(it.x));
        next.push_back(std::move(child));
        if (next.size() > kMaxBranches) throw BranchOverflowError("more than 64 branch sequences over the box");
      }
    }
    frontier = std::move(next);
  }
  std::vector<BranchSequence> out;
  for (auto& it : frontier) out.push_back(std::move(it.seq));
  return out;
}

/// Whether the sample point itself may follow seq: closure at the first
/// step, guards as written afterwards (evaluated on rigorous enclosures).
inline bool point_follows(const PiecewiseSystem& sys, const std::vector<double>& xs, const BranchSequence& seq,
                          int horizon) {
  const auto first = region_of(sys, xs);
  if (std::find(first.begin(), first.end(), seq[0]) == first.end()) return false;
  IntervalVector x(xs.begin(), xs.end());
  for (int k = 1; k < horizon; ++k) {
    x = apply_field(sys, seq[static_cast<std::size_t>(k - 1)], std::span<const Interval>(x));
    if (!region_possible(sys.region(seq[static_cast<std::size_t>(k)]), std::span<const Interval>(x), false)) {
      return false;
    }
  }
  return true;
}

struct BranchBound {
  BranchSequence seq;
  Interval f_center;  // F_seq(xs)
  double a = 0.0;     // 1-norm of the gradient at xs
  double b = 0.0;     // Lagrange remainder bound over the box
  double a_combined = 0.0;
  double slack = 0.0;  // bound on |F_seq(x) - F_seq(xs)| over the box
  bool point_active = false;
};

struct BoxAnalysis {
  std::vector<BranchBound> branches;
  double F_ref = 0.0;  // max over branches the sample point follows
  double upper = 0.0;  // certified upper bound of F over the box
  double lower = 0.0;  // certified lower bound of F over the box
  double gamma = 0.0;  // upper - F_ref
  RecordFlag flag = RecordFlag::kNone;
  std::string error;

  bool ok() const { return flag == RecordFlag::kNone; }
};

inline double slack_for(BoundMethod method, double a, double b, double a_comb, double xi) {
  const double split = (Interval(a) * Interval(xi) + Interval(b)).hi();
  const double comb = (Interval(a_comb) * Interval(xi)).hi();
  switch (method) {
    case BoundMethod::kSplit: return split;
    case BoundMethod::kCombined: return comb;
    case BoundMethod::kBest: return std::min(split, comb);
  }
  return split;
}

/// Per-branch value, coefficients and the resulting rigorous bounds of F
/// over the box.  With closure = false strict guards are taken as written,
/// which bounds the actual function rather than its closure regularization.
inline BoxAnalysis analyze_box(const Objective& obj, const HyperRect& box, BoundMethod method, bool closure = true) {
  BoxAnalysis out;
  try {
    const IntervalVector X = box.to_intervals();
    const auto seqs = enumerate_box_branches(*obj.sys, X, obj.horizon(), closure);
    const auto tau = tau_of(box.delta);
    const double xi = max_abs_delta(box.delta);
    const auto box_seeds = interval_seeds(X);
    const auto pt_seeds = point_seeds(box.center);
    const int h = std::max(obj.horizon(), 1);

    double upper = -rounding::kInf;
    double lower = rounding::kInf;
    double f_ref = -rounding::kInf;
    for (const auto& seq : seqs) {
      BranchBound bb;
      bb.seq = seq;
      // A branch only matters where its first region holds; bound it over
      // that part of the box when the guards allow a cheap contraction.
      const auto Xs = contract_to_region(obj.sys->region(seq[0]), X);
      if (!Xs) continue;
      bool contracted = false;
      for (std::size_t i = 0; i < X.size(); ++i) {
        contracted = contracted || (*Xs)[i].lo() != X[i].lo() || (*Xs)[i].hi() != X[i].hi();
      }
      HyperRect sub;
      if (contracted) {
        std::vector<double> lo, hi;
        for (const auto& iv : *Xs) {
          lo.push_back(iv.lo());
          hi.push_back(iv.hi());
        }
        sub = box_from_bounds(lo, hi);
      }
      const HyperRect& bx = contracted ? sub : box;
      const auto sub_box_seeds = contracted ? interval_seeds(bx.to_intervals()) : box_seeds;
      const auto sub_pt_seeds = contracted ? point_seeds(bx.center) : pt_seeds;
      const auto at = to_enclosure(objective_on_branch(obj, seq, std::span<const Dual2<Interval>>(sub_pt_seeds)));
      const auto over = to_enclosure(objective_on_branch(obj, seq, std::span<const Dual2<Interval>>(sub_box_seeds)));
      bb.f_center = at.value;
      bb.a = grad_coeff_from(at.gradient);
      bb.b = lagrange_b_from(over.hessian, contracted ? tau_of(bx.delta) : tau);
      bb.a_combined = method == BoundMethod::kSplit ? 0.0 : combined_a_from(at.gradient, over.hessian, bx);
      bb.slack = slack_for(method, bb.a, bb.b, bb.a_combined, contracted ? max_abs_delta(bx.delta) : xi);
      bb.point_active = point_follows(*obj.sys, box.center, seq, h);
      upper = std::max(upper, rounding::add_up(bb.f_center.hi(), bb.slack));
      // the direct enclosure is also a valid lower bound and often tighter
      lower = std::min(lower, std::max(rounding::sub_down(bb.f_center.lo(), bb.slack), over.value.lo()));
      if (bb.point_active) {
        const double at_xs =
            contracted ? objective_on_branch(obj, seq, IntervalVector(box.center.begin(), box.center.end())).hi()
                       : bb.f_center.hi();
        f_ref = std::max(f_ref, at_xs);
      }
      out.branches.push_back(std::move(bb));
    }
    if (out.branches.empty()) throw CoverageError("no branch survives guard contraction");
    if (f_ref == -rounding::kInf) f_ref = upper;  // unreachable when guards are consistent
    out.F_ref = f_ref;
    out.upper = upper;
    out.lower = lower;
    out.gamma = std::max(0.0, rounding::sub_up(upper, f_ref));
  } catch (const BranchOverflowError& e) {
    out.flag = RecordFlag::kBranchOverflow;
    out.error = e.what();
  } catch (const CoverageError& e) {
    out.flag = RecordFlag::kCoverage;
    out.error = e.what();
  } catch (const DomainError& e) {
    out.flag = RecordFlag::kDomainError;
    out.error = e.what();
  }
  return out;
}

/// Continuous-time objective dW/dt along G_c: value at the box center and
/// split-bound coefficients (maximized over branches).
inline std::pair<double, BoundCoeffs> F_ct_and_bounds(const Objective& wdot, const HyperRect& box) {
  if (wdot.kind != ObjectiveKind::kWDot) throw std::invalid_argument("F_ct_and_bounds expects a dW/dt objective");
  const auto an = analyze_box(wdot, box, BoundMethod::kSplit);
  if (!an.ok()) throw DomainError(an.error);
  BoundCoeffs c;
  for (const auto& b : an.branches) {
    c.a = std::max(c.a, b.a);
    c.b = std::max(c.b, b.b);
  }
  return {an.F_ref, c};
}

}  // namespace lyapsample
