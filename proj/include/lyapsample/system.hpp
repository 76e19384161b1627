#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lyapsample/expr.hpp"
#include "lyapsample/geometry.hpp"
#include "lyapsample/interval.hpp"

namespace lyapsample {

class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TieError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BranchOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxBranches = 64;

enum class Mode { kDiscrete, kContinuous };

enum class Relation { kLe, kLt, kGe, kGt };

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::kLe: return "<=";
    case Relation::kLt: return "<";
    case Relation::kGe: return ">=";
    case Relation::kGt: return ">";
  }
  return "?";
}

/// Guard `lhs rel rhs`, stored as `expr rel 0` with expr = lhs - rhs.
struct Guard {
  Expr expr;
  Relation rel = Relation::kGe;

  std::string to_string() const { return expr.to_string() + " " + lyapsample::to_string(rel) + " 0"; }
};

inline Guard parse_guard(std::string_view text, int dim) {
  int depth = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (depth != 0 || (c != '<' && c != '>')) continue;
    const bool eq = i + 1 < text.size() && text[i + 1] == '=';
    const Relation rel = c == '<' ? (eq ? Relation::kLe : Relation::kLt) : (eq ? Relation::kGe : Relation::kGt);
    const std::size_t rhs_start = i + (eq ? 2 : 1);
    Expr lhs;
    Expr rhs;
    try {
      lhs = Expr::parse(text.substr(0, i), dim);
    } catch (const ParseError& e) {
      throw ParseError(std::string("guard left side: ") + e.what(), e.column());
    }
    try {
      rhs = Expr::parse(text.substr(rhs_start), dim);
    } catch (const ParseError& e) {
      throw ParseError(std::string("guard right side: ") + e.what(), e.column() + static_cast<int>(rhs_start));
    }
    // Fold a literal zero right-hand side so printing round-trips.
    const auto& rn = rhs.nodes();
    if (rn.size() == 1 && rn[0].op == Expr::Op::kConst && rn[0].value == 0.0) return Guard{std::move(lhs), rel};
    return Guard{lhs - rhs, rel};
  }
  throw ParseError("guard needs a relation (<, <=, >, >=)", static_cast<int>(text.size()) + 1);
}

/// Point test.  With `closure`, strict relations also accept equality.
inline bool guard_holds(const Guard& g, double v, bool closure) {
  switch (g.rel) {
    case Relation::kGe: return v >= 0.0;
    case Relation::kGt: return closure ? v >= 0.0 : v > 0.0;
    case Relation::kLe: return v <= 0.0;
    case Relation::kLt: return closure ? v <= 0.0 : v < 0.0;
  }
  return false;
}

/// True when some value in v satisfies the guard.
inline bool guard_possible(const Guard& g, const Interval& v, bool closure) {
  switch (g.rel) {
    case Relation::kGe: return v.hi() >= 0.0;
    case Relation::kGt: return closure ? v.hi() >= 0.0 : v.hi() > 0.0;
    case Relation::kLe: return v.lo() <= 0.0;
    case Relation::kLt: return closure ? v.lo() <= 0.0 : v.lo() < 0.0;
  }
  return false;
}

struct Region {
  std::vector<Guard> guards;
  VectorField field;
};

using BranchSequence = std::vector<int>;  // 0-based region index per step

class PiecewiseSystem {
 public:
  PiecewiseSystem() = default;
  PiecewiseSystem(int n, Mode mode, std::vector<Region> regions) : n_(n), mode_(mode), regions_(std::move(regions)) {
    if (n_ < 1 || n_ > kMaxDim) throw std::invalid_argument("system dimension must be in [1, 8]");
    if (regions_.empty()) throw std::invalid_argument("system needs at least one region");
    for (std::size_t r = 0; r < regions_.size(); ++r) {
      const auto& f = regions_[r].field;
      if (f.dim_in() != n_ || f.dim_out() != n_) {
        throw std::invalid_argument("region " + std::to_string(r + 1) + ": field must map R^n to R^n");
      }
      if (f.uses_abs()) {
        throw std::invalid_argument("region " + std::to_string(r + 1) +
                                    ": abs() is only allowed in guards (fields must be twice differentiable)");
      }
      for (const auto& g : regions_[r].guards) {
        if (g.expr.dim() != n_) throw std::invalid_argument("guard dimension mismatch");
      }
    }
  }

  int dim() const { return n_; }
  Mode mode() const { return mode_; }
  const std::vector<Region>& regions() const { return regions_; }
  const Region& region(int i) const { return regions_.at(static_cast<std::size_t>(i)); }
  int num_regions() const { return static_cast<int>(regions_.size()); }

 private:
  int n_ = 0;
  Mode mode_ = Mode::kDiscrete;
  std::vector<Region> regions_;
};

inline bool in_region(const Region& r, std::span<const double> x, bool closure) {
  for (const auto& g : r.guards) {
    if (!guard_holds(g, g.expr.eval(x), closure)) return false;
  }
  return true;
}

inline bool region_possible(const Region& r, std::span<const Interval> x, bool closure) {
  for (const auto& g : r.guards) {
    if (!guard_possible(g, g.expr.eval(x), closure)) return false;
  }
  return true;
}

/// Shrinks X to the closure of the region using the guards that are affine
/// in a single variable (c*x_i + d); other guards are left alone.  Returns
/// nullopt when the contraction is empty.
inline std::optional<IntervalVector> contract_to_region(const Region& r, const IntervalVector& X) {
  IntervalVector out = X;
  for (const auto& g : r.guards) {
    const auto he = eval_hess_interval(g.expr, std::span<const Interval>(out));
    bool affine = true;
    for (std::size_t i = 0; i < he.hessian.rows(); ++i) {
      for (std::size_t j = 0; j < he.hessian.cols(); ++j) {
        affine = affine && he.hessian(i, j).lo() == 0.0 && he.hessian(i, j).hi() == 0.0;
      }
    }
    int var = -1;
    for (std::size_t i = 0; i < he.gradient.size() && affine; ++i) {
      const auto& gi = he.gradient[i];
      if (gi.lo() == 0.0 && gi.hi() == 0.0) continue;
      if (var >= 0 || gi.lo() != gi.hi()) affine = false;
      var = static_cast<int>(i);
    }
    if (!affine || var < 0) continue;
    const auto uv = static_cast<std::size_t>(var);
    IntervalVector at = out;
    at[uv] = Interval(0.0);
    Interval c(he.gradient[uv].lo());
    Interval d = g.expr.eval(std::span<const Interval>(at));
    if (g.rel == Relation::kLe || g.rel == Relation::kLt) {  // c*x + d <= 0  <=>  -c*x - d >= 0
      c = -c;
      d = -d;
    }
    const Interval root = -d / c;
    double lo = out[uv].lo();
    double hi = out[uv].hi();
    if (c.lo() > 0.0) {
      lo = std::max(lo, root.lo());
    } else {
      hi = std::min(hi, root.hi());
    }
    if (lo > hi) return std::nullopt;
    out[uv] = Interval(lo, hi);
  }
  return out;
}

/// Regions active at x with strict guards relaxed on their boundary.
inline std::vector<int> region_of(const PiecewiseSystem& sys, std::span<const double> x) {
  std::vector<int> out;
  for (int i = 0; i < sys.num_regions(); ++i) {
    if (in_region(sys.region(i), x, true)) out.push_back(i);
  }
  if (out.empty()) throw CoverageError("no region covers the point");
  return out;
}
inline std::vector<int> region_of(const PiecewiseSystem& sys, const std::vector<double>& x) {
  return region_of(sys, std::span<const double>(x));
}

/// Regions whose guards hold at x exactly as written.
inline std::vector<int> active_regions(const PiecewiseSystem& sys, std::span<const double> x) {
  std::vector<int> out;
  for (int i = 0; i < sys.num_regions(); ++i) {
    if (in_region(sys.region(i), x, false)) out.push_back(i);
  }
  return out;
}

/// Regions that may meet the interval box (closure convention; may
/// over-approximate).
inline std::vector<int> regions_intersecting(const PiecewiseSystem& sys, std::span<const Interval> box,
                                             bool closure = true) {
  std::vector<int> out;
  for (int i = 0; i < sys.num_regions(); ++i) {
    if (region_possible(sys.region(i), box, closure)) out.push_back(i);
  }
  return out;
}
inline std::vector<int> regions_intersecting(const PiecewiseSystem& sys, const HyperRect& box) {
  const auto iv = box.to_intervals();
  return regions_intersecting(sys, std::span<const Interval>(iv));
}

template <class T>
std::vector<T> apply_field(const PiecewiseSystem& sys, int region, std::span<const T> x) {
  return sys.region(region).field.eval(x);
}

inline std::vector<double> step(const PiecewiseSystem& sys, const std::vector<double>& x,
                                std::optional<int> forced = std::nullopt) {
  if (sys.mode() != Mode::kDiscrete) throw std::logic_error("step: system is not discrete");
  int r = 0;
  if (forced) {
    const auto allowed = region_of(sys, x);
    if (std::find(allowed.begin(), allowed.end(), *forced) == allowed.end()) {
      throw std::invalid_argument("step: forced region is not active at the point");
    }
    r = *forced;
  } else {
    const auto act = active_regions(sys, x);
    if (act.empty()) throw CoverageError("no region covers the point");
    if (act.size() > 1) throw TieError("step: several regions are active; force one");
    r = act.front();
  }
  return apply_field(sys, r, std::span<const double>(x));
}

/// M-step image.  forced[k], when present, selects the region of step k.
inline std::pair<std::vector<double>, BranchSequence> iterate(const PiecewiseSystem& sys, std::vector<double> x, int M,
                                                              const BranchSequence& forced = {}) {
  BranchSequence used;
  for (int k = 0; k < M; ++k) {
    int r = 0;
    if (static_cast<std::size_t>(k) < forced.size()) {
      r = forced[static_cast<std::size_t>(k)];
      const auto allowed = k == 0 ? region_of(sys, x) : active_regions(sys, x);
      if (std::find(allowed.begin(), allowed.end(), r) == allowed.end()) {
        throw std::invalid_argument("iterate: forced region " + std::to_string(r + 1) + " inactive at step " +
                                    std::to_string(k + 1));
      }
    } else {
      const auto act = active_regions(sys, x);
      if (act.empty()) throw CoverageError("iterate: no region covers an intermediate state");
      if (act.size() > 1) throw TieError("iterate: tie at step " + std::to_string(k + 1));
      r = act.front();
    }
    x = apply_field(sys, r, std::span<const double>(x));
    used.push_back(r);
  }
  return {std::move(x), std::move(used)};
}

/// All branch sequences at a point: the first step forks over every region
/// whose closure contains the point; later steps fork only where several
/// regions are active as written.
inline std::vector<BranchSequence> enumerate_branches(const PiecewiseSystem& sys, const std::vector<double>& xs,
                                                      int M) {
  struct Item {
    std::vector<double> x;
    BranchSequence seq;
  };
  std::vector<Item> frontier{{xs, {}}};
  for (int k = 0; k < M; ++k) {
    std::vector<Item> next;
    for (auto& it : frontier) {
      const auto regs = k == 0 ? region_of(sys, it.x) : active_regions(sys, it.x);
      if (regs.empty()) throw CoverageError("enumerate_branches: no region covers an intermediate state");
      for (int r : regs) {
        Item child{apply_field(sys, r, std::span<const double>(it.x)), it.seq};
        child.seq.push_back(r);
        next.push_back(std::move(child));
        if (next.size() > kMaxBranches) throw BranchOverflowError("more than 64 branch sequences");
      }
    }
    frontier = std::move(next);
  }
  std::vector<BranchSequence> out;
  for (auto& it : frontier) out.push_back(std::move(it.seq));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Quadratic candidate V(x) = x^T P x and contraction rho(s) = rho * s.

template <class T>
T quadratic_form(const Eigen::MatrixXd& P, std::span<const T> x) {
  const auto n = static_cast<Eigen::Index>(x.size());
  T acc = constant_like(x[0], 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (P(i, i) != 0.0) acc = acc + constant_like(x[0], P(i, i)) * pow_int(x[ui], 2);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double pij = P(i, j) + P(j, i);
      if (pij != 0.0) acc = acc + constant_like(x[0], pij) * (x[ui] * x[static_cast<std::size_t>(j)]);
    }
  }
  return acc;
}

inline bool is_positive_definite(const Eigen::MatrixXd& P) {
  if (P.rows() != P.cols() || P.rows() == 0) return false;
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, P.cwiseAbs().maxCoeff())) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
  return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

struct CandidateV {
  Eigen::MatrixXd P;
  double rho = 0.999;

  void validate() const {
    if (!is_positive_definite(P)) throw std::invalid_argument("candidate P must be symmetric positive definite");
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0, 1)");
  }

  template <class T>
  T value(std::span<const T> x) const {
    return quadratic_form(P, x);
  }
  double value(const std::vector<double>& x) const { return value(std::span<const double>(x)); }
};

/// V(G^M(x)) - rho V(x) along a fully specified branch.
inline double F_dt(const PiecewiseSystem& sys, const CandidateV& V, int M, const std::vector<double>& x,
                   const BranchSequence& branch) {
  if (static_cast<int>(branch.size()) != M) throw std::invalid_argument("F_dt: branch length must equal M");
  std::vector<double> y = x;
  for (int r : branch) y = apply_field(sys, r, std::span<const double>(y));
  return V.value(y) - V.rho * V.value(x);
}

inline double epsilon_jump(const PiecewiseSystem& sys, const CandidateV& V, int M, const std::vector<double>& xs) {
  const auto branches = enumerate_branches(sys, xs, M);
  double lo = rounding::kInf;
  double hi = -rounding::kInf;
  for (const auto& b : branches) {
    const double f = F_dt(sys, V, M, xs, b);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  return branches.size() <= 1 ? 0.0 : hi - lo;
}

/// G(x) = x + h G_c(x) for every region, guards unchanged.
inline PiecewiseSystem euler_discretize(const PiecewiseSystem& ct, double h) {
  if (ct.mode() != Mode::kContinuous) throw std::invalid_argument("euler_discretize: system is not continuous");
  if (!(h > 0.0)) throw std::invalid_argument("euler_discretize: step must be positive");
  const int n = ct.dim();
  std::vector<Region> regions;
  for (const auto& r : ct.regions()) {
    std::vector<Expr> comps;
    for (int i = 0; i < n; ++i) {
      comps.push_back(Expr::variable(i, n) + Expr::constant(h, n) * r.field[static_cast<std::size_t>(i)]);
    }
    regions.push_back(Region{r.guards, VectorField(std::move(comps))});
  }
  return PiecewiseSystem(n, Mode::kDiscrete, std::move(regions));
}

/// Moves the point x0 to the origin: y = x - x0.
inline PiecewiseSystem translate(const PiecewiseSystem& sys, const std::vector<Expr>& x0) {
  const int n = sys.dim();
  if (static_cast<int>(x0.size()) != n) throw std::invalid_argument("translate: equilibrium dimension mismatch");
  std::vector<Expr> shift;
  for (int i = 0; i < n; ++i) shift.push_back(Expr::variable(i, n) + x0[static_cast<std::size_t>(i)]);
  std::vector<Region> regions;
  for (const auto& r : sys.regions()) {
    Region out;
    for (const auto& g : r.guards) out.guards.push_back(Guard{g.expr.substitute(shift), g.rel});
    std::vector<Expr> comps;
    for (int i = 0; i < n; ++i) {
      Expr c = r.field[static_cast<std::size_t>(i)].substitute(shift);
      if (sys.mode() == Mode::kDiscrete) c = c - x0[static_cast<std::size_t>(i)];
      comps.push_back(std::move(c));
    }
    out.field = VectorField(std::move(comps));
    regions.push_back(std::move(out));
  }
  return PiecewiseSystem(n, sys.mode(), std::move(regions));
}

/// Interval enclosure of the one-step image of a box under one region field.
inline IntervalVector reach_box(const PiecewiseSystem& sys, const IntervalVector& box, int region) {
  if (sys.mode() != Mode::kDiscrete) throw std::logic_error("reach_box: system is not discrete");
  return apply_field(sys, region, std::span<const Interval>(box));
}
inline IntervalVector reach_box(const PiecewiseSystem& sys, const HyperRect& box, int region) {
  return reach_box(sys, box.to_intervals(), region);
}

}  // namespace lyapsample
