#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lyapsample/bounds.hpp"
#include "lyapsample/geometry.hpp"
#include "lyapsample/system.hpp"

namespace lyapsample {

/// Runs f(i) for i in [0, n) on up to `workers` threads.  Callers write
/// results into index-addressed slots, so output never depends on timing.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& f) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t count = std::min(w, n);
  for (std::size_t t = 1; t < count; ++t) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

enum class RefineRule { kAll, kLongest };

/// When a box has reached final resolution: its largest half width is at
/// most delta_min (kMax), or its smallest one is (kMin).
enum class ResolutionRule { kMax, kMin };

inline bool at_resolution(const HyperRect& b, double delta_min, ResolutionRule rule) {
  if (rule == ResolutionRule::kMax) return max_abs_delta(b.delta) <= delta_min;
  const auto tau = tau_of(b.delta);
  return *std::min_element(tau.begin(), tau.end()) <= delta_min;
}

struct VerifyConfig {
  HyperRect S;
  double delta_min = 0.1;
  int M = 1;
  int M_max = 1;
  double rho = 0.999;
  BoundMethod method = BoundMethod::kSplit;
  int workers = 1;
  RefineRule refine = RefineRule::kAll;
  ResolutionRule resolution = ResolutionRule::kMax;
  int seed_levels = 0;             // initial uniform 2-refinements of S
  double volume_threshold = 0.5;   // quality gate of the horizon search

  void validate() const {
    if (!(delta_min > 0.0)) throw std::invalid_argument("delta_min must be positive");
    if (max_abs_delta(S.delta) <= 0.0) throw std::invalid_argument("search set S is degenerate (zero delta)");
    if (delta_min > max_abs_delta(S.delta)) throw std::invalid_argument("delta_min exceeds the size of S");
    if (M < 1 || M > M_max) throw std::invalid_argument("need 1 <= M <= M_max");
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0, 1)");
    if (seed_levels < 0) throw std::invalid_argument("seed_levels must be >= 0");
  }
};

struct BoxResult {
  bool certified = false;
  double F = 0.0;      // F at the sample point (max over the branches it follows)
  double gamma = 0.0;  // certified slack: F + gamma bounds F over the box
  RecordFlag flag = RecordFlag::kNone;
};

/// Strict form of the sampling condition.
inline bool certifies(double F, double gamma) { return F < -gamma; }

inline BoxResult verify_box(const Objective& obj, const HyperRect& box, BoundMethod method) {
  const auto an = analyze_box(obj, box, method);
  BoxResult r;
  r.flag = an.flag;
  if (!an.ok()) return r;
  r.F = an.F_ref;
  r.gamma = an.gamma;
  r.certified = an.upper < 0.0;
  return r;
}

struct RunStats {
  std::size_t explored = 0;  // boxes evaluated
  std::size_t rejected = 0;  // evaluations that failed, refined or not
  int levels = 0;
  double seconds = 0.0;
};

struct Certificate {
  SampleLedger ledger;
  int M_final = 0;
  std::string verdict;  // certified-on-A | halted
  std::string hint;
  RunStats stats;
  std::vector<RunStats> attempts;  // one per horizon tried
};

namespace detail {

inline std::vector<HyperRect> split_box(const HyperRect& b, RefineRule rule) {
  if (rule == RefineRule::kLongest) return refine2(b, std::vector<int>{longest_axis(b)});
  std::vector<int> axes;
  for (int i = 0; i < b.dim(); ++i) {
    if (b.upper_offset(i) - b.lower_offset(i) > 0.0) axes.push_back(i);
  }
  return refine2(b, axes);
}

}  // namespace detail

/// Multi-resolution construction of the certified set A.  Levels are
/// processed breadth-first; rejected boxes larger than delta_min are
/// refined into the next level.
inline Certificate construct_A(const VerifyConfig& cfg, const Objective& obj) {
  const auto t0 = std::chrono::steady_clock::now();
  Certificate cert;
  cert.M_final = obj.M;
  std::vector<HyperRect> level{cfg.S};
  if (max_abs_delta(cfg.S.delta) > 0.0) {
    for (int s = 0; s < cfg.seed_levels; ++s) {
      std::vector<HyperRect> next;
      for (const auto& b : level) {
        for (auto& c : detail::split_box(b, cfg.refine)) next.push_back(std::move(c));
      }
      level = std::move(next);
    }
  }
  while (!level.empty()) {
    std::vector<BoxResult> results(level.size());
    parallel_for(level.size(), cfg.workers, [&](std::size_t i) { results[i] = verify_box(obj, level[i], cfg.method); });
    std::vector<HyperRect> next;
    for (std::size_t i = 0; i < level.size(); ++i) {
      const auto& b = level[i];
      const auto& r = results[i];
      SampleRecord rec{b, tau_of(b.delta), r.F, r.gamma, r.flag};
      if (r.certified) {
        cert.ledger.good.push_back(std::move(rec));
        continue;
      }
      ++cert.stats.rejected;
      if (!at_resolution(b, cfg.delta_min, cfg.resolution)) {
        for (auto& c : detail::split_box(b, cfg.refine)) next.push_back(std::move(c));
      } else {
        cert.ledger.wrong.push_back(std::move(rec));
      }
    }
    cert.stats.explored += level.size();
    ++cert.stats.levels;
    level = std::move(next);
  }
  cert.ledger.sort();
  cert.verdict = "certified-on-A";
  cert.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cert;
}

inline double box_volume(const HyperRect& b) {
  double v = 1.0;
  for (int i = 0; i < b.dim(); ++i) v *= b.upper_offset(i) - b.lower_offset(i);
  return v;
}

/// Certified fraction of S, not counting undecided boxes centered within
/// 4 delta_min of the origin (the unavoidable hole where F(0) = 0).
inline double certified_fraction(const Certificate& cert, const HyperRect& S, double delta_min) {
  double good = 0.0;
  for (const auto& r : cert.ledger.good) good += box_volume(r.box);
  double hole = 0.0;
  for (const auto& r : cert.ledger.wrong) {
    double dist = 0.0;
    for (double c : r.box.center) dist = std::max(dist, std::abs(c));
    if (dist <= 4.0 * delta_min) hole += box_volume(r.box);
  }
  const double denom = box_volume(S) - hole;
  return denom > 0.0 ? good / denom : 0.0;
}

inline Objective fslf_objective(std::shared_ptr<const PiecewiseSystem> sys, const Eigen::MatrixXd& P, double rho,
                                int M) {
  Objective o;
  o.kind = ObjectiveKind::kFslfDecrease;
  o.sys = std::move(sys);
  o.P = P;
  o.rho = rho;
  o.M = M;
  o.validate();
  return o;
}

inline Objective w_objective(ObjectiveKind kind, std::shared_ptr<const PiecewiseSystem> sys, const Eigen::MatrixXd& P,
                             int M, double rho = 0.999, std::shared_ptr<const PiecewiseSystem> ct = nullptr) {
  Objective o;
  o.kind = kind;
  o.sys = std::move(sys);
  o.ct = std::move(ct);
  o.P = P;
  o.rho = rho;
  o.M = M;
  o.validate();
  return o;
}

/// Horizon search: increase M until the certified set passes the volume
/// gate, or give up at M_max.
inline Certificate find_M_and_W(const VerifyConfig& cfg, std::shared_ptr<const PiecewiseSystem> sys,
                                const CandidateV& V) {
  cfg.validate();
  V.validate();
  std::vector<RunStats> attempts;
  Certificate cert;
  for (int M = cfg.M; M <= cfg.M_max; ++M) {
    cert = construct_A(cfg, fslf_objective(sys, V.P, V.rho, M));
    attempts.push_back(cert.stats);
    if (certified_fraction(cert, cfg.S, cfg.delta_min) >= cfg.volume_threshold) {
      cert.attempts = attempts;
      return cert;
    }
  }
  cert.attempts = attempts;
  cert.verdict = "halted";
  cert.hint = "M_max reached without a satisfactory certified set: select another candidate V (or raise M_max)";
  return cert;
}

/// Continuous-time check: dW/dt < 0 on boxes of S, W built from the
/// Euler-discretized map.
inline Certificate verify_ct(const VerifyConfig& cfg, std::shared_ptr<const PiecewiseSystem> dt,
                             std::shared_ptr<const PiecewiseSystem> ct, const Eigen::MatrixXd& P, int M) {
  auto obj = w_objective(ObjectiveKind::kWDot, std::move(dt), P, M, cfg.rho, std::move(ct));
  Certificate cert = construct_A(cfg, obj);
  cert.M_final = M;
  if (certified_fraction(cert, cfg.S, cfg.delta_min) < cfg.volume_threshold) {
    cert.verdict = "halted";
    cert.hint = "dW/dt < 0 could not be certified on enough of S: select another candidate W";
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Box covers and one-step reachability.

namespace detail {

inline bool iv_subset(const IntervalVector& a, const IntervalVector& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].subset_of(b[i])) return false;
  }
  return true;
}

inline bool iv_overlaps(const IntervalVector& a, const IntervalVector& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!overlaps(a[i], b[i])) return false;
  }
  return true;
}

inline bool covered_rec(const IntervalVector& piece, const std::vector<IntervalVector>& targets, int& budget) {
  if (--budget < 0) return false;
  std::vector<const IntervalVector*> hits;
  for (const auto& t : targets) {
    if (iv_subset(piece, t)) return true;
    if (iv_overlaps(piece, t)) hits.push_back(&t);
  }
  if (hits.empty()) return false;
  // Split at a face of an overlapping target that cuts the piece.
  for (const auto* t : hits) {
    for (std::size_t i = 0; i < piece.size(); ++i) {
      for (double f : {(*t)[i].lo(), (*t)[i].hi()}) {
        if (f > piece[i].lo() && f < piece[i].hi()) {
          IntervalVector a = piece;
          IntervalVector b = piece;
          a[i] = Interval(piece[i].lo(), f);
          b[i] = Interval(f, piece[i].hi());
          return covered_rec(a, targets, budget) && covered_rec(b, targets, budget);
        }
      }
    }
  }
  return false;
}

inline bool covered(const IntervalVector& piece, const std::vector<IntervalVector>& targets) {
  int budget = 20000;
  return covered_rec(piece, targets, budget);
}

}  // namespace detail

/// True when the interval box lies in the union of the target boxes.
inline bool box_covered(const IntervalVector& piece, const std::vector<HyperRect>& targets) {
  std::vector<IntervalVector> t;
  t.reserve(targets.size());
  for (const auto& b : targets) t.push_back(b.to_intervals());
  return detail::covered(piece, t);
}

/// Checks that the one-step image enclosure of every given box (under each
/// region meeting it) satisfies `accept`; pieces for which `relevant` is
/// false are dropped.  Failing boxes are refined until
/// their largest half width is at most delta_min before giving up.
inline bool reach_into(const PiecewiseSystem& sys, const std::vector<HyperRect>& boxes, double delta_min,
                       const std::function<bool(const IntervalVector&)>& accept,
                       const std::function<bool(const HyperRect&)>& relevant = nullptr) {
  std::vector<HyperRect> queue = boxes;
  while (!queue.empty()) {
    HyperRect b = std::move(queue.back());
    queue.pop_back();
    if (relevant && !relevant(b)) continue;
    bool ok = true;
    try {
      for (int r : regions_intersecting(sys, b)) {
        if (!accept(reach_box(sys, b, r))) {
          ok = false;
          break;
        }
      }
    } catch (const DomainError&) {
      ok = false;
    }
    if (ok) continue;
    if (max_abs_delta(b.delta) <= delta_min) return false;
    for (auto& c : detail::split_box(b, RefineRule::kAll)) queue.push_back(std::move(c));
  }
  return true;
}

/// Reach(boxes) inside the union of the target boxes (and satisfying
/// `extra`, when given).
inline bool reach_fallback(const PiecewiseSystem& sys, const std::vector<HyperRect>& boxes,
                           const std::vector<HyperRect>& target, double delta_min,
                           const std::function<bool(const IntervalVector&)>& extra = nullptr) {
  std::vector<IntervalVector> t;
  t.reserve(target.size());
  for (const auto& b : target) t.push_back(b.to_intervals());
  return reach_into(sys, boxes, delta_min, [&](const IntervalVector& img) {
    return detail::covered(img, t) && (!extra || extra(img));
  });
}

// ---------------------------------------------------------------------------

/// Ellipsoid {x : x^T P x <= level}.
struct Ellipsoid {
  Eigen::MatrixXd P;
  double level = 0.0;

  /// The maximum of the convex form over a box is attained at a vertex;
  /// each vertex is evaluated with outward rounding.
  bool contains_box(const HyperRect& box) const {
    if (level <= 0.0) return false;
    const auto X = box.to_intervals();
    const auto n = X.size();
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      IntervalVector v;
      for (std::size_t i = 0; i < n; ++i) v.emplace_back((mask >> i) & 1u ? X[i].hi() : X[i].lo());
      if (quadratic_form(P, std::span<const Interval>(v)).hi() > level) return false;
    }
    return true;
  }

  bool contains_interval_box(const IntervalVector& box) const {
    if (level <= 0.0) return false;
    return quadratic_form(P, std::span<const Interval>(box)).hi() <= level;
  }

  bool contains_point(const std::vector<double>& x) const {
    if (level <= 0.0) return false;
    IntervalVector iv(x.begin(), x.end());
    return quadratic_form(P, std::span<const Interval>(iv)).hi() <= level;
  }
};

namespace detail {
// True when every point of `box` enters L within `steps` steps.  Boxes are
// split down to delta_min before a failure is reported; `budget` caps the
// number of image evaluations.
inline bool enters_within(const PiecewiseSystem& sys, const HyperRect& box, const Ellipsoid& L, double delta_min,
                          int steps, long& budget) {
  if (L.contains_box(box)) return true;
  if (steps <= 0 || --budget < 0) return false;
  bool ok = true;
  try {
    for (int r : regions_intersecting(sys, box)) {
      const auto img = reach_box(sys, box, r);
      if (L.contains_interval_box(img)) continue;
      std::vector<double> lo, hi;
      for (const auto& iv : img) {
        lo.push_back(iv.lo());
        hi.push_back(iv.hi());
      }
      const auto next = box_from_bounds(lo, hi);
      if (steps > 1 && max_abs_delta(next.delta) <= max_abs_delta(box.delta) * 4.0 &&
          enters_within(sys, next, L, delta_min, steps - 1, budget)) {
        continue;
      }
      ok = false;
      break;
    }
  } catch (const std::exception&) {
    ok = false;
  }
  if (ok) return true;
  if (max_abs_delta(box.delta) <= delta_min) return false;
  for (const auto& c : split_box(box, RefineRule::kAll)) {
    if (!enters_within(sys, c, L, delta_min, steps, budget)) return false;
  }
  return true;
}
}  // namespace detail

inline constexpr int kReachSteps = 6;

/// An undecided box is harmless for the sublevel-set argument when every
/// point of it lies in L or enters L within a few steps (L is invariant).
inline bool maps_into(const PiecewiseSystem& sys, const HyperRect& box, const Ellipsoid& L, double delta_min,
                      int steps = kReachSteps) {
  if (L.level <= 0.0) return false;
  long budget = 100000;
  return detail::enters_within(sys, box, L, delta_min, steps, budget);
}

/// Lower bound of W over a box: per branch the larger of W(xs) - slack and
/// the direct enclosure, with branches following the guards as written.
/// With P positive definite every term of W is nonnegative, so the bound
/// is clamped at zero.  Up to depth times the box is split (non-degenerate
/// axes only) and the smallest child bound kept when it is larger; boxes
/// whose bound already reaches cap are not split.  Throws DomainError.
inline double w_lower_bound(const Objective& W, const HyperRect& box, int depth = 0, double cap = rounding::kInf,
                            BoundMethod method = BoundMethod::kBest) {
  const auto an = analyze_box(W, box, method, false);
  if (!an.ok()) throw DomainError("level bound failed: " + an.error);
  const double lb = W.kind == ObjectiveKind::kWValue && is_positive_definite(W.P) ? std::max(an.lower, 0.0) : an.lower;
  if (depth <= 0 || lb >= cap) return lb;
  std::vector<int> axes;
  for (int i = 0; i < box.dim(); ++i) {
    if (box.upper_offset(i) > box.lower_offset(i)) axes.push_back(i);
  }
  if (axes.empty()) return lb;
  double m = rounding::kInf;
  for (const auto& c : refine2(box, axes)) m = std::min(m, w_lower_bound(W, c, depth - 1, cap, method));
  return std::max(lb, m);
}

struct SublevelCheck {
  bool ok = false;
  std::vector<HyperRect> gaps;  // undecided boxes meeting {W < Lbar}, neither in L nor mapped into L
  std::size_t inside_L = 0;
  std::size_t closed_by_reach = 0;
};

/// Structural check that {W < Lbar} lies in A up to boxes handled by the
/// invariant local set L.  reach_delta_min <= 0 disables the reach test.
inline SublevelCheck check_sublevel_in_A(const Objective& W, double Lbar, const Ellipsoid& L,
                                          const SampleLedger& ledger, double reach_delta_min, int workers = 1,
                                          int refine_depth = 0) {
  SublevelCheck out;
  const std::size_t n = ledger.wrong.size();
  std::vector<char> status(n, 0);  // 0 clear, 1 in L, 2 reach, 3 gap
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& b = ledger.wrong[i].box;
    try {
      if (w_lower_bound(W, b, refine_depth, Lbar) >= Lbar) return;  // misses the open set {W < Lbar}
    } catch (const std::exception&) {
      // unbounded: treat as meeting the set
    }
    if (L.contains_box(b)) {
      status[i] = 1;
    } else if (reach_delta_min > 0.0 && maps_into(*W.sys, b, L, reach_delta_min)) {
      status[i] = 2;
    } else {
      status[i] = 3;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (status[i] == 1) ++out.inside_L;
    if (status[i] == 2) ++out.closed_by_reach;
    if (status[i] == 3) out.gaps.push_back(ledger.wrong[i].box);
  }
  out.ok = out.gaps.empty();
  return out;
}

}  // namespace lyapsample
