#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lyapsample/bounds.hpp"
#include "lyapsample/geometry.hpp"
#include "lyapsample/verifier.hpp"

namespace lyapsample {

namespace detail {

inline bool adjacent(const HyperRect& a, const std::vector<double>& tau_a, const HyperRect& b,
                     const std::vector<double>& tau_b) {
  for (std::size_t i = 0; i < a.center.size(); ++i) {
    const double reach = tau_a[i] + tau_b[i];
    if (std::abs(a.center[i] - b.center[i]) > reach * (1.0 + 1e-12)) return false;
  }
  return true;
}

/// Good boxes sorted on the first center coordinate for range queries.
class GoodIndex {
 public:
  explicit GoodIndex(const std::vector<SampleRecord>& good) {
    for (const auto& g : good) {
      items_.push_back({g.box, tau_of(g.box.delta)});
      if (!items_.back().tau.empty()) max_tau0_ = std::max(max_tau0_, items_.back().tau[0]);
    }
    std::sort(items_.begin(), items_.end(),
              [](const Item& a, const Item& b) { return a.box.center[0] < b.box.center[0]; });
  }

  bool touches(const HyperRect& box) const {
    if (items_.empty()) return false;
    const auto tau = tau_of(box.delta);
    const double reach = (tau[0] + max_tau0_) * (1.0 + 1e-12);
    auto it = std::lower_bound(items_.begin(), items_.end(), box.center[0] - reach,
                               [](const Item& a, double v) { return a.box.center[0] < v; });
    for (; it != items_.end() && it->box.center[0] <= box.center[0] + reach; ++it) {
      if (adjacent(box, tau, it->box, it->tau)) return true;
    }
    return false;
  }

 private:
  struct Item {
    HyperRect box;
    std::vector<double> tau;
  };
  std::vector<Item> items_;
  double max_tau0_ = 0.0;
};

}  // namespace detail

/// Undecided boxes touching a certified box.  A box that lies in the
/// invariant set L, or whose points all enter L within a few steps, cannot
/// stop a trajectory from converging and is excused.
struct ObstacleSelection {
  std::vector<HyperRect> obstacles;
  std::size_t excused = 0;
};

inline ObstacleSelection select_obstacle_samples(const SampleLedger& ledger, const PiecewiseSystem* sys = nullptr,
                                                 const std::optional<Ellipsoid>& L = std::nullopt,
                                                 double reach_delta_min = 0.0, int workers = 1) {
  const detail::GoodIndex index(ledger.good);
  std::vector<HyperRect> touching;
  for (const auto& w : ledger.wrong) {
    if (index.touches(w.box)) touching.push_back(w.box);
  }
  std::vector<char> excused(touching.size(), 0);
  if (L && L->level > 0.0) {
    parallel_for(touching.size(), workers, [&](std::size_t i) {
      if (L->contains_box(touching[i])) {
        excused[i] = 1;
      } else if (sys && reach_delta_min > 0.0 && maps_into(*sys, touching[i], *L, reach_delta_min)) {
        excused[i] = 1;
      }
    });
  }
  ObstacleSelection sel;
  for (std::size_t i = 0; i < touching.size(); ++i) {
    if (excused[i]) {
      ++sel.excused;
    } else {
      sel.obstacles.push_back(touching[i]);
    }
  }
  return sel;
}

/// Face-aligned samples of the boundary of S: each face is tiled by boxes of
/// half width <= spacing on the tangential axes and zero width on the
/// normal axis.  Only samples touching a certified box are kept.
inline std::vector<HyperRect> boundary_samples(const HyperRect& S, double spacing, const SampleLedger& ledger) {
  if (!(spacing > 0.0)) throw std::invalid_argument("boundary spacing must be positive");
  const int n = S.dim();
  const detail::GoodIndex index(ledger.good);
  std::vector<HyperRect> out;
  for (int axis = 0; axis < n; ++axis) {
    for (int side = 0; side < 2; ++side) {
      // per tangential axis: cell count and width
      std::vector<int> counts(static_cast<std::size_t>(n), 1);
      std::vector<double> widths(static_cast<std::size_t>(n), 0.0);
      for (int j = 0; j < n; ++j) {
        if (j == axis) continue;
        const double ext = S.upper(j) - S.lower(j);
        counts[static_cast<std::size_t>(j)] = std::max(1, static_cast<int>(std::ceil(ext / (2.0 * spacing) - 1e-9)));
        widths[static_cast<std::size_t>(j)] = ext / counts[static_cast<std::size_t>(j)];
      }
      std::vector<int> idx(static_cast<std::size_t>(n), 0);
      for (;;) {
        HyperRect b;
        b.center.resize(static_cast<std::size_t>(n));
        b.delta.assign(2 * static_cast<std::size_t>(n), 0.0);
        for (int j = 0; j < n; ++j) {
          const auto uj = static_cast<std::size_t>(j);
          if (j == axis) {
            b.center[uj] = side == 0 ? S.lower(j) : S.upper(j);
          } else {
            const double w = widths[uj];
            b.center[uj] = S.lower(j) + (idx[uj] + 0.5) * w;
            b.delta[2 * uj] = 0.5 * w;
            b.delta[2 * uj + 1] = -0.5 * w;
          }
        }
        if (index.touches(b)) out.push_back(std::move(b));
        int j = 0;
        for (; j < n; ++j) {
          if (j == axis) continue;
          const auto uj = static_cast<std::size_t>(j);
          if (++idx[uj] < counts[uj]) break;
          idx[uj] = 0;
        }
        if (j == n) break;
      }
    }
  }
  std::sort(out.begin(), out.end(), box_less);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Lower bound of W over the sample box (see w_lower_bound).  Throws on
/// evaluation failure.
inline double Lbar_at_sample(const Objective& W, const HyperRect& box, BoundMethod method = BoundMethod::kBest) {
  return w_lower_bound(W, box, 0, rounding::kInf, method);
}

struct LevelSample {
  HyperRect box;
  double Lbar_xs = 0.0;
  bool skipped = false;
};

struct LevelEstimate {
  double Lbar1 = std::numeric_limits<double>::infinity();
  double Lbar2 = std::numeric_limits<double>::infinity();
  double Lbar = std::numeric_limits<double>::infinity();
  std::vector<LevelSample> obstacles;
  std::vector<LevelSample> boundary;
  std::size_t skipped = 0;
  std::size_t excused = 0;  // undecided boxes handled by L
  bool skipped_blocking = false;  // a skipped sample may meet {W < Lbar}
};

inline LevelEstimate estimate_level(const Objective& W, const SampleLedger& ledger, const HyperRect& S,
                                    double spacing, double delta_min, const std::optional<Ellipsoid>& L = std::nullopt,
                                    int workers = 1, BoundMethod method = BoundMethod::kBest,
                                    bool reach_excusal = true, int refine_depth = 2) {
  if (ledger.good.empty()) throw std::invalid_argument("estimate_level: no certified boxes");
  LevelEstimate est;
  auto evaluate = [&](const std::vector<HyperRect>& boxes, std::vector<LevelSample>& into) {
    into.resize(boxes.size());
    parallel_for(boxes.size(), workers, [&](std::size_t i) {
      into[i].box = boxes[i];
      try {
        into[i].Lbar_xs = Lbar_at_sample(W, boxes[i], method);
      } catch (const std::exception&) {
        into[i].skipped = true;
      }
    });
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < into.size(); ++i) {
      if (into[i].skipped) {
        ++est.skipped;
      } else {
        order.push_back(i);
      }
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return into[a].Lbar_xs < into[b].Lbar_xs; });
    // Branch and bound on the minimum: only samples whose bound is below
    // the running minimum are split.  Sequential, so the result does not
    // depend on the worker count.
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      if (into[i].Lbar_xs >= m) break;
      if (refine_depth > 0) {
        try {
          into[i].Lbar_xs = w_lower_bound(W, into[i].box, refine_depth, m, method);
        } catch (const std::exception&) {
          // keep the unsplit bound
        }
      }
      m = std::min(m, into[i].Lbar_xs);
    }
    return m;
  };
  const auto sel = select_obstacle_samples(ledger, reach_excusal ? W.sys.get() : nullptr, L, delta_min / 4.0, workers);
  est.excused = sel.excused;
  est.Lbar1 = evaluate(sel.obstacles, est.obstacles);
  est.Lbar2 = evaluate(boundary_samples(S, spacing, ledger), est.boundary);
  est.Lbar = std::min(est.Lbar1, est.Lbar2);
  // Skipped samples cannot be bounded; if they might meet the sublevel set
  // the estimate cannot be trusted.
  for (const auto* group : {&est.obstacles, &est.boundary}) {
    for (const auto& s : *group) {
      if (!s.skipped) continue;
      try {
        const auto X = s.box.to_intervals();
        bool meets = false;
        for (const auto& seq : enumerate_box_branches(*W.sys, X, W.horizon(), false)) {
          if (objective_on_branch(W, seq, std::span<const Interval>(X)).lo() <= est.Lbar) meets = true;
        }
        if (meets) est.skipped_blocking = true;
      } catch (const std::exception&) {
        est.skipped_blocking = true;
      }
    }
  }
  return est;
}

}  // namespace lyapsample
