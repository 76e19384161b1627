#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lyapsample/interval.hpp"

namespace lyapsample {

/// Axis-aligned box around a sample point.  delta has 2n entries laid out as
/// (+side_1, -side_1, +side_2, -side_2, ...): axis i spans
/// [center_i + delta[2i+1], center_i + delta[2i]].
struct HyperRect {
  std::vector<double> center;
  std::vector<double> delta;

  int dim() const { return static_cast<int>(center.size()); }
  double upper_offset(int i) const { return delta[2 * static_cast<std::size_t>(i)]; }
  double lower_offset(int i) const { return delta[2 * static_cast<std::size_t>(i) + 1]; }
  double upper(int i) const { return center[static_cast<std::size_t>(i)] + upper_offset(i); }
  double lower(int i) const { return center[static_cast<std::size_t>(i)] + lower_offset(i); }

  /// Outward-rounded enclosure of the box.
  IntervalVector to_intervals() const {
    IntervalVector out;
    out.reserve(center.size());
    for (int i = 0; i < dim(); ++i) {
      const double c = center[static_cast<std::size_t>(i)];
      out.emplace_back(rounding::add_down(c, lower_offset(i)), rounding::add_up(c, upper_offset(i)));
    }
    return out;
  }

  friend bool operator==(const HyperRect& a, const HyperRect& b) {
    return a.center == b.center && a.delta == b.delta;
  }
};

inline void validate_delta(const std::vector<double>& delta) {
  if (delta.size() % 2 != 0) throw std::invalid_argument("delta must have 2n entries");
  for (std::size_t i = 0; i < delta.size(); i += 2) {
    if (!(delta[i] >= 0.0) || !(delta[i + 1] <= 0.0)) {
      throw std::invalid_argument("delta sign pattern violated on axis " + std::to_string(i / 2 + 1));
    }
  }
}

inline HyperRect make_box(std::vector<double> center, std::vector<double> delta) {
  validate_delta(delta);
  if (delta.size() != 2 * center.size()) throw std::invalid_argument("delta length must be twice the center length");
  return HyperRect{std::move(center), std::move(delta)};
}

/// Symmetric box with the given per-axis half widths.
inline HyperRect symmetric_box(std::vector<double> center, const std::vector<double>& half_widths) {
  if (center.size() != half_widths.size()) throw std::invalid_argument("symmetric_box: dimension mismatch");
  std::vector<double> delta;
  for (double r : half_widths) {
    if (r < 0.0) throw std::invalid_argument("symmetric_box: negative half width");
    delta.push_back(r);
    delta.push_back(-r);
  }
  return HyperRect{std::move(center), std::move(delta)};
}

/// Box with bounds [lo, hi], centered at the midpoint.
inline HyperRect box_from_bounds(const std::vector<double>& lo, const std::vector<double>& hi) {
  if (lo.size() != hi.size()) throw std::invalid_argument("box_from_bounds: dimension mismatch");
  std::vector<double> center;
  std::vector<double> delta;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) throw std::invalid_argument("box_from_bounds: lo > hi");
    const double c = 0.5 * lo[i] + 0.5 * hi[i];
    center.push_back(c);
    // rounded outward so the box still covers [lo, hi]
    delta.push_back(rounding::sub_up(hi[i], c));
    delta.push_back(rounding::sub_down(lo[i], c));
  }
  return HyperRect{std::move(center), std::move(delta)};
}

inline std::vector<double> delta_from_vertices(const std::vector<double>& center,
                                               const std::vector<std::vector<double>>& vertices) {
  if (vertices.empty()) throw std::invalid_argument("delta_from_vertices: no vertices");
  const std::size_t n = center.size();
  std::vector<double> delta(2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double hi = -rounding::kInf;
    double lo = rounding::kInf;
    for (const auto& v : vertices) {
      if (v.size() != n) throw std::invalid_argument("delta_from_vertices: dimension mismatch");
      hi = std::max(hi, v[i] - center[i]);
      lo = std::min(lo, v[i] - center[i]);
    }
    delta[2 * i] = hi;
    delta[2 * i + 1] = lo;
  }
  return delta;
}

inline std::vector<double> tau_of(const std::vector<double>& delta) {
  std::vector<double> tau(delta.size() / 2);
  for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = std::max(std::abs(delta[2 * i]), std::abs(delta[2 * i + 1]));
  return tau;
}

inline double max_abs_delta(const std::vector<double>& delta) {
  double m = 0.0;
  for (double d : delta) m = std::max(m, std::abs(d));
  return m;
}

inline std::vector<std::vector<double>> vertices_of(const HyperRect& box) {
  const int n = box.dim();
  std::vector<std::vector<double>> out;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = (mask >> i) & 1u ? box.upper(i) : box.lower(i);
    out.push_back(std::move(v));
  }
  return out;
}

/// 2-refinement: children centered halfway between the center and each
/// vertex of the refined axes, with halved offsets on those axes.
inline std::vector<HyperRect> refine2(const HyperRect& box, const std::optional<std::vector<int>>& dims = std::nullopt) {
  std::vector<int> axes;
  if (dims) {
    axes = *dims;
    if (axes.empty()) throw std::invalid_argument("refine2: empty axis set");
  } else {
    for (int i = 0; i < box.dim(); ++i) axes.push_back(i);
  }
  for (int a : axes) {
    if (a < 0 || a >= box.dim()) throw std::invalid_argument("refine2: axis out of range");
    if (box.upper_offset(a) - box.lower_offset(a) <= 0.0) throw std::invalid_argument("refine2: degenerate axis");
  }
  const auto k = axes.size();
  std::vector<HyperRect> children;
  children.reserve(std::size_t{1} << k);
  for (unsigned mask = 0; mask < (1u << k); ++mask) {
    HyperRect c = box;
    for (std::size_t j = 0; j < k; ++j) {
      const auto i = static_cast<std::size_t>(axes[j]);
      const double side = (mask >> j) & 1u ? box.delta[2 * i] : box.delta[2 * i + 1];
      c.center[i] = box.center[i] + 0.5 * side;
      c.delta[2 * i] = 0.5 * box.delta[2 * i];
      c.delta[2 * i + 1] = 0.5 * box.delta[2 * i + 1];
    }
    children.push_back(std::move(c));
  }
  return children;
}

/// Index of the axis with the largest extent (first one on ties).
inline int longest_axis(const HyperRect& box) {
  int best = 0;
  double w = -1.0;
  for (int i = 0; i < box.dim(); ++i) {
    const double e = box.upper_offset(i) - box.lower_offset(i);
    if (e > w) {
      w = e;
      best = i;
    }
  }
  return best;
}

inline bool contains_point(const HyperRect& box, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != box.dim()) throw std::invalid_argument("contains_point: dimension mismatch");
  for (int i = 0; i < box.dim(); ++i) {
    const double d = x[static_cast<std::size_t>(i)] - box.center[static_cast<std::size_t>(i)];
    if (d < box.lower_offset(i) || d > box.upper_offset(i)) return false;
  }
  return true;
}

/// True when every point of `inner` lies in `outer` (compared on bounds).
inline bool box_subset(const HyperRect& inner, const HyperRect& outer) {
  for (int i = 0; i < inner.dim(); ++i) {
    if (inner.lower(i) < outer.lower(i) || inner.upper(i) > outer.upper(i)) return false;
  }
  return true;
}

/// Lexicographic order by center, then by delta.
inline bool box_less(const HyperRect& a, const HyperRect& b) {
  if (a.center != b.center) return a.center < b.center;
  return a.delta < b.delta;
}

// ---------------------------------------------------------------------------

enum class RecordFlag { kNone = 0, kDomainError = 1, kBranchOverflow = 2, kCoverage = 3 };

inline const char* to_string(RecordFlag f) {
  switch (f) {
    case RecordFlag::kNone: return "none";
    case RecordFlag::kDomainError: return "domain-error";
    case RecordFlag::kBranchOverflow: return "branch-overflow";
    case RecordFlag::kCoverage: return "coverage";
  }
  return "none";
}

struct SampleRecord {
  HyperRect box;
  std::vector<double> tau;
  double F_value = 0.0;
  double gamma = 0.0;
  RecordFlag flag = RecordFlag::kNone;
};

/// Certified (good) and undecided (wrong) boxes of a run.
struct SampleLedger {
  std::vector<SampleRecord> good;
  std::vector<SampleRecord> wrong;

  void sort() {
    auto by_box = [](const SampleRecord& a, const SampleRecord& b) { return box_less(a.box, b.box); };
    std::sort(good.begin(), good.end(), by_box);
    std::sort(wrong.begin(), wrong.end(), by_box);
  }
};

}  // namespace lyapsample
