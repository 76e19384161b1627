#pragma once

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lyapsample/bounds.hpp"
#include "lyapsample/expr.hpp"
#include "lyapsample/geometry.hpp"
#include "lyapsample/system.hpp"
#include "lyapsample/verifier.hpp"

namespace lyapsample {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RegionSpec {
  std::vector<std::string> guards;
  std::vector<std::string> field;
};

struct SystemSpec {
  int dimension = 0;
  Mode mode = Mode::kDiscrete;
  std::optional<double> euler_h;
  std::vector<std::string> equilibrium;  // empty: the origin
  std::vector<RegionSpec> regions;
};

struct CandidateSpec {
  Eigen::MatrixXd P;
  double rho = 0.999;
  int M = 1;
  int M_max = 1;
};

struct SearchSpec {
  std::vector<double> lower;
  std::vector<double> upper;
  double delta_min = 0.1;
  double boundary_spacing = 0.01;
  double volume_threshold = 0.5;
  int level_refine_depth = 2;  // splits of level samples when bounding W
  int seed_levels = 0;
  ResolutionRule resolution = ResolutionRule::kMax;
  RefineRule refine = RefineRule::kAll;
};

struct LocalSpec {
  std::vector<double> N1_lower;
  std::vector<double> N1_upper;
  std::optional<Eigen::MatrixXd> P_L;  // default: dlyap of the linearization
  std::optional<Eigen::MatrixXd> Q;    // default: identity
  double rho = 0.999;
  std::optional<double> delta_min;     // default: a quarter of the smallest N1 half width
};

struct RunSpec {
  BoundMethod bound_method = BoundMethod::kBest;
  int workers = 1;
  std::string output = "report.json";
  std::vector<std::vector<double>> seeds;  // trajectory starts for export
  int trajectory_steps = 50;
};

struct RunConfig {
  SystemSpec system;
  CandidateSpec candidate;
  SearchSpec search;
  std::optional<LocalSpec> local;
  RunSpec run;

  void validate() const;
};

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing \"" + key + "\"");
  return j.at(key);
}

// A number, or a constant expression such as "1/0.81".
inline double number_from_json(const json& j, int n, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) throw ConfigError(what + ": expected a number or an expression string");
  const Expr e = parse_expr(j.get<std::string>(), n);
  const std::vector<double> zero(static_cast<std::size_t>(n), 0.0);
  for (const auto& node : e.nodes()) {
    if (node.op == Expr::Op::kVar) throw ConfigError(what + ": \"" + j.get<std::string>() + "\" is not constant");
  }
  return e.eval(zero);
}

inline Eigen::MatrixXd matrix_from_json(const json& j, int n, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) {
    throw ConfigError(what + ": expected " + std::to_string(n) + " rows");
  }
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != n) {
      throw ConfigError(what + ": row " + std::to_string(i + 1) + " must have " + std::to_string(n) + " entries");
    }
    for (int k = 0; k < n; ++k) M(i, k) = number_from_json(row[static_cast<std::size_t>(k)], n, what);
  }
  return M;
}

inline json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Accepts {"lower": [...], "upper": [...]} or {"center": [...], "half_widths": [...]}.
inline void box_from_json(const json& j, int n, std::vector<double>& lo, std::vector<double>& hi,
                          const std::string& what) {
  if (j.contains("lower") || j.contains("upper")) {
    lo = require(j, "lower", what).get<std::vector<double>>();
    hi = require(j, "upper", what).get<std::vector<double>>();
  } else {
    const auto c = require(j, "center", what).get<std::vector<double>>();
    const auto r = require(j, "half_widths", what).get<std::vector<double>>();
    if (c.size() != r.size()) throw ConfigError(what + ": center/half_widths size mismatch");
    for (std::size_t i = 0; i < c.size(); ++i) {
      lo.push_back(c[i] - r[i]);
      hi.push_back(c[i] + r[i]);
    }
  }
  if (static_cast<int>(lo.size()) != n || static_cast<int>(hi.size()) != n) {
    throw ConfigError(what + ": box dimension must be " + std::to_string(n));
  }
}

inline const char* to_string(Mode m) { return m == Mode::kDiscrete ? "discrete" : "continuous"; }
inline const char* to_string(ResolutionRule r) { return r == ResolutionRule::kMax ? "max" : "min"; }
inline const char* to_string(RefineRule r) { return r == RefineRule::kAll ? "all" : "longest"; }

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  const auto& sj = detail::require(j, "system", "config");
  auto& s = c.system;
  s.dimension = detail::require(sj, "dimension", "system").get<int>();
  const int n = s.dimension;
  if (n < 1 || n > kMaxDim) throw ConfigError("system.dimension must be in [1, 8]");
  const auto mode = sj.value("mode", std::string("discrete"));
  if (mode == "discrete") {
    s.mode = Mode::kDiscrete;
  } else if (mode == "continuous") {
    s.mode = Mode::kContinuous;
  } else {
    throw ConfigError("system.mode must be \"discrete\" or \"continuous\"");
  }
  if (sj.contains("euler_h") && !sj["euler_h"].is_null()) s.euler_h = sj["euler_h"].get<double>();
  if (sj.contains("equilibrium")) {
    for (const auto& e : sj["equilibrium"]) s.equilibrium.push_back(e.is_string() ? e.get<std::string>() : e.dump());
  }
  for (const auto& rj : detail::require(sj, "regions", "system")) {
    RegionSpec r;
    if (rj.contains("guards")) r.guards = rj["guards"].get<std::vector<std::string>>();
    r.field = detail::require(rj, "field", "region").get<std::vector<std::string>>();
    s.regions.push_back(std::move(r));
  }

  const auto& cj = detail::require(j, "candidate", "config");
  c.candidate.P = detail::matrix_from_json(detail::require(cj, "P", "candidate"), n, "candidate.P");
  c.candidate.rho = cj.value("rho", 0.999);
  c.candidate.M = cj.value("M", 1);
  c.candidate.M_max = cj.value("M_max", c.candidate.M);

  const auto& qj = detail::require(j, "search", "config");
  detail::box_from_json(detail::require(qj, "S", "search"), n, c.search.lower, c.search.upper, "search.S");
  c.search.delta_min = detail::require(qj, "delta_min", "search").get<double>();
  c.search.boundary_spacing = qj.value("boundary_spacing", c.search.delta_min);
  c.search.volume_threshold = qj.value("volume_threshold", 0.5);
  c.search.level_refine_depth = qj.value("level_refine_depth", 2);
  c.search.seed_levels = qj.value("seed_levels", 0);
  const auto res = qj.value("resolution", std::string("max"));
  if (res != "max" && res != "min") throw ConfigError("search.resolution must be \"max\" or \"min\"");
  c.search.resolution = res == "max" ? ResolutionRule::kMax : ResolutionRule::kMin;
  const auto ref = qj.value("refine", std::string("all"));
  if (ref != "all" && ref != "longest") throw ConfigError("search.refine must be \"all\" or \"longest\"");
  c.search.refine = ref == "all" ? RefineRule::kAll : RefineRule::kLongest;

  if (j.contains("local") && !j["local"].is_null()) {
    const auto& lj = j["local"];
    LocalSpec l;
    detail::box_from_json(detail::require(lj, "N1", "local"), n, l.N1_lower, l.N1_upper, "local.N1");
    if (lj.contains("P_L")) l.P_L = detail::matrix_from_json(lj["P_L"], n, "local.P_L");
    if (lj.contains("Q")) l.Q = detail::matrix_from_json(lj["Q"], n, "local.Q");
    l.rho = lj.value("rho", 0.999);
    if (lj.contains("delta_min")) l.delta_min = lj["delta_min"].get<double>();
    c.local = std::move(l);
  }

  if (j.contains("run")) {
    const auto& rj = j["run"];
    try {
      c.run.bound_method = parse_bound_method(rj.value("bound_method", std::string("best")));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("run.bound_method: ") + e.what());
    }
    c.run.workers = rj.value("workers", 1);
    c.run.output = rj.value("output", std::string("report.json"));
    if (rj.contains("seeds")) c.run.seeds = rj["seeds"].get<std::vector<std::vector<double>>>();
    c.run.trajectory_steps = rj.value("trajectory_steps", 50);
  }
  c.validate();
  return c;
}

inline json config_to_json(const RunConfig& c) {
  json s;
  s["dimension"] = c.system.dimension;
  s["mode"] = detail::to_string(c.system.mode);
  if (c.system.euler_h) s["euler_h"] = *c.system.euler_h;
  if (!c.system.equilibrium.empty()) s["equilibrium"] = c.system.equilibrium;
  s["regions"] = json::array();
  for (const auto& r : c.system.regions) s["regions"].push_back({{"guards", r.guards}, {"field", r.field}});

  json out;
  out["system"] = std::move(s);
  out["candidate"] = {{"P", detail::matrix_to_json(c.candidate.P)},
                      {"rho", c.candidate.rho},
                      {"M", c.candidate.M},
                      {"M_max", c.candidate.M_max}};
  out["search"] = {{"S", {{"lower", c.search.lower}, {"upper", c.search.upper}}},
                   {"delta_min", c.search.delta_min},
                   {"boundary_spacing", c.search.boundary_spacing},
                   {"volume_threshold", c.search.volume_threshold},
                   {"level_refine_depth", c.search.level_refine_depth},
                   {"seed_levels", c.search.seed_levels},
                   {"resolution", detail::to_string(c.search.resolution)},
                   {"refine", detail::to_string(c.search.refine)}};
  if (c.local) {
    json l;
    l["N1"] = {{"lower", c.local->N1_lower}, {"upper", c.local->N1_upper}};
    if (c.local->P_L) l["P_L"] = detail::matrix_to_json(*c.local->P_L);
    if (c.local->Q) l["Q"] = detail::matrix_to_json(*c.local->Q);
    l["rho"] = c.local->rho;
    if (c.local->delta_min) l["delta_min"] = *c.local->delta_min;
    out["local"] = std::move(l);
  }
  out["run"] = {{"bound_method", to_string(c.run.bound_method)},
                {"workers", c.run.workers},
                {"output", c.run.output},
                {"seeds", c.run.seeds},
                {"trajectory_steps", c.run.trajectory_steps}};
  return out;
}

/// Builds the systems described by the config: the continuous one (if any)
/// and the discrete one all verification runs on, both translated so the
/// equilibrium sits at the origin.
struct BuiltSystems {
  std::shared_ptr<const PiecewiseSystem> ct;  // null for discrete configs
  std::shared_ptr<const PiecewiseSystem> dt;
};

inline BuiltSystems build_systems(const RunConfig& c) {
  const int n = c.system.dimension;
  std::vector<Region> regions;
  for (std::size_t r = 0; r < c.system.regions.size(); ++r) {
    const auto& rs = c.system.regions[r];
    Region reg;
    try {
      for (const auto& g : rs.guards) reg.guards.push_back(parse_guard(g, n));
      reg.field = VectorField::parse(rs.field, n);
    } catch (const ParseError& e) {
      throw ConfigError("region " + std::to_string(r + 1) + ": " + e.what() + " (column " +
                        std::to_string(e.column()) + ")");
    }
    regions.push_back(std::move(reg));
  }
  PiecewiseSystem sys(n, c.system.mode, std::move(regions));
  if (!c.system.equilibrium.empty()) {
    std::vector<Expr> x0;
    for (const auto& e : c.system.equilibrium) x0.push_back(parse_expr(e, n));
    sys = translate(sys, x0);
  }
  BuiltSystems out;
  if (sys.mode() == Mode::kContinuous) {
    out.ct = std::make_shared<const PiecewiseSystem>(sys);
    out.dt = std::make_shared<const PiecewiseSystem>(euler_discretize(sys, *c.system.euler_h));
  } else {
    out.dt = std::make_shared<const PiecewiseSystem>(std::move(sys));
  }
  return out;
}

inline VerifyConfig to_verify_config(const RunConfig& c) {
  VerifyConfig v;
  v.S = box_from_bounds(c.search.lower, c.search.upper);
  v.delta_min = c.search.delta_min;
  v.M = c.candidate.M;
  v.M_max = c.candidate.M_max;
  v.rho = c.candidate.rho;
  v.method = c.run.bound_method;
  v.workers = c.run.workers;
  v.refine = c.search.refine;
  v.resolution = c.search.resolution;
  v.seed_levels = c.search.seed_levels;
  v.volume_threshold = c.search.volume_threshold;
  v.validate();
  return v;
}

inline void RunConfig::validate() const {
  const int n = system.dimension;
  if (system.regions.empty()) throw ConfigError("system.regions must not be empty");
  for (const auto& r : system.regions) {
    if (static_cast<int>(r.field.size()) != n) throw ConfigError("each region field needs one expression per state");
  }
  if (system.mode == Mode::kContinuous && !(system.euler_h && *system.euler_h > 0.0)) {
    throw ConfigError("continuous systems need a positive system.euler_h");
  }
  if (!system.equilibrium.empty() && static_cast<int>(system.equilibrium.size()) != n) {
    throw ConfigError("system.equilibrium must have one entry per state");
  }
  try {
    CandidateV{candidate.P, candidate.rho}.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("candidate: ") + e.what());
  }
  if (run.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (!(search.boundary_spacing > 0.0)) throw ConfigError("search.boundary_spacing must be positive");
  if (search.level_refine_depth < 0) throw ConfigError("search.level_refine_depth must be >= 0");
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!(search.lower[ui] <= search.upper[ui])) throw ConfigError("search.S: lower > upper");
    if (!(search.lower[ui] <= 0.0 && 0.0 <= search.upper[ui])) throw ConfigError("search.S must contain the origin");
  }
  if (local) {
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (!(local->N1_lower[ui] < 0.0 && 0.0 < local->N1_upper[ui])) {
        throw ConfigError("local.N1 must contain the origin in its interior");
      }
    }
    if (local->delta_min && !(*local->delta_min > 0.0)) throw ConfigError("local.delta_min must be positive");
  }
  for (const auto& s : run.seeds) {
    if (static_cast<int>(s.size()) != n) throw ConfigError("run.seeds: each seed needs one entry per state");
  }
  try {
    to_verify_config(*this);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("search: ") + e.what());
  }
  // expressions, guards and the equilibrium translation
  try {
    (void)build_systems(*this);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
}

/// 64-bit FNV-1a of the canonical JSON form.
inline std::string config_digest(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : config_to_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace lyapsample
